#pragma once

#include <cstdint>

#include <Eigen/Dense>

#include "pathflow/grid.hpp"
#include "pathflow/rng.hpp"

namespace pathflow {

/// Brownian path on the grid: increments are i.i.d. N(0, dt I_d), the path
/// starts at 0. Deterministic in (seed, stream); stream is the path index in
/// Monte Carlo loops.
DiscretePath sample_brownian(const TimeGrid& grid, int d, std::uint64_t seed,
                             std::uint64_t stream = 0);

enum class ShiftKind { Deterministic, AdaptedRandom, Anticipative };

/// Cameron-Martin direction given by its density on the grid, with the energy
/// bound sum |hdot|^2 dt <= C enforced on every realization.
struct CmShift {
    TimeGrid grid;
    Eigen::MatrixXd hdot; // d x n, value on [s_i, s_{i+1})
    Eigen::MatrixXd h;    // d x (n+1), h(s_i) = sum_{k<i} hdot_k dt
    ShiftKind kind = ShiftKind::Deterministic;
    double bound = 1.0;

    int dim() const { return static_cast<int>(hdot.rows()); }
    double energy() const { return hdot.colwise().squaredNorm().sum() * grid.dt(); }

    void rebuild_cumulative() {
        h.setZero(hdot.rows(), grid.n_points());
        for (int i = 0; i < grid.n_steps; ++i) h.col(i + 1) = h.col(i) + hdot.col(i) * grid.dt();
    }
};

struct ShiftRecipe {
    enum class Type { ConstantDirection, Sinusoid, AdaptedTanh };
    Type type = Type::ConstantDirection;
    int direction = 0;
    double raw_scale = 1.0;

    static ShiftRecipe constant(int dir = 0, double scale = 1.0) {
        return {Type::ConstantDirection, dir, scale};
    }
    static ShiftRecipe sinusoid(double scale = 1.0) { return {Type::Sinusoid, 0, scale}; }
    static ShiftRecipe adapted_tanh(int dir = 0, double scale = 1.0) {
        return {Type::AdaptedTanh, dir, scale};
    }
};

/// Builds a shift from a recipe. Deterministic recipes are scaled to energy
/// exactly C when the raw energy exceeds it; adapted recipes are clipped
/// causally (each step spends against the remaining budget) so the density
/// at s_i reads only w up to s_i. Adapted recipes require the driving path.
CmShift make_cm_shift(const ShiftRecipe& recipe, const TimeGrid& grid, int d, double C,
                      const DiscretePath* w = nullptr);

/// Left-point Ito sum: sum_i f(s_i) . dw_i. Accepts n or n+1 columns.
double ito_integral(const Eigen::MatrixXd& integrand, const DiscretePath& w);

/// Midpoint Stratonovich sum: sum_i (f(s_i)+f(s_{i+1}))/2 . dw_i;
/// needs all n+1 columns.
double stratonovich_integral(const Eigen::MatrixXd& integrand, const DiscretePath& w);

/// Adapted rotation-plus-drift pair (o_s, a_s) on the grid; o is stored as
/// d x d blocks per grid point.
struct AdaptedRotationDrift {
    TimeGrid grid;
    int d = 0;
    Eigen::MatrixXd o; // d x (d * n_points)
    Eigen::MatrixXd a; // d x n_points
    bool orthogonal_flag = true;

    AdaptedRotationDrift() = default;
    AdaptedRotationDrift(const TimeGrid& g, int dim)
        : grid(g), d(dim), o(Eigen::MatrixXd::Zero(dim, dim * g.n_points())),
          a(Eigen::MatrixXd::Zero(dim, g.n_points())) {
        for (int i = 0; i < g.n_points(); ++i) o_at(i) = Eigen::MatrixXd::Identity(dim, dim);
    }

    Eigen::Ref<Eigen::MatrixXd> o_at(int i) { return o.block(0, i * d, d, d); }
    Eigen::Ref<const Eigen::MatrixXd> o_at(int i) const { return o.block(0, i * d, d, d); }

    /// Max over grid points of ||o^T o - I||_inf.
    double orthogonality_defect() const {
        double worst = 0.0;
        Eigen::MatrixXd id = Eigen::MatrixXd::Identity(d, d);
        for (int i = 0; i < grid.n_points(); ++i)
            worst = std::max(worst, (o_at(i).transpose() * o_at(i) - id).cwiseAbs().maxCoeff());
        return worst;
    }

    /// Identity rotation with the drift of a deterministic shift (classical
    /// Cameron-Martin transformation).
    static AdaptedRotationDrift from_shift(const CmShift& shift) {
        AdaptedRotationDrift od(shift.grid, shift.dim());
        od.a.leftCols(shift.grid.n_steps) = shift.hdot;
        return od;
    }
};

/// Diagnostics for the log-density clipping; never incremented silently.
struct GirsanovStats {
    long clip_count = 0;
    long eval_count = 0;
    double max_abs_log = 0.0;
};

/// Log of the Girsanov density for the rotation-plus-drift transformation:
/// sum a_i . (o_i dw_i) - 1/2 sum |a_i|^2 dt. Checks orthogonality of o
/// within 1e-8 at every grid point.
double girsanov_log_density(const DiscretePath& w, const AdaptedRotationDrift& od);

/// Density exp(clip(log, +-50)); clipping is recorded in stats when given.
double girsanov_density(const DiscretePath& w, const AdaptedRotationDrift& od,
                        GirsanovStats* stats = nullptr);

/// Rotated path (integral of o dw); same law as w for adapted orthogonal o.
DiscretePath rotate_path(const DiscretePath& w, const AdaptedRotationDrift& od);

} // namespace pathflow

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "pathflow/functional.hpp"
#include "pathflow/geometry.hpp"
#include "pathflow/grid.hpp"
#include "pathflow/lift.hpp"
#include "pathflow/malliavin.hpp"

namespace pathflow {

/// Step process u(s) = sum_{i,j} alpha_{i,j} 1_{[s_i, s_{i+1})} e_j with
/// cylindrical coefficients (flat and/or manifold). Breakpoints are grid
/// points; a missing coefficient slot means zero.
struct StepProcess {
    std::string id;
    int d = 0;
    std::vector<double> breakpoints; // s_1 < ... < s_{m+1} in [0, 1]
    // coeffs[i][j]: coefficient of 1_{[s_i, s_{i+1})} e_j.
    std::vector<std::vector<std::optional<CylindricalFunctional>>> coeffs;

    // Set when the process is alpha(w) hdot(s) with deterministic hdot; the
    // explicit delta^M route requires this shape.
    struct RankOne {
        CylindricalFunctional alpha;
        Eigen::MatrixXd hdot; // d x n on the evaluation grid
    };
    std::optional<RankOne> rank_one;

    int intervals() const { return static_cast<int>(coeffs.size()); }
};

/// Builds a step process and validates its shape (ordered grid-compatible
/// breakpoints, consistent coefficient dimensions).
StepProcess make_step_process(
    const std::string& id, int d, std::vector<double> breakpoints,
    std::vector<std::vector<std::optional<CylindricalFunctional>>> coeffs);

/// Rank-one process alpha(w) hdot(s) lowered onto a grid; also carries the
/// equivalent step form (hdot piecewise constant per cell).
StepProcess make_rank_one_process(const std::string& id, const CylindricalFunctional& alpha,
                                  const Eigen::MatrixXd& hdot, const TimeGrid& grid);

/// Constant-in-path coefficient (flat Malliavin derivative zero).
CylindricalFunctional constant_coefficient(CylindricalFunctional::Space space, double value,
                                           int point_dim);

/// Per-path anticipative integral value with its correction ledger; the
/// ledger entries sum to the value exactly.
struct AnticipativeResult {
    double value = 0.0;
    std::vector<std::pair<std::string, double>> ledger;

    double ledger_sum() const {
        double s = 0.0;
        for (const auto& [name, v] : ledger) s += v;
        return s;
    }
};

/// Per-path lowered form of a step process: cell values plus the flat and
/// damped Malliavin kernels of each distinct coefficient.
struct LoweredProcess {
    int d = 0;
    int n = 0;
    Eigen::MatrixXd values; // d x n, u^j on cell k
    struct Kernel {
        double value = 0.0;
        Eigen::MatrixXd flat;   // d x n: column k = D_{s_k} alpha
        Eigen::MatrixXd damped; // d x n: column k = damped D_{s_k} alpha
    };
    std::vector<Kernel> kernels;
    Eigen::MatrixXi slot;  // n x d -> kernel index or -1
    Eigen::MatrixXd scale; // n x d multiplier (rank-one densities; 1 otherwise)

    /// D^j_{s_k} u^j_{cell k+offset}; zero outside the grid.
    double flat_diag(int k, int j, int offset) const {
        int cell = k + offset;
        if (cell < 0 || cell >= n) return 0.0;
        int s = slot(cell, j);
        return s < 0 ? 0.0 : scale(cell, j) * kernels[s].flat(j, k);
    }
    double damped_diag(int k, int j, int offset) const {
        int cell = k + offset;
        if (cell < 0 || cell >= n) return 0.0;
        int s = slot(cell, j);
        return s < 0 ? 0.0 : scale(cell, j) * kernels[s].damped(j, k);
    }
};

/// Grid Malliavin derivative of a functional of the rolled path: the partial
/// derivatives of F(roll(w)) w.r.t. each increment, by one-sided re-rolling
/// from the stored forward states. d x n, column k = D_{s_k}(F o I).
Eigen::MatrixXd grid_malliavin_fd(const ManifoldSpec& spec, const CylindricalFunctional& F,
                                  const DiscretePath& w, const FramePath& X, double eps = 1e-7);

/// Lowers a step process along one path. needs_damped demands manifold (or
/// flat-spec) coefficients for every nonzero slot.
LoweredProcess lower_process(const ManifoldSpec& spec, const StepProcess& u,
                             const DiscretePath& w, const FramePath& X, bool needs_damped);

/// Flat Skorohod integral via the step identity
/// delta(alpha 1_{[a,b)} e) = alpha (w_b - w_a).e - int_a^b D_s alpha . e ds.
/// For adapted u this telescopes to the Ito sum exactly.
AnticipativeResult skorohod_flat(const ManifoldSpec& spec, const StepProcess& u,
                                 const DiscretePath& w, const FramePath& X);

/// Damped anticipative integral via the trace formula:
/// delta~(u) = delta(u) + Trace(D u) - Trace(D~ u).
AnticipativeResult tilde_delta_trace(const ManifoldSpec& spec, const StepProcess& u,
                                     const DiscretePath& w, const FramePath& X);

/// Damped anticipative integral via the one-step-offset limit formula:
/// delta~(u) = delta(u) + 1/2 int (D+ + D-) u - 1/2 int (D~+ + D~-) u.
AnticipativeResult tilde_delta_limits(const ManifoldSpec& spec, const StepProcess& u,
                                      const DiscretePath& w, const FramePath& X);

enum class DeltaMRoute { Volterra, Explicit };

/// Direction of the ric-Volterra transform linking delta^M to delta~; the
/// readings differ by whether the transform multiplies or solves. Exactly one
/// passes the adjoint identity; Multiply is the production default (see the
/// arbitration test).
enum class VolterraReading { Multiply, Solve };

AnticipativeResult delta_M(const ManifoldSpec& spec, const StepProcess& u, const DiscretePath& w,
                           const FramePath& X, DeltaMRoute route,
                           VolterraReading reading = VolterraReading::Multiply);

/// Adjoint pairings E[<grad phi, u>] used by the Def-5.1 oracle tests:
/// sum_k <D phi(s_k), u(s_k)> dt with the flat, damped, or transported
/// gradient of phi.
double adjoint_pairing_flat(const CylindricalFunctional& phi, const LoweredProcess& u,
                            const DiscretePath& w);
double adjoint_pairing_damped(const ManifoldSpec& spec, const CylindricalFunctional& phi,
                              const LoweredProcess& u, const FramePath& X);
double adjoint_pairing_DM(const CylindricalFunctional& phi, const LoweredProcess& u,
                          const FramePath& X);

/// C^2 scalar observable for the anticipative Ito formula.
struct ScalarC2 {
    std::string id;
    std::function<double(double)> f, df, d2f;
};

struct ItoFormulaReport {
    std::string process_id, phi_id;
    int n_steps = 0;
    long n_paths = 0;
    std::vector<double> t_values;
    std::vector<double> mean_abs_discrepancy;
    double worst() const {
        double w = 0.0;
        for (double v : mean_abs_discrepancy) w = std::max(w, v);
        return w;
    }
};

/// Prop-5.3 check: evaluates X_t = delta~(1_[0,t] u) through the anticipative
/// Stratonovich form and compares phi(X_t) with the Ito-formula right side,
/// reporting the mean absolute discrepancy per requested time. Curved specs
/// are supported only for linear phi (the phi'' term needs flat damped
/// derivatives of the anticipative integral).
ItoFormulaReport ito_formula_check(const ManifoldSpec& spec, const StepProcess& u,
                                   const ScalarC2& phi, const std::vector<double>& t_values,
                                   long n_paths, const TimeGrid& grid, std::uint64_t seed);

struct L1BoundRow {
    std::string process_id;
    double lhs = 0.0;     // E |delta^M(u)|
    double se_lhs = 0.0;
    double norm = 0.0;    // ||u||_{L^{1,2}}
    double curv_term = 0.0; // (|Omega|+|Omega'|) (||u|| + ||u||^2)
};

struct L1BoundReport {
    std::vector<L1BoundRow> battery;
    std::vector<L1BoundRow> holdout;
    double fitted_C = 0.0;
    double fitted_C_half = 0.0; // refit on the first half of the paths
    bool stable = false;        // within +-20%
    bool holdout_pass = false;
    long n_paths = 0;
};

/// Prop-5.4 empirical protocol: fits the smallest admissible constant over
/// the battery and asserts the inequality with it on the held-out set.
L1BoundReport l1_bound_check(const ManifoldSpec& spec, const std::vector<StepProcess>& battery,
                             const std::vector<StepProcess>& holdout, const TimeGrid& grid,
                             long n_paths, std::uint64_t seed);

/// sup_r |Omega_r| (operator norm over unit frame vectors): 1 on curved
/// spheres, 0 otherwise; |Omega'| is 0 for both built-ins (covariantly
/// constant curvature).
double curvature_bound(const ManifoldSpec& spec);

} // namespace pathflow

#include "pathflow/wiener.hpp"

#include <algorithm>
#include <cmath>

#include "pathflow/errors.hpp"

namespace pathflow {

DiscretePath sample_brownian(const TimeGrid& grid, int d, std::uint64_t seed,
                             std::uint64_t stream) {
    if (d < 1) throw ConfigError("sample_brownian: d must be >= 1");
    CounterRng rng(seed, stream);
    DiscretePath w(grid, d);
    double sdt = std::sqrt(grid.dt());
    for (int i = 0; i < grid.n_steps; ++i)
        for (int j = 0; j < d; ++j) w.values(j, i + 1) = w.values(j, i) + sdt * rng.normal();
    return w;
}

namespace {

Eigen::MatrixXd raw_density(const ShiftRecipe& recipe, const TimeGrid& grid, int d,
                            const DiscretePath* w) {
    Eigen::MatrixXd hdot = Eigen::MatrixXd::Zero(d, grid.n_steps);
    switch (recipe.type) {
        case ShiftRecipe::Type::ConstantDirection:
            hdot.row(recipe.direction % d).setConstant(recipe.raw_scale);
            break;
        case ShiftRecipe::Type::Sinusoid:
            for (int i = 0; i < grid.n_steps; ++i) {
                double s = grid.time(i);
                hdot(0, i) = recipe.raw_scale * std::sin(2.0 * M_PI * s);
                if (d >= 2) hdot(1, i) = recipe.raw_scale * std::cos(2.0 * M_PI * s);
            }
            break;
        case ShiftRecipe::Type::AdaptedTanh:
            if (!w) throw ConfigError("make_cm_shift: adapted recipe needs the driving path");
            // Reads only w at times <= s_i, so the density is adapted.
            for (int i = 0; i < grid.n_steps; ++i)
                hdot(recipe.direction % d, i) = recipe.raw_scale * std::tanh(w->values(0, i));
            break;
    }
    return hdot;
}

} // namespace

CmShift make_cm_shift(const ShiftRecipe& recipe, const TimeGrid& grid, int d, double C,
                      const DiscretePath* w) {
    if (C <= 0.0) throw ConfigError("make_cm_shift: bound C must be positive");
    if (d < 1) throw ConfigError("make_cm_shift: d must be >= 1");
    if (recipe.type == ShiftRecipe::Type::AdaptedTanh && !w)
        throw ConfigError("make_cm_shift: adapted recipe needs the driving path");
    if (w && w->dim() != d) throw DomainError("make_cm_shift: path dimension mismatch");

    CmShift shift;
    shift.grid = grid;
    shift.bound = C;
    shift.kind = recipe.type == ShiftRecipe::Type::AdaptedTanh ? ShiftKind::AdaptedRandom
                                                               : ShiftKind::Deterministic;
    shift.hdot = raw_density(recipe, grid, d, w);

    double dt = grid.dt();
    if (shift.kind == ShiftKind::Deterministic) {
        double energy = shift.hdot.colwise().squaredNorm().sum() * dt;
        if (energy > C) shift.hdot *= std::sqrt(C / energy);
    } else {
        // Causal clipping: spend the budget step by step so the clipped
        // density at s_i still depends only on the past.
        double spent = 0.0;
        for (int i = 0; i < grid.n_steps; ++i) {
            double e = shift.hdot.col(i).squaredNorm() * dt;
            if (spent + e > C) {
                double room = std::max(0.0, C - spent);
                shift.hdot.col(i) *= e > 0.0 ? std::sqrt(room / e) : 0.0;
                e = room;
            }
            spent += e;
        }
    }
    shift.rebuild_cumulative();
    return shift;
}

double ito_integral(const Eigen::MatrixXd& integrand, const DiscretePath& w) {
    int n = w.grid.n_steps;
    if (integrand.rows() != w.dim() || integrand.cols() < n)
        throw DomainError("ito_integral: integrand/path dimension mismatch");
    double acc = 0.0;
    for (int i = 0; i < n; ++i)
        acc += integrand.col(i).dot(w.values.col(i + 1) - w.values.col(i));
    return acc;
}

double stratonovich_integral(const Eigen::MatrixXd& integrand, const DiscretePath& w) {
    int n = w.grid.n_steps;
    if (integrand.rows() != w.dim() || integrand.cols() != n + 1)
        throw DomainError("stratonovich_integral: integrand must have n+1 columns");
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        Eigen::VectorXd mid = 0.5 * (integrand.col(i) + integrand.col(i + 1));
        acc += mid.dot(w.values.col(i + 1) - w.values.col(i));
    }
    return acc;
}

double girsanov_log_density(const DiscretePath& w, const AdaptedRotationDrift& od) {
    if (!(od.grid == w.grid) || od.d != w.dim())
        throw DomainError("girsanov: rotation-drift and path grids differ");
    if (!od.orthogonal_flag || od.orthogonality_defect() > 1e-8)
        throw ContractViolation("girsanov: rotation process is not orthogonal");
    double dt = w.grid.dt();
    double log_g = 0.0;
    for (int i = 0; i < w.grid.n_steps; ++i) {
        Eigen::VectorXd dwt = od.o_at(i) * (w.values.col(i + 1) - w.values.col(i));
        log_g += od.a.col(i).dot(dwt) - 0.5 * od.a.col(i).squaredNorm() * dt;
    }
    return log_g;
}

double girsanov_density(const DiscretePath& w, const AdaptedRotationDrift& od,
                        GirsanovStats* stats) {
    double log_g = girsanov_log_density(w, od);
    if (stats) {
        ++stats->eval_count;
        stats->max_abs_log = std::max(stats->max_abs_log, std::abs(log_g));
    }
    if (std::abs(log_g) > 50.0) {
        if (stats) ++stats->clip_count;
        log_g = std::clamp(log_g, -50.0, 50.0);
    }
    return std::exp(log_g);
}

DiscretePath rotate_path(const DiscretePath& w, const AdaptedRotationDrift& od) {
    if (!(od.grid == w.grid) || od.d != w.dim())
        throw DomainError("rotate_path: rotation and path grids differ");
    DiscretePath out(w.grid, w.dim());
    for (int i = 0; i < w.grid.n_steps; ++i)
        out.values.col(i + 1) =
            out.values.col(i) + od.o_at(i) * (w.values.col(i + 1) - w.values.col(i));
    return out;
}

} // namespace pathflow

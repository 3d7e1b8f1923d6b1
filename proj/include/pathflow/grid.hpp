#pragma once

#include <cmath>

#include <Eigen/Dense>

#include "pathflow/errors.hpp"

namespace pathflow {

/// Uniform grid 0 = s_0 < s_1 < ... < s_n = 1.
struct TimeGrid {
    int n_steps = 0;

    TimeGrid() = default;
    explicit TimeGrid(int n) : n_steps(n) {
        if (n < 1) throw ConfigError("TimeGrid: n_steps must be >= 1");
    }

    double dt() const { return 1.0 / n_steps; }
    double time(int i) const { return static_cast<double>(i) / n_steps; }
    int n_points() const { return n_steps + 1; }

    /// Index of a grid time; throws if s is not (close to) a grid point.
    int index_of(double s) const {
        double x = s * n_steps;
        int i = static_cast<int>(std::lround(x));
        if (i < 0 || i > n_steps || std::abs(x - i) > 1e-9 * n_steps)
            throw DomainError("time is not a grid point");
        return i;
    }

    bool operator==(const TimeGrid& o) const { return n_steps == o.n_steps; }
};

/// Grid-indexed path with values in R^k. Column i holds the value at s_i.
/// values(.,0) is fixed by context: 0 for Wiener paths, the start point for
/// manifold paths.
struct DiscretePath {
    TimeGrid grid;
    Eigen::MatrixXd values; // k x (n_steps+1)

    DiscretePath() = default;
    DiscretePath(const TimeGrid& g, int k) : grid(g), values(Eigen::MatrixXd::Zero(k, g.n_points())) {}

    int dim() const { return static_cast<int>(values.rows()); }

    Eigen::VectorXd value(int i) const { return values.col(i); }
    Eigen::VectorXd increment(int i) const { return values.col(i + 1) - values.col(i); }

    /// Sup norm of the pointwise Euclidean distance to another path.
    double sup_distance(const DiscretePath& other) const {
        if (other.dim() != dim() || !(other.grid == grid))
            throw DomainError("sup_distance: incompatible paths");
        return (values - other.values).colwise().norm().maxCoeff();
    }
};

/// Coarsens a path to a grid with n_steps dividing the original count by
/// keeping every stride-th point. Exact for Brownian paths: the coarse
/// increments are sums of fine ones.
inline DiscretePath coarsen(const DiscretePath& fine, int coarse_steps) {
    if (fine.grid.n_steps % coarse_steps != 0)
        throw ConfigError("coarsen: coarse step count must divide the fine one");
    int stride = fine.grid.n_steps / coarse_steps;
    DiscretePath out(TimeGrid(coarse_steps), fine.dim());
    for (int i = 0; i <= coarse_steps; ++i) out.values.col(i) = fine.values.col(i * stride);
    return out;
}

} // namespace pathflow

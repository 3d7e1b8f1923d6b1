#pragma once

#include <iosfwd>

#include <Eigen/Dense>

#include "pathflow/geometry.hpp"
#include "pathflow/grid.hpp"

namespace pathflow {

/// Path of orthonormal frames over a manifold path. Frames are stored as
/// contiguous N x d blocks; block i is the frame at s_i.
struct FramePath {
    TimeGrid grid;
    int N = 0;
    int d = 0;
    Eigen::MatrixXd frames; // N x (d * n_points)
    DiscretePath base;      // N x n_points

    FramePath() = default;
    FramePath(const TimeGrid& g, int N_, int d_)
        : grid(g), N(N_), d(d_), frames(Eigen::MatrixXd::Zero(N_, d_ * g.n_points())),
          base(g, N_) {}

    Eigen::Ref<Eigen::MatrixXd> frame(int i) { return frames.block(0, i * d, N, d); }
    Eigen::Ref<const Eigen::MatrixXd> frame(int i) const { return frames.block(0, i * d, N, d); }

    Frame frame_at(int i) const { return Frame{Point{base.values.col(i)}, frame(i)}; }

    /// Max over grid points of ||X^T X - I||_inf (orthonormality drift).
    double orthonormality_defect() const {
        double worst = 0.0;
        Eigen::MatrixXd id = Eigen::MatrixXd::Identity(d, d);
        for (int i = 0; i < grid.n_points(); ++i)
            worst = std::max(worst, (frame(i).transpose() * frame(i) - id).cwiseAbs().maxCoeff());
        return worst;
    }
};

/// Per-step correction bookkeeping for the geometric integrators.
struct StepDiagnostics {
    double max_base_correction = 0.0;   // projection distance, worst step
    double max_frame_correction = 0.0;  // polar correction Frobenius norm, worst step
    double mean_base_correction = 0.0;
    double mean_frame_correction = 0.0;
    int steps = 0;
};

struct RollOptions {
    bool project_base = true;
    bool reorthonormalize = true;
    bool allow_off_manifold = false; // integrate the raw tube lift (no checks on x)
};

struct RollResult {
    DiscretePath path; // manifold path, N x n_points
    FramePath frames;
    StepDiagnostics diag;
};

/// One Heun (predictor-corrector) Stratonovich step of the rolling SDE
/// dx = X o dw, dX = -Gamma_x(o dx) X, followed by base projection and polar
/// frame correction per opts. Mutates (x, X) in place; returns the
/// (base, frame) correction magnitudes.
std::pair<double, double> roll_step(const ManifoldSpec& spec, Eigen::VectorXd& x,
                                    Eigen::MatrixXd& X, const Eigen::VectorXd& dw,
                                    const RollOptions& opts, int step_index);

/// Rolls a flat d-dimensional driver onto the manifold: one roll_step per
/// increment. Brownian drivers produce Brownian motion on M.
RollResult roll(const ManifoldSpec& spec, const DiscretePath& w, const Frame& r0,
                const RollOptions& opts = {});

/// Horizontal lift of a given manifold (or tube-valued) path: integrates
/// dX = -Gamma_x(o dx) X with the path's increments, Heun stepping.
/// Throws IntegrationError on frame degeneracy (condition number > 1e6).
FramePath horizontal_lift(const ManifoldSpec& spec, const DiscretePath& x, const Frame& r0,
                          const RollOptions& opts = {}, StepDiagnostics* diag = nullptr);

/// Development (anti-rolling): flat path with increments
/// dxi_i = (X_i + X_{i+1})^T/2 . dx_i, started at 0.
DiscretePath develop(const ManifoldSpec& spec, const FramePath& X);

/// Ambient transport operator r_{i1} r_{i2}^T (N x N); restricted to the
/// tangent space at the i2 base it is the stochastic parallel transport.
Eigen::MatrixXd transport_ambient(const FramePath& X, int i1, int i2);

/// Transport matrix in frame coordinates (d x d), i2-coordinates to
/// i1-coordinates. Horizontal frames carry coordinates unchanged, so this is
/// the identity up to the frames' orthonormality defect; the geometric
/// content (holonomy) appears when comparing frames at coincident base
/// points, see holonomy_matrix.
Eigen::MatrixXd parallel_transport(const FramePath& X, int i1, int i2);

/// Frame-0 coordinates of the transport around the (closed) base path:
/// frame(0)^T frame(n). Meaningful when base(n) == base(0).
Eigen::MatrixXd holonomy_matrix(const FramePath& X);

/// Debug dump: columns s, x..., frame columns flattened.
void dump_frame_path(std::ostream& os, const FramePath& X);

} // namespace pathflow

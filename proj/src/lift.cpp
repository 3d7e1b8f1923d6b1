#include "pathflow/lift.hpp"

#include <cmath>
#include <ostream>

#include <Eigen/Eigenvalues>

#include "pathflow/errors.hpp"

namespace pathflow {

namespace {

// Polar re-orthonormalization with a degeneracy check; writes over X.
// Returns the Frobenius norm of the correction.
double polar_correct(const ManifoldSpec& spec, const Eigen::VectorXd& base, Eigen::MatrixXd& X,
                     int step) {
    Eigen::MatrixXd raw = X;
    if (spec.kind == ManifoldSpec::Kind::Sphere) {
        Eigen::VectorXd m = base / base.norm();
        X.noalias() -= m * (m.transpose() * X);
    }
    Eigen::MatrixXd G = X.transpose() * X;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G);
    double lmin = es.eigenvalues().minCoeff();
    double lmax = es.eigenvalues().maxCoeff();
    if (lmin <= 0.0 || std::sqrt(lmax / lmin) > 1e6)
        throw IntegrationError("frame degeneracy before re-orthonormalization", step);
    Eigen::VectorXd inv_sqrt = es.eigenvalues().array().sqrt().inverse();
    Eigen::MatrixXd G_inv_sqrt =
        es.eigenvectors() * inv_sqrt.asDiagonal() * es.eigenvectors().transpose();
    X = X * G_inv_sqrt;
    return (X - raw).norm();
}

} // namespace

std::pair<double, double> roll_step(const ManifoldSpec& spec, Eigen::VectorXd& x,
                                    Eigen::MatrixXd& X, const Eigen::VectorXd& dw,
                                    const RollOptions& opts, int step_index) {
    Eigen::VectorXd v0(spec.N), v1(spec.N), x_pred(spec.N), x_raw(spec.N);
    Eigen::MatrixXd G0(spec.N, spec.d), G1(spec.N, spec.d), X_pred(spec.N, spec.d);
    // Predictor (Euler) at the left point.
    v0.noalias() = X * dw;
    spec.christoffel_apply(x, v0, X, G0);
    x_pred = x + v0;
    X_pred = X - G0;
    // Corrector: average of left and predicted vector fields.
    v1.noalias() = X_pred * dw;
    spec.christoffel_apply(x_pred, v1, X_pred, G1);
    x_raw = x + 0.5 * (v0 + v1);
    X -= 0.5 * (G0 + G1);

    if (!opts.allow_off_manifold && (!spec.in_tube(x_pred) || !spec.in_tube(x_raw)))
        throw IntegrationError("roll: path left the tubular neighborhood", step_index);

    double base_corr = 0.0, frame_corr = 0.0;
    if (opts.project_base) {
        x = spec.project(x_raw);
        base_corr = (x - x_raw).norm();
    } else {
        x = x_raw;
    }
    if (opts.reorthonormalize) frame_corr = polar_correct(spec, x, X, step_index);
    return {base_corr, frame_corr};
}

RollResult roll(const ManifoldSpec& spec, const DiscretePath& w, const Frame& r0,
                const RollOptions& opts) {
    if (w.dim() != spec.d) throw DomainError("roll: driver dimension must equal intrinsic d");
    if (w.values.col(0).norm() != 0.0) throw DomainError("roll: driver must start at 0");
    int n = w.grid.n_steps;
    RollResult out;
    out.path = DiscretePath(w.grid, spec.N);
    out.frames = FramePath(w.grid, spec.N, spec.d);
    out.diag.steps = n;

    Eigen::VectorXd x = r0.base.coords;
    Eigen::MatrixXd X = r0.basis;
    out.path.values.col(0) = x;
    out.frames.frame(0) = X;
    out.frames.base.values.col(0) = x;

    double sum_base = 0.0, sum_frame = 0.0;
    for (int i = 0; i < n; ++i) {
        auto [base_corr, frame_corr] =
            roll_step(spec, x, X, w.values.col(i + 1) - w.values.col(i), opts, i);
        out.diag.max_base_correction = std::max(out.diag.max_base_correction, base_corr);
        out.diag.max_frame_correction = std::max(out.diag.max_frame_correction, frame_corr);
        sum_base += base_corr;
        sum_frame += frame_corr;
        out.path.values.col(i + 1) = x;
        out.frames.frame(i + 1) = X;
        out.frames.base.values.col(i + 1) = x;
    }
    if (n > 0) {
        out.diag.mean_base_correction = sum_base / n;
        out.diag.mean_frame_correction = sum_frame / n;
    }
    return out;
}

FramePath horizontal_lift(const ManifoldSpec& spec, const DiscretePath& x0, const Frame& r0,
                          const RollOptions& opts, StepDiagnostics* diag) {
    if (x0.dim() != spec.N) throw DomainError("horizontal_lift: path must be ambient-valued");
    if ((x0.values.col(0) - r0.base.coords).norm() > 1e-8)
        throw DomainError("horizontal_lift: r0 must sit over the path start");
    int n = x0.grid.n_steps;
    FramePath out(x0.grid, spec.N, spec.d);
    out.base = x0;
    Eigen::MatrixXd X = r0.basis;
    out.frame(0) = X;

    Eigen::MatrixXd G0(spec.N, spec.d), G1(spec.N, spec.d), X_pred(spec.N, spec.d);
    double sum_frame = 0.0;

    for (int i = 0; i < n; ++i) {
        Eigen::VectorXd dx = x0.values.col(i + 1) - x0.values.col(i);
        if (!opts.allow_off_manifold && spec.distance_to_manifold(x0.values.col(i)) > 1e-6)
            throw IntegrationError("horizontal_lift: path is not on the manifold", i);
        if (!spec.in_tube(x0.values.col(i + 1)))
            throw IntegrationError("horizontal_lift: path left the tubular neighborhood", i);
        spec.christoffel_apply(x0.values.col(i), dx, X, G0);
        X_pred = X - G0;
        spec.christoffel_apply(x0.values.col(i + 1), dx, X_pred, G1);
        X = X - 0.5 * (G0 + G1);
        if (opts.reorthonormalize) {
            double corr = polar_correct(spec, x0.values.col(i + 1), X, i);
            if (diag) {
                diag->max_frame_correction = std::max(diag->max_frame_correction, corr);
                sum_frame += corr;
            }
        }
        out.frame(i + 1) = X;
    }
    if (diag) {
        diag->steps = n;
        if (n > 0) diag->mean_frame_correction = sum_frame / n;
    }
    return out;
}

DiscretePath develop(const ManifoldSpec& spec, const FramePath& X) {
    int n = X.grid.n_steps;
    DiscretePath xi(X.grid, spec.d);
    for (int i = 0; i < n; ++i) {
        Eigen::VectorXd dx = X.base.values.col(i + 1) - X.base.values.col(i);
        xi.values.col(i + 1) =
            xi.values.col(i) + 0.5 * (X.frame(i) + X.frame(i + 1)).transpose() * dx;
    }
    return xi;
}

Eigen::MatrixXd transport_ambient(const FramePath& X, int i1, int i2) {
    return X.frame(i1) * X.frame(i2).transpose();
}

Eigen::MatrixXd parallel_transport(const FramePath& X, int i1, int i2) {
    return X.frame(i1).transpose() * transport_ambient(X, i1, i2) * X.frame(i2);
}

Eigen::MatrixXd holonomy_matrix(const FramePath& X) {
    int n = X.grid.n_steps;
    if ((X.base.values.col(n) - X.base.values.col(0)).norm() > 1e-6)
        throw DomainError("holonomy_matrix: base path is not closed");
    return X.frame(0).transpose() * X.frame(n);
}

void dump_frame_path(std::ostream& os, const FramePath& X) {
    os << "s";
    for (int k = 0; k < X.N; ++k) os << ",x" << k;
    for (int j = 0; j < X.d; ++j)
        for (int k = 0; k < X.N; ++k) os << ",f" << j << "_" << k;
    os << "\n";
    for (int i = 0; i < X.grid.n_points(); ++i) {
        os << X.grid.time(i);
        for (int k = 0; k < X.N; ++k) os << "," << X.base.values(k, i);
        for (int j = 0; j < X.d; ++j)
            for (int k = 0; k < X.N; ++k) os << "," << X.frame(i)(k, j);
        os << "\n";
    }
}

} // namespace pathflow

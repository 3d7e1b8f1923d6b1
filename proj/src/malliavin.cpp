#include "pathflow/malliavin.hpp"

#include <algorithm>
#include <cmath>

#include "pathflow/errors.hpp"
#include "pathflow/parallel.hpp"

namespace pathflow {

using Eigen::MatrixXd;
using Eigen::VectorXd;

Eigen::VectorXd canonical_start(const ManifoldSpec& spec) {
    VectorXd m0 = VectorXd::Zero(spec.N);
    if (spec.kind == ManifoldSpec::Kind::Sphere) m0(spec.N - 1) = 1.0;
    return m0;
}

Frame canonical_frame(const ManifoldSpec& spec) {
    return default_frame(spec, canonical_start(spec));
}

MatrixXd frame_gradients(const CylindricalFunctional& F, const FramePath& X) {
    if (F.space != CylindricalFunctional::Space::Manifold)
        throw DomainError("frame_gradients: functional must live on the manifold path");
    auto pts = gather_points(F, X.base);
    auto idx = F.time_indices(X.grid);
    MatrixXd g(X.d, static_cast<int>(idx.size()));
    for (size_t i = 0; i < idx.size(); ++i)
        g.col(static_cast<int>(i)) = X.frame(idx[i]).transpose() * F.grad(pts, static_cast<int>(i));
    return g;
}

MatrixXd gradient_DM(const CylindricalFunctional& F, const FramePath& X) {
    MatrixXd g = frame_gradients(F, X);
    auto idx = F.time_indices(X.grid);
    MatrixXd out = MatrixXd::Zero(X.d, X.grid.n_points());
    for (int j = 0; j < X.grid.n_points(); ++j)
        for (size_t i = 0; i < idx.size(); ++i)
            if (j < idx[i]) out.col(j) += g.col(static_cast<int>(i));
    return out;
}

MatrixXd flat_gradient(const CylindricalFunctional& F, const DiscretePath& w) {
    if (F.space != CylindricalFunctional::Space::Flat)
        throw DomainError("flat_gradient: functional must live on the flat path");
    auto pts = gather_points(F, w);
    auto idx = F.time_indices(w.grid);
    MatrixXd out = MatrixXd::Zero(w.dim(), w.grid.n_points());
    for (int j = 0; j < w.grid.n_points(); ++j)
        for (size_t i = 0; i < idx.size(); ++i)
            if (j < idx[i]) out.col(j) += F.grad(pts, static_cast<int>(i));
    return out;
}

namespace {

// Ricci action as a d x d matrix in frame coordinates at grid index j.
MatrixXd ricci_matrix(const ManifoldSpec& spec, const FramePath& X, int j) {
    MatrixXd R(spec.d, spec.d);
    Frame fr = X.frame_at(j);
    for (int c = 0; c < spec.d; ++c) R.col(c) = spec.ricci_apply(fr, VectorXd::Unit(spec.d, c));
    return R;
}

} // namespace

DampingKernelSlice solve_Q(const ManifoldSpec& spec, const FramePath& X, int s_prime_index) {
    if (s_prime_index < 0 || s_prime_index > X.grid.n_steps)
        throw DomainError("solve_Q: base index outside the grid");
    DampingKernelSlice slice;
    slice.grid = X.grid;
    slice.base_index = s_prime_index;
    slice.d = spec.d;
    double dt = X.grid.dt();
    MatrixXd Q = MatrixXd::Identity(spec.d, spec.d);
    slice.Q.push_back(Q);
    for (int j = s_prime_index; j < X.grid.n_steps; ++j) {
        MatrixXd Rj = ricci_matrix(spec, X, j);
        MatrixXd Rn = ricci_matrix(spec, X, j + 1);
        MatrixXd k1 = -0.5 * (Rj * Q);
        MatrixXd Qh = Q + 0.5 * dt * k1;
        MatrixXd k2 = -0.25 * ((Rj + Rn) * Qh);
        Q += dt * k2;
        slice.Q.push_back(Q);
    }
    return slice;
}

MatrixXd gradient_damped(const ManifoldSpec& spec, const CylindricalFunctional& F,
                         const FramePath& X) {
    MatrixXd g = frame_gradients(F, X);
    auto idx = F.time_indices(X.grid);
    double dt = X.grid.dt();
    MatrixXd out = MatrixXd::Zero(X.d, X.grid.n_points());
    // For each functional time t_i, integrate the kernel G(a) = K(t_i, a)
    // backwards in a (dG/da = 1/2 G R(a), G(t_i) = I, explicit midpoint) and
    // add G(s_j)^T g_i to every column j < idx_i.
    for (size_t i = 0; i < idx.size(); ++i) {
        MatrixXd G = MatrixXd::Identity(spec.d, spec.d);
        for (int j = idx[i] - 1; j >= 0; --j) {
            MatrixXd Ru = ricci_matrix(spec, X, j + 1);
            MatrixXd Rl = ricci_matrix(spec, X, j);
            MatrixXd k1 = 0.5 * (G * Ru);
            MatrixXd Gh = G - 0.5 * dt * k1;
            G -= dt * 0.25 * (Gh * (Ru + Rl));
            out.col(j) += G.transpose() * g.col(static_cast<int>(i));
        }
    }
    return out;
}

double pair_with_density(const MatrixXd& grad_seq, const MatrixXd& hdot, double dt) {
    int n = static_cast<int>(hdot.cols());
    double acc = 0.0;
    for (int j = 0; j < n; ++j) acc += grad_seq.col(j).dot(hdot.col(j)) * dt;
    return acc;
}

double directional_derivative_fd(const std::function<double(const DiscretePath&)>& F,
                                 const DiscretePath& w, const TangentProcess& xi, double eps,
                                 double* richardson_mismatch) {
    if (eps < 1e-7 || eps > 1e-1)
        throw DomainError("directional_derivative_fd: eps outside the supported window");
    auto perturb = [&](double e) -> DiscretePath {
        DiscretePath out(w.grid, w.dim());
        VectorXd h = VectorXd::Zero(w.dim());
        for (int k = 0; k < w.grid.n_steps; ++k) {
            VectorXd dw = w.values.col(k + 1) - w.values.col(k);
            out.values.col(k + 1) =
                out.values.col(k) + skew_exp((e * xi.A_at(k)).eval()) * dw;
        }
        // Drift part added on top of the rotated increments.
        for (int k = 0; k < w.grid.n_steps; ++k) {
            h += xi.hdot.col(k) * w.grid.dt();
            out.values.col(k + 1) += e * h;
        }
        return out;
    };
    auto central = [&](double e) {
        return (F(perturb(e)) - F(perturb(-e))) / (2.0 * e);
    };
    double d1 = central(eps);
    if (richardson_mismatch) *richardson_mismatch = std::abs(central(2.0 * eps) - d1);
    return d1;
}

double rotational_derivative(const CylindricalFunctional& alpha, const DiscretePath& w,
                             const TangentProcess& rotation) {
    if (alpha.space != CylindricalFunctional::Space::Flat)
        throw DomainError("rotational_derivative: flat cylindrical functional required");
    if (!alpha.has_hessian)
        throw DomainError("rotational_derivative: needs first and second derivatives");
    if (rotation.skew_defect() > 0.0)
        throw ContractViolation("rotational_derivative: rotation blocks must be exactly skew");
    auto pts = gather_points(alpha, w);
    auto idx = alpha.time_indices(w.grid);
    int k = static_cast<int>(idx.size());
    int d = w.dim();
    double dt = w.grid.dt();

    // Suffix-summed first derivatives D_s alpha and diagonal second
    // derivative blocks H(s) = sum_{t_l > s, t_m > s} hess_{lm}.
    std::vector<VectorXd> grads(k);
    for (int i = 0; i < k; ++i) grads[i] = alpha.grad(pts, i);

    double skorohod_term = 0.0;
    double delta_trace = 0.0;
    double hessian_term = 0.0;
    for (int s = 0; s < w.grid.n_steps; ++s) {
        VectorXd Ds = VectorXd::Zero(d);
        for (int i = 0; i < k; ++i)
            if (s < idx[i]) Ds += grads[i];
        MatrixXd gam = rotation.A_at(s);
        VectorXd u = gam.transpose() * Ds;
        skorohod_term += u.dot(w.values.col(s + 1) - w.values.col(s));

        MatrixXd H = MatrixXd::Zero(d, d);
        for (int l = 0; l < k; ++l)
            for (int m = 0; m < k; ++m)
                if (s < idx[l] && s < idx[m]) H += alpha.hess(pts, l, m);
        double contraction = (gam.array() * H.array()).sum();
        delta_trace += contraction * dt;   // trace part of the Skorohod integral
        hessian_term += contraction * dt;  // explicit Hessian term of the expansion
    }
    return (skorohod_term - delta_trace) + hessian_term;
}

TangentProcess intertwine_correction(const ManifoldSpec& spec, const FramePath& X,
                                     const DiscretePath& w, const TangentProcess& xi) {
    int d = spec.d;
    MatrixXd xi_vals = tangent_values(xi, w);
    // gamma(s) = int_0^s Omega_{r}(xi, o dw), Stratonovich midpoint in s.
    std::vector<MatrixXd> gamma(w.grid.n_points(), MatrixXd::Zero(d, d));
    for (int s = 0; s < w.grid.n_steps; ++s) {
        VectorXd dw = w.values.col(s + 1) - w.values.col(s);
        MatrixXd inc0 = spec.curvature_matrix(X.frame_at(s), xi_vals.col(s), dw);
        MatrixXd inc1 = spec.curvature_matrix(X.frame_at(s + 1), xi_vals.col(s + 1), dw);
        gamma[s + 1] = gamma[s] + 0.5 * (inc0 + inc1);
    }
    TangentProcess out = xi;
    for (int s = 0; s < w.grid.n_steps; ++s)
        out.A_at(s) = xi.A_at(s) + 0.5 * (gamma[s] + gamma[s + 1]);
    out.antisymmetrize();
    return out;
}

IbpReport ibp_check(const ManifoldSpec& spec, IbpKind kind, const CylindricalFunctional& F,
                    const CmShift& h, const TimeGrid& grid, long n_paths, std::uint64_t seed,
                    double bias_constant) {
    if (h.kind != ShiftKind::Deterministic)
        throw ContractViolation("ibp_check: the stated identities use deterministic h");
    if (!(h.grid == grid) || h.dim() != spec.d)
        throw DomainError("ibp_check: shift grid/dimension mismatch");

    IbpReport rep;
    rep.functional_id = F.id;
    rep.kind = kind;
    rep.n_paths = n_paths;
    rep.unbounded_warning = !F.bounded;

    Frame r0 = canonical_frame(spec);
    double dt = grid.dt();
    std::vector<double> lhs(n_paths), rhs(n_paths), control(n_paths);

    parallel_for(n_paths, [&](long k) {
        DiscretePath w = sample_brownian(grid, spec.d, seed, static_cast<std::uint64_t>(k));
        RollResult rolled = roll(spec, w, r0);
        MatrixXd grad = kind == IbpKind::Bismut ? gradient_DM(F, rolled.frames)
                                                : gradient_damped(spec, F, rolled.frames);
        lhs[k] = pair_with_density(grad, h.hdot, dt);

        MatrixXd integrand = h.hdot;
        if (kind == IbpKind::Bismut) {
            for (int j = 0; j < grid.n_steps; ++j)
                integrand.col(j) +=
                    0.5 * spec.ricci_apply(rolled.frames.frame_at(j), h.h.col(j));
        }
        double ito = ito_integral(integrand, w);
        double Fv = eval_functional(F, rolled.path);
        rhs[k] = Fv * ito;
        control[k] = ito;
        if (!std::isfinite(lhs[k]) || !std::isfinite(rhs[k]))
            throw SolverError("ibp_check: NaN propagation", 0.0);
    });

    McEstimate L = reduce_mean_se(lhs), R = reduce_mean_se(rhs), I = reduce_mean_se(control);
    rep.lhs = L.mean;
    rep.rhs = R.mean;
    rep.se_lhs = L.se;
    rep.se_rhs = R.se;
    // Control variate: Ito integral has mean zero.
    double cov = 0.0, var = 0.0;
    for (long k = 0; k < n_paths; ++k) {
        cov += (rhs[k] - R.mean) * (control[k] - I.mean);
        var += (control[k] - I.mean) * (control[k] - I.mean);
    }
    rep.rhs_control_variate = var > 0.0 ? R.mean - (cov / var) * I.mean : R.mean;
    rep.tolerance = 3.0 * (L.se + R.se) + bias_constant * std::sqrt(dt);
    rep.pass = std::abs(L.mean - R.mean) <= rep.tolerance;
    return rep;
}

IntertwineReport intertwining_check(
    const ManifoldSpec& spec, const CylindricalFunctional& F,
    const std::function<TangentProcess(const DiscretePath&)>& xi_builder,
    const std::string& process_id, const TimeGrid& grid, long n_paths, std::uint64_t seed,
    double eps, double tol_constant) {
    IntertwineReport rep;
    rep.functional_id = F.id;
    rep.process_id = process_id;
    rep.n_paths = n_paths;
    rep.tolerance = std::max(1e-3, tol_constant * (eps + grid.dt()));

    Frame r0 = canonical_frame(spec);
    std::vector<double> rel(n_paths);
    parallel_for(n_paths, [&](long k) {
        DiscretePath w = sample_brownian(grid, spec.d, seed, static_cast<std::uint64_t>(k));
        RollResult rolled = roll(spec, w, r0);
        TangentProcess xi = xi_builder(w);
        MatrixXd xi_vals = tangent_values(xi, w);

        MatrixXd g = frame_gradients(F, rolled.frames);
        auto idx = F.time_indices(grid);
        double lhs = 0.0;
        for (size_t i = 0; i < idx.size(); ++i)
            lhs += g.col(static_cast<int>(i)).dot(xi_vals.col(idx[i]));

        TangentProcess xi_star = intertwine_correction(spec, rolled.frames, w, xi);
        auto Froll = [&](const DiscretePath& wp) {
            RollResult r = roll(spec, wp, r0);
            return eval_functional(F, r.path);
        };
        double rhs = directional_derivative_fd(Froll, w, xi_star, eps);
        rel[k] = std::abs(lhs - rhs) / std::max({0.1, std::abs(lhs), std::abs(rhs)});
    });
    McEstimate m = reduce_mean_se(rel);
    rep.mean_rel_err = m.mean;
    for (double r : rel) rep.max_rel_err = std::max(rep.max_rel_err, r);
    rep.pass = rep.mean_rel_err <= rep.tolerance;
    return rep;
}

} // namespace pathflow

#include "pathflow/functional.hpp"

#include <cmath>

#include <unsupported/Eigen/MatrixFunctions>

#include "pathflow/errors.hpp"
#include "pathflow/rng.hpp"

namespace pathflow {

using Points = CylindricalFunctional::Points;
using Eigen::MatrixXd;
using Eigen::VectorXd;

CylindricalFunctional make_cylindrical(
    CylindricalFunctional::Space space, const std::string& id, std::vector<double> times,
    int point_dim, bool bounded, std::function<double(const Points&)> f,
    std::function<VectorXd(const Points&, int)> grad,
    std::function<MatrixXd(const Points&, int, int)> hess) {
    CylindricalFunctional F;
    F.space = space;
    F.id = id;
    F.times = std::move(times);
    F.point_dim = point_dim;
    F.bounded = bounded;
    F.f = std::move(f);
    F.grad = std::move(grad);
    F.hess = std::move(hess);
    F.has_hessian = static_cast<bool>(F.hess);

    // Validate analytic derivatives against central differences at random
    // inputs (points kept near the unit shell, where every built-in domain
    // lives).
    CounterRng rng(0xF00D, std::hash<std::string>{}(id) & 0xFFFF);
    const double step = 1e-5;
    int k = static_cast<int>(F.times.size());
    for (int trial = 0; trial < 4; ++trial) {
        Points pts(k);
        for (int i = 0; i < k; ++i) {
            VectorXd x(point_dim);
            for (int j = 0; j < point_dim; ++j) x(j) = rng.normal();
            if (x.norm() > 1e-6) x *= (1.0 + 0.1 * rng.normal()) / x.norm();
            pts[i] = x;
        }
        for (int i = 0; i < k; ++i) {
            VectorXd g = F.grad(pts, i);
            for (int j = 0; j < point_dim; ++j) {
                Points hi = pts, lo = pts;
                hi[i](j) += step;
                lo[i](j) -= step;
                double fd = (F.f(hi) - F.f(lo)) / (2.0 * step);
                if (std::abs(fd - g(j)) > 1e-6 * std::max(1.0, std::abs(g(j))))
                    throw ContractViolation("cylindrical functional '" + id +
                                            "': gradient disagrees with finite differences");
            }
            if (F.has_hessian) {
                for (int j = 0; j < k; ++j) {
                    MatrixXd h = F.hess(pts, i, j);
                    for (int c = 0; c < point_dim; ++c) {
                        Points hi = pts, lo = pts;
                        hi[j](c) += step;
                        lo[j](c) -= step;
                        VectorXd fd = (F.grad(hi, i) - F.grad(lo, i)) / (2.0 * step);
                        if ((fd - h.col(c)).cwiseAbs().maxCoeff() > 1e-5)
                            throw ContractViolation("cylindrical functional '" + id +
                                                    "': hessian disagrees with finite differences");
                    }
                }
            }
        }
    }
    return F;
}

Points gather_points(const CylindricalFunctional& F, const DiscretePath& path) {
    if (path.dim() != F.point_dim)
        throw DomainError("gather_points: path dimension does not match functional");
    Points pts;
    pts.reserve(F.times.size());
    for (int idx : F.time_indices(path.grid)) pts.push_back(path.values.col(idx));
    return pts;
}

double eval_functional(const CylindricalFunctional& F, const DiscretePath& path) {
    return F.f(gather_points(F, path));
}

namespace {

CylindricalFunctional coord_functional(const ManifoldSpec& spec, const std::string& id,
                                       double time, int coord, bool bounded_on_flat) {
    int N = spec.N;
    return make_cylindrical(
        CylindricalFunctional::Space::Manifold, id, {time}, N,
        spec.kind == ManifoldSpec::Kind::Sphere || bounded_on_flat,
        [coord](const Points& p) { return p[0](coord); },
        [coord, N](const Points&, int) { return VectorXd::Unit(N, coord).eval(); },
        [N](const Points&, int, int) { return MatrixXd::Zero(N, N).eval(); });
}

} // namespace

CylindricalFunctional builtin_functional(const ManifoldSpec& spec, const std::string& name) {
    int N = spec.N;
    if (name == "z1") return coord_functional(spec, name, 1.0, N - 1, false);
    if (name == "x_half") return coord_functional(spec, name, 0.5, 0, false);
    if (name == "zz") {
        int c = N - 1;
        return make_cylindrical(
            CylindricalFunctional::Space::Manifold, name, {0.5, 1.0}, N,
            spec.kind == ManifoldSpec::Kind::Sphere,
            [c](const Points& p) { return p[0](c) * p[1](c); },
            [c, N](const Points& p, int i) {
                return (VectorXd::Unit(N, c) * p[1 - i](c)).eval();
            },
            [c, N](const Points&, int i, int j) {
                MatrixXd h = MatrixXd::Zero(N, N);
                if (i != j) h(c, c) = 1.0;
                return h;
            });
    }
    if (name == "poly2") {
        return make_cylindrical(
            CylindricalFunctional::Space::Manifold, name, {1.0}, N,
            spec.kind == ManifoldSpec::Kind::Sphere,
            [](const Points& p) { return p[0](0) * p[0](0) - p[0](1) * p[0](1); },
            [N](const Points& p, int) {
                VectorXd g = VectorXd::Zero(N);
                g(0) = 2.0 * p[0](0);
                g(1) = -2.0 * p[0](1);
                return g;
            },
            [N](const Points&, int, int) {
                MatrixXd h = MatrixXd::Zero(N, N);
                h(0, 0) = 2.0;
                h(1, 1) = -2.0;
                return h;
            });
    }
    if (name == "tanhz") {
        int c = N - 1;
        return make_cylindrical(
            CylindricalFunctional::Space::Manifold, name, {1.0}, N, true,
            [c](const Points& p) { return std::tanh(3.0 * p[0](c)); },
            [c, N](const Points& p, int) {
                double t = std::tanh(3.0 * p[0](c));
                return (VectorXd::Unit(N, c) * 3.0 * (1.0 - t * t)).eval();
            },
            [c, N](const Points& p, int, int) {
                double t = std::tanh(3.0 * p[0](c));
                MatrixXd h = MatrixXd::Zero(N, N);
                h(c, c) = -18.0 * t * (1.0 - t * t);
                return h;
            });
    }
    throw ConfigError("builtin_functional: unknown functional '" + name + "'");
}

std::vector<CylindricalFunctional> default_battery(const ManifoldSpec& spec) {
    std::vector<CylindricalFunctional> out;
    for (const char* name : {"z1", "x_half", "zz", "poly2", "tanhz"})
        out.push_back(builtin_functional(spec, name));
    return out;
}

MatrixXd tangent_values(const TangentProcess& xi, const DiscretePath& w) {
    if (!(xi.grid == w.grid) || xi.d != w.dim())
        throw DomainError("tangent_values: grid/dimension mismatch");
    MatrixXd vals = MatrixXd::Zero(xi.d, xi.grid.n_points());
    double dt = xi.grid.dt();
    for (int k = 0; k < xi.grid.n_steps; ++k)
        vals.col(k + 1) = vals.col(k) + xi.A_at(k) * (w.values.col(k + 1) - w.values.col(k)) +
                          xi.hdot.col(k) * dt;
    return vals;
}

MatrixXd skew_exp(const MatrixXd& A) {
    int d = static_cast<int>(A.rows());
    if (d == 1) return MatrixXd::Ones(1, 1);
    if (d == 2) {
        double th = A(1, 0);
        MatrixXd r(2, 2);
        r << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
        return r;
    }
    return A.exp();
}

} // namespace pathflow

#include <doctest.h>

#include <cmath>
#include <functional>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "oracles.hpp"
#include "pathflow/errors.hpp"
#include "pathflow/geometry.hpp"
#include "pathflow/rng.hpp"

using namespace pathflow;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

VectorXd unit(double x, double y, double z) {
    VectorXd v(3);
    v << x, y, z;
    return v / v.norm();
}

// Integrates the transport ODE dV = -Gamma_x(dx) V along a sampled curve
// with RK4 (no re-orthonormalization); the field comes from the spec under
// test, the comparison oracle does not.
MatrixXd transport_via_christoffel(const ManifoldSpec& spec,
                                   const std::function<VectorXd(double)>& gamma,
                                   const MatrixXd& V0, double h) {
    MatrixXd V = V0;
    auto deriv = [&](double s, const MatrixXd& Vin) -> MatrixXd {
        double eps = 1e-6;
        VectorXd x = gamma(s);
        VectorXd dx = (gamma(std::min(1.0, s + eps)) - gamma(std::max(0.0, s - eps))) /
                      (std::min(1.0, s + eps) - std::max(0.0, s - eps));
        return -spec.christoffel_apply(x, dx, Vin);
    };
    double s = 0.0;
    while (s < 1.0 - 1e-12) {
        double step = std::min(h, 1.0 - s);
        MatrixXd k1 = deriv(s, V);
        MatrixXd k2 = deriv(s + 0.5 * step, V + 0.5 * step * k1);
        MatrixXd k3 = deriv(s + 0.5 * step, V + 0.5 * step * k2);
        MatrixXd k4 = deriv(s + step, V + step * k3);
        V += (step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        s += step;
    }
    return V;
}

} // namespace

TEST_CASE("make_manifold wiring") {
    ManifoldSpec flat = make_manifold("flat", 2);
    CHECK(flat.N == 2);
    CHECK(flat.name == "flat2");
    Frame f0 = default_frame(flat, VectorXd::Zero(2));
    CHECK(flat.christoffel_apply(VectorXd::Zero(2), VectorXd::Ones(2), f0.basis).norm() == 0.0);
    CHECK(flat.curvature_matrix(f0, VectorXd::Unit(2, 0), VectorXd::Unit(2, 1)).norm() == 0.0);

    ManifoldSpec sph = make_manifold("sphere", 2);
    CHECK(sph.N == 3);
    CHECK(sph.name == "sphere2");

    // S^1: so(1) is trivial.
    ManifoldSpec circ = make_manifold("sphere", 1);
    Frame fc = default_frame(circ, unit(1, 0, 0).head(2).eval());
    CHECK(circ.curvature_matrix(fc, VectorXd::Ones(1), VectorXd::Ones(1)).norm() == 0.0);

    CHECK_THROWS_AS(make_manifold("torus", 2), ConfigError);
    CHECK(parse_manifold("sphere2").N == 3);
    CHECK(parse_manifold("flat3").N == 3);
}

TEST_CASE("projection examples and idempotence") {
    ManifoldSpec sph = make_manifold("sphere", 2);
    VectorXd y(3);
    y << 0, 0, 2;
    CHECK((project_to_manifold(sph, y).coords - unit(0, 0, 1)).norm() == 0.0);
    y << 0, 0, 1;
    CHECK((project_to_manifold(sph, y).coords - y).norm() == 0.0);
    y << 3.0 / 5.0 * 1.1, 4.0 / 5.0 * 1.1, 0.0;
    VectorXd p = project_to_manifold(sph, y).coords;
    CHECK(std::abs(p.norm() - 1.0) < 1e-14);
    CHECK(std::abs(p(0) - 3.0 / 5.0) < 1e-14);
    CHECK(std::abs(p(1) - 4.0 / 5.0) < 1e-14);

    CounterRng rng(11, 0);
    for (int k = 0; k < 50; ++k) {
        VectorXd z(3);
        z << rng.normal(), rng.normal(), rng.normal();
        if (z.norm() < 1e-3) continue;
        VectorXd p1 = sph.project(z);
        VectorXd p2 = sph.project(p1);
        CHECK((p1 - p2).norm() < 1e-14);
    }
    VectorXd origin = VectorXd::Zero(3);
    CHECK_THROWS_AS(project_to_manifold(sph, origin), DomainError);
}

TEST_CASE("christoffel matches the sphere pattern and the transport oracle") {
    ManifoldSpec sph = make_manifold("sphere", 2);
    VectorXd x = unit(0.3, -0.5, 0.81);
    Frame f = default_frame(sph, x);
    // Tangent direction: the connection correction is x (v . u).
    VectorXd v = sph.tangent_project(x, unit(0.2, 0.7, -0.4));
    MatrixXd G = sph.christoffel_apply(x, v, f.basis);
    MatrixXd expected = x * (v.transpose() * f.basis);
    CHECK((G - expected).norm() < 1e-14);

    // Linearity in v and X (general ambient v).
    VectorXd v2(3);
    v2 << 0.2, 0.7, -0.4;
    MatrixXd G2 = sph.christoffel_apply(x, v2, f.basis);
    CHECK((sph.christoffel_apply(x, (2.5 * v2).eval(), f.basis) - 2.5 * G2).norm() < 1e-12);
    CHECK((sph.christoffel_apply(x, v2, (3.0 * f.basis).eval()) - 3.0 * G2).norm() < 1e-12);

    // Transport along a smooth curve vs the projection-transport oracle.
    VectorXd c0 = unit(1, 0.2, -0.1), c1 = unit(-0.3, 1, 0.4), c2 = unit(0.2, -0.4, 1);
    auto gamma = [&](double s) -> VectorXd {
        VectorXd y = c0 + s * c1 + s * s * 0.5 * c2;
        return y / y.norm();
    };
    Frame fg = default_frame(sph, gamma(0.0));
    MatrixXd end = transport_via_christoffel(sph, gamma, fg.basis, 1e-3);
    for (int j = 0; j < 2; ++j) {
        VectorXd oracle = oracles::projection_transport(gamma, fg.basis.col(j), 1e-5);
        CHECK((end.col(j) - oracle).norm() < 1e-4);
    }
    // Transport preserves orthonormality without any correction.
    CHECK((end.transpose() * end - MatrixXd::Identity(2, 2)).norm() < 1e-8);
    // ... and keeps columns tangent.
    VectorXd xe = gamma(1.0);
    CHECK((end.col(0) - sph.tangent_project(xe, end.col(0))).norm() < 1e-6);
}

TEST_CASE("curvature form: closed form, holonomy oracle, antisymmetry") {
    ManifoldSpec sph = make_manifold("sphere", 2);
    Frame f = default_frame(sph, unit(0.1, 0.2, 0.97));
    VectorXd e1 = VectorXd::Unit(2, 0), e2 = VectorXd::Unit(2, 1);

    MatrixXd omega = curvature_form(sph, f, e1, e2).to_matrix();
    MatrixXd expected(2, 2);
    expected << 0, 1, -1, 0;
    CHECK((omega - expected).norm() < 1e-14);

    // Holonomy oracle, Richardson-extrapolated.
    MatrixXd oracle = oracles::curvature_from_holonomy(f, e1, e2);
    CHECK((omega - oracle).cwiseAbs().maxCoeff() < 1e-6);

    // Antisymmetry is exact.
    MatrixXd m12 = curvature_form(sph, f, e1, e2).to_matrix();
    MatrixXd m21 = curvature_form(sph, f, e2, e1).to_matrix();
    CHECK((m12 + m21).norm() == 0.0);
    CHECK(curvature_form(sph, f, e1, e1).to_matrix().norm() == 0.0);

    ManifoldSpec flat = make_manifold("flat", 3);
    Frame ff = default_frame(flat, VectorXd::Zero(3));
    CHECK(curvature_form(flat, ff, VectorXd::Unit(3, 0), VectorXd::Unit(3, 1)).to_matrix().norm() ==
          0.0);
}

TEST_CASE("ricci: flat, sphere2, sphere3, and the summed-oracle identity") {
    ManifoldSpec flat = make_manifold("flat", 2);
    Frame ff = default_frame(flat, VectorXd::Zero(2));
    CHECK(ricci_apply(flat, ff, VectorXd::Ones(2)).norm() == 0.0);

    ManifoldSpec s2 = make_manifold("sphere", 2);
    Frame f2 = default_frame(s2, unit(0.4, -0.3, 0.87));
    VectorXd v(2);
    v << 0.6, -1.2;
    CHECK((ricci_apply(s2, f2, v) - v).norm() < 1e-14);
    // Against the holonomy oracle.
    CHECK((oracles::ricci_from_holonomy(f2, v) - v).cwiseAbs().maxCoeff() < 1e-6);

    ManifoldSpec s3 = make_manifold("sphere", 3);
    VectorXd base4 = VectorXd::Zero(4);
    base4(3) = 1.0;
    Frame f3 = default_frame(s3, base4);
    VectorXd v3(3);
    v3 << 1.0, 0.5, -0.25;
    CHECK((ricci_apply(s3, f3, v3) - 2.0 * v3).norm() < 1e-14);
    CHECK((oracles::ricci_from_holonomy(f3, v3) - 2.0 * v3).cwiseAbs().maxCoeff() < 1e-6);

    // Definition identity: ric = -sum Omega(e_i, .) e_i for every spec.
    for (const ManifoldSpec* spec : {&s2, &s3}) {
        Frame fr = spec->d == 2 ? f2 : f3;
        VectorXd w = VectorXd::LinSpaced(spec->d, -1.0, 1.0);
        VectorXd summed = VectorXd::Zero(spec->d);
        for (int i = 0; i < spec->d; ++i) {
            VectorXd ei = VectorXd::Unit(spec->d, i);
            summed -= spec->curvature_matrix(fr, ei, w) * ei;
        }
        CHECK((summed - spec->ricci_apply(fr, w)).norm() < 1e-14);
    }
}

TEST_CASE("torsion is zero and TSS holds vacuously") {
    ManifoldSpec s2 = make_manifold("sphere", 2);
    Frame f = default_frame(s2, unit(0, 1, 0));
    VectorXd u(2), v(2);
    u << 1.0, -0.5;
    v << 0.25, 2.0;
    CHECK(torsion_form(s2, f, u, v).norm() == 0.0);
    // TSS predicate g(Theta(u,v), v) = 0.
    CHECK(torsion_form(s2, f, u, v).dot(v) == 0.0);
    ManifoldSpec fl = make_manifold("flat", 2);
    Frame ff = default_frame(fl, VectorXd::Zero(2));
    CHECK(torsion_form(fl, ff, u, v).norm() == 0.0);
}

TEST_CASE("frame invariants and re-orthonormalization") {
    ManifoldSpec s2 = make_manifold("sphere", 2);
    CounterRng rng(3, 1);
    for (int k = 0; k < 25; ++k) {
        VectorXd y(3);
        y << rng.normal(), rng.normal(), rng.normal();
        if (y.norm() < 0.1) continue;
        Frame f = default_frame(s2, y);
        CHECK(frame_defect(s2, f) < 1e-12);
        // Perturb and correct.
        MatrixXd noisy = f.basis + 0.05 * MatrixXd::Random(3, 2);
        Frame g = make_frame(s2, f.base.coords, noisy);
        CHECK(frame_defect(s2, g) < 1e-12);
    }
    // Degenerate pole where the first coordinate axes lose rank.
    Frame pole = default_frame(s2, unit(1, 0, 0));
    CHECK(frame_defect(s2, pole) < 1e-12);
}

TEST_CASE("first structural equation by finite differences") {
    // Two-parameter family of frames u(a,b); checks
    // d theta(da, db) + omega(da) theta(db) - omega(db) theta(da) = Theta = 0.
    const double step = 1e-4;
    for (const char* name : {"flat", "sphere"}) {
        ManifoldSpec spec = make_manifold(name, 2);
        VectorXd y0, y1, y2, y3;
        if (spec.kind == ManifoldSpec::Kind::Sphere) {
            y0 = unit(0.9, 0.1, 0.42);
            y1 = unit(-0.2, 1.0, 0.3);
            y2 = unit(0.3, -0.2, 1.0);
            y3 = unit(1.0, 1.0, -0.5);
        } else {
            y0 = VectorXd::Zero(2);
            y1 = VectorXd::Unit(2, 0) * 0.8;
            y2 = VectorXd::Unit(2, 1) * 1.1;
            y3 = VectorXd::Ones(2) * 0.3;
        }
        MatrixXd S1(2, 2), S2(2, 2);
        S1 << 0, 0.7, -0.7, 0;
        S2 << 0, -0.4, 0.4, 0;

        auto point = [&](double a, double b) -> VectorXd {
            if (spec.kind == ManifoldSpec::Kind::Sphere) {
                VectorXd y = y0 + a * y1 + b * y2 + a * b * y3;
                return y / y.norm();
            }
            return y0 + a * y1 + b * y2 + a * b * y3;
        };
        Frame ref = default_frame(spec, point(0.0, 0.0));
        auto frame_fn = [&](double a, double b) -> MatrixXd {
            MatrixXd R = (a * S1 + b * S2).exp();
            return orthonormalize_frame(spec, point(a, b), ref.basis * R);
        };
        auto theta = [&](double a, double b, int dir) -> VectorXd {
            double e = step;
            VectorXd dx = dir == 0 ? (point(a + e, b) - point(a - e, b)) / (2 * e)
                                   : (point(a, b + e) - point(a, b - e)) / (2 * e);
            return frame_fn(a, b).transpose() * dx;
        };
        auto omega = [&](double a, double b, int dir) -> MatrixXd {
            double e = step;
            MatrixXd dX = dir == 0 ? (frame_fn(a + e, b) - frame_fn(a - e, b)) / (2 * e)
                                   : (frame_fn(a, b + e) - frame_fn(a, b - e)) / (2 * e);
            VectorXd dx = dir == 0 ? (point(a + e, b) - point(a - e, b)) / (2 * e)
                                   : (point(a, b + e) - point(a, b - e)) / (2 * e);
            MatrixXd X = frame_fn(a, b);
            return X.transpose() * (dX + spec.christoffel_apply(point(a, b), dx, X));
        };
        double a0 = 0.02, b0 = -0.03;
        VectorXd dtheta = (theta(a0 + step, b0, 1) - theta(a0 - step, b0, 1)) / (2 * step) -
                          (theta(a0, b0 + step, 0) - theta(a0, b0 - step, 0)) / (2 * step);
        VectorXd wedge = omega(a0, b0, 0) * theta(a0, b0, 1) - omega(a0, b0, 1) * theta(a0, b0, 0);
        VectorXd residual = dtheta + wedge; // Theta = 0
        CHECK(residual.norm() < 100 * step);
    }
}

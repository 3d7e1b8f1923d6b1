#pragma once

// Independent oracles used by the test suites. Everything here is computed
// from first principles (closed forms, quadrature, tiny-step ODEs) and never
// calls the integrators it is used to check.

#include <functional>

#include <Eigen/Dense>

#include "pathflow/geometry.hpp"
#include "pathflow/grid.hpp"

namespace oracles {

/// Point on the unit sphere geodesic from a with unit tangent t at arclength
/// theta.
Eigen::VectorXd geodesic_point(const Eigen::VectorXd& a, const Eigen::VectorXd& t, double theta);

/// Exact parallel transport of v along that geodesic: the tangent component
/// rotates with the great circle, the rest is unchanged.
Eigen::VectorXd great_circle_transport(const Eigen::VectorXd& a, const Eigen::VectorXd& t,
                                       double theta, const Eigen::VectorXd& v);

/// Exact transport along the minimizing great-circle arc between two
/// non-antipodal points.
Eigen::VectorXd transport_between(const Eigen::VectorXd& from, const Eigen::VectorXd& to,
                                  const Eigen::VectorXd& v);

/// Unsigned area of the spherical triangle with the given unit vertices
/// (l'Huilier, stable for small triangles).
double spherical_triangle_area(const Eigen::VectorXd& A, const Eigen::VectorXd& B,
                               const Eigen::VectorXd& C);

/// Holonomy of the geodesic quadrilateral with corners exp_m(0), exp_m(eps u),
/// exp_m(eps(u+v)), exp_m(eps v), expressed in the frame: returns the d x d
/// matrix H with H = frame^T (ambient loop transport) frame, plus the
/// enclosed area.
struct HolonomyProbe {
    Eigen::MatrixXd H;
    double area;
};
HolonomyProbe geodesic_square_holonomy(const pathflow::Frame& r, const Eigen::VectorXd& u,
                                       const Eigen::VectorXd& v, double eps);

/// Curvature matrix estimate (I - H)/area, Richardson-extrapolated in eps^2.
Eigen::MatrixXd curvature_from_holonomy(const pathflow::Frame& r, const Eigen::VectorXd& u,
                                        const Eigen::VectorXd& v, double eps = 1e-3);

/// Ricci action from the holonomy oracle: -sum_i Omega(e_i, v) e_i.
Eigen::VectorXd ricci_from_holonomy(const pathflow::Frame& r, const Eigen::VectorXd& v);

/// Parallel transport by repeated tangent projection at step eta along a
/// smooth curve gamma: [0,1] -> S^d; first-order in eta, independent of the
/// connection code.
Eigen::VectorXd projection_transport(const std::function<Eigen::VectorXd(double)>& gamma,
                                     const Eigen::VectorXd& v0, double eta);

/// E[g(<p_t, start>)] for Brownian motion on the unit S^2 via the Legendre
/// series of the heat kernel; g is evaluated through Gauss-Legendre
/// quadrature on [-1, 1].
double sphere2_heat_expectation(const std::function<double(double)>& g, double t,
                                int max_degree = 48, int quad_points = 128);

/// Great-circle arc of total length L on the sphere sampled on the grid,
/// starting at a with unit tangent t.
pathflow::DiscretePath great_circle_path(const pathflow::TimeGrid& grid,
                                         const Eigen::VectorXd& a, const Eigen::VectorXd& t,
                                         double L);

} // namespace oracles

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pathflow/functional.hpp"
#include "pathflow/geometry.hpp"
#include "pathflow/grid.hpp"
#include "pathflow/lift.hpp"
#include "pathflow/wiener.hpp"

namespace pathflow {

/// Canonical start point (sphere: last axis pole; flat: origin) and frame
/// used by every Monte Carlo driver in the suite.
Eigen::VectorXd canonical_start(const ManifoldSpec& spec);
Frame canonical_frame(const ManifoldSpec& spec);

/// Frame-coordinate gradients g_i = X(t_i)^T grad_i f, stacked d x k.
Eigen::MatrixXd frame_gradients(const CylindricalFunctional& F, const FramePath& X);

/// Path-space gradient D^M F in the time-0-identified frame coordinates:
/// column j holds sum_i 1_{s_j < t_i} g_i; piecewise constant between the
/// functional's times. d x (n+1).
Eigen::MatrixXd gradient_DM(const CylindricalFunctional& F, const FramePath& X);

/// Classical flat Malliavin derivative of a flat cylindrical functional:
/// column j = sum_i 1_{s_j < t_i} grad_i f. d x (n+1).
Eigen::MatrixXd flat_gradient(const CylindricalFunctional& F, const DiscretePath& w);

/// Ricci-damping kernel slice Q_{s, s'} for s >= s', solving
/// dQ/ds = -1/2 ric_{r(s)} Q, Q_{s',s'} = I (explicit midpoint).
struct DampingKernelSlice {
    TimeGrid grid;
    int base_index = 0;
    int d = 0;
    std::vector<Eigen::MatrixXd> Q; // Q[j] = Q_{s_{base+j}, s_base}

    const Eigen::MatrixXd& at(int s_index) const { return Q.at(s_index - base_index); }
};

DampingKernelSlice solve_Q(const ManifoldSpec& spec, const FramePath& X, int s_prime_index);

/// Damped gradient (Ricci-damped transport weights): column j holds
/// sum_i 1_{s_j < t_i} K(t_i, s_j)^T g_i with the same kernel as solve_Q.
Eigen::MatrixXd gradient_damped(const ManifoldSpec& spec, const CylindricalFunctional& F,
                                const FramePath& X);

/// <grad sequence, density> pairing: sum_j col_j . hdot_j dt.
double pair_with_density(const Eigen::MatrixXd& grad_seq, const Eigen::MatrixXd& hdot, double dt);

/// Central finite difference of a flat-path functional along a tangent
/// process: perturbed increments exp(eps A_k) dw_k plus eps h drift. When
/// richardson_mismatch is given, also evaluates at 2*eps and stores
/// |D(2eps) - D(eps)| (O(eps^2) for smooth functionals).
double directional_derivative_fd(const std::function<double(const DiscretePath&)>& F,
                                 const DiscretePath& w, const TangentProcess& xi, double eps,
                                 double* richardson_mismatch = nullptr);

/// Rotational derivative D^R of a flat cylindrical functional along an
/// adapted skew process, evaluated through its Skorohod-plus-Hessian-trace
/// expansion (all terms analytic; requires the Hessian evaluator).
double rotational_derivative(const CylindricalFunctional& alpha, const DiscretePath& w,
                             const TangentProcess& rotation);

/// Intertwining correction: xi* with rotation blocks
/// A*_k = A_k + (gamma_k + gamma_{k+1})/2, where gamma is the Stratonovich
/// accumulation of the curvature form against the driving noise along the
/// rolled frames.
TangentProcess intertwine_correction(const ManifoldSpec& spec, const FramePath& X,
                                     const DiscretePath& w, const TangentProcess& xi);

enum class IbpKind { Bismut, Damped };

struct IbpReport {
    std::string functional_id;
    std::string shift_id;
    IbpKind kind = IbpKind::Bismut;
    long n_paths = 0;
    double lhs = 0.0, rhs = 0.0;
    double se_lhs = 0.0, se_rhs = 0.0;
    double rhs_control_variate = 0.0;
    double tolerance = 0.0;
    bool pass = false;
    bool unbounded_warning = false;
};

/// Monte Carlo integration-by-parts verifier with common random numbers.
/// lhs = E[<grad F, hdot>], rhs = E[F Ito(integrand)] where the integrand is
/// hdot + ric h / 2 (Bismut) or hdot (damped). h must be deterministic.
IbpReport ibp_check(const ManifoldSpec& spec, IbpKind kind, const CylindricalFunctional& F,
                    const CmShift& h, const TimeGrid& grid, long n_paths, std::uint64_t seed,
                    double bias_constant = 0.2);

struct IntertwineReport {
    std::string functional_id;
    std::string process_id;
    long n_paths = 0;
    double mean_rel_err = 0.0;
    double max_rel_err = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

/// Checks D^M_xi F = D_{xi*}(F o I) per path: analytic left side vs finite
/// difference right side with the corrected tangent process.
IntertwineReport intertwining_check(
    const ManifoldSpec& spec, const CylindricalFunctional& F,
    const std::function<TangentProcess(const DiscretePath&)>& xi_builder,
    const std::string& process_id, const TimeGrid& grid, long n_paths, std::uint64_t seed,
    double eps = 1e-4, double tol_constant = 2.0);

} // namespace pathflow

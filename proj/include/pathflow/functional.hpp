#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pathflow/geometry.hpp"
#include "pathflow/grid.hpp"
#include "pathflow/lift.hpp"

namespace pathflow {

/// F(path) = f(path(s_1), ..., path(s_k)) with analytic first (and optionally
/// second) ambient derivatives. Flat functionals read the Wiener path,
/// manifold functionals read the rolled path. Derivative evaluators are
/// checked against central finite differences at construction.
struct CylindricalFunctional {
    enum class Space { Flat, Manifold };

    using Points = std::vector<Eigen::VectorXd>;

    Space space = Space::Flat;
    std::string id;
    std::vector<double> times; // in (0, 1], grid points at evaluation time
    int point_dim = 0;         // ambient dimension of each evaluation point
    bool bounded = true;
    bool has_hessian = false;

    std::function<double(const Points&)> f;
    std::function<Eigen::VectorXd(const Points&, int)> grad;              // d f / d x_i
    std::function<Eigen::MatrixXd(const Points&, int, int)> hess;         // d2 f / dx_i dx_j

    std::vector<int> time_indices(const TimeGrid& grid) const {
        std::vector<int> idx;
        idx.reserve(times.size());
        for (double t : times) idx.push_back(grid.index_of(t));
        return idx;
    }
};

/// Builds a functional and validates its evaluators against central finite
/// differences (1e-6 relative) at random inputs. Throws ContractViolation on
/// mismatch.
CylindricalFunctional make_cylindrical(
    CylindricalFunctional::Space space, const std::string& id, std::vector<double> times,
    int point_dim, bool bounded, std::function<double(const CylindricalFunctional::Points&)> f,
    std::function<Eigen::VectorXd(const CylindricalFunctional::Points&, int)> grad,
    std::function<Eigen::MatrixXd(const CylindricalFunctional::Points&, int, int)> hess = nullptr);

/// Evaluation points of F along the appropriate path.
CylindricalFunctional::Points gather_points(const CylindricalFunctional& F,
                                            const DiscretePath& path);

double eval_functional(const CylindricalFunctional& F, const DiscretePath& path);

/// Named built-ins usable from the CLI (manifold space): z1, x_half, zz,
/// poly2, tanhz. Throws ConfigError on unknown names.
CylindricalFunctional builtin_functional(const ManifoldSpec& spec, const std::string& name);

/// The five-functional battery used by the quasi-invariance and IBP suites.
std::vector<CylindricalFunctional> default_battery(const ManifoldSpec& spec);

/// Path perturbation: d xi = A dw + hdot ds with adapted skew A (stored as
/// d x d blocks per grid point) and adapted square-integrable drift.
struct TangentProcess {
    TimeGrid grid;
    int d = 0;
    Eigen::MatrixXd A;    // d x (d * n_points), skew blocks
    Eigen::MatrixXd hdot; // d x n

    TangentProcess() = default;
    TangentProcess(const TimeGrid& g, int dim)
        : grid(g), d(dim), A(Eigen::MatrixXd::Zero(dim, dim * g.n_points())),
          hdot(Eigen::MatrixXd::Zero(dim, g.n_steps)) {}

    Eigen::Ref<Eigen::MatrixXd> A_at(int i) { return A.block(0, i * d, d, d); }
    Eigen::Ref<const Eigen::MatrixXd> A_at(int i) const { return A.block(0, i * d, d, d); }

    /// Enforces exact skewness in place ((A - A^T)/2 per block).
    void antisymmetrize() {
        for (int i = 0; i < grid.n_points(); ++i) {
            Eigen::MatrixXd a = A_at(i);
            A_at(i) = 0.5 * (a - a.transpose());
        }
    }

    double skew_defect() const {
        double worst = 0.0;
        for (int i = 0; i < grid.n_points(); ++i)
            worst = std::max(worst, (A_at(i) + A_at(i).transpose()).cwiseAbs().maxCoeff());
        return worst;
    }
};

/// xi(s_j) = sum_{k<j} A_k dw_k + sum_{k<j} hdot_k dt, as d x (n+1) values.
Eigen::MatrixXd tangent_values(const TangentProcess& xi, const DiscretePath& w);

/// exp of a small skew matrix (closed forms for d <= 2, series otherwise).
Eigen::MatrixXd skew_exp(const Eigen::MatrixXd& A);

} // namespace pathflow

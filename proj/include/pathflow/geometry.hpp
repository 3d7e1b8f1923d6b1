#pragma once

#include <string>

#include <Eigen/Dense>

#include "pathflow/errors.hpp"

namespace pathflow {

/// so(d) matrix stored as its strictly lower triangle, so A + A^T = 0 holds
/// exactly by construction.
class SkewMatrix {
public:
    explicit SkewMatrix(int d = 0) : d_(d), lower_(Eigen::VectorXd::Zero(d * (d - 1) / 2)) {}

    /// Builds from a general matrix by exact antisymmetrization (A - A^T)/2.
    static SkewMatrix from_matrix(const Eigen::MatrixXd& a) {
        SkewMatrix s(static_cast<int>(a.rows()));
        int k = 0;
        for (int j = 0; j < s.d_; ++j)
            for (int i = j + 1; i < s.d_; ++i) s.lower_[k++] = 0.5 * (a(i, j) - a(j, i));
        return s;
    }

    int dim() const { return d_; }

    Eigen::MatrixXd to_matrix() const {
        Eigen::MatrixXd a = Eigen::MatrixXd::Zero(d_, d_);
        int k = 0;
        for (int j = 0; j < d_; ++j)
            for (int i = j + 1; i < d_; ++i) {
                a(i, j) = lower_[k];
                a(j, i) = -lower_[k];
                ++k;
            }
        return a;
    }

    Eigen::VectorXd apply(const Eigen::VectorXd& v) const { return to_matrix() * v; }

private:
    int d_;
    Eigen::VectorXd lower_;
};

struct ManifoldSpec; // fwd

/// Ambient point constrained to lie on the manifold (within tolerance).
struct Point {
    Eigen::VectorXd coords;
};

/// Orthonormal frame: base point plus an N x d matrix whose columns are an
/// orthonormal basis of the tangent space at the base.
struct Frame {
    Point base;
    Eigen::MatrixXd basis; // N x d
};

/// Embedded Riemannian manifold with Levi-Civita connection data. Only two
/// concrete instances exist: flat R^d and the unit sphere S^d in R^{d+1};
/// both have closed forms for every tensor. All members are immutable after
/// construction and all operations are pure.
struct ManifoldSpec {
    enum class Kind { Flat, Sphere };

    std::string name;
    Kind kind = Kind::Flat;
    int d = 0; // intrinsic dimension
    int N = 0; // ambient dimension
    // Tube around the sphere where the connection extension is defined; paths
    // leaving it raise a diagnostic instead of being silently projected.
    double tube_inner = 0.5;
    double tube_outer = 1.5;
    double radius_floor = 1e-6;
    double on_manifold_tol = 1e-12;

    bool curved() const { return kind == Kind::Sphere && d >= 2; }

    bool in_tube(const Eigen::VectorXd& y) const {
        if (kind == Kind::Flat) return true;
        double r = y.norm();
        return r >= tube_inner && r <= tube_outer;
    }

    double distance_to_manifold(const Eigen::VectorXd& y) const {
        if (kind == Kind::Flat) return 0.0;
        return std::abs(y.norm() - 1.0);
    }

    /// Closest-point projection p: Y -> M; identity on M.
    Eigen::VectorXd project(const Eigen::VectorXd& y) const {
        if (kind == Kind::Flat) return y;
        double r = y.norm();
        if (r <= radius_floor)
            throw DomainError("project_to_manifold: point at the radius floor of the sphere chart");
        return y / r;
    }

    /// Orthogonal projection of an ambient vector onto T_m M.
    Eigen::VectorXd tangent_project(const Eigen::VectorXd& m, const Eigen::VectorXd& v) const {
        if (kind == Kind::Flat) return v;
        return v - m * (m.dot(v) / m.squaredNorm());
    }

    /// Connection one-form applied to a direction and a matrix of vectors:
    /// returns Gamma_x(v) . X (N x d). The lift SDE reads
    /// dX = -Gamma_x(o dx) . X. On the sphere itself, with v and the columns
    /// of X tangent, Gamma_x(v) u = x (v.u). The tube extension is the
    /// product connection (round transport times a flat radial factor),
    ///   Gamma_y(v) u = [ y (v . P_y u) / |y| - (y.v) u / |y| ] / |y|,
    /// which commutes with the projection p(y) = y/|y|: projecting a lift
    /// equals lifting the projected path.
    void christoffel_apply(const Eigen::VectorXd& x, const Eigen::VectorXd& v,
                           const Eigen::MatrixXd& X, Eigen::MatrixXd& out) const {
        if (kind == Kind::Flat) {
            out.setZero(X.rows(), X.cols());
            return;
        }
        double r2 = x.squaredNorm();
        double xv = x.dot(v);
        out.noalias() = x * ((v.transpose() * X) - (xv / r2) * (x.transpose() * X));
        out.noalias() -= xv * X;
        out /= r2;
    }

    Eigen::MatrixXd christoffel_apply(const Eigen::VectorXd& x, const Eigen::VectorXd& v,
                                      const Eigen::MatrixXd& X) const {
        Eigen::MatrixXd out;
        christoffel_apply(x, v, X, out);
        return out;
    }

    /// Curvature two-form in frame coordinates: Omega_r(u, v) in so(d).
    /// Unit sphere: Omega(u,v) = u v^T - v u^T (constant curvature one);
    /// flat and S^1: zero.
    Eigen::MatrixXd curvature_matrix(const Frame&, const Eigen::VectorXd& u,
                                     const Eigen::VectorXd& v) const {
        if (!curved()) return Eigen::MatrixXd::Zero(d, d);
        return u * v.transpose() - v * u.transpose();
    }

    /// ric_r(v) = -sum_i Omega_r(e_i, v) e_i; equals (d-1) v on the unit
    /// sphere and 0 on flat space.
    Eigen::VectorXd ricci_apply(const Frame&, const Eigen::VectorXd& v) const {
        if (!curved()) return Eigen::VectorXd::Zero(d);
        return (d - 1) * v;
    }

    /// Scalar ric factor valid for the built-in specs (ric = c Id in frame
    /// coordinates). Hot paths use this instead of the matrix form.
    double ricci_scalar() const { return curved() ? static_cast<double>(d - 1) : 0.0; }

    /// Torsion form: zero for every built-in spec (Levi-Civita). The hook
    /// exists so TSS torsion terms stay wired through the flow equations.
    Eigen::VectorXd torsion_form(const Frame&, const Eigen::VectorXd&,
                                 const Eigen::VectorXd&) const {
        return Eigen::VectorXd::Zero(d);
    }
};

/// Builds a fully wired spec. Supported names: "flat", "sphere".
ManifoldSpec make_manifold(const std::string& name, int d);

/// Parses fused names like "sphere2" or "flat3".
ManifoldSpec parse_manifold(const std::string& token);

/// Closest point on M as a validated Point. Throws DomainError outside the
/// projection domain.
Point project_to_manifold(const ManifoldSpec& spec, const Eigen::VectorXd& y);

Eigen::MatrixXd christoffel_apply(const ManifoldSpec& spec, const Point& x,
                                  const Eigen::VectorXd& v, const Eigen::MatrixXd& X);

SkewMatrix curvature_form(const ManifoldSpec& spec, const Frame& r, const Eigen::VectorXd& u,
                          const Eigen::VectorXd& v);

Eigen::VectorXd ricci_apply(const ManifoldSpec& spec, const Frame& r, const Eigen::VectorXd& v);

Eigen::VectorXd torsion_form(const ManifoldSpec& spec, const Frame& r, const Eigen::VectorXd& u,
                             const Eigen::VectorXd& v);

/// Re-orthonormalizes candidate tangent columns at base: tangent-projects,
/// then takes the polar factor B (B^T B)^{-1/2}.
Eigen::MatrixXd orthonormalize_frame(const ManifoldSpec& spec, const Eigen::VectorXd& base,
                                     const Eigen::MatrixXd& candidate);

/// Canonical frame at a point: polar correction of the first d coordinate
/// directions projected to the tangent space (rotated when degenerate).
Frame default_frame(const ManifoldSpec& spec, const Eigen::VectorXd& base);

/// Builds a validated frame from candidate columns.
Frame make_frame(const ManifoldSpec& spec, const Eigen::VectorXd& base,
                 const Eigen::MatrixXd& candidate);

/// Max deviation from the frame invariants (orthonormality and tangency).
double frame_defect(const ManifoldSpec& spec, const Frame& f);

} // namespace pathflow

#include "pathflow/geometry.hpp"

#include <cctype>

#include <Eigen/Eigenvalues>

namespace pathflow {

ManifoldSpec make_manifold(const std::string& name, int d) {
    if (d < 1) throw ConfigError("make_manifold: d must be >= 1");
    ManifoldSpec spec;
    spec.d = d;
    if (name == "flat") {
        spec.kind = ManifoldSpec::Kind::Flat;
        spec.N = d;
        spec.name = "flat" + std::to_string(d);
    } else if (name == "sphere") {
        spec.kind = ManifoldSpec::Kind::Sphere;
        spec.N = d + 1;
        spec.name = "sphere" + std::to_string(d);
    } else {
        throw ConfigError("make_manifold: unknown manifold '" + name + "' (expected flat|sphere)");
    }
    return spec;
}

ManifoldSpec parse_manifold(const std::string& token) {
    size_t i = 0;
    while (i < token.size() && std::isalpha(static_cast<unsigned char>(token[i]))) ++i;
    std::string base = token.substr(0, i);
    if (i == token.size()) throw ConfigError("parse_manifold: missing dimension in '" + token + "'");
    int d = std::stoi(token.substr(i));
    return make_manifold(base, d);
}

Point project_to_manifold(const ManifoldSpec& spec, const Eigen::VectorXd& y) {
    if (y.size() != spec.N) throw DomainError("project_to_manifold: wrong ambient dimension");
    return Point{spec.project(y)};
}

Eigen::MatrixXd christoffel_apply(const ManifoldSpec& spec, const Point& x,
                                  const Eigen::VectorXd& v, const Eigen::MatrixXd& X) {
    return spec.christoffel_apply(x.coords, v, X);
}

SkewMatrix curvature_form(const ManifoldSpec& spec, const Frame& r, const Eigen::VectorXd& u,
                          const Eigen::VectorXd& v) {
    return SkewMatrix::from_matrix(spec.curvature_matrix(r, u, v));
}

Eigen::VectorXd ricci_apply(const ManifoldSpec& spec, const Frame& r, const Eigen::VectorXd& v) {
    return spec.ricci_apply(r, v);
}

Eigen::VectorXd torsion_form(const ManifoldSpec& spec, const Frame& r, const Eigen::VectorXd& u,
                             const Eigen::VectorXd& v) {
    return spec.torsion_form(r, u, v);
}

Eigen::MatrixXd orthonormalize_frame(const ManifoldSpec& spec, const Eigen::VectorXd& base,
                                     const Eigen::MatrixXd& candidate) {
    Eigen::MatrixXd B = candidate;
    if (spec.kind == ManifoldSpec::Kind::Sphere) {
        Eigen::VectorXd m = base / base.norm();
        B.noalias() -= m * (m.transpose() * B);
    }
    // Polar factor via the symmetric eigendecomposition of B^T B (d x d).
    Eigen::MatrixXd G = B.transpose() * B;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G);
    if (es.eigenvalues().minCoeff() <= 0.0)
        throw DomainError("orthonormalize_frame: rank-deficient frame candidate");
    Eigen::VectorXd inv_sqrt = es.eigenvalues().array().sqrt().inverse();
    Eigen::MatrixXd G_inv_sqrt =
        es.eigenvectors() * inv_sqrt.asDiagonal() * es.eigenvectors().transpose();
    return B * G_inv_sqrt;
}

Frame make_frame(const ManifoldSpec& spec, const Eigen::VectorXd& base,
                 const Eigen::MatrixXd& candidate) {
    Point p = project_to_manifold(spec, base);
    Frame f{p, orthonormalize_frame(spec, p.coords, candidate)};
    return f;
}

Frame default_frame(const ManifoldSpec& spec, const Eigen::VectorXd& base) {
    Eigen::MatrixXd cand = Eigen::MatrixXd::Identity(spec.N, spec.d);
    if (spec.kind == ManifoldSpec::Kind::Sphere) {
        Eigen::VectorXd m = base / base.norm();
        Eigen::MatrixXd proj = cand - m * (m.transpose() * cand);
        // If the first d axes are nearly degenerate at this base, mix in the
        // remaining axis.
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(proj);
        if (svd.singularValues().minCoeff() < 1e-6) {
            for (int j = 0; j < spec.d; ++j) cand(spec.N - 1, j) += 0.7 * (j + 1);
        }
    }
    return make_frame(spec, base, cand);
}

double frame_defect(const ManifoldSpec& spec, const Frame& f) {
    double ortho = (f.basis.transpose() * f.basis - Eigen::MatrixXd::Identity(spec.d, spec.d))
                       .cwiseAbs()
                       .maxCoeff();
    double tangency = 0.0;
    for (int j = 0; j < spec.d; ++j) {
        Eigen::VectorXd col = f.basis.col(j);
        tangency = std::max(tangency, (col - spec.tangent_project(f.base.coords, col)).norm());
    }
    return std::max(ortho, tangency);
}

} // namespace pathflow

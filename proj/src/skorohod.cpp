#include "pathflow/skorohod.hpp"

#include <algorithm>
#include <cmath>

#include "pathflow/errors.hpp"
#include "pathflow/parallel.hpp"
#include "pathflow/wiener.hpp"

namespace pathflow {

using Eigen::MatrixXd;
using Eigen::MatrixXi;
using Eigen::VectorXd;

StepProcess make_step_process(
    const std::string& id, int d, std::vector<double> breakpoints,
    std::vector<std::vector<std::optional<CylindricalFunctional>>> coeffs) {
    if (d < 1) throw ConfigError("step process: d must be >= 1");
    if (breakpoints.size() < 2) throw ConfigError("step process: need at least one interval");
    for (size_t i = 0; i + 1 < breakpoints.size(); ++i)
        if (!(breakpoints[i] < breakpoints[i + 1]))
            throw ConfigError("step process: breakpoints must increase strictly");
    if (breakpoints.front() < 0.0 || breakpoints.back() > 1.0)
        throw ConfigError("step process: breakpoints must lie in [0, 1]");
    if (coeffs.size() + 1 != breakpoints.size())
        throw ConfigError("step process: one coefficient row per interval");
    for (const auto& row : coeffs)
        if (static_cast<int>(row.size()) != d)
            throw ConfigError("step process: one coefficient per direction");
    StepProcess u;
    u.id = id;
    u.d = d;
    u.breakpoints = std::move(breakpoints);
    u.coeffs = std::move(coeffs);
    return u;
}

StepProcess make_rank_one_process(const std::string& id, const CylindricalFunctional& alpha,
                                  const MatrixXd& hdot, const TimeGrid& grid) {
    if (hdot.cols() != grid.n_steps)
        throw ConfigError("rank-one process: hdot must have one column per grid cell");
    StepProcess u;
    u.id = id;
    u.d = static_cast<int>(hdot.rows());
    u.breakpoints = {0.0, 1.0};
    u.coeffs.resize(1);
    u.coeffs[0].resize(u.d); // slots unused; lowering reads rank_one directly
    u.rank_one = StepProcess::RankOne{alpha, hdot};
    return u;
}

CylindricalFunctional constant_coefficient(CylindricalFunctional::Space space, double value,
                                           int point_dim) {
    return make_cylindrical(
        space, "const", {}, point_dim, true,
        [value](const CylindricalFunctional::Points&) { return value; },
        [point_dim](const CylindricalFunctional::Points&, int) {
            return VectorXd::Zero(point_dim).eval();
        },
        [point_dim](const CylindricalFunctional::Points&, int, int) {
            return MatrixXd::Zero(point_dim, point_dim).eval();
        });
}

double curvature_bound(const ManifoldSpec& spec) { return spec.curved() ? 1.0 : 0.0; }

MatrixXd grid_malliavin_fd(const ManifoldSpec& spec, const CylindricalFunctional& F,
                           const DiscretePath& w, const FramePath& X, double eps) {
    if (F.space != CylindricalFunctional::Space::Manifold)
        throw DomainError("grid_malliavin_fd: manifold functional expected");
    auto idx = F.time_indices(w.grid);
    int n = w.grid.n_steps;
    int d = spec.d;
    int kmax = idx.empty() ? 0 : *std::max_element(idx.begin(), idx.end());

    auto base_pts = gather_points(F, X.base);
    double F0 = F.f(base_pts);

    MatrixXd out = MatrixXd::Zero(d, n);
    RollOptions opts; // must match the options that produced X
    auto pts = base_pts;
    for (int k = 0; k < kmax; ++k) {
        for (int j = 0; j < d; ++j) {
            VectorXd x = X.base.values.col(k);
            MatrixXd Xf = X.frame(k);
            VectorXd dw = w.values.col(k + 1) - w.values.col(k);
            dw(j) += eps;
            roll_step(spec, x, Xf, dw, opts, k);
            // Continue with the original increments, harvesting F's points.
            pts = base_pts;
            for (size_t i = 0; i < idx.size(); ++i)
                if (idx[i] == k + 1) pts[i] = x;
            for (int m = k + 1; m < kmax; ++m) {
                roll_step(spec, x, Xf, w.values.col(m + 1) - w.values.col(m), opts, m);
                for (size_t i = 0; i < idx.size(); ++i)
                    if (idx[i] == m + 1) pts[i] = x;
            }
            out(j, k) = (F.f(pts) - F0) / eps;
        }
    }
    return out;
}

namespace {

// Kernel pair (flat and damped Malliavin derivatives) of one coefficient.
LoweredProcess::Kernel coefficient_kernel(const ManifoldSpec& spec,
                                          const CylindricalFunctional& alpha,
                                          const DiscretePath& w, const FramePath& X,
                                          bool needs_damped) {
    LoweredProcess::Kernel ker;
    int n = w.grid.n_steps;
    if (alpha.space == CylindricalFunctional::Space::Flat) {
        if (needs_damped && spec.curved())
            throw DomainError("anticipative integral: damped derivative of a flat-path "
                              "coefficient is undefined on a curved manifold");
        ker.value = eval_functional(alpha, w);
        ker.flat = flat_gradient(alpha, w).leftCols(n);
        ker.damped = ker.flat; // flat spec identification
    } else {
        ker.value = eval_functional(alpha, X.base);
        if (spec.curved()) {
            ker.flat = grid_malliavin_fd(spec, alpha, w, X);
        } else {
            // Flat manifold: the rolled path is affine in w, so the
            // transported gradient IS the flat Malliavin derivative (exact).
            ker.flat = gradient_DM(alpha, X).leftCols(n);
        }
        ker.damped = needs_damped ? gradient_damped(spec, alpha, X).leftCols(n).eval()
                                  : ker.flat;
    }
    return ker;
}

} // namespace

LoweredProcess lower_process(const ManifoldSpec& spec, const StepProcess& u,
                             const DiscretePath& w, const FramePath& X, bool needs_damped) {
    int n = w.grid.n_steps;
    int d = u.d;
    if (d != spec.d) throw DomainError("lower_process: process/manifold dimension mismatch");
    LoweredProcess lp;
    lp.d = d;
    lp.n = n;
    lp.values = MatrixXd::Zero(d, n);
    lp.slot = MatrixXi::Constant(n, d, -1);
    MatrixXd scale = MatrixXd::Zero(n, d);

    if (u.rank_one) {
        lp.kernels.push_back(
            coefficient_kernel(spec, u.rank_one->alpha, w, X, needs_damped));
        for (int k = 0; k < n; ++k)
            for (int j = 0; j < d; ++j) {
                double s = u.rank_one->hdot(j, k);
                if (s != 0.0) {
                    lp.slot(k, j) = 0;
                    scale(k, j) = s;
                }
            }
    } else {
        for (int i = 0; i < u.intervals(); ++i) {
            int lo = w.grid.index_of(u.breakpoints[i]);
            int hi = w.grid.index_of(u.breakpoints[i + 1]);
            for (int j = 0; j < d; ++j) {
                if (!u.coeffs[i][j]) continue;
                int ki = static_cast<int>(lp.kernels.size());
                lp.kernels.push_back(
                    coefficient_kernel(spec, *u.coeffs[i][j], w, X, needs_damped));
                for (int k = lo; k < hi; ++k) {
                    lp.slot(k, j) = ki;
                    scale(k, j) = 1.0;
                }
            }
        }
    }
    lp.scale = scale;
    for (int k = 0; k < n; ++k)
        for (int j = 0; j < d; ++j)
            if (lp.slot(k, j) >= 0)
                lp.values(j, k) = lp.scale(k, j) * lp.kernels[lp.slot(k, j)].value;
    return lp;
}

namespace {

double ito_like_sum(const LoweredProcess& lp, const DiscretePath& w) {
    double acc = 0.0;
    for (int k = 0; k < lp.n; ++k)
        acc += lp.values.col(k).dot(w.values.col(k + 1) - w.values.col(k));
    return acc;
}

double trace_sum(const LoweredProcess& lp, double dt, bool damped, int offset) {
    double acc = 0.0;
    for (int k = 0; k < lp.n; ++k)
        for (int j = 0; j < lp.d; ++j)
            acc += (damped ? lp.damped_diag(k, j, offset) : lp.flat_diag(k, j, offset)) * dt;
    return acc;
}

} // namespace

AnticipativeResult skorohod_flat(const ManifoldSpec& spec, const StepProcess& u,
                                 const DiscretePath& w, const FramePath& X) {
    LoweredProcess lp = lower_process(spec, u, w, X, false);
    double ito = ito_like_sum(lp, w);
    double tr = trace_sum(lp, w.grid.dt(), false, 0);
    AnticipativeResult res;
    res.ledger = {{"ito_part", ito}, {"minus_trace_D", -tr}};
    res.value = ito - tr;
    return res;
}

AnticipativeResult tilde_delta_trace(const ManifoldSpec& spec, const StepProcess& u,
                                     const DiscretePath& w, const FramePath& X) {
    LoweredProcess lp = lower_process(spec, u, w, X, true);
    double ito = ito_like_sum(lp, w);
    double trD = trace_sum(lp, w.grid.dt(), false, 0);
    double trDt = trace_sum(lp, w.grid.dt(), true, 0);
    AnticipativeResult res;
    res.ledger = {{"delta_flat", ito - trD}, {"trace_D", trD}, {"minus_trace_Dtilde", -trDt}};
    res.value = (ito - trD) + trD - trDt;
    return res;
}

AnticipativeResult tilde_delta_limits(const ManifoldSpec& spec, const StepProcess& u,
                                      const DiscretePath& w, const FramePath& X) {
    LoweredProcess lp = lower_process(spec, u, w, X, true);
    double dt = w.grid.dt();
    double ito = ito_like_sum(lp, w);
    double trD = trace_sum(lp, dt, false, 0);
    double dplus = trace_sum(lp, dt, false, +1);
    double dminus = trace_sum(lp, dt, false, -1);
    double dtplus = trace_sum(lp, dt, true, +1);
    double dtminus = trace_sum(lp, dt, true, -1);
    AnticipativeResult res;
    res.ledger = {{"delta_flat", ito - trD},
                  {"half_Dplus_Dminus", 0.5 * (dplus + dminus)},
                  {"minus_half_Dtilde_plus_minus", -0.5 * (dtplus + dtminus)}};
    res.value = (ito - trD) + 0.5 * (dplus + dminus) - 0.5 * (dtplus + dtminus);
    return res;
}

namespace {

// Applies the ric-Volterra transform to a lowered process, returning dense
// cell values and the three diagonal bands of both kernels.
struct TransformedProcess {
    MatrixXd values;                    // d x n
    MatrixXd flat_diag, flat_p, flat_m; // d x n each: offsets 0, +1, -1
    MatrixXd damp_diag, damp_p, damp_m;
};

TransformedProcess ric_volterra_transform(const ManifoldSpec& spec, const LoweredProcess& lp,
                                          double dt, VolterraReading reading) {
    int d = lp.d, n = lp.n;
    double rho = spec.ricci_scalar();
    TransformedProcess t;
    t.values = MatrixXd::Zero(d, n);

    // Values: multiply form u~_k = u_k + rho/2 dt sum_{l<k} u_l;
    // solve form  u~_k = u_k - rho/2 dt sum_{l<k} u~_l.
    VectorXd run = VectorXd::Zero(d);
    for (int k = 0; k < n; ++k) {
        if (reading == VolterraReading::Multiply) {
            t.values.col(k) = lp.values.col(k) + 0.5 * rho * dt * run;
            run += lp.values.col(k);
        } else {
            t.values.col(k) = lp.values.col(k) - 0.5 * rho * dt * run;
            run += t.values.col(k);
        }
    }

    // Bands: same transform applied to each kernel row (per fixed derivative
    // slot (j, k), running over the cell index).
    auto bands = [&](bool damped, MatrixXd& diag, MatrixXd& plus, MatrixXd& minus) {
        diag = MatrixXd::Zero(d, n);
        plus = MatrixXd::Zero(d, n);
        minus = MatrixXd::Zero(d, n);
        for (int j = 0; j < d; ++j)
            for (int k = 0; k < n; ++k) {
                // Row over cells m of D^j_{s_k} u^j_m, transformed in m.
                double run_row = 0.0;
                double dm1 = 0.0, dz = 0.0, dp1 = 0.0;
                for (int m = 0; m < n; ++m) {
                    double raw = 0.0;
                    int s = lp.slot(m, j);
                    if (s >= 0)
                        raw = lp.scale(m, j) *
                              (damped ? lp.kernels[s].damped(j, k) : lp.kernels[s].flat(j, k));
                    double val;
                    if (reading == VolterraReading::Multiply) {
                        val = raw + 0.5 * rho * dt * run_row;
                        run_row += raw;
                    } else {
                        val = raw - 0.5 * rho * dt * run_row;
                        run_row += val;
                    }
                    if (m == k - 1) dm1 = val;
                    if (m == k) dz = val;
                    if (m == k + 1) dp1 = val;
                }
                diag(j, k) = dz;
                plus(j, k) = dp1;
                minus(j, k) = dm1;
            }
    };
    bands(false, t.flat_diag, t.flat_p, t.flat_m);
    bands(true, t.damp_diag, t.damp_p, t.damp_m);
    return t;
}

} // namespace

AnticipativeResult delta_M(const ManifoldSpec& spec, const StepProcess& u, const DiscretePath& w,
                           const FramePath& X, DeltaMRoute route, VolterraReading reading) {
    double dt = w.grid.dt();
    if (route == DeltaMRoute::Explicit) {
        if (!u.rank_one)
            throw DomainError("delta_M explicit route: rank-one process with deterministic "
                              "density required");
        LoweredProcess lp = lower_process(spec, u, w, X, false);
        const LoweredProcess::Kernel& ker = lp.kernels[0];
        const MatrixXd& hdot = u.rank_one->hdot;
        int n = w.grid.n_steps, d = u.d;

        // h(s) cumulative and hdot1 = hdot + ric h / 2.
        MatrixXd h = MatrixXd::Zero(d, n + 1);
        for (int k = 0; k < n; ++k) h.col(k + 1) = h.col(k) + hdot.col(k) * dt;
        MatrixXd hdot1(d, n);
        for (int k = 0; k < n; ++k)
            hdot1.col(k) =
                hdot.col(k) + 0.5 * spec.ricci_apply(X.frame_at(k), h.col(k));

        // delta(alpha hdot1) by the rank-one step identity.
        double ito = 0.0, tr = 0.0;
        for (int k = 0; k < n; ++k) {
            ito += ker.value * hdot1.col(k).dot(w.values.col(k + 1) - w.values.col(k));
            tr += ker.flat.col(k).dot(hdot1.col(k)) * dt;
        }

        // Rotational term with gamma = int Omega_r(h, o dw) (Stratonovich
        // midpoint), applied as midpoint blocks against the increments.
        MatrixXd gamma = MatrixXd::Zero(d, d), gamma_next(d, d);
        double rot = 0.0;
        for (int k = 0; k < n; ++k) {
            VectorXd dw = w.values.col(k + 1) - w.values.col(k);
            MatrixXd inc0 = spec.curvature_matrix(X.frame_at(k), h.col(k), dw);
            MatrixXd inc1 = spec.curvature_matrix(X.frame_at(k + 1), h.col(k + 1), dw);
            gamma_next = gamma + 0.5 * (inc0 + inc1);
            MatrixXd mid = 0.5 * (gamma + gamma_next);
            rot += (mid.transpose() * ker.flat.col(k)).dot(dw);
            gamma = gamma_next;
        }
        AnticipativeResult res;
        res.ledger = {{"skorohod_ric_shifted", ito - tr}, {"minus_rotational", -rot}};
        res.value = (ito - tr) - rot;
        return res;
    }

    LoweredProcess lp = lower_process(spec, u, w, X, true);
    TransformedProcess t = ric_volterra_transform(spec, lp, dt, reading);
    double ito = 0.0;
    for (int k = 0; k < lp.n; ++k)
        ito += t.values.col(k).dot(w.values.col(k + 1) - w.values.col(k));
    double trD = t.flat_diag.sum() * dt;
    double trDt = t.damp_diag.sum() * dt;
    AnticipativeResult res;
    res.ledger = {{"delta_flat_transformed", ito - trD},
                  {"trace_D_transformed", trD},
                  {"minus_trace_Dtilde_transformed", -trDt}};
    res.value = (ito - trD) + trD - trDt;
    return res;
}

double adjoint_pairing_flat(const CylindricalFunctional& phi, const LoweredProcess& u,
                            const DiscretePath& w) {
    MatrixXd g = flat_gradient(phi, w);
    double acc = 0.0;
    for (int k = 0; k < u.n; ++k) acc += g.col(k).dot(u.values.col(k)) * w.grid.dt();
    return acc;
}

double adjoint_pairing_damped(const ManifoldSpec& spec, const CylindricalFunctional& phi,
                              const LoweredProcess& u, const FramePath& X) {
    MatrixXd g = gradient_damped(spec, phi, X);
    double acc = 0.0;
    for (int k = 0; k < u.n; ++k) acc += g.col(k).dot(u.values.col(k)) * X.grid.dt();
    return acc;
}

double adjoint_pairing_DM(const CylindricalFunctional& phi, const LoweredProcess& u,
                          const FramePath& X) {
    MatrixXd g = gradient_DM(phi, X);
    double acc = 0.0;
    for (int k = 0; k < u.n; ++k) acc += g.col(k).dot(u.values.col(k)) * X.grid.dt();
    return acc;
}

namespace {

// Second flat kernel of a coefficient: M(j', j) = D^{j}_{s_k} D^{j'}_{s_l}
// alpha, from the Hessian evaluator.
MatrixXd flat_second_kernel(const CylindricalFunctional& alpha,
                            const CylindricalFunctional::Points& pts, const std::vector<int>& idx,
                            int l, int k, int d) {
    MatrixXd out = MatrixXd::Zero(d, d);
    int npts = static_cast<int>(idx.size());
    for (int q = 0; q < npts; ++q) {
        if (!(l < idx[q])) continue;
        for (int p = 0; p < npts; ++p) {
            if (!(k < idx[p])) continue;
            // rows j' from point q, cols j from point p
            out += alpha.hess(pts, q, p);
        }
    }
    return out;
}

} // namespace

ItoFormulaReport ito_formula_check(const ManifoldSpec& spec, const StepProcess& u,
                                   const ScalarC2& phi, const std::vector<double>& t_values,
                                   long n_paths, const TimeGrid& grid, std::uint64_t seed) {
    bool linear_phi = true;
    for (double x : {-1.3, -0.4, 0.2, 1.7})
        if (std::abs(phi.d2f(x)) > 0.0) linear_phi = false;
    if (spec.curved() && !linear_phi)
        throw ConfigError("ito_formula_check: curved specs support linear phi only");

    ItoFormulaReport rep;
    rep.process_id = u.id;
    rep.phi_id = phi.id;
    rep.n_steps = grid.n_steps;
    rep.n_paths = n_paths;
    rep.t_values = t_values;
    std::vector<int> t_idx;
    for (double t : t_values) t_idx.push_back(grid.index_of(t));

    Frame r0 = canonical_frame(spec);
    int n = grid.n_steps, d = spec.d;
    double dt = grid.dt();
    std::vector<std::vector<double>> disc(t_values.size(), std::vector<double>(n_paths, 0.0));

    parallel_for(n_paths, [&](long path) {
        DiscretePath w = sample_brownian(grid, d, seed, static_cast<std::uint64_t>(path));
        RollResult rolled = roll(spec, w, r0);
        LoweredProcess lp = lower_process(spec, u, w, rolled.frames, true);

        auto u_ext = [&](int k) -> VectorXd {
            return lp.values.col(std::min(k, n - 1));
        };

        // X on the grid via the anticipative Stratonovich form.
        std::vector<double> Xg(n + 1, 0.0);
        for (int k = 0; k < n; ++k) {
            VectorXd dw = w.values.col(k + 1) - w.values.col(k);
            double corr = 0.0;
            for (int j = 0; j < d; ++j)
                corr += lp.damped_diag(k, j, +1) + lp.damped_diag(k, j, -1);
            Xg[k + 1] = Xg[k] + 0.5 * (u_ext(k) + u_ext(k + 1)).dot(dw) - 0.5 * corr * dt;
        }

        // dX/dDw^j_k for offsets m = k - 1, k, k + 1 (anticipative
        // coefficients make all three nonzero in general).
        // dXdw(j, k, m-rel) built from: the direct increment term, the
        // first-derivative kernels against past increments, and coefficient
        // second derivatives in the correction sums.
        MatrixXd dX_p(d, n), dX_z(d, n), dX_m(d, n); // m = k+1, k, k-1
        if (!linear_phi) {
            // Cache per-kernel evaluation data for second derivatives.
            struct KerInfo {
                const CylindricalFunctional* alpha;
                CylindricalFunctional::Points pts;
                std::vector<int> idx;
            };
            std::vector<KerInfo> info;
            if (u.rank_one) {
                info.push_back({&u.rank_one->alpha, {}, {}});
            } else {
                for (int i = 0; i < u.intervals(); ++i)
                    for (int j = 0; j < d; ++j)
                        if (u.coeffs[i][j]) info.push_back({&*u.coeffs[i][j], {}, {}});
            }
            for (auto& ki : info) {
                const DiscretePath& src = ki.alpha->space == CylindricalFunctional::Space::Flat
                                              ? w
                                              : rolled.path;
                ki.pts = gather_points(*ki.alpha, src);
                ki.idx = ki.alpha->time_indices(grid);
            }
            auto second_term = [&](int l, int j2, int k, int j) -> double {
                // sum over slots at cells l+-1: d(D^{j2}_{s_l} u^{j2}_{l+-1})/dDw^j_k
                double acc = 0.0;
                for (int off : {+1, -1}) {
                    int cell = l + off;
                    if (cell < 0 || cell >= n) continue;
                    int s = lp.slot(cell, j2);
                    if (s < 0) continue;
                    const auto& ki = info[s];
                    if (!ki.alpha->has_hessian)
                        throw DomainError("ito_formula_check: phi'' requires coefficient "
                                          "Hessians");
                    MatrixXd m2 = flat_second_kernel(*ki.alpha, ki.pts, ki.idx, l, k, d);
                    acc += lp.scale(cell, j2) * m2(j2, j);
                }
                return acc;
            };

            for (int k = 0; k < n; ++k) {
                for (int j = 0; j < d; ++j) {
                    // running pieces up to m for m in {k-1, k, k+1}
                    for (int rel = -1; rel <= 1; ++rel) {
                        int m = k + rel;
                        double val = 0.0;
                        if (m >= 1) {
                            for (int l = 0; l < m; ++l) {
                                VectorXd dw = w.values.col(l + 1) - w.values.col(l);
                                // d u_l / dDw^j_k and d u_{l+1} / dDw^j_k rows
                                auto du = [&](int cell) -> VectorXd {
                                    VectorXd v = VectorXd::Zero(d);
                                    if (cell >= n) cell = n - 1;
                                    for (int j2 = 0; j2 < d; ++j2) {
                                        int s = lp.slot(cell, j2);
                                        if (s >= 0)
                                            v(j2) = lp.scale(cell, j2) *
                                                    lp.kernels[s].flat(j2, k);
                                    }
                                    return v;
                                };
                                val += 0.5 * (du(l) + du(l + 1)).dot(dw);
                                double sec = 0.0;
                                for (int j2 = 0; j2 < d; ++j2)
                                    sec += second_term(l, j2, k, j);
                                val -= 0.5 * sec * dt;
                            }
                            if (k < m) val += 0.5 * (u_ext(k)(j) + u_ext(k + 1)(j));
                        }
                        if (rel == -1) dX_m(j, k) = val;
                        if (rel == 0) dX_z(j, k) = val;
                        if (rel == 1) dX_p(j, k) = val;
                    }
                }
            }
        }

        // Right side accumulated on the grid.
        std::vector<double> rhs(n + 1, 0.0);
        rhs[0] = phi.f(Xg[0]);
        auto v_at = [&](int k) -> VectorXd {
            int cell = std::min(k, n - 1);
            return phi.df(Xg[cell]) * lp.values.col(cell);
        };
        for (int k = 0; k < n; ++k) {
            VectorXd dw = w.values.col(k + 1) - w.values.col(k);
            double strat = 0.5 * (v_at(k) + v_at(k + 1)).dot(dw);
            double dv_corr = 0.0;
            double d2_corr = 0.0;
            for (int j = 0; j < d; ++j) {
                // (Dv)+-_k = phi''(X_{k+-1}) dX_{k+-1}/dDw^j_k u^j_{k+-1}
                //          + phi'(X_{k+-1}) D^j_{s_k} u^j_{k+-1}
                double up = k + 1 < n ? lp.values(j, k + 1) : lp.values(j, n - 1);
                double um = k - 1 >= 0 ? lp.values(j, k - 1) : 0.0;
                double plus = phi.df(Xg[std::min(k + 1, n)]) * lp.damped_diag(k, j, +1);
                double minus = phi.df(Xg[std::max(k - 1, 0)]) * lp.damped_diag(k, j, -1);
                if (!linear_phi) {
                    plus += phi.d2f(Xg[std::min(k + 1, n)]) * dX_p(j, k) * up;
                    minus += phi.d2f(Xg[std::max(k - 1, 0)]) * dX_m(j, k) * um;
                    d2_corr += phi.d2f(Xg[k]) *
                               (dX_p(j, k) + dX_m(j, k)) * lp.values(j, k);
                }
                dv_corr += plus + minus;
            }
            // The dv_corr part realizes the anticipative-integral correction
            // of v; the d2_corr part is the phi'' term, entering with the
            // sign fixed by the classical (adapted) reduction.
            rhs[k + 1] = rhs[k] + strat - 0.5 * dv_corr * dt + 0.5 * d2_corr * dt;
        }
        for (size_t ti = 0; ti < t_idx.size(); ++ti)
            disc[ti][path] = std::abs(phi.f(Xg[t_idx[ti]]) - rhs[t_idx[ti]]);
    });

    for (size_t ti = 0; ti < t_values.size(); ++ti)
        rep.mean_abs_discrepancy.push_back(reduce_mean_se(disc[ti]).mean);
    return rep;
}

L1BoundReport l1_bound_check(const ManifoldSpec& spec, const std::vector<StepProcess>& battery,
                             const std::vector<StepProcess>& holdout, const TimeGrid& grid,
                             long n_paths, std::uint64_t seed) {
    L1BoundReport rep;
    rep.n_paths = n_paths;
    Frame r0 = canonical_frame(spec);
    double dt = grid.dt();
    double curv = curvature_bound(spec); // |Omega| + |Omega'| = curv + 0

    auto process_rows = [&](const std::vector<StepProcess>& procs, bool half_fit,
                            std::vector<L1BoundRow>& rows, std::vector<L1BoundRow>* rows_half) {
        for (const auto& u : procs) {
            std::vector<double> absdm(n_paths), usq(n_paths), dsq(n_paths);
            parallel_for(n_paths, [&](long k) {
                DiscretePath w =
                    sample_brownian(grid, spec.d, seed, static_cast<std::uint64_t>(k));
                RollResult rolled = roll(spec, w, r0);
                LoweredProcess lp = lower_process(spec, u, w, rolled.frames, true);
                AnticipativeResult dm =
                    delta_M(spec, u, w, rolled.frames, DeltaMRoute::Volterra);
                absdm[k] = std::abs(dm.value);
                double uu = 0.0;
                for (int c = 0; c < lp.n; ++c) uu += lp.values.col(c).squaredNorm() * dt;
                usq[k] = uu;
                double dd = 0.0;
                for (int c = 0; c < lp.n; ++c)
                    for (int j = 0; j < lp.d; ++j) {
                        int s = lp.slot(c, j);
                        if (s < 0) continue;
                        dd += lp.scale(c, j) * lp.scale(c, j) *
                              lp.kernels[s].flat.colwise().squaredNorm().sum() * dt * dt;
                    }
                dsq[k] = dd;
            });
            auto build_row = [&](long lo, long hi) -> L1BoundRow {
                std::vector<double> a(absdm.begin() + lo, absdm.begin() + hi);
                std::vector<double> b(usq.begin() + lo, usq.begin() + hi);
                std::vector<double> c(dsq.begin() + lo, dsq.begin() + hi);
                McEstimate ma = reduce_mean_se(a);
                L1BoundRow row;
                row.process_id = u.id;
                row.lhs = ma.mean;
                row.se_lhs = ma.se;
                row.norm = std::sqrt(reduce_mean_se(b).mean + reduce_mean_se(c).mean);
                row.curv_term = curv * (row.norm + row.norm * row.norm);
                return row;
            };
            rows.push_back(build_row(0, n_paths));
            if (half_fit && rows_half) rows_half->push_back(build_row(0, n_paths / 2));
        }
    };

    std::vector<L1BoundRow> battery_half;
    process_rows(battery, true, rep.battery, &battery_half);
    process_rows(holdout, false, rep.holdout, nullptr);

    auto fit = [](const std::vector<L1BoundRow>& rows) {
        double C = 0.0;
        for (const auto& r : rows)
            if (r.curv_term > 0.0) C = std::max(C, (r.lhs - r.norm) / r.curv_term);
        return C;
    };
    rep.fitted_C = fit(rep.battery);
    rep.fitted_C_half = fit(battery_half);
    // Stability within 20%, with a floor at the Monte Carlo noise of the fit
    // itself (the fitted constant may sit at zero when the slack is unused).
    double noise_floor = 0.0;
    for (const auto& r : rep.battery)
        if (r.curv_term > 0.0)
            noise_floor = std::max(noise_floor, 3.0 * r.se_lhs / r.curv_term);
    double scale = std::max(rep.fitted_C, rep.fitted_C_half);
    rep.stable = std::abs(rep.fitted_C - rep.fitted_C_half) <=
                 std::max(0.2 * scale, noise_floor);
    rep.holdout_pass = true;
    for (const auto& r : rep.holdout)
        if (r.lhs > r.norm + rep.fitted_C * r.curv_term + 3.0 * r.se_lhs)
            rep.holdout_pass = false;
    return rep;
}

} // namespace pathflow

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pathflow/functional.hpp"
#include "pathflow/geometry.hpp"
#include "pathflow/grid.hpp"
#include "pathflow/lift.hpp"
#include "pathflow/malliavin.hpp"
#include "pathflow/wiener.hpp"

namespace pathflow {

struct SolverConfig {
    int t_steps = 16;          // flow steps to t_target
    double picard_tol = 1e-8;  // batch E-norm change threshold
    int max_iters = 60;
    int batch_size = 1024;     // working batch for the E-norm estimate
};

/// State of the Driver flow at parameter t: the manifold path, its lift, the
/// flat development, and (from the pullback solver) the rotation-drift pair.
struct FlowState {
    double t = 0.0;
    DiscretePath sigma;      // manifold path
    FramePath H;             // horizontal lift of sigma
    DiscretePath phi;        // development of sigma
    AdaptedRotationDrift od; // (o, a); valid when has_pullback
    bool has_pullback = false;
};

struct PicardStepStats {
    int iters = 0;
    double first_residual = 0.0;
    double last_residual = 0.0;
    double worst_ratio = 0.0; // max residual ratio after the first iteration
};

struct FlowDiagnostics {
    std::vector<PicardStepStats> picard; // per flow step
    double c_antisym_max = 0.0;          // largest antisymmetrization applied to c
    double o_defect_max = 0.0;           // max ||o^T o - I|| over (s, t)
};

/// Shared shift guard: the flow accepts deterministic or adapted shifts only.
void require_flow_shift(const CmShift& h);

/// Picard solver for the flow d sigma/dt = H(sigma(t)) h: per flow step,
/// fixed-point iteration of sigma <- project(sigma_k + dt_flow * midpoint
/// transported shift), re-lifting each iterate, until the batch E-norm change
/// drops below picard_tol (SolverError on max_iters).
FlowState solve_flow_picard(const ManifoldSpec& spec, const DiscretePath& w, const CmShift& h,
                            double t_target, const SolverConfig& cfg = {},
                            FlowDiagnostics* diag = nullptr);

/// Lockstep batch version: the Picard stopping rule is evaluated over the
/// whole batch (barrier semantics), so results are deterministic in
/// (seed, batch) regardless of scheduling.
std::vector<FlowState> solve_flow_picard_batch(const ManifoldSpec& spec,
                                               const std::vector<DiscretePath>& ws,
                                               const std::vector<CmShift>& hs, double t_target,
                                               const SolverConfig& cfg = {},
                                               FlowDiagnostics* diag = nullptr);

/// Pulled-back solver: integrates do/dt = c o, da/dt = c a + hdot + ric h / 2
/// with a midpoint exponential step in t (o stays orthogonal to rounding);
/// c is the running curvature integral, explicitly antisymmetrized (logged).
/// phi(t) is re-rolled at every stage to refresh the frames.
FlowState solve_flow_pullback(const ManifoldSpec& spec, const DiscretePath& w, const CmShift& h,
                              double t_target, const SolverConfig& cfg = {},
                              FlowDiagnostics* diag = nullptr);

/// E-norm of the pullback pair: sqrt(E sup_s |o_s|^2 + E int |a_s|^2 ds),
/// estimated over a batch of flow states.
double pullback_energy_norm(const std::vector<FlowState>& states);

struct QiRow {
    std::string functional_id;
    double direct = 0.0, reweighted = 0.0;
    double se_direct = 0.0, se_reweighted = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

struct QiReport {
    std::vector<QiRow> rows;
    long n_paths = 0;
    long failed_paths = 0;
    GirsanovStats girsanov;
    double o_defect_max = 0.0;
    double c_antisym_max = 0.0;
    bool all_pass() const {
        for (const auto& r : rows)
            if (!r.pass) return false;
        return true;
    }
};

/// Thm 4.1 verifier: compares E[F(sigma(t))] (direct flow simulation, Picard)
/// against E[F(p) G_t] (Girsanov reweighting with the pullback (o, a)) on an
/// independent batch; pass at |A - B| <= 3(SE_A + SE_B) + bias sqrt(dt).
QiReport quasi_invariance_report(const ManifoldSpec& spec,
                                 const std::vector<CylindricalFunctional>& F_list,
                                 const ShiftRecipe& recipe, double C, double t, long n_paths,
                                 const TimeGrid& grid, const SolverConfig& cfg,
                                 std::uint64_t seed, double bias_constant = 0.2);

/// Sup-norm gap between the Picard and pullback sigma(t) on one path.
double cross_method_gap(const ManifoldSpec& spec, const DiscretePath& w, const CmShift& h,
                        double t, const SolverConfig& cfg = {});

} // namespace pathflow

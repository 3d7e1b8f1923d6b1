#include <doctest.h>

#include <cmath>
#include <vector>

#include "pathflow/driverflow.hpp"
#include "pathflow/errors.hpp"
#include "pathflow/parallel.hpp"

using namespace pathflow;
using Eigen::MatrixXd;
using Eigen::VectorXd;

TEST_CASE("flat reduction: both solvers give w + t h") {
    ManifoldSpec flat = make_manifold("flat", 2);
    TimeGrid grid(128);
    DiscretePath w = sample_brownian(grid, 2, 11, 0);
    CmShift h = make_cm_shift(ShiftRecipe::sinusoid(1.0), grid, 2, 1.0);
    SolverConfig cfg;

    for (double t : {0.0, 0.5, 1.0, -0.75}) {
        FlowState pic = solve_flow_picard(flat, w, h, t, cfg);
        FlowState pul = solve_flow_pullback(flat, w, h, t, cfg);
        double worst_pic = 0.0, worst_pul = 0.0;
        for (int j = 0; j <= grid.n_steps; ++j) {
            VectorXd target = w.values.col(j) + t * h.h.col(j);
            worst_pic = std::max(worst_pic, (pic.sigma.values.col(j) - target).norm());
            worst_pul = std::max(worst_pul, (pul.sigma.values.col(j) - target).norm());
        }
        CHECK(worst_pic < 1e-8);
        CHECK(worst_pul < 1e-8);
        // Pullback: o = I, a = t hdot exactly.
        CHECK(pul.od.orthogonality_defect() < 1e-12);
        double worst_a = 0.0;
        for (int j = 0; j < grid.n_steps; ++j)
            worst_a = std::max(worst_a, (pul.od.a.col(j) - t * h.hdot.col(j)).norm());
        CHECK(worst_a < 1e-10);
    }
}

TEST_CASE("t = 0 returns sigma unchanged") {
    ManifoldSpec s2 = make_manifold("sphere", 2);
    TimeGrid grid(64);
    DiscretePath w = sample_brownian(grid, 2, 12, 0);
    CmShift h = make_cm_shift(ShiftRecipe::sinusoid(1.0), grid, 2, 1.0);
    FlowState st = solve_flow_picard(s2, w, h, 0.0, {});
    RollResult rolled = roll(s2, w, canonical_frame(s2));
    CHECK(st.sigma.sup_distance(rolled.path) < 1e-12);
}

TEST_CASE("anticipative shifts are rejected") {
    ManifoldSpec s2 = make_manifold("sphere", 2);
    TimeGrid grid(32);
    DiscretePath w = sample_brownian(grid, 2, 13, 0);
    CmShift h = make_cm_shift(ShiftRecipe::constant(0, 0.5), grid, 2, 1.0);
    h.kind = ShiftKind::Anticipative;
    CHECK_THROWS_AS(solve_flow_picard(s2, w, h, 0.5, {}), ConfigError);
    CHECK_THROWS_AS(solve_flow_pullback(s2, w, h, 0.5, {}), ConfigError);
}

TEST_CASE("pullback keeps o orthogonal and phi consistent with its lift") {
    ManifoldSpec s2 = make_manifold("sphere", 2);
    TimeGrid grid(128);
    DiscretePath w = sample_brownian(grid, 2, 14, 0);
    CmShift h = make_cm_shift(ShiftRecipe::sinusoid(1.0), grid, 2, 1.0);
    FlowDiagnostics diag;
    FlowState st = solve_flow_pullback(s2, w, h, 0.5, {}, &diag);
    CHECK(st.od.orthogonality_defect() < 1e-6);
    CHECK(diag.o_defect_max < 1e-6);
    // FlowState invariant: phi = develop(H) within scheme tolerance.
    DiscretePath dev = develop(s2, st.H);
    CHECK(dev.sup_distance(st.phi) < 2.0 * std::sqrt(grid.dt()));
}

TEST_CASE("cross-method gap small and shrinking under refinement") {
    ManifoldSpec s2 = make_manifold("sphere", 2);
    SolverConfig coarse_cfg;
    coarse_cfg.t_steps = 8;
    SolverConfig fine_cfg;
    fine_cfg.t_steps = 16;

    TimeGrid fine_grid(256);
    DiscretePath wf = sample_brownian(fine_grid, 2, 15, 3);
    DiscretePath wc = coarsen(wf, 128);

    CmShift hc = make_cm_shift(ShiftRecipe::sinusoid(1.0), wc.grid, 2, 1.0);
    CmShift hf = make_cm_shift(ShiftRecipe::sinusoid(1.0), fine_grid, 2, 1.0);

    double gap_c = cross_method_gap(s2, wc, hc, 0.5, coarse_cfg);
    double gap_f = cross_method_gap(s2, wf, hf, 0.5, fine_cfg);
    double bound_c = 1.0 * (std::sqrt(wc.grid.dt()) + 0.5 / coarse_cfg.t_steps);
    double bound_f = 1.0 * (std::sqrt(fine_grid.dt()) + 0.5 / fine_cfg.t_steps);
    CHECK(gap_c <= bound_c);
    CHECK(gap_f <= bound_f);
    CHECK(gap_f < gap_c);
}

TEST_CASE("flow derivative at t=0 equals the path-space gradient pairing") {
    ManifoldSpec s2 = make_manifold("sphere", 2);
    TimeGrid grid(128);
    CmShift h = make_cm_shift(ShiftRecipe::sinusoid(1.0), grid, 2, 1.0);
    CylindricalFunctional F = builtin_functional(s2, "z1");
    SolverConfig cfg;
    cfg.t_steps = 2;
    const double dt_probe = 1e-3;

    for (std::uint64_t k = 0; k < 8; ++k) {
        DiscretePath w = sample_brownian(grid, 2, 16, k);
        FlowState plus = solve_flow_picard(s2, w, h, dt_probe, cfg);
        FlowState minus = solve_flow_picard(s2, w, h, -dt_probe, cfg);
        double fd =
            (eval_functional(F, plus.sigma) - eval_functional(F, minus.sigma)) / (2.0 * dt_probe);
        RollResult rolled = roll(s2, w, canonical_frame(s2));
        double analytic = pair_with_density(gradient_DM(F, rolled.frames), h.hdot, grid.dt());
        CHECK(std::abs(fd - analytic) < 1e-3 + 2.0 * grid.dt());
    }
}

TEST_CASE("picard contraction ratios stay below one") {
    ManifoldSpec s2 = make_manifold("sphere", 2);
    TimeGrid grid(128);
    DiscretePath w = sample_brownian(grid, 2, 17, 1);
    CmShift h = make_cm_shift(ShiftRecipe::sinusoid(1.0), grid, 2, 1.0);
    FlowDiagnostics diag;
    solve_flow_picard(s2, w, h, 1.0, {}, &diag);
    CHECK(diag.picard.size() == 16);
    for (const auto& step : diag.picard) {
        CHECK(step.iters >= 1);
        if (step.iters > 1) CHECK(step.worst_ratio < 1.0);
    }
}

TEST_CASE("quasi-invariance: flat Cameron-Martin and t = 0") {
    ManifoldSpec flat = make_manifold("flat", 2);
    TimeGrid grid(64);
    SolverConfig cfg;
    cfg.picard_tol = 1e-9;
    auto F_list = std::vector<CylindricalFunctional>{builtin_functional(flat, "tanhz")};

    QiReport rep = quasi_invariance_report(flat, F_list, ShiftRecipe::sinusoid(1.0), 1.0, 0.7,
                                           4000, grid, cfg, 2024);
    CHECK(rep.all_pass());
    CHECK(rep.failed_paths == 0);

    QiReport rep0 = quasi_invariance_report(flat, F_list, ShiftRecipe::sinusoid(1.0), 1.0, 0.0,
                                            2000, grid, cfg, 2025);
    CHECK(rep0.all_pass());
    // G_0 = 1: the reweighted side is the plain mean.
    CHECK(rep0.girsanov.max_abs_log == 0.0);
}

TEST_CASE("quasi-invariance on the sphere, deterministic and adapted shifts") {
    ManifoldSpec s2 = make_manifold("sphere", 2);
    TimeGrid grid(128);
    SolverConfig cfg;
    cfg.picard_tol = 1e-7;
    auto F_list = default_battery(s2);

    QiReport det = quasi_invariance_report(s2, F_list, ShiftRecipe::sinusoid(1.0), 1.0, 0.5,
                                           3000, grid, cfg, 31337);
    CHECK(det.all_pass());
    CHECK(det.o_defect_max < 1e-6);

    QiReport ada = quasi_invariance_report(s2, F_list, ShiftRecipe::adapted_tanh(0, 1.0), 1.0,
                                           0.5, 3000, grid, cfg, 31338);
    CHECK(ada.all_pass());
    CHECK(ada.o_defect_max < 1e-6);
}

TEST_CASE("energy norm of the pullback pair grows at most exponentially") {
    ManifoldSpec s2 = make_manifold("sphere", 2);
    SolverConfig cfg;
    const long n_paths = 64;
    std::vector<double> slopes;
    for (int n_steps : {64, 128}) {
        TimeGrid grid(n_steps);
        CmShift proto = make_cm_shift(ShiftRecipe::sinusoid(1.0), grid, 2, 1.0);
        std::vector<double> ts = {0.5, 1.0, 1.5, 2.0};
        std::vector<double> lognorm;
        for (double t : ts) {
            std::vector<FlowState> states(n_paths);
            parallel_for(n_paths, [&](long k) {
                DiscretePath w = sample_brownian(grid, 2, 404, static_cast<std::uint64_t>(k));
                states[k] = solve_flow_pullback(s2, w, proto, t, cfg);
            });
            lognorm.push_back(std::log(pullback_energy_norm(states)));
        }
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        double m = static_cast<double>(ts.size());
        for (size_t i = 0; i < ts.size(); ++i) {
            sx += ts[i];
            sy += lognorm[i];
            sxx += ts[i] * ts[i];
            sxy += ts[i] * lognorm[i];
        }
        slopes.push_back((m * sxy - sx * sy) / (m * sxx - sx * sx));
    }
    CHECK(std::abs(slopes[0]) < 10.0);
    CHECK(std::abs(slopes[1]) < 10.0);
    CHECK(std::abs(slopes[0] - slopes[1]) < 0.5 * std::max(std::abs(slopes[0]), 1.0));
}

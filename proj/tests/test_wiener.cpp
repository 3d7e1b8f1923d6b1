#include <doctest.h>

#include <cmath>
#include <vector>

#include "pathflow/errors.hpp"
#include "pathflow/parallel.hpp"
#include "pathflow/wiener.hpp"

using namespace pathflow;
using Eigen::MatrixXd;
using Eigen::VectorXd;

TEST_CASE("brownian sampling: determinism and Gaussian moments") {
    TimeGrid grid(64);
    DiscretePath a = sample_brownian(grid, 2, 42, 3);
    DiscretePath b = sample_brownian(grid, 2, 42, 3);
    CHECK((a.values - b.values).norm() == 0.0);
    CHECK(a.values.col(0).norm() == 0.0);

    const long n_paths = 100000;
    std::vector<double> w1sq(n_paths), indep(n_paths);
    parallel_for(n_paths, [&](long k) {
        DiscretePath w = sample_brownian(grid, 2, 7, static_cast<std::uint64_t>(k));
        w1sq[k] = w.values.col(grid.n_steps).squaredNorm();
        int half = grid.n_steps / 2;
        indep[k] = w.values.col(half).dot(w.values.col(grid.n_steps) - w.values.col(half));
    });
    McEstimate m = reduce_mean_se(w1sq);
    CHECK(std::abs(m.mean - 2.0) < 3.0 * m.se); // E|w_1|^2 = d
    McEstimate ind = reduce_mean_se(indep);
    CHECK(std::abs(ind.mean) < 3.0 * ind.se + 1e-12);
}

TEST_CASE("cm shift: constant recipe and exact clipping") {
    TimeGrid grid(128);
    CmShift h = make_cm_shift(ShiftRecipe::constant(0, 1.0), grid, 2, 1.0);
    CHECK(h.kind == ShiftKind::Deterministic);
    // h_s = s e1.
    for (int i = 0; i <= grid.n_steps; ++i) {
        CHECK(std::abs(h.h(0, i) - grid.time(i)) < 1e-14);
        CHECK(h.h(1, i) == 0.0);
    }
    CHECK(std::abs(h.energy() - 1.0) < 1e-13);

    // Raw norm 4C comes back with norm exactly C.
    CmShift clipped = make_cm_shift(ShiftRecipe::constant(0, 2.0), grid, 2, 1.0);
    CHECK(std::abs(clipped.energy() - 1.0) < 1e-13);

    CmShift sin_shift = make_cm_shift(ShiftRecipe::sinusoid(3.0), grid, 2, 1.0);
    CHECK(std::abs(sin_shift.energy() - 1.0) < 1e-13);

    CHECK_THROWS_AS(make_cm_shift(ShiftRecipe::constant(), grid, 2, -1.0), ConfigError);
    CHECK_THROWS_AS(make_cm_shift(ShiftRecipe::adapted_tanh(), grid, 2, 1.0), ConfigError);
}

TEST_CASE("adapted shift reads only the past") {
    TimeGrid grid(64);
    DiscretePath w = sample_brownian(grid, 2, 99, 0);
    CmShift h = make_cm_shift(ShiftRecipe::adapted_tanh(0, 1.0), grid, 2, 1.0, &w);
    CHECK(h.kind == ShiftKind::AdaptedRandom);
    CHECK(h.energy() <= 1.0 + 1e-12);

    // Perturb increments after index i; the density up to i must not change.
    for (int i : {10, 32, 50}) {
        DiscretePath wf = w;
        for (int k = i + 1; k <= grid.n_steps; ++k)
            wf.values.col(k) += VectorXd::Constant(2, 0.5 * (k - i));
        CmShift hf = make_cm_shift(ShiftRecipe::adapted_tanh(0, 1.0), grid, 2, 1.0, &wf);
        CHECK((hf.hdot.leftCols(i + 1) - h.hdot.leftCols(i + 1)).norm() == 0.0);
    }
}

TEST_CASE("ito integral: constant, ito formula moment, martingale mean") {
    TimeGrid grid(256);
    // f = e1 -> w_1^1.
    DiscretePath w = sample_brownian(grid, 2, 5, 1);
    MatrixXd f = MatrixXd::Zero(2, grid.n_steps);
    f.row(0).setOnes();
    CHECK(std::abs(ito_integral(f, w) - w.values(0, grid.n_steps)) < 1e-12);

    MatrixXd bad = MatrixXd::Zero(3, grid.n_steps);
    CHECK_THROWS_AS(ito_integral(bad, w), DomainError);

    // d=1: int 2w dw = w_1^2 - 1 in the limit; mean-square distance <= C dt.
    const long n_paths = 20000;
    std::vector<double> gap(n_paths), means(n_paths);
    parallel_for(n_paths, [&](long k) {
        DiscretePath w1 = sample_brownian(grid, 1, 31, static_cast<std::uint64_t>(k));
        MatrixXd f2 = 2.0 * w1.values.leftCols(grid.n_steps);
        double ito = ito_integral(f2, w1);
        double target = w1.values(0, grid.n_steps) * w1.values(0, grid.n_steps) - 1.0;
        gap[k] = (ito - target) * (ito - target);
        means[k] = ito;
    });
    McEstimate g = reduce_mean_se(gap);
    CHECK(g.mean < 3.0 * grid.dt());
    McEstimate mu = reduce_mean_se(means);
    CHECK(std::abs(mu.mean) < 3.0 * mu.se);
}

TEST_CASE("stratonovich integral: telescoping and smooth agreement") {
    TimeGrid grid(128);
    DiscretePath w = sample_brownian(grid, 1, 17, 4);
    // f = w: midpoint sum telescopes to w_1^2/2 exactly at every n.
    double strat = stratonovich_integral(w.values, w);
    double w1 = w.values(0, grid.n_steps);
    CHECK(std::abs(strat - 0.5 * w1 * w1) < 1e-12);

    // Deterministic smooth f: equals Ito within O(dt).
    MatrixXd f(1, grid.n_points());
    for (int i = 0; i < grid.n_points(); ++i) f(0, i) = std::sin(2.0 * M_PI * grid.time(i));
    double ito = ito_integral(f.leftCols(grid.n_steps), w);
    CHECK(std::abs(stratonovich_integral(f, w) - ito) < 10.0 * grid.dt());

    MatrixXd zero = MatrixXd::Zero(1, grid.n_points());
    CHECK(stratonovich_integral(zero, w) == 0.0);
}

TEST_CASE("girsanov density: identity, Cameron-Martin mean-one, adapted drift") {
    TimeGrid grid(128);
    DiscretePath w = sample_brownian(grid, 2, 21, 0);

    AdaptedRotationDrift identity(grid, 2);
    CHECK(girsanov_density(w, identity) == 1.0);

    // Deterministic CM drift: E[G] = 1 (exact per-step Gaussian identity,
    // checked by Monte Carlo).
    CmShift h = make_cm_shift(ShiftRecipe::sinusoid(1.0), grid, 2, 1.0);
    AdaptedRotationDrift od = AdaptedRotationDrift::from_shift(h);
    const long n_paths = 50000;
    std::vector<double> dens(n_paths);
    GirsanovStats stats;
    parallel_for(n_paths, [&](long k) {
        DiscretePath wk = sample_brownian(grid, 2, 77, static_cast<std::uint64_t>(k));
        dens[k] = girsanov_density(wk, od);
    });
    McEstimate m = reduce_mean_se(dens);
    CHECK(std::abs(m.mean - 1.0) < 3.0 * m.se);

    // Bounded adapted drift: E[G] = 1 too.
    std::vector<double> dens2(n_paths);
    parallel_for(n_paths, [&](long k) {
        DiscretePath wk = sample_brownian(grid, 2, 78, static_cast<std::uint64_t>(k));
        AdaptedRotationDrift oda(grid, 2);
        for (int i = 0; i < grid.n_points(); ++i)
            oda.a(0, i) = std::tanh(wk.values(1, i));
        dens2[k] = girsanov_density(wk, oda);
    });
    McEstimate m2 = reduce_mean_se(dens2);
    CHECK(std::abs(m2.mean - 1.0) < 3.0 * m2.se);

    // Non-orthogonal rotation violates the contract.
    AdaptedRotationDrift badod(grid, 2);
    badod.o_at(3)(0, 0) = 2.0;
    CHECK_THROWS_AS(girsanov_density(w, badod), ContractViolation);
}

TEST_CASE("rotation invariance of the second-moment structure") {
    TimeGrid grid(64);
    const long n_paths = 40000;
    int probe = grid.n_steps / 2;
    std::vector<double> diag(n_paths), off(n_paths);
    parallel_for(n_paths, [&](long k) {
        DiscretePath wk = sample_brownian(grid, 2, 101, static_cast<std::uint64_t>(k));
        AdaptedRotationDrift od(grid, 2);
        for (int i = 0; i < grid.n_points(); ++i) {
            double ang = std::atan(wk.values(0, i)); // adapted angle
            od.o_at(i) << std::cos(ang), -std::sin(ang), std::sin(ang), std::cos(ang);
        }
        DiscretePath rot = rotate_path(wk, od);
        diag[k] = rot.values(0, probe) * rot.values(0, probe);
        off[k] = rot.values(0, probe) * rot.values(1, probe);
    });
    McEstimate d = reduce_mean_se(diag);
    McEstimate o = reduce_mean_se(off);
    CHECK(std::abs(d.mean - grid.time(probe)) < 3.0 * d.se);
    CHECK(std::abs(o.mean) < 3.0 * o.se);
}

TEST_CASE("flat Cameron-Martin reweighting with common random numbers") {
    TimeGrid grid(64);
    CmShift h = make_cm_shift(ShiftRecipe::constant(0, 0.8), grid, 2, 1.0);
    AdaptedRotationDrift od = AdaptedRotationDrift::from_shift(h);
    auto F = [&](const DiscretePath& p) { return std::tanh(p.values(0, grid.n_steps)); };

    const long n_paths = 60000;
    std::vector<double> shifted(n_paths), weighted(n_paths);
    parallel_for(n_paths, [&](long k) {
        DiscretePath wk = sample_brownian(grid, 2, 202, static_cast<std::uint64_t>(k));
        DiscretePath wsh = wk;
        wsh.values += h.h;
        shifted[k] = F(wsh);
        weighted[k] = F(wk) * girsanov_density(wk, od);
    });
    McEstimate a = reduce_mean_se(shifted);
    McEstimate b = reduce_mean_se(weighted);
    CHECK(std::abs(a.mean - b.mean) < 3.0 * (a.se + b.se));
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "smp/principle.hpp"

#include <cmath>
#include <numbers>

using namespace smp;

namespace {
const SeedPolicy seeds(20260809);
constexpr double kPi = std::numbers::pi;
}  // namespace

TEST_CASE("hamiltonian quadratures") {
    auto space = SpectralSpace::make(32);
    auto zero = SpectralField::zero(space);
    auto one = SpectralField::from_function(space, [](double) { return 1.0; });

    // all coefficients zero
    auto silent = make_scenario("lq", {{"beta", 0.0}, {"gamma", 0.0}, {"delta", 0.0}, {"rho", 0.0},
                                       {"sigma0", 0.0}, {"ql", 0.0}, {"ru", 0.0}, {"qT", 0.0}},
                                space);
    CHECK(hamiltonian(0.1, 1.0, one, one, {one}, silent) == doctest::Approx(0.0).epsilon(1e-14));

    // p = q = 0 leaves the running cost integral
    auto model = make_scenario("lq", {{"ql", 1.0}, {"ru", 0.5}}, space);
    const double direct = hamiltonian(0.1, 1.0, one, zero, {zero}, model);
    ArrayXd l(space->n_points());
    model.l.value(0.1, space->grid().points(), one.grid_values(), 1.0, l);
    CHECK(direct == doctest::Approx(space->grid().integrate(l)).epsilon(1e-14));

    // b = 1, p = 1, l = sigma = 0 integrates the measure of D
    auto unit = silent;
    unit.b.value = [](double, CArr, CArr r, double, MArr out) { out.setOnes(); };
    CHECK(hamiltonian(0.1, 1.0, one, one, {zero}, unit) == doctest::Approx(1.0).epsilon(0.01));
}

TEST_CASE("rate fits on synthetic tables") {
    std::vector<std::pair<double, double>> sqrt_table, lin_table, quad_table;
    Rng rng(seeds.derive(SeedPolicy::tag("test/rate"), 0));
    for (double eps = 1.0 / 16; eps >= 1.0 / 512; eps /= 2) {
        sqrt_table.emplace_back(eps, std::sqrt(eps));
        lin_table.emplace_back(eps, 3.0 * eps);
        quad_table.emplace_back(eps, eps * eps * (1.0 + 0.01 * (2.0 * rng.uniform() - 1.0)));
    }
    CHECK(rate_estimate(sqrt_table).slope == doctest::Approx(0.5).epsilon(1e-12));
    auto lin = rate_estimate(lin_table);
    CHECK(lin.slope == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(lin.intercept == doctest::Approx(std::log(3.0)).epsilon(1e-10));
    CHECK(lin.r2 == doctest::Approx(1.0).epsilon(1e-10));
    const double qslope = rate_estimate(quad_table).slope;
    CHECK(qslope >= 1.9);
    CHECK(qslope <= 2.1);

    CHECK_THROWS_AS(rate_estimate({{0.1, 1.0}, {0.2, 2.0}, {0.3, 3.0}}), std::invalid_argument);
    CHECK_THROWS_AS(rate_estimate({{0.1, 1.0}, {0.2, -2.0}, {0.3, 3.0}, {0.4, 1.0}}),
                    std::invalid_argument);
}

TEST_CASE("mp statistic vanishes at the realized action") {
    auto space = SpectralSpace::make(16);
    auto model = make_scenario("nonconvex-sigma", {}, space);
    TimeGrid grid(1.0, 64);
    auto u = ControlPath::constant(-1.0);
    auto ens = simulate_ensemble(model, u, seeds, SeedPolicy::tag("test/mp0"), 300, grid, space);
    auto adj = solve_first_adjoint(model, ens, RegressionSpec{}).path;

    auto w = sample_wiener(seeds, grid, 1, 0, SeedPolicy::tag("test/mp0-outer"));
    auto X = solve_state(model, u, w, grid, space);
    const int knot = 16;
    SecondAdjointForm form(model, u, adj, w, X.states[knot].modes(), knot, seeds, 8);
    auto cell = mp_statistic(knot, 0, -1.0, model, adj, form, X.states[knot], -1.0);
    CHECK(cell.dH == 0.0);
    CHECK(cell.quad == 0.0);
    CHECK(cell.total == 0.0);
    CHECK(cell.std_error == 0.0);
}

TEST_CASE("check_mp is vacuous for a singleton control set") {
    auto space = SpectralSpace::make(16);
    auto model = make_scenario("adjoint-closedform", {{"sigma0", 0.3}}, space);  // actions = {0}
    TimeGrid grid(1.0, 32);
    auto u = ControlPath::constant(0.0);
    auto ens = simulate_ensemble(model, u, seeds, SeedPolicy::tag("test/mp1"), 200, grid, space);
    auto adj = solve_first_adjoint(model, ens, RegressionSpec{}).path;
    MPConfig cfg;
    cfg.knots = {8, 16, 24};
    cfg.n_outer = 4;
    cfg.inner_branches = 4;
    cfg.tag = SeedPolicy::tag("test/mp1-outer");
    auto report = check_mp(model, u, adj, cfg, seeds, grid, space);
    CHECK(report.n_cells == 12);
    CHECK(report.violation_fraction == 0.0);
    for (const auto& c : report.cells) CHECK(c.total == 0.0);
}

TEST_CASE("final duality: trivial zero cases") {
    auto space = SpectralSpace::make(16);
    TimeGrid grid(1.0, 64);

    SUBCASE("null spike zeroes both sides") {
        auto model = make_scenario("nonconvex-sigma", {}, space);
        auto u = ControlPath::constant(-1.0);
        auto ens = simulate_ensemble(model, u, seeds, SeedPolicy::tag("test/fd0"), 200, grid, space);
        auto adj = solve_first_adjoint(model, ens, RegressionSpec{}).path;
        FinalDualityConfig cfg;
        cfg.t0 = 0.25;
        cfg.v = ControlPath::constant(-1.0);  // v = u
        cfg.eps_values = {0.125};
        cfg.n_lhs_samples = 8;
        cfg.n_rhs_outer = 4;
        cfg.inner_branches = 4;
        cfg.tag = SeedPolicy::tag("test/fd0-run");
        auto rows = final_duality_check(model, u, adj, cfg, seeds, grid, space);
        CHECK(rows[0].lhs == 0.0);
        CHECK(rows[0].rhs == 0.0);
    }

    SUBCASE("zero curvature zeroes both sides") {
        auto model = make_scenario("lq", {{"ql", 0.0}, {"qT", 0.0}}, space);  // l'' = h'' = 0
        auto u = ControlPath::constant(-1.0);
        auto ens = simulate_ensemble(model, u, seeds, SeedPolicy::tag("test/fd1"), 200, grid, space);
        auto adj = solve_first_adjoint(model, ens, RegressionSpec{}).path;
        FinalDualityConfig cfg;
        cfg.t0 = 0.25;
        cfg.v = ControlPath::constant(1.0);
        cfg.eps_values = {0.125};
        cfg.n_lhs_samples = 8;
        cfg.n_rhs_outer = 4;
        cfg.inner_branches = 4;
        cfg.tag = SeedPolicy::tag("test/fd1-run");
        auto rows = final_duality_check(model, u, adj, cfg, seeds, grid, space);
        CHECK(rows[0].lhs == 0.0);
        CHECK(rows[0].rhs == 0.0);
    }
}

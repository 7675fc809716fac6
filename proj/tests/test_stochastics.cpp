#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "smp/stochastics.hpp"

#include <cmath>
#include <numbers>

using namespace smp;

namespace {
const SeedPolicy seeds(20260809);
constexpr double kPi = std::numbers::pi;
}  // namespace

TEST_CASE("sampling is a pure function of seed and index") {
    TimeGrid grid(1.0, 64);
    auto a = sample_wiener(seeds, grid, 2, 17);
    auto b = sample_wiener(seeds, grid, 2, 17);
    CHECK((a.increments - b.increments).cwiseAbs().maxCoeff() == 0.0);

    auto c = sample_wiener(seeds, grid, 2, 18);
    CHECK((a.increments - c.increments).cwiseAbs().maxCoeff() > 0.0);

    SeedPolicy other(20260810);
    auto e = sample_wiener(other, grid, 2, 17);
    CHECK((a.increments - e.increments).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("terminal value statistics") {
    TimeGrid grid(1.0, 128);
    const int n = 10000;
    double mean = 0.0, var = 0.0;
    std::vector<double> wt(n);
    for (int i = 0; i < n; ++i) {
        auto w = sample_wiener(seeds, grid, 1, static_cast<std::uint64_t>(i),
                               SeedPolicy::tag("test/clt"));
        wt[i] = w.increments.col(0).sum();
        mean += wt[i];
    }
    mean /= n;
    for (double v : wt) var += (v - mean) * (v - mean);
    var /= (n - 1);
    // CLT bound for the mean of W_T and chi-square concentration for the variance
    CHECK(std::abs(mean) <= 3.0 * std::sqrt(grid.T / n));
    CHECK(var == doctest::Approx(grid.T).epsilon(0.05));
}

TEST_CASE("branching copies the past and refreshes the future") {
    TimeGrid grid(1.0, 64);
    auto w = sample_wiener(seeds, grid, 1, 3, SeedPolicy::tag("test/branch"));

    auto full = branch(w, 0, seeds, 5);
    CHECK((full.increments - w.increments).cwiseAbs().maxCoeff() > 0.0);

    auto fixed = branch(w, grid.n_steps, seeds, 5);
    CHECK((fixed.increments - w.increments).cwiseAbs().maxCoeff() == 0.0);

    auto b1 = branch(w, 20, seeds, 0);
    auto b2 = branch(w, 20, seeds, 1);
    CHECK((b1.increments.topRows(20) - w.increments.topRows(20)).cwiseAbs().maxCoeff() == 0.0);
    CHECK((b2.increments.topRows(20) - w.increments.topRows(20)).cwiseAbs().maxCoeff() == 0.0);
    CHECK((b1.increments.bottomRows(44) - b2.increments.bottomRows(44)).cwiseAbs().maxCoeff() > 0.0);

    CHECK_THROWS_AS(branch(w, -1, seeds, 0), std::out_of_range);
    CHECK_THROWS_AS(branch(w, 65, seeds, 0), std::out_of_range);
}

TEST_CASE("tower property over branches") {
    // averaging W_T^2 over branches at t_k, then over outer paths, agrees with
    // plain Monte Carlo of the unconditional expectation
    TimeGrid grid(1.0, 32);
    const int outer = 400, inner = 8;
    double nested = 0.0, plain = 0.0;
    std::vector<double> nested_vals(outer), plain_vals(outer);
    for (int i = 0; i < outer; ++i) {
        auto w = sample_wiener(seeds, grid, 1, static_cast<std::uint64_t>(i),
                               SeedPolicy::tag("test/tower"));
        plain_vals[i] = std::pow(w.increments.col(0).sum(), 2);
        double acc = 0.0;
        for (int m = 0; m < inner; ++m) {
            auto b = branch(w, 16, seeds, static_cast<std::uint64_t>(m));
            acc += std::pow(b.increments.col(0).sum(), 2);
        }
        nested_vals[i] = acc / inner;
        nested += nested_vals[i];
        plain += plain_vals[i];
    }
    nested /= outer;
    plain /= outer;
    double se2 = 0.0;
    for (int i = 0; i < outer; ++i) {
        se2 += std::pow(nested_vals[i] - nested, 2) / (outer - 1.0) / outer;
        se2 += std::pow(plain_vals[i] - plain, 2) / (outer - 1.0) / outer;
    }
    CHECK(std::abs(nested - plain) <= 3.0 * std::sqrt(se2));
}

TEST_CASE("coarsening sums groups of increments") {
    TimeGrid grid(1.0, 16);
    auto w = sample_wiener(seeds, grid, 2, 0, SeedPolicy::tag("test/coarse"));
    auto c = coarsen(w, 4);
    CHECK(c.n_steps() == 4);
    CHECK(c.dt == doctest::Approx(0.25));
    CHECK(c.increments(1, 0) ==
          doctest::Approx(w.increments.block(4, 0, 4, 1).sum()).epsilon(1e-14));
    CHECK_THROWS_AS(coarsen(w, 3), std::invalid_argument);
}

TEST_CASE("martingale constant table") {
    CHECK(bdg_constant(2.0) == doctest::Approx(4.0));
    const double davis4 = std::pow(3.0 + std::sqrt(6.0), 2.0);
    CHECK(bdg_constant(4.0) == doctest::Approx(std::pow(4.0 / 3.0, 4.0) * davis4));
    CHECK(bdg_constant(4.0) >= 1.0);
    CHECK_THROWS_AS(bdg_constant(1.5), std::invalid_argument);
}

TEST_CASE("integral inequality: zero integrand") {
    TimeGrid grid(1.0, 64);
    auto space = SpectralSpace::make(32);
    BdgIntegrand zero = [&](int, const WienerPath&, std::vector<ArrayXd>& out) {
        for (auto& h : out) h.setZero();
    };
    auto rep = bdg_lp_check(seeds, grid, space, zero, 2.0, 1, 0.5, 16, SeedPolicy::tag("test/bdg0"));
    CHECK(rep.lhs == 0.0);
    CHECK(rep.rhs == 0.0);
    CHECK(rep.ratio == 0.0);
}

TEST_CASE("integral inequality: constant integrand matches the isometry") {
    TimeGrid grid(1.0, 128);
    auto space = SpectralSpace::make(32);
    auto h0 = SpectralField::from_function(space, [](double x) { return std::sin(kPi * x); });
    const double h0_sq = lp_norm(h0, 2.0) * lp_norm(h0, 2.0);
    BdgIntegrand constant = [&](int, const WienerPath&, std::vector<ArrayXd>& out) {
        out[0] = h0.grid_values();
    };
    const double t = 0.5;
    auto rep =
        bdg_lp_check(seeds, grid, space, constant, 2.0, 1, t, 4000, SeedPolicy::tag("test/bdgc"));
    // Ito isometry closed form: lhs = t ||h0||_2^2, rhs = c_2 t ||h0||_2^2
    CHECK(rep.lhs == doctest::Approx(t * h0_sq).epsilon(0.05));
    CHECK(rep.rhs == doctest::Approx(rep.c_p * t * h0_sq).epsilon(1e-12));
    CHECK(rep.c_p >= 1.0);
    CHECK(rep.ratio <= 1.0);
}

TEST_CASE("integral inequality: heat-flow integrand at p = 4") {
    TimeGrid grid(1.0, 128);
    auto space = SpectralSpace::make(32);
    auto f = SpectralField::from_function(space, [](double x) { return std::sin(kPi * x); });
    std::vector<ArrayXd> precomputed;
    for (int k = 0; k < grid.n_steps; ++k)
        precomputed.push_back(apply_semigroup(f, k * grid.dt()).grid_values());
    BdgIntegrand flow = [&](int k, const WienerPath&, std::vector<ArrayXd>& out) {
        out[0] = precomputed[k];
    };
    auto rep =
        bdg_lp_check(seeds, grid, space, flow, 4.0, 1, 1.0, 10000, SeedPolicy::tag("test/bdg4"));
    CHECK(rep.ratio <= 1.0);
    CHECK(rep.ratio > 0.0);

    CHECK_THROWS_AS(
        bdg_lp_check(seeds, grid, space, flow, 9.0, 1, 1.0, 16, SeedPolicy::tag("x")),
        std::invalid_argument);
}

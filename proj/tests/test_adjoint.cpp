#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "smp/principle.hpp"

#include <cmath>
#include <numbers>

using namespace smp;

namespace {
const SeedPolicy seeds(20260809);
constexpr double kPi = std::numbers::pi;

FirstAdjointResult train(const ProblemModel& model, const ControlPath& u, const TimeGrid& grid,
                         const SpacePtr& space, int n_samples, const char* tag) {
    auto ens = simulate_ensemble(model, u, seeds, SeedPolicy::tag(tag), n_samples, grid, space);
    return solve_first_adjoint(model, ens, RegressionSpec{});
}
}  // namespace

TEST_CASE("closed form: q-free deterministic adjoint") {
    // l' = 0, b' = sigma' = 0, h' = 1  =>  p_t = e^{(T-t)A} 1, q = 0
    auto space = SpectralSpace::make(32);
    auto model = make_scenario("adjoint-closedform", {{"sigma0", 0.4}}, space);
    TimeGrid grid(1.0, 128);
    auto res = train(model, ControlPath::constant(0.0), grid, space, 400, "test/adj-cf");

    // the constant function expands over odd sine modes with weights 2 sqrt2/(k pi)
    VectorXd one_modes = VectorXd::Zero(space->n_modes());
    for (int k = 1; k <= space->n_modes(); k += 2)
        one_modes[k - 1] = 2.0 * std::sqrt(2.0) / (k * kPi);

    AdjointEvaluator ev(res.path);
    auto ens = simulate_ensemble(model, ControlPath::constant(0.0), seeds,
                                 SeedPolicy::tag("test/adj-cf"), 4, grid, space);
    for (int k : {0, 32, 64, 96}) {
        const double t = grid.knot(k);
        VectorXd target = (one_modes.array() * (-(grid.T - t) * space->eigenvalues()).exp()).matrix();
        // the fitted p is state-independent here; probe it at the mean state
        VectorXd mean_modes = ens.modes[k].rowwise().mean();
        ArrayXd sg = space->to_grid(mean_modes);
        ev.eval(k, mean_modes, sg, true);
        CHECK((ev.p_modes() - target).norm() / target.norm() <= 1e-2);
        // q is pure regression noise here; its size must be explained by the fit SE
        CHECK(ev.q_modes(0).norm() <= std::max(3.0 * res.diag.q_se[k], 1e-12));
    }

    // terminal knot is exact by construction
    ArrayXd sg = space->to_grid(ens.modes[grid.n_steps].col(1));
    ev.eval(grid.n_steps, ens.modes[grid.n_steps].col(1), sg, true);
    ArrayXd ones = ArrayXd::Ones(space->n_points());
    CHECK((ev.p_modes() - space->to_modes(ones)).norm() <= 1e-13);
    CHECK(ev.q_modes(0).norm() == 0.0);
}

TEST_CASE("dual representation of p via the forward flow") {
    // E<p_t, f> = E[ <h'(X_T), Y_T^{t,f}> + int_t^T <l'(s), Y_s^{t,f}> ds ];
    // the discrete gap is a first-order weak bias, so it must halve with dt
    // and sit inside the noise band at the finer resolution
    auto space = SpectralSpace::make(32);
    auto model = make_scenario("nonconvex-sigma", {}, space);
    auto f = SpectralField::from_function(space, [](double x) { return std::sin(kPi * x); });
    const ArrayXd& x = space->grid().points();
    const auto& wq = space->grid().weights();

    auto gap_and_se = [&](int steps, int N) {
        TimeGrid grid(1.0, steps);
        auto ens = simulate_ensemble(model, ControlPath::constant(-1.0), seeds,
                                     SeedPolicy::tag("test/adj-dual"), N, grid, space);
        auto res = solve_first_adjoint(model, ens, RegressionSpec{});
        const int k0 = steps / 4;
        AdjointEvaluator ev(res.path);
        VectorXd lhs(N), rhs(N);
        ArrayXd buf(space->n_points());
        for (int i = 0; i < N; ++i) {
            ArrayXd sg = space->to_grid(ens.modes[k0].col(i));
            ev.eval(k0, ens.modes[k0].col(i), sg, false);
            lhs[i] = (ev.p_grid() * f.grid_values() * wq).sum();

            LinearSPDESpec spec;
            spec.start_knot = k0;
            spec.initial = f;
            spec.coeffs = [&](int k, LinearStepCoeffs& c) {
                ArrayXd st = space->to_grid(ens.modes[k].col(i));
                model.b.deriv(grid.knot(k), x, st, ens.controls(k, i), c.a);
                model.sigma[0].deriv(grid.knot(k), x, st, ens.controls(k, i), c.b[0]);
                c.alpha.setZero();
                c.beta[0].setZero();
            };
            double acc = 0.0;
            run_linear(spec, ens.paths[i], grid, [&](int k, const VectorXd&, const ArrayXd& yg) {
                ArrayXd st = space->to_grid(ens.modes[k].col(i));
                if (k < grid.n_steps) {
                    model.l.deriv(grid.knot(k), x, st, ens.controls(k, i), buf);
                    acc += grid.dt() * (buf * yg * wq).sum();
                } else {
                    model.h.deriv(x, st, buf);
                    acc += (buf * yg * wq).sum();
                }
            });
            rhs[i] = acc;
        }
        const double ml = lhs.mean(), mr = rhs.mean();
        const double sel = std::sqrt((lhs.array() - ml).square().sum() / (N - 1.0) / N);
        const double ser = std::sqrt((rhs.array() - mr).square().sum() / (N - 1.0) / N);
        return std::pair<double, double>(ml - mr, std::hypot(sel, ser));
    };

    auto [coarse_gap, coarse_se] = gap_and_se(64, 400);
    auto [fine_gap, fine_se] = gap_and_se(256, 400);
    CHECK(std::abs(fine_gap) <= std::max(3.0 * fine_se, 0.35 * std::abs(coarse_gap)));
    CHECK(std::abs(fine_gap) <= 0.35 * std::abs(coarse_gap) + 2.0 * fine_se);
}

TEST_CASE("curvature assembly") {
    auto space = SpectralSpace::make(16);
    TimeGrid grid(1.0, 16);

    SUBCASE("b'' = sigma'' = 0 leaves only l''") {
        auto model = make_scenario("lq", {{"ql", 1.5}}, space);
        auto res = train(model, ControlPath::constant(0.0), grid, space, 200, "test/curv1");
        AdjointEvaluator ev(res.path);
        ArrayXd out(space->n_points());
        auto st = model.x0;
        curvature_at(model, ev, 4, st.modes(), st.grid_values(), 0.0, out);
        CHECK((out - 3.0).abs().maxCoeff() <= 1e-12);  // l'' = 2 ql
    }

    SUBCASE("pure drift curvature equals 2p") {
        auto model = make_scenario("lq", {{"ql", 0.0}}, space);
        // overwrite b'' with the constant 2
        model.b.deriv2 = [](double, CArr, CArr r, double, MArr out) { out.setConstant(2.0); };
        auto res = train(model, ControlPath::constant(0.0), grid, space, 200, "test/curv2");
        AdjointEvaluator ev(res.path);
        ArrayXd out(space->n_points());
        auto st = model.x0;
        curvature_at(model, ev, 4, st.modes(), st.grid_values(), 0.0, out);
        ev.eval(4, st.modes(), st.grid_values(), false);
        CHECK((out - 2.0 * ev.p_grid()).abs().maxCoeff() <= 1e-12);
    }

    SUBCASE("quadratic terminal cost has constant curvature") {
        auto model = make_scenario("lq", {{"qT", 1.0}}, space);
        ArrayXd out(space->n_points());
        terminal_curvature(model, space, model.x0.grid_values(), out);
        CHECK((out - 2.0).abs().maxCoeff() <= 1e-14);
    }
}

TEST_CASE("duality relations vanish for a null spike") {
    auto space = SpectralSpace::make(16);
    auto model = make_scenario("nonconvex-sigma", {}, space);
    TimeGrid grid(1.0, 64);
    auto res = train(model, ControlPath::constant(-1.0), grid, space, 200, "test/dual0");
    SpikeSpec s{0.25, 0.125, ControlPath::constant(-1.0)};  // v = u
    auto rep = duality_checks(model, ControlPath::constant(-1.0), s, res.path, seeds,
                              SeedPolicy::tag("test/dual0-eval"), 64, grid, space);
    CHECK(rep.lhs1 == 0.0);
    CHECK(rep.rhs1 == 0.0);
    CHECK(rep.lhs2 == 0.0);
    CHECK(rep.rhs2 == 0.0);
}

TEST_CASE("duality relations on the showcase within noise") {
    auto space = SpectralSpace::make(32);
    auto model = make_scenario("nonconvex-sigma", {}, space);
    TimeGrid grid(1.0, 128);
    auto res = train(model, ControlPath::constant(-1.0), grid, space, 1500, "test/dual1");
    SpikeSpec s{0.25, 0.125, ControlPath::constant(1.0)};
    auto rep = duality_checks(model, ControlPath::constant(-1.0), s, res.path, seeds,
                              SeedPolicy::tag("test/dual1-eval"), 1500, grid, space);
    CHECK(std::abs(rep.gap1) <= 3.0 * rep.se1_combined);
    CHECK(std::abs(rep.gap2) <= 3.0 * rep.se2_combined);
}

TEST_CASE("second adjoint: deterministic closed form, symmetry, bilinearity") {
    // b' = sigma' = 0 and Hbar = 0, hbar = 1:
    // <P_t f, g> = int (e^{(T-t)A} f)(e^{(T-t)A} g) dm
    auto space = SpectralSpace::make(32);
    auto model = make_scenario("second-adjoint-closedform", {{"sigma0", 0.4}}, space);
    TimeGrid grid(1.0, 500);
    auto res = train(model, ControlPath::constant(0.0), grid, space, 150, "test/p2");
    const int knot = 450;  // T - t = 0.1

    auto outer = sample_wiener(seeds, grid, 1, 0, SeedPolicy::tag("test/p2-outer"));
    auto X = solve_state(model, ControlPath::constant(0.0), outer, grid, space);
    SecondAdjointForm form(model, ControlPath::constant(0.0), res.path, outer,
                           X.states[knot].modes(), knot, seeds, 16);

    auto f = SpectralField::from_function(space, [](double x) { return std::sin(kPi * x); });
    auto val = form.eval(f);
    const double target = std::exp(-2.0 * kPi * kPi * 0.1) * 0.5;
    CHECK(target == doctest::Approx(0.069475).epsilon(2e-4));
    CHECK(val.value == doctest::Approx(target).epsilon(1e-2));
    CHECK(val.std_error <= 1e-12);  // integrand is deterministic here

    // zero argument annihilates the form
    auto zero = SpectralField::zero(space);
    CHECK(form.eval(zero, f).value == 0.0);

    // symmetry and bilinearity are exact with shared branch randomness
    Rng rng(seeds.derive(SeedPolicy::tag("test/p2-fields"), 0));
    VectorXd m1(space->n_modes()), m2(space->n_modes());
    for (int k = 0; k < space->n_modes(); ++k) {
        m1[k] = rng.normal() / (k + 1.0);
        m2[k] = rng.normal() / (k + 1.0);
    }
    auto f1 = SpectralField::from_modes(space, m1);
    auto f2 = SpectralField::from_modes(space, m2);
    CHECK(form.eval(f1, f2).value == doctest::Approx(form.eval(f2, f1).value).epsilon(1e-14));

    const double alpha = 1.7;
    auto combo = alpha * f1 + f2;
    const double left = form.eval(combo, f2).value;
    const double right = alpha * form.eval(f1, f2).value + form.eval(f2, f2).value;
    CHECK(left == doctest::Approx(right).epsilon(1e-10));

    CHECK_THROWS_AS(SecondAdjointForm(model, ControlPath::constant(0.0), res.path, outer,
                                      X.states[knot].modes(), knot, seeds, 1),
                    std::invalid_argument);
}

TEST_CASE("second adjoint: composition with measurable fields via the tower property") {
    auto space = SpectralSpace::make(16);
    auto model = make_scenario("nonconvex-sigma", {}, space);
    TimeGrid grid(1.0, 64);
    const ControlPath u = ControlPath::constant(-1.0);
    auto res = train(model, u, grid, space, 400, "test/p2-tower");
    const int knot = 16;
    const double t = grid.knot(knot);
    const ArrayXd& x = space->grid().points();
    const auto& wq = space->grid().weights();

    // F = G = delta sigma at the knot: an F_t-measurable random field
    auto dsigma = [&](const StatePath& X) {
        ArrayXd hi(space->n_points()), lo(space->n_points());
        model.sigma[0].value(t, x, X.states[knot].grid_values(), 1.0, hi);
        model.sigma[0].value(t, x, X.states[knot].grid_values(), -1.0, lo);
        return SpectralField::from_grid(space, hi - lo);
    };

    const int n_outer = 48, inner = 24;
    VectorXd nested(n_outer);
    for (int o = 0; o < n_outer; ++o) {
        auto w = sample_wiener(seeds, grid, 1, static_cast<std::uint64_t>(o),
                               SeedPolicy::tag("test/p2-tower-o"));
        auto X = solve_state(model, u, w, grid, space);
        auto F = dsigma(X);
        SecondAdjointForm form(model, u, res.path, w, X.states[knot].modes(), knot, seeds, inner);
        nested[o] = form.eval(F).value;
    }

    // direct unconditional route: each fresh path carries its own flow
    const int n_direct = 600;
    VectorXd direct(n_direct);
    AdjointEvaluator ev(res.path);
    ArrayXd hbar(space->n_points());
    for (int i = 0; i < n_direct; ++i) {
        auto w = sample_wiener(seeds, grid, 1, static_cast<std::uint64_t>(i),
                               SeedPolicy::tag("test/p2-tower-d"));
        auto X = solve_state(model, u, w, grid, space);
        auto F = dsigma(X);
        LinearSPDESpec spec;
        spec.start_knot = knot;
        spec.initial = F;
        spec.coeffs = [&](int k, LinearStepCoeffs& c) {
            model.b.deriv(grid.knot(k), x, X.states[k].grid_values(), X.controls[k], c.a);
            model.sigma[0].deriv(grid.knot(k), x, X.states[k].grid_values(), X.controls[k], c.b[0]);
            c.alpha.setZero();
            c.beta[0].setZero();
        };
        double acc = 0.0;
        run_linear(spec, w, grid, [&](int k, const VectorXd&, const ArrayXd& yg) {
            if (k < grid.n_steps) {
                curvature_at(model, ev, k, X.states[k].modes(), X.states[k].grid_values(),
                             X.controls[k], hbar);
                acc += grid.dt() * (hbar * yg.square() * wq).sum();
            } else {
                terminal_curvature(model, space, X.states[k].grid_values(), hbar);
                acc += (hbar * yg.square() * wq).sum();
            }
        });
        direct[i] = acc;
    }

    const double mn = nested.mean(), md = direct.mean();
    const double sen = std::sqrt((nested.array() - mn).square().sum() / (n_outer - 1.0) / n_outer);
    const double sed = std::sqrt((direct.array() - md).square().sum() / (n_direct - 1.0) / n_direct);
    CHECK(std::abs(mn - md) <= 3.0 * std::hypot(sen, sed));
}

TEST_CASE("second adjoint: weak continuity in the conditioning time") {
    // the flows contract fast, so P_t only moves appreciably near the
    // terminal time; probe the discrepancy there, above the branch noise
    auto space = SpectralSpace::make(16);
    auto model = make_scenario("nonconvex-sigma", {}, space);
    TimeGrid grid(1.0, 64);
    const ControlPath u = ControlPath::constant(-1.0);
    auto res = train(model, u, grid, space, 400, "test/p2-cont");
    auto f = SpectralField::from_function(space, [](double x) { return std::sin(kPi * x); });

    auto discrepancy = [&](int gap) {
        const int base = 48;
        const int n_outer = 16;
        double acc = 0.0;
        for (int o = 0; o < n_outer; ++o) {
            auto w = sample_wiener(seeds, grid, 1, static_cast<std::uint64_t>(o),
                                   SeedPolicy::tag("test/p2-cont-o"));
            auto X = solve_state(model, u, w, grid, space);
            SecondAdjointForm fa(model, u, res.path, w, X.states[base].modes(), base, seeds, 64);
            SecondAdjointForm fb(model, u, res.path, w, X.states[base + gap].modes(), base + gap,
                                 seeds, 64);
            acc += std::abs(fb.eval(f).value - fa.eval(f).value);
        }
        return acc / n_outer;
    };

    CHECK(discrepancy(2) < 0.9 * discrepancy(12));
}

TEST_CASE("flow estimates: contraction without coefficients, bounded with them") {
    auto space = SpectralSpace::make(32);
    TimeGrid grid(1.0, 128);
    auto f = SpectralField::from_function(space, [](double x) { return std::sin(kPi * x); });

    SUBCASE("pure semigroup flow contracts") {
        auto model = make_scenario("adjoint-closedform", {{"sigma0", 0.4}}, space);
        auto rep = flow_estimates_check(model, ControlPath::constant(0.0), seeds,
                                        SeedPolicy::tag("test/flow0"), grid, space, 32, f, 2, 8,
                                        {});
        for (double r : rep.ratio) CHECK(r <= 1.0 + 1e-12);
    }

    SUBCASE("showcase flow stays bounded, weighted ratios too") {
        auto model = make_scenario("nonconvex-sigma", {}, space);
        auto rep = flow_estimates_check(model, ControlPath::constant(-1.0), seeds,
                                        SeedPolicy::tag("test/flow1"), grid, space, 32, f, 2, 32,
                                        {0.1, 0.2});
        for (double r : rep.ratio) CHECK(r <= 3.0);
        for (const auto& weighted : rep.weighted)
            for (double r : weighted) CHECK(r <= 3.0);
    }
}

TEST_CASE("degenerate ensembles: dead features are dropped, collinear ones ridged") {
    SUBCASE("deterministic state: only the intercept survives, no ridge needed") {
        auto space = SpectralSpace::make(16);
        auto model = make_scenario("adjoint-closedform", {{"sigma0", 0.0}}, space);
        TimeGrid grid(1.0, 16);
        auto res = train(model, ControlPath::constant(0.0), grid, space, 100, "test/ridge0");
        CHECK(res.path.ridge_fallbacks == 0);
        CHECK(res.diag.p_norm.allFinite());
    }

    SUBCASE("single shared noise source makes mode features collinear") {
        // zero spectrum + constant diffusion: every mode is an affine image of
        // the same Brownian level, so the regression falls back to ridge
        auto lap = DirichletLaplacian::with_eigenvalues(ArrayXd::Zero(16));
        auto space = std::make_shared<const SpectralSpace>(lap, SpatialGrid(32));
        auto model = make_scenario("adjoint-closedform", {{"sigma0", 0.4}}, space);
        TimeGrid grid(1.0, 16);
        auto res = train(model, ControlPath::constant(0.0), grid, space, 100, "test/ridge1");
        CHECK(res.path.ridge_fallbacks > 0);
        CHECK(res.diag.p_norm.allFinite());
    }
}

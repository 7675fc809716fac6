#include "smp/acceptance.hpp"
#include "smp/pipelines.hpp"

#include <algorithm>
#include <cstdarg>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>

namespace smp {

namespace fs = std::filesystem;

namespace {

constexpr double kPi = std::numbers::pi;

std::string join(const std::string& dir, const std::string& name) {
    return (fs::path(dir) / name).string();
}

std::string fmt(const char* format, ...) {
    char buf[512];
    va_list args;
    va_start(args, format);
    std::vsnprintf(buf, sizeof(buf), format, args);
    va_end(args);
    return buf;
}

void emit(std::vector<CriterionResult>& out, int id, const std::string& name, bool pass,
          std::string details) {
    std::printf("[%s] criterion %2d: %s - %s\n", pass ? "PASS" : "FAIL", id, name.c_str(),
                details.c_str());
    std::fflush(stdout);
    out.push_back({id, name, pass, std::move(details)});
}

/// Common showcase configuration shared by several criteria.
ExperimentConfig showcase_config(std::uint64_t seed, const std::string& out_dir) {
    ExperimentConfig cfg;
    cfg.scenario = "nonconvex-sigma";
    cfg.n_modes = 64;
    cfg.n_points = 128;
    cfg.n_steps = 512;
    cfg.T = 1.0;
    cfg.base_u = -1.0;
    cfg.spike_v = 1.0;
    cfg.spike_t0 = 0.25;
    cfg.master_seed = seed;
    cfg.out_dir = out_dir;
    return cfg;
}

const std::vector<double> kDyadicEps = {1.0 / 16, 1.0 / 32, 1.0 / 64, 1.0 / 128, 1.0 / 256,
                                        1.0 / 512};

// ---------------------------------------------------------------- criteria 1-4

std::vector<CriterionResult> criteria_rates(const std::string& out_dir, std::uint64_t seed) {
    std::vector<CriterionResult> res;
    ExperimentConfig cfg = showcase_config(seed, join(out_dir, "rates"));
    cfg.n_steps = 2048;          // the smallest spike window must span >= 4 knots
    cfg.outer_samples = 640;
    cfg.eps_sweep = kDyadicEps;
    if (run_rates(cfg) > 1) {}  // status folded into the slope checks below

    std::ifstream in(join(cfg.out_dir, "slopes.json"));
    nlohmann::json slopes;
    in >> slopes;
    const double sy = slopes["first_variation"]["slope"];
    const double sz = slopes["second_variation"]["slope"];
    const double sr = slopes["expansion_residual"]["slope"];
    const double sg = slopes["cost_expansion_gap"]["slope"];

    emit(res, 1, "first-variation order", sy >= 0.4 && sy <= 0.6,
         fmt("|||Y|||_4 slope %.3f, window [0.40, 0.60]", sy));
    emit(res, 2, "second-variation order", sz >= 0.85 && sz <= 1.15,
         fmt("|||Z|||_2 slope %.3f, window [0.85, 1.15]", sz));
    emit(res, 3, "expansion residual order", sr >= 1.15,
         fmt("residual slope %.3f, threshold >= 1.15", sr));

    // criterion 4 additionally requires every gap to sit on the fitted trend
    std::ifstream csv(join(cfg.out_dir, "rates.csv"));
    std::string line;
    std::getline(csv, line);  // header
    std::vector<std::array<double, 3>> gap_rows;  // eps, |gap|, se
    while (std::getline(csv, line)) {
        std::array<double, 14> v{};
        std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf,%lf,%lf,%lf,%lf,%lf,%lf,%lf,%lf,%lf,%lf", &v[0],
                    &v[1], &v[2], &v[3], &v[4], &v[5], &v[6], &v[7], &v[8], &v[9], &v[10], &v[11],
                    &v[12], &v[13]);
        gap_rows.push_back({v[0], std::abs(v[9]), v[10]});
    }
    std::vector<std::pair<double, double>> table;
    for (const auto& r : gap_rows) table.emplace_back(r[0], r[1]);
    const RateFit fit = rate_estimate(table);
    bool on_trend = true;
    for (const auto& r : gap_rows) {
        const double trend = std::exp(fit.intercept + fit.slope * std::log(r[0]));
        if (std::abs(r[1] - trend) > 3.0 * r[2]) on_trend = false;
    }
    emit(res, 4, "cost expansion order", sg > 1.0 && on_trend,
         fmt("|J-diff - expansion| slope %.3f (> 1 required), per-eps trend residuals %s 3 SEs", sg,
             on_trend ? "within" : "OUTSIDE"));
    return res;
}

// ------------------------------------------------------------------ criterion 5

std::vector<CriterionResult> criterion_duality(const std::string& out_dir, std::uint64_t seed) {
    std::vector<CriterionResult> res;
    const int n_train = 6000, n_eval = 8000;
    const int fine_steps = 512;

    auto run_at = [&](int steps, int refine) {
        ExperimentConfig cfg = showcase_config(seed, join(out_dir, "duality"));
        cfg.n_steps = steps;
        Workbench wb = make_workbench(cfg);
        auto ens = simulate_ensemble(wb.model, wb.base_control(), wb.seeds,
                                     SeedPolicy::tag("accept/duality-train") + steps, n_train,
                                     wb.grid, wb.space);
        auto adj = solve_first_adjoint(wb.model, ens, RegressionSpec{});
        SpikeSpec s{cfg.spike_t0, 1.0 / 16, wb.spike_control()};
        // shared eval tag + refinement: both resolutions see the same paths
        return duality_checks(wb.model, wb.base_control(), s, adj.path, wb.seeds,
                              SeedPolicy::tag("accept/duality-eval"), n_eval, wb.grid, wb.space,
                              refine);
    };
    const DualityReport coarse = run_at(fine_steps / 2, 2);
    const DualityReport fine = run_at(fine_steps, 1);

    fs::create_directories(join(out_dir, "duality"));
    nlohmann::json j;
    j["schema_version"] = 1;
    auto pack = [](const DualityReport& r) {
        return nlohmann::json{{"gap1", r.gap1},       {"se1_combined", r.se1_combined},
                              {"se1_paired", r.se1_paired}, {"gap2", r.gap2},
                              {"se2_combined", r.se2_combined}, {"se2_paired", r.se2_paired}};
    };
    j["coarse"] = pack(coarse);
    j["fine"] = pack(fine);
    j["coarse_steps"] = fine_steps / 2;
    j["fine_steps"] = fine_steps;
    std::ofstream(join(join(out_dir, "duality"), "criterion5.json")) << j.dump(2) << "\n";

    auto judge = [&](double gc, double gf, double comb_f, double pc, double pf) {
        const bool within = std::abs(gf) <= 3.0 * comb_f;
        const double decrease_stat = std::abs(gc) - 2.0 * std::abs(gf);
        const double se_d = std::sqrt(pc * pc + 4.0 * pf * pf);
        const bool noise_floor = std::abs(gc) <= pc && std::abs(gf) <= pf;
        const bool decreasing = decrease_stat >= -2.0 * se_d || noise_floor;
        return std::tuple<bool, bool, bool>(within, decreasing, noise_floor);
    };
    auto [w1, d1, nf1] = judge(coarse.gap1, fine.gap1, fine.se1_combined, coarse.se1_paired,
                               fine.se1_paired);
    auto [w2, d2, nf2] = judge(coarse.gap2, fine.gap2, fine.se2_combined, coarse.se2_paired,
                               fine.se2_paired);
    emit(res, 5, "first-adjoint duality identities", w1 && d1 && w2 && d2,
         fmt("gap1 %.2e->%.2e (3SE %.2e)%s; gap2 %.2e->%.2e (3SE %.2e)%s", coarse.gap1, fine.gap1,
             3.0 * fine.se1_combined, nf1 ? " [noise floor]" : "", coarse.gap2, fine.gap2,
             3.0 * fine.se2_combined, nf2 ? " [noise floor]" : ""));
    return res;
}

// ------------------------------------------------------------------ criterion 6

std::vector<CriterionResult> criterion_adjoint_closedform(const std::string& out_dir,
                                                          std::uint64_t seed) {
    std::vector<CriterionResult> res;
    auto error_at = [&](int steps) {
        ExperimentConfig cfg = showcase_config(seed, join(out_dir, "adjoint-closedform"));
        cfg.scenario = "adjoint-closedform";
        cfg.params = {{"sigma0", 0.4}};
        cfg.n_steps = steps;
        Workbench wb = make_workbench(cfg);
        auto ens = simulate_ensemble(wb.model, ControlPath::constant(0.0), wb.seeds,
                                     SeedPolicy::tag("accept/adjoint-cf") + steps, 512, wb.grid,
                                     wb.space);
        auto adj = solve_first_adjoint(wb.model, ens, RegressionSpec{});

        VectorXd one_modes = VectorXd::Zero(wb.space->n_modes());
        for (int k = 1; k <= wb.space->n_modes(); k += 2)
            one_modes[k - 1] = 2.0 * std::sqrt(2.0) / (k * kPi);
        AdjointEvaluator ev(adj.path);
        double worst = 0.0;
        for (int k : {0, steps / 4, steps / 2, 3 * steps / 4}) {
            VectorXd target =
                (one_modes.array() * (-(wb.grid.T - wb.grid.knot(k)) * wb.space->eigenvalues()).exp())
                    .matrix();
            VectorXd mean_state = ens.modes[k].rowwise().mean();
            ev.eval(k, mean_state, wb.space->to_grid(mean_state), false);
            worst = std::max(worst, (ev.p_modes() - target).norm() / target.norm());
        }
        return worst;
    };
    const double e512 = error_at(512);
    const double e1024 = error_at(1024);
    emit(res, 6, "first adjoint closed form", e512 <= 1e-2 && e1024 <= 5e-3,
         fmt("relative L2 error %.2e at default dt (<= 1e-2), %.2e at dt/2 (<= 5e-3)", e512, e1024));
    return res;
}

// ------------------------------------------------------------------ criterion 7

std::vector<CriterionResult> criterion_second_adjoint(const std::string& out_dir,
                                                      std::uint64_t seed) {
    std::vector<CriterionResult> res;
    ExperimentConfig cfg = showcase_config(seed, join(out_dir, "second-adjoint"));
    cfg.scenario = "second-adjoint-closedform";
    cfg.params = {{"sigma0", 0.4}};
    cfg.n_steps = 500;  // T - t = 0.1 lands exactly on knot 450
    Workbench wb = make_workbench(cfg);
    auto ens = simulate_ensemble(wb.model, ControlPath::constant(0.0), wb.seeds,
                                 SeedPolicy::tag("accept/p2"), 256, wb.grid, wb.space);
    auto adj = solve_first_adjoint(wb.model, ens, RegressionSpec{});

    const int knot = 450;
    auto outer = sample_wiener(wb.seeds, wb.grid, 1, 0, SeedPolicy::tag("accept/p2-outer"));
    auto X = solve_state(wb.model, ControlPath::constant(0.0), outer, wb.grid, wb.space);
    SecondAdjointForm form(wb.model, ControlPath::constant(0.0), adj.path, outer,
                           X.states[knot].modes(), knot, wb.seeds, 64);

    auto f = SpectralField::from_function(wb.space, [](double x) { return std::sin(kPi * x); });
    const double target = std::exp(-2.0 * kPi * kPi * 0.1) * 0.5;
    const double value = form.eval(f).value;
    const double rel = std::abs(value - target) / target;

    Rng rng(wb.seeds.derive(SeedPolicy::tag("accept/p2-fields"), 0));
    VectorXd m1(wb.space->n_modes()), m2(wb.space->n_modes());
    for (int k = 0; k < wb.space->n_modes(); ++k) {
        m1[k] = rng.normal() / (k + 1.0);
        m2[k] = rng.normal() / (k + 1.0);
    }
    auto f1 = SpectralField::from_modes(wb.space, m1);
    auto f2 = SpectralField::from_modes(wb.space, m2);
    const double v12 = form.eval(f1, f2).value;
    const double v21 = form.eval(f2, f1).value;
    const double sym = std::abs(v12 - v21) / (std::abs(v12) + 1e-30);
    const double alpha = 1.7;
    auto combo = alpha * f1 + f2;
    const double left = form.eval(combo, f2).value;
    const double right = alpha * v12 + form.eval(f2, f2).value;
    const double bil = std::abs(left - right) / (std::abs(left) + 1e-30);

    emit(res, 7, "second adjoint closed form", rel <= 1e-2 && sym <= 1e-13 && bil <= 1e-10,
         fmt("<P_t f,f> = %.6f vs %.6f (rel %.2e <= 1e-2); symmetry %.1e, bilinearity %.1e", value,
             target, rel, sym, bil));
    return res;
}

// ------------------------------------------------------------------ criterion 8

std::vector<CriterionResult> criterion_flow(const std::string& out_dir, std::uint64_t seed) {
    std::vector<CriterionResult> res;
    ExperimentConfig cfg = showcase_config(seed, join(out_dir, "flow"));
    Workbench wb = make_workbench(cfg);
    const int knot = 128;

    std::vector<SpectralField> fields;
    fields.push_back(
        SpectralField::from_function(wb.space, [](double x) { return std::sin(kPi * x); }));
    Rng rng(wb.seeds.derive(SeedPolicy::tag("accept/flow-fields"), 0));
    for (double decay : {2.0, 1.0}) {
        VectorXd m(wb.space->n_modes());
        for (int k = 0; k < wb.space->n_modes(); ++k)
            m[k] = rng.normal() / std::pow(k + 1.0, decay);
        fields.push_back(SpectralField::from_modes(wb.space, m));
    }

    bool pass = true;
    double worst_ratio = 0.0, worst_trend = -1e9, worst_w = 0.0, worst_vs_sg = 0.0;
    for (size_t fi = 0; fi < fields.size(); ++fi) {
        auto rep = flow_estimates_check(wb.model, wb.base_control(), wb.seeds,
                                        SeedPolicy::tag("accept/flow") + fi, wb.grid, wb.space,
                                        knot, fields[fi], 3, 96, {0.1, 0.2});
        double max_ratio = 0.0;
        for (double r : rep.ratio) max_ratio = std::max(max_ratio, r);

        // growth trend of the unweighted ratio over s (per unit time)
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        const int n = static_cast<int>(rep.s_values.size());
        for (int i = 0; i < n; ++i) {
            sx += rep.s_values[i];
            sy += rep.ratio[i];
            sxx += rep.s_values[i] * rep.s_values[i];
            sxy += rep.s_values[i] * rep.ratio[i];
        }
        const double trend = (n * sxy - sx * sy) / (n * sxx - sx * sx);

        // boundedness of the weighted ratios as s decreases to t, measured
        // against the pure-semigroup constant on the same data: the perturbed
        // flow may not regularize materially worse than the heat semigroup
        bool weighted_ok = true;
        for (size_t e = 0; e < rep.eta.size(); ++e) {
            double max_w = 0.0, max_sg = 0.0;
            auto powered = apply_fractional_power(fields[fi], rep.eta[e], +1);
            for (size_t gi = 0; gi < rep.s_values.size(); ++gi) {
                const double gap = rep.s_values[gi] - wb.grid.knot(knot);
                max_w = std::max(max_w, rep.weighted[e][gi]);
                max_sg = std::max(max_sg, std::pow(gap, rep.eta[e]) *
                                              lp_norm(apply_semigroup(powered, gap), 4.0) /
                                              rep.f_norm4);
            }
            worst_w = std::max(worst_w, max_w);
            worst_vs_sg = std::max(worst_vs_sg, max_w / max_sg);
            if (max_w > 3.0 || max_w > 2.0 * max_sg) weighted_ok = false;
        }
        pass = pass && max_ratio <= 3.0 && trend <= 2.0 && weighted_ok;
        worst_ratio = std::max(worst_ratio, max_ratio);
        worst_trend = std::max(worst_trend, trend);
    }
    emit(res, 8, "conditional flow estimates", pass,
         fmt("%zu fields: max ratio %.2f (<= 3), worst trend %.2f/T (<= 2), max weighted %.2f "
             "(<= 3), worst flow/semigroup constant %.2f (<= 2)",
             fields.size(), worst_ratio, worst_trend, worst_w, worst_vs_sg));
    return res;
}

// ------------------------------------------------------------------ criterion 9

std::vector<CriterionResult> criterion_final_duality(const std::string& out_dir,
                                                     std::uint64_t seed) {
    std::vector<CriterionResult> res;
    // The defect of the identity scales with the time variation of the
    // bilinear form across the window. Away from the terminal time the form
    // is nearly constant (the flows decay long before T) and the defect
    // drowns in Monte Carlo noise, so the check probes windows close to T,
    // where the terminal curvature makes the modulus of continuity sizable,
    // on a grid fine enough that the O(dt) scheme bias stays subordinate.
    ExperimentConfig cfg = showcase_config(seed, join(out_dir, "final-duality"));
    cfg.n_steps = 2048;
    cfg.spike_t0 = 0.7;
    Workbench wb = make_workbench(cfg);

    auto ens = simulate_ensemble(wb.model, wb.base_control(), wb.seeds,
                                 SeedPolicy::tag("accept/final-train"), 1200, wb.grid, wb.space);
    auto adj = solve_first_adjoint(wb.model, ens, RegressionSpec{});
    ens = EnsembleStates{};  // release before the nested stage

    FinalDualityConfig fdc;
    fdc.t0 = cfg.spike_t0;
    fdc.v = wb.spike_control();
    fdc.eps_values = {512.0 / 2048, 362.0 / 2048, 256.0 / 2048, 181.0 / 2048, 128.0 / 2048};
    fdc.n_lhs_samples = 5000;
    fdc.n_rhs_outer = 20;
    fdc.window_knots = 3;
    fdc.inner_branches = 32;
    fdc.tag = SeedPolicy::tag("accept/final");
    auto rows = final_duality_check(wb.model, wb.base_control(), adj.path, fdc, wb.seeds, wb.grid,
                                    wb.space);

    fs::create_directories(cfg.out_dir);
    CsvWriter csv(join(cfg.out_dir, "final_duality.csv"),
                  {"epsilon", "lhs", "se_lhs", "rhs", "se_rhs", "gap"});
    std::vector<std::pair<double, double>> table;
    for (const auto& r : rows) {
        csv.row({r.eps, r.lhs, r.se_lhs, r.rhs, r.se_rhs, r.gap});
        table.emplace_back(r.eps, std::abs(r.gap));
    }
    const RateFit fit = rate_estimate(table);
    emit(res, 9, "final duality identity", fit.slope > 1.0,
         fmt("|lhs - rhs| slope %.3f vs eps (> 1 required, r2 %.2f)", fit.slope, fit.r2));
    return res;
}

// ----------------------------------------------------------------- criterion 10

std::vector<CriterionResult> criterion_mp(const std::string& out_dir, std::uint64_t seed) {
    std::vector<CriterionResult> res;
    ExperimentConfig cfg = showcase_config(seed, join(out_dir, "mp"));
    cfg.outer_samples = 2000;
    cfg.inner_branches = 256;
    Workbench wb = make_workbench(cfg);

    auto oracle = brute_force_oracle(wb, SeedPolicy::tag("accept/mp-oracle"));

    MPConfig mp;
    for (int i = 1; i <= 7; ++i) mp.knots.push_back(i * cfg.n_steps / 8);
    mp.knots.push_back(cfg.n_steps - cfg.n_steps / 16);
    mp.n_outer = 16;
    mp.se_threshold = 3.0;
    mp.tag = SeedPolicy::tag("accept/mp-outer");

    auto run_candidate = [&](const ControlPath& cand, std::uint64_t train_tag, int branches) {
        auto ens = simulate_ensemble(wb.model, cand, wb.seeds, train_tag, cfg.outer_samples,
                                     wb.grid, wb.space);
        auto adj = solve_first_adjoint(wb.model, ens, RegressionSpec{});
        MPConfig m = mp;
        m.inner_branches = branches;
        return check_mp(wb.model, cand, adj.path, m, wb.seeds, wb.grid, wb.space);
    };
    auto best = run_candidate(oracle.best_control, SeedPolicy::tag("accept/mp-best"), 256);
    auto worst = run_candidate(oracle.worst_control, SeedPolicy::tag("accept/mp-worst"), 128);

    fs::create_directories(cfg.out_dir);
    nlohmann::json j;
    j["schema_version"] = 1;
    nlohmann::json table = nlohmann::json::array();
    for (const auto& e : oracle.table)
        table.push_back({{"control", e.name}, {"J", e.J}, {"std_error", e.std_error}});
    j["oracle"] = table;
    j["best"] = {{"control", oracle.table[oracle.best].name},
                 {"violation_fraction", best.violation_fraction}};
    j["worst"] = {{"control", oracle.table[oracle.worst].name},
                  {"violation_fraction", worst.violation_fraction}};
    std::ofstream(join(cfg.out_dir, "criterion10.json")) << j.dump(2) << "\n";

    emit(res, 10, "maximum principle at the brute-force optimum",
         best.violation_fraction <= 0.01 && worst.violation_fraction > 0.2,
         fmt("optimal '%s': violations %.3f (<= 0.01); suboptimal '%s': %.3f (> 0.20)",
             oracle.table[oracle.best].name.c_str(), best.violation_fraction,
             oracle.table[oracle.worst].name.c_str(), worst.violation_fraction));
    return res;
}

// ----------------------------------------------------------------- criterion 11

std::vector<CriterionResult> criterion_bdg(const std::string& out_dir, std::uint64_t seed) {
    std::vector<CriterionResult> res;
    ExperimentConfig cfg = showcase_config(seed, join(out_dir, "bdg"));
    cfg.outer_samples = 4096;
    Workbench wb = make_workbench(cfg);
    const auto cases = acceptance_bdg_reports(wb.space, wb.grid, wb.seeds, cfg.outer_samples);

    fs::create_directories(cfg.out_dir);
    CsvWriter csv(join(cfg.out_dir, "bdg.csv"),
                  {"integrand", "p", "t", "c_p", "lhs", "rhs", "ratio", "boot99"});
    bool pass = true;
    double worst_ratio = 0.0, worst_boot = 0.0;
    for (const auto& c : cases) {
        csv.row({static_cast<double>(c.integrand), c.report.p, c.report.t, c.report.c_p,
                 c.report.lhs, c.report.rhs, c.report.ratio, c.boot99});
        worst_ratio = std::max(worst_ratio, c.report.ratio);
        worst_boot = std::max(worst_boot, c.boot99);
        if (c.report.ratio > 1.0 || c.boot99 >= 1.0) pass = false;
    }
    emit(res, 11, "stochastic-integral inequality", pass,
         fmt("%zu cases; worst ratio %.3f (<= 1), worst bootstrap-99%% bound %.3f (< 1)",
             cases.size(), worst_ratio, worst_boot));
    return res;
}

// ----------------------------------------------------------------- criterion 12

std::vector<CriterionResult> criterion_oracle(const std::string& out_dir, std::uint64_t seed) {
    std::vector<CriterionResult> res;
    ExperimentConfig cfg = showcase_config(seed, join(out_dir, "oracle"));
    cfg.scenario = "lq";
    cfg.n_steps = 256;
    const double beta = 0.5, gamma = 0.3, delta = 0.4, rho = 0.2, sigma0 = 0.3, u = 1.0;
    cfg.params = {{"beta", beta}, {"gamma", gamma}, {"delta", delta}, {"rho", rho},
                  {"sigma0", sigma0}};
    Workbench wb = make_workbench(cfg);

    auto w = sample_wiener(wb.seeds, wb.grid, 1, 7, SeedPolicy::tag("accept/single-mode"));
    auto path = solve_state(wb.model, ControlPath::constant(u), w, wb.grid, wb.space);

    const double c1 = wb.space->to_modes(ArrayXd::Ones(wb.space->n_points()))[0];
    double y = wb.model.x0.modes()[0];
    const double decay = std::exp(-kPi * kPi * wb.grid.dt());
    double worst = 0.0;
    for (int k = 0; k < wb.grid.n_steps; ++k) {
        const double drift = beta * y + gamma * u * c1;
        const double noise = delta * y + (rho * u + sigma0) * c1;
        y = decay * (y + drift * wb.grid.dt() + noise * w.increments(k, 0));
        worst = std::max(worst,
                         std::abs(path.states[k + 1].modes()[0] - y) / std::max(1e-300, std::abs(y)));
    }
    emit(res, 12, "single-mode scalar oracle", worst <= 1e-10,
         fmt("max pathwise relative error %.2e (<= 1e-10) over %d knots", worst, cfg.n_steps));
    return res;
}

// ----------------------------------------------------------------- criterion 13

std::vector<CriterionResult> criterion_determinism(const std::string& out_dir,
                                                   std::uint64_t seed) {
    std::vector<CriterionResult> res;
    bool pass = true;
    std::string details;

    auto artifacts_of = [](const std::string& dir) {
        std::vector<std::string> files;
        for (const auto& e : fs::directory_iterator(dir))
            if (e.is_regular_file() && e.path().filename() != "manifest.json")
                files.push_back(e.path().string());
        std::sort(files.begin(), files.end());
        return files;
    };
    auto compare_dirs = [&](const std::string& a, const std::string& b) {
        const auto fa = artifacts_of(a);
        const auto fb = artifacts_of(b);
        if (fa.size() != fb.size() || fa.empty()) return false;
        for (size_t i = 0; i < fa.size(); ++i) {
            if (fs::path(fa[i]).filename() != fs::path(fb[i]).filename()) return false;
            if (file_checksum(fa[i]) != file_checksum(fb[i])) return false;
        }
        return true;
    };

    // tiny rates pipeline: twice with identical config, then with a different
    // worker count
    {
        ExperimentConfig cfg = showcase_config(seed, "");
        cfg.n_steps = 512;
        cfg.outer_samples = 48;
        cfg.eps_sweep = {1.0 / 16, 1.0 / 32, 1.0 / 64, 1.0 / 128};
        cfg.tolerances = {{"rates_y_lo", -9e9}, {"rates_y_hi", 9e9}, {"rates_z_lo", -9e9},
                          {"rates_z_hi", 9e9},  {"rates_residual_min", -9e9},
                          {"rates_gap_min", -9e9}};
        for (const char* rundir : {"det-rates-a", "det-rates-b", "det-rates-t1"}) {
            cfg.out_dir = join(out_dir, rundir);
            cfg.threads = (std::string(rundir) == "det-rates-t1") ? 1 : 2;
            run_rates(cfg);
        }
        const bool rerun_ok = compare_dirs(join(out_dir, "det-rates-a"), join(out_dir, "det-rates-b"));
        const bool thread_ok = compare_dirs(join(out_dir, "det-rates-a"), join(out_dir, "det-rates-t1"));
        pass = pass && rerun_ok && thread_ok;
        details += fmt("rates rerun %s, thread-count invariance %s; ", rerun_ok ? "identical" : "DIFFERS",
                       thread_ok ? "identical" : "DIFFERS");
    }
    // tiny adjoint pipeline
    {
        ExperimentConfig cfg = showcase_config(seed, "");
        cfg.n_steps = 128;
        cfg.outer_samples = 400;
        cfg.eps_sweep = {1.0 / 16};
        for (const char* rundir : {"det-adj-a", "det-adj-b"}) {
            cfg.out_dir = join(out_dir, rundir);
            run_adjoint(cfg);
        }
        const bool ok = compare_dirs(join(out_dir, "det-adj-a"), join(out_dir, "det-adj-b"));
        pass = pass && ok;
        details += fmt("adjoint rerun %s; ", ok ? "identical" : "DIFFERS");
    }
    // tiny integral-inequality pipeline
    {
        ExperimentConfig cfg = showcase_config(seed, "");
        cfg.n_steps = 128;
        cfg.outer_samples = 256;
        for (const char* rundir : {"det-bdg-a", "det-bdg-b"}) {
            cfg.out_dir = join(out_dir, rundir);
            run_bdg(cfg);
        }
        const bool ok = compare_dirs(join(out_dir, "det-bdg-a"), join(out_dir, "det-bdg-b"));
        pass = pass && ok;
        details += fmt("integral-inequality rerun %s", ok ? "identical" : "DIFFERS");
    }
    emit(res, 13, "determinism of artifacts", pass, details);
    return res;
}

}  // namespace

std::vector<BdgCase> acceptance_bdg_reports(const SpacePtr& space, const TimeGrid& grid,
                                            const SeedPolicy& seeds, int n_samples) {
    std::vector<BdgCase> out;

    auto h0 = SpectralField::from_function(space, [](double) { return 0.8; });
    auto sin1 = SpectralField::from_function(space, [](double x) { return std::sin(kPi * x); });
    std::vector<ArrayXd> heat_flow;
    for (int k = 0; k < grid.n_steps; ++k)
        heat_flow.push_back(apply_semigroup(sin1, grid.knot(k)).grid_values());
    auto prof1 = SpectralField::from_function(
        space, [](double x) { return 0.7 * (std::sin(kPi * x) + 0.3 * std::sin(2 * kPi * x)); });
    auto prof2 = SpectralField::from_function(space, [](double x) { return 0.5 * std::sin(2 * kPi * x); });

    const BdgIntegrand constant = [&](int, const WienerPath&, std::vector<ArrayXd>& h) {
        h[0] = h0.grid_values();
    };
    const BdgIntegrand flow = [&](int k, const WienerPath&, std::vector<ArrayXd>& h) {
        h[0] = heat_flow[k];
    };
    const BdgIntegrand progressive = [&](int k, const WienerPath& w, std::vector<ArrayXd>& h) {
        // adapted: reads the first noise coordinate strictly before knot k
        const double level = w.increments.col(0).head(k).sum();
        h[0] = (1.0 + 0.5 * std::tanh(level)) * prof1.grid_values();
        h[1] = (1.0 - 0.3 * std::tanh(level)) * prof2.grid_values();
    };

    struct Case {
        int id;
        const BdgIntegrand* integrand;
        int d;
    };
    const std::vector<Case> cases = {{0, &constant, 1}, {1, &flow, 1}, {2, &progressive, 2}};

    int case_index = 0;
    for (const auto& c : cases)
        for (double p : {2.0, 4.0})
            for (double t : {grid.T / 4, grid.T / 2, grid.T}) {
                BdgCase bc;
                bc.integrand = c.id;
                bc.report = bdg_lp_check(seeds, grid, space, *c.integrand, p, c.d, t, n_samples,
                                         SeedPolicy::tag("bdg-harness") + c.id);
                // bootstrap over samples: resample both sides jointly
                const int B = 400;
                Rng rng(seeds.derive(SeedPolicy::tag("bdg-boot"), case_index));
                const int n = bc.report.n_samples;
                const int kend = static_cast<int>(bc.report.sample_integrand_pp.cols());
                std::vector<double> ratios(B);
                VectorXd col_mean(kend);
                for (int b = 0; b < B; ++b) {
                    double lhs = 0.0;
                    col_mean.setZero();
                    for (int i = 0; i < n; ++i) {
                        const int pick = static_cast<int>(rng.uniform() * n) % n;
                        lhs += bc.report.sample_lhs[pick];
                        col_mean += bc.report.sample_integrand_pp.row(pick);
                    }
                    lhs /= n;
                    col_mean /= n;
                    double time_integral = 0.0;
                    for (int k = 0; k < kend; ++k)
                        time_integral += std::pow(col_mean[k], 2.0 / p) * grid.dt();
                    const double rhs = bc.report.c_p * std::pow(time_integral, p / 2.0);
                    ratios[b] = rhs > 0 ? lhs / rhs : 0.0;
                }
                std::sort(ratios.begin(), ratios.end());
                bc.boot99 = ratios[static_cast<size_t>(std::ceil(0.99 * B)) - 1];
                out.push_back(std::move(bc));
                ++case_index;
            }
    return out;
}

std::vector<CriterionResult> run_acceptance(const std::string& out_dir, std::uint64_t master_seed,
                                            const std::string& group) {
    fs::create_directories(out_dir);
    std::vector<CriterionResult> all;
    auto want = [&](const char* g) { return group.empty() || group == g; };
    auto append = [&](std::vector<CriterionResult> r) {
        for (auto& x : r) all.push_back(std::move(x));
    };

    if (want("rates")) append(criteria_rates(out_dir, master_seed));
    if (want("duality")) append(criterion_duality(out_dir, master_seed));
    if (want("adjoint-closedform")) append(criterion_adjoint_closedform(out_dir, master_seed));
    if (want("second-adjoint")) append(criterion_second_adjoint(out_dir, master_seed));
    if (want("flow")) append(criterion_flow(out_dir, master_seed));
    if (want("final-duality")) append(criterion_final_duality(out_dir, master_seed));
    if (want("mp")) append(criterion_mp(out_dir, master_seed));
    if (want("bdg")) append(criterion_bdg(out_dir, master_seed));
    if (want("oracle")) append(criterion_oracle(out_dir, master_seed));
    if (want("determinism")) append(criterion_determinism(out_dir, master_seed));

    if (all.empty()) throw std::invalid_argument("unknown acceptance group '" + group + "'");

    nlohmann::json j;
    j["schema_version"] = 1;
    j["master_seed"] = master_seed;
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : all)
        rows.push_back({{"id", r.id}, {"name", r.name}, {"pass", r.pass}, {"details", r.details}});
    j["criteria"] = rows;
    const std::string name = group.empty() ? "acceptance_report.json"
                                           : "acceptance_" + group + ".json";
    std::ofstream(join(out_dir, name)) << j.dump(2) << "\n";
    return all;
}

}  // namespace smp

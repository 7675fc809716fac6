#include "smp/pipelines.hpp"
#include "smp/acceptance.hpp"

#include <omp.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

namespace smp {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {
constexpr double kPi = std::numbers::pi;

double elapsed(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string join(const std::string& dir, const std::string& name) {
    return (fs::path(dir) / name).string();
}
}  // namespace

Workbench make_workbench(const ExperimentConfig& cfg) {
    cfg.validate();
    if (cfg.threads > 0) omp_set_num_threads(cfg.threads);
    Workbench wb{cfg, nullptr, TimeGrid(cfg.T, cfg.n_steps), ProblemModel{}, SeedPolicy(cfg.master_seed)};
    const int n_points = cfg.n_points > 0 ? cfg.n_points : 2 * cfg.n_modes;
    wb.space = SpectralSpace::make(cfg.n_modes, n_points);
    wb.model = make_scenario(cfg.scenario, cfg.params, wb.space);
    wb.model.T = cfg.T;
    const auto check = validate_model(wb.model, *wb.space, wb.seeds);
    if (!check.ok) throw std::invalid_argument("model bounds check failed: " + check.message);
    return wb;
}

OracleReport brute_force_oracle(const Workbench& wb, std::uint64_t tag) {
    const auto& actions = wb.model.actions;
    const int n = wb.grid.n_steps;
    std::vector<std::pair<std::string, ControlPath>> candidates;
    for (double a : actions) {
        char name[64];
        std::snprintf(name, sizeof(name), "const %+g", a);
        candidates.emplace_back(name, ControlPath::constant(a));
    }
    for (double a : actions)
        for (double b : actions) {
            if (a == b) continue;
            VectorXd table(n);
            table.head(n / 2).setConstant(a);
            table.tail(n - n / 2).setConstant(b);
            char name[64];
            std::snprintf(name, sizeof(name), "switch %+g->%+g", a, b);
            candidates.emplace_back(name, ControlPath::table(std::move(table)));
        }

    OracleReport report;
    for (const auto& [name, control] : candidates) {
        // shared tag = common random numbers across candidates
        auto est = estimate_cost(wb.model, control, wb.seeds, tag, wb.cfg.outer_samples, wb.grid,
                                 wb.space);
        report.table.push_back({name, est.J, est.std_error});
    }
    report.best = 0;
    report.worst = 0;
    for (int i = 1; i < static_cast<int>(report.table.size()); ++i) {
        if (report.table[i].J < report.table[report.best].J) report.best = i;
        if (report.table[i].J > report.table[report.worst].J) report.worst = i;
    }
    report.best_control = candidates[report.best].second;
    report.worst_control = candidates[report.worst].second;
    return report;
}

int run_simulate(const ExperimentConfig& cfg) {
    const auto start = Clock::now();
    Workbench wb = make_workbench(cfg);
    fs::create_directories(cfg.out_dir);
    RunManifest manifest(config_to_json(cfg));

    auto ens = simulate_ensemble(wb.model, wb.base_control(), wb.seeds, SeedPolicy::tag("simulate"),
                                 cfg.outer_samples, wb.grid, wb.space);
    const auto& wq = wb.space->grid().weights();
    const std::string csv_path = join(cfg.out_dir, "state_summary.csv");
    {
        CsvWriter csv(csv_path, {"knot", "t", "mean_norm2", "se_norm2", "norm4_p4", "se_norm4",
                                 "mean_control"});
        for (int k = 0; k <= wb.grid.n_steps; ++k) {
            MatrixXd g = wb.space->synthesis() * ens.modes[k];
            VectorXd n2(cfg.outer_samples), n4(cfg.outer_samples);
            for (int i = 0; i < cfg.outer_samples; ++i) {
                n2[i] = std::sqrt((g.col(i).array().square() * wq).sum());
                n4[i] = (g.col(i).array().square().square() * wq).sum();
            }
            const double m2 = n2.mean();
            const double se2 = std::sqrt((n2.array() - m2).square().sum() /
                                         (cfg.outer_samples - 1.0) / cfg.outer_samples);
            const double m4 = n4.mean();
            const double se4 = std::sqrt((n4.array() - m4).square().sum() /
                                         (cfg.outer_samples - 1.0) / cfg.outer_samples);
            const double mu =
                (k < wb.grid.n_steps) ? ens.controls.row(k).mean() : ens.controls.row(k - 1).mean();
            csv.row({static_cast<double>(k), wb.grid.knot(k), m2, se2, std::pow(m4, 0.25), se4, mu});
        }
    }
    write_csv_schema(cfg.out_dir,
                     {{"state_summary.csv", "per-knot ensemble norms of the simulated state",
                       {"knot", "t", "mean_norm2", "se_norm2", "norm4_p4", "se_norm4",
                        "mean_control"}}});
    manifest.add_check("fields finite", true);
    manifest.add_file(csv_path);
    manifest.add_file(join(cfg.out_dir, "csv_schema.json"));
    manifest.set_wall_seconds(elapsed(start));
    manifest.write(join(cfg.out_dir, "manifest.json"));
    return 0;
}

int run_rates(const ExperimentConfig& cfg) {
    const auto start = Clock::now();
    Workbench wb = make_workbench(cfg);
    fs::create_directories(cfg.out_dir);
    RunManifest manifest(config_to_json(cfg));

    SweepConfig sweep;
    sweep.t0 = cfg.spike_t0;
    sweep.v = wb.spike_control();
    sweep.eps_values = cfg.eps_sweep.empty()
                           ? std::vector<double>{1.0 / 16, 1.0 / 32, 1.0 / 64, 1.0 / 128, 1.0 / 256,
                                                 1.0 / 512}
                           : cfg.eps_sweep;
    sweep.n_samples = cfg.outer_samples;
    sweep.tag = SeedPolicy::tag("rates");
    const auto rows = variation_sweep(wb.model, wb.base_control(), sweep, wb.seeds, wb.grid, wb.space);

    const std::string csv_path = join(cfg.out_dir, "rates.csv");
    {
        CsvWriter csv(csv_path,
                      {"epsilon", "norm_Y_p4", "se_Y", "norm_Z_p2", "se_Z", "residual", "se_residual",
                       "J_diff", "se_J_diff", "expansion_gap", "se_expansion_gap", "quad_l_term",
                       "quad_l_direct", "se_quad_l"});
        for (const auto& r : rows)
            csv.row({r.eps, r.norm_Y_p4, r.se_Y, r.norm_Z_p2, r.se_Z, r.residual, r.se_residual,
                     r.j_diff, r.se_j_diff, r.gap_prelim, r.se_gap_prelim, r.quad_l_term,
                     r.quad_l_direct, r.quad_l_se});
    }

    std::vector<std::pair<double, double>> ty, tz, tr, tg;
    for (const auto& r : rows) {
        ty.emplace_back(r.eps, r.norm_Y_p4);
        tz.emplace_back(r.eps, r.norm_Z_p2);
        tr.emplace_back(r.eps, r.residual);
        tg.emplace_back(r.eps, std::abs(r.gap_prelim));
    }
    const RateFit fy = rate_estimate(ty), fz = rate_estimate(tz), fr = rate_estimate(tr),
                  fg = rate_estimate(tg);

    nlohmann::json slopes;
    slopes["schema_version"] = 1;
    slopes["first_variation"] = {{"slope", fy.slope}, {"intercept", fy.intercept}, {"r2", fy.r2}};
    slopes["second_variation"] = {{"slope", fz.slope}, {"intercept", fz.intercept}, {"r2", fz.r2}};
    slopes["expansion_residual"] = {{"slope", fr.slope}, {"intercept", fr.intercept}, {"r2", fr.r2}};
    slopes["cost_expansion_gap"] = {{"slope", fg.slope}, {"intercept", fg.intercept}, {"r2", fg.r2}};
    const std::string slopes_path = join(cfg.out_dir, "slopes.json");
    std::ofstream(slopes_path) << slopes.dump(2) << "\n";

    manifest.add_check("first-variation slope in window",
                       fy.slope >= cfg.tolerance("rates_y_lo", 0.4) &&
                           fy.slope <= cfg.tolerance("rates_y_hi", 0.6));
    manifest.add_check("second-variation slope in window",
                       fz.slope >= cfg.tolerance("rates_z_lo", 0.85) &&
                           fz.slope <= cfg.tolerance("rates_z_hi", 1.15));
    manifest.add_check("expansion residual superlinear",
                       fr.slope >= cfg.tolerance("rates_residual_min", 1.15));
    manifest.add_check("cost expansion gap superlinear",
                       fg.slope > cfg.tolerance("rates_gap_min", 1.0));
    write_csv_schema(cfg.out_dir,
                     {{"rates.csv", "spike sweep: variation norms, expansion residual, cost gaps",
                       {"epsilon", "norm_Y_p4", "se_Y", "norm_Z_p2", "se_Z", "residual",
                        "se_residual", "J_diff", "se_J_diff", "expansion_gap", "se_expansion_gap",
                        "quad_l_term", "quad_l_direct", "se_quad_l"}}});
    manifest.add_file(csv_path);
    manifest.add_file(slopes_path);
    manifest.add_file(join(cfg.out_dir, "csv_schema.json"));
    manifest.set_wall_seconds(elapsed(start));
    manifest.write(join(cfg.out_dir, "manifest.json"));
    return manifest.all_passed() ? 0 : 1;
}

int run_adjoint(const ExperimentConfig& cfg) {
    const auto start = Clock::now();
    Workbench wb = make_workbench(cfg);
    fs::create_directories(cfg.out_dir);
    RunManifest manifest(config_to_json(cfg));

    auto ens = simulate_ensemble(wb.model, wb.base_control(), wb.seeds, SeedPolicy::tag("adjoint"),
                                 cfg.outer_samples, wb.grid, wb.space);
    auto res = solve_first_adjoint(wb.model, ens, RegressionSpec{});

    // per-knot norms of p, q and the curvature field along a subsample
    const std::string csv_path = join(cfg.out_dir, "adjoint_diagnostics.csv");
    {
        const int d = wb.model.noise_dim();
        std::vector<std::string> cols = {"knot", "t", "p_norm2"};
        for (int j = 0; j < d; ++j) cols.push_back("q" + std::to_string(j + 1) + "_norm2");
        cols.push_back("q_fit_se");
        cols.push_back("hbar_norm2");
        CsvWriter csv(csv_path, cols);
        AdjointEvaluator ev(res.path);
        ArrayXd hbar(wb.space->n_points());
        const int probe = std::min(64, ens.n_samples());
        const auto& wq = wb.space->grid().weights();
        for (int k = 0; k <= wb.grid.n_steps; ++k) {
            double hnorm = 0.0;
            if (k < wb.grid.n_steps) {
                for (int i = 0; i < probe; ++i) {
                    ArrayXd sg = wb.space->to_grid(ens.modes[k].col(i));
                    curvature_at(wb.model, ev, k, ens.modes[k].col(i), sg, ens.controls(k, i), hbar);
                    hnorm += std::sqrt((hbar.square() * wq).sum());
                }
                hnorm /= probe;
            }
            std::vector<double> row = {static_cast<double>(k), wb.grid.knot(k), res.diag.p_norm[k]};
            for (int j = 0; j < d; ++j)
                row.push_back(k < wb.grid.n_steps ? res.diag.q_norm(k, j) : 0.0);
            row.push_back(k < wb.grid.n_steps ? res.diag.q_se[k] : 0.0);
            row.push_back(hnorm);
            csv.row(row);
        }
    }

    {
        std::vector<std::string> cols = {"knot", "t", "p_norm2"};
        for (int j = 0; j < wb.model.noise_dim(); ++j)
            cols.push_back("q" + std::to_string(j + 1) + "_norm2");
        cols.push_back("q_fit_se");
        cols.push_back("hbar_norm2");
        write_csv_schema(cfg.out_dir,
                         {{"adjoint_diagnostics.csv",
                           "per-knot ensemble norms of the first adjoint pair and the curvature field",
                           cols}});
    }
    SpikeSpec s{cfg.spike_t0, cfg.eps_sweep.empty() ? 0.0625 : cfg.eps_sweep.front(),
                wb.spike_control()};
    auto rep = duality_checks(wb.model, wb.base_control(), s, res.path, wb.seeds,
                              SeedPolicy::tag("adjoint/duality"), cfg.outer_samples, wb.grid,
                              wb.space);
    nlohmann::json dual;
    dual["schema_version"] = 1;
    dual["gap1"] = {{"lhs", rep.lhs1},
                    {"rhs", rep.rhs1},
                    {"gap", rep.gap1},
                    {"se_combined", rep.se1_combined},
                    {"se_paired", rep.se1_paired}};
    dual["gap2"] = {{"lhs", rep.lhs2},
                    {"rhs", rep.rhs2},
                    {"gap", rep.gap2},
                    {"se_combined", rep.se2_combined},
                    {"se_paired", rep.se2_paired}};
    dual["n_samples"] = rep.n_samples;
    dual["ridge_fallbacks"] = res.path.ridge_fallbacks;
    const std::string dual_path = join(cfg.out_dir, "duality_report.json");
    std::ofstream(dual_path) << dual.dump(2) << "\n";

    const double band = cfg.tolerance("duality_se_band", 3.0);
    manifest.add_check("first duality relation within noise",
                       std::abs(rep.gap1) <= band * rep.se1_combined);
    manifest.add_check("second duality relation within noise",
                       std::abs(rep.gap2) <= band * rep.se2_combined);
    manifest.add_file(csv_path);
    manifest.add_file(dual_path);
    manifest.add_file(join(cfg.out_dir, "csv_schema.json"));
    manifest.set_wall_seconds(elapsed(start));
    manifest.write(join(cfg.out_dir, "manifest.json"));
    return manifest.all_passed() ? 0 : 1;
}

int run_second_adjoint(const ExperimentConfig& cfg) {
    const auto start = Clock::now();
    Workbench wb = make_workbench(cfg);
    fs::create_directories(cfg.out_dir);
    RunManifest manifest(config_to_json(cfg));

    auto ens = simulate_ensemble(wb.model, wb.base_control(), wb.seeds,
                                 SeedPolicy::tag("second-adjoint"), cfg.outer_samples, wb.grid,
                                 wb.space);
    auto res = solve_first_adjoint(wb.model, ens, RegressionSpec{});

    auto outer = sample_wiener(wb.seeds, wb.grid, wb.model.noise_dim(), 0,
                               SeedPolicy::tag("second-adjoint/outer"));
    auto X = solve_state(wb.model, wb.base_control(), outer, wb.grid, wb.space);
    const int knot = static_cast<int>(std::llround(cfg.spike_t0 / wb.grid.dt()));
    SecondAdjointForm form(wb.model, wb.base_control(), res.path, outer, X.states[knot].modes(),
                           knot, wb.seeds, cfg.inner_branches);

    Rng rng(wb.seeds.derive(SeedPolicy::tag("second-adjoint/fields"), 0));
    VectorXd m1(wb.space->n_modes()), m2(wb.space->n_modes());
    for (int k = 0; k < wb.space->n_modes(); ++k) {
        m1[k] = rng.normal() / (k + 1.0);
        m2[k] = rng.normal() / (k + 1.0);
    }
    auto f1 = SpectralField::from_modes(wb.space, m1);
    auto f2 = SpectralField::from_modes(wb.space, m2);
    const double v12 = form.eval(f1, f2).value;
    const double v21 = form.eval(f2, f1).value;
    const double alpha = 1.3;
    auto combo = alpha * f1 + f2;
    const double bi_left = form.eval(combo, f2).value;
    const double bi_right = alpha * v12 + form.eval(f2, f2).value;
    const double sym_err = std::abs(v12 - v21) / (std::abs(v12) + 1e-30);
    const double bil_err = std::abs(bi_left - bi_right) / (std::abs(bi_left) + 1e-30);

    auto f = SpectralField::from_function(wb.space, [](double x) { return std::sin(kPi * x); });
    auto flows = flow_estimates_check(wb.model, wb.base_control(), wb.seeds,
                                      SeedPolicy::tag("second-adjoint/flow"), wb.grid, wb.space,
                                      knot, f, 3, cfg.inner_branches, {0.1, 0.2});

    nlohmann::json out;
    out["schema_version"] = 1;
    out["symmetry_rel_err"] = sym_err;
    out["bilinearity_rel_err"] = bil_err;
    out["eval_f1_f2"] = v12;
    out["flow"] = {{"f_norm4", flows.f_norm4},
                   {"s", flows.s_values},
                   {"ratio", flows.ratio},
                   {"eta", flows.eta}};
    for (size_t e = 0; e < flows.eta.size(); ++e)
        out["flow"]["weighted_" + std::to_string(e)] = flows.weighted[e];
    const std::string out_path = join(cfg.out_dir, "second_adjoint.json");
    std::ofstream(out_path) << out.dump(2) << "\n";

    manifest.add_check("form symmetry exact", sym_err <= 1e-13);
    manifest.add_check("form bilinearity exact", bil_err <= 1e-10);
    double max_ratio = 0.0;
    for (double r : flows.ratio) max_ratio = std::max(max_ratio, r);
    manifest.add_check("conditional flow ratio bounded",
                       max_ratio <= cfg.tolerance("flow_ratio_bound", 3.0));
    manifest.add_file(out_path);
    manifest.set_wall_seconds(elapsed(start));
    manifest.write(join(cfg.out_dir, "manifest.json"));
    return manifest.all_passed() ? 0 : 1;
}

namespace {

void write_mp_report(const std::string& path, const MPReport& rep, const std::string& label) {
    nlohmann::json j;
    j["schema_version"] = 1;
    j["candidate"] = label;
    j["violation_fraction"] = rep.violation_fraction;
    j["n_cells"] = rep.n_cells;
    j["n_violations"] = rep.n_violations;
    j["se_threshold"] = rep.config.se_threshold;
    j["knots"] = rep.config.knots;
    j["n_outer"] = rep.config.n_outer;
    j["inner_branches"] = rep.config.inner_branches;
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& c : rep.cells)
        cells.push_back({{"knot", c.knot},
                         {"sample", c.sample},
                         {"v", c.v},
                         {"dH", c.dH},
                         {"quad", c.quad},
                         {"total", c.total},
                         {"std_error", c.std_error}});
    j["cells"] = cells;
    std::ofstream(path) << j.dump(2) << "\n";
}

std::vector<int> default_mp_knots(int n_steps) {
    std::vector<int> knots;
    for (int i = 1; i <= 7; ++i) knots.push_back(i * n_steps / 8);
    knots.push_back(n_steps - n_steps / 16);
    return knots;
}

}  // namespace

int run_check_mp(const ExperimentConfig& cfg) {
    const auto start = Clock::now();
    Workbench wb = make_workbench(cfg);
    fs::create_directories(cfg.out_dir);
    RunManifest manifest(config_to_json(cfg));

    auto oracle = brute_force_oracle(wb, SeedPolicy::tag("mp/oracle"));

    MPConfig mp;
    mp.knots = default_mp_knots(wb.grid.n_steps);
    mp.n_outer = 16;
    mp.inner_branches = cfg.inner_branches;
    mp.se_threshold = cfg.tolerance("mp_se_threshold", 3.0);
    mp.tag = SeedPolicy::tag("mp/outer");

    auto check = [&](const ControlPath& candidate, const char* label, const char* file) {
        auto ens = simulate_ensemble(wb.model, candidate, wb.seeds, SeedPolicy::tag(label),
                                     cfg.outer_samples, wb.grid, wb.space);
        auto adj = solve_first_adjoint(wb.model, ens, RegressionSpec{});
        auto rep = check_mp(wb.model, candidate, adj.path, mp, wb.seeds, wb.grid, wb.space);
        write_mp_report(join(cfg.out_dir, file), rep, label);
        manifest.add_file(join(cfg.out_dir, file));
        return rep;
    };
    auto best = check(oracle.best_control, "mp/best", "mp_report_best.json");
    auto worst = check(oracle.worst_control, "mp/worst", "mp_report_worst.json");

    manifest.add_check("optimal candidate satisfies the inequality",
                       best.violation_fraction <= cfg.tolerance("mp_violation_best", 0.01));
    manifest.add_check("suboptimal candidate violates the inequality",
                       worst.violation_fraction > cfg.tolerance("mp_violation_worst", 0.2));
    manifest.set_wall_seconds(elapsed(start));
    manifest.write(join(cfg.out_dir, "manifest.json"));
    return manifest.all_passed() ? 0 : 1;
}

int run_bdg(const ExperimentConfig& cfg) {
    const auto start = Clock::now();
    Workbench wb = make_workbench(cfg);
    fs::create_directories(cfg.out_dir);
    RunManifest manifest(config_to_json(cfg));

    const auto reports = acceptance_bdg_reports(wb.space, wb.grid, wb.seeds, cfg.outer_samples);
    const std::string csv_path = join(cfg.out_dir, "bdg.csv");
    {
        CsvWriter csv(csv_path, {"integrand", "p", "t", "c_p", "lhs", "rhs", "ratio", "boot99"});
        for (const auto& r : reports)
            csv.row({static_cast<double>(r.integrand), r.report.p, r.report.t, r.report.c_p,
                     r.report.lhs, r.report.rhs, r.report.ratio, r.boot99});
    }
    bool all_below = true;
    for (const auto& r : reports)
        if (r.report.ratio > 1.0 || r.boot99 >= 1.0) all_below = false;
    write_csv_schema(cfg.out_dir,
                     {{"bdg.csv", "stochastic-integral moment inequality harness",
                       {"integrand", "p", "t", "c_p", "lhs", "rhs", "ratio", "boot99"}}});
    manifest.add_check("integral inequality ratios below one", all_below);
    manifest.add_file(csv_path);
    manifest.add_file(join(cfg.out_dir, "csv_schema.json"));
    manifest.set_wall_seconds(elapsed(start));
    manifest.write(join(cfg.out_dir, "manifest.json"));
    return manifest.all_passed() ? 0 : 1;
}

int run_oracle(const ExperimentConfig& cfg) {
    const auto start = Clock::now();
    Workbench wb = make_workbench(cfg);
    fs::create_directories(cfg.out_dir);
    RunManifest manifest(config_to_json(cfg));

    auto oracle = brute_force_oracle(wb, SeedPolicy::tag("oracle"));
    nlohmann::json j;
    j["schema_version"] = 1;
    nlohmann::json table = nlohmann::json::array();
    for (const auto& e : oracle.table)
        table.push_back({{"control", e.name}, {"J", e.J}, {"std_error", e.std_error}});
    j["table"] = table;
    j["best"] = oracle.table[oracle.best].name;
    j["worst"] = oracle.table[oracle.worst].name;
    const std::string path = join(cfg.out_dir, "oracle.json");
    std::ofstream(path) << j.dump(2) << "\n";

    // the optimum must be separated from the runner-up beyond the noise
    double runner_up = std::numeric_limits<double>::infinity();
    for (int i = 0; i < static_cast<int>(oracle.table.size()); ++i)
        if (i != oracle.best) runner_up = std::min(runner_up, oracle.table[i].J);
    const double sep = runner_up - oracle.table[oracle.best].J;
    manifest.add_check("optimum separated beyond 3 SEs",
                       sep > 3.0 * 2.0 * oracle.table[oracle.best].std_error);
    manifest.add_file(path);
    manifest.set_wall_seconds(elapsed(start));
    manifest.write(join(cfg.out_dir, "manifest.json"));
    return manifest.all_passed() ? 0 : 1;
}

int run_accept(const ExperimentConfig& cfg) {
    fs::create_directories(cfg.out_dir);
    const auto results = run_acceptance(cfg.out_dir, cfg.master_seed, "");
    bool all = true;
    for (const auto& r : results) all = all && r.pass;
    return all ? 0 : 1;
}

}  // namespace smp

#include "smp/pipelines.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <exception>

namespace {

smp::ExperimentConfig assemble(const std::string& config_path, std::uint64_t seed_override,
                               bool has_seed, int threads, const std::string& out_override) {
    smp::ExperimentConfig cfg =
        config_path.empty() ? smp::ExperimentConfig{} : smp::load_config(config_path);
    if (has_seed) cfg.master_seed = seed_override;
    if (threads > 0) cfg.threads = threads;
    if (!out_override.empty()) cfg.out_dir = out_override;
    cfg.validate();
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"smplab: desk-scale laboratory for the stochastic maximum principle of a "
                 "controlled stochastic heat equation"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_override;
    std::uint64_t seed_override = 0;
    bool has_seed = false;
    int threads = 0;

    app.add_option("--config", config_path, "JSON experiment configuration")->check(CLI::ExistingFile);
    app.add_option("--seed", seed_override, "override the master seed")
        ->each([&](const std::string&) { has_seed = true; });
    app.add_option("--threads", threads, "worker count (outputs do not depend on it)");
    app.add_option("--out", out_override, "override the output directory");

    struct Sub {
        const char* name;
        const char* help;
        int (*run)(const smp::ExperimentConfig&);
    };
    const std::vector<Sub> subs = {
        {"simulate", "simulate a state ensemble and write per-knot norm summaries", smp::run_simulate},
        {"rates", "spike sweep: variation orders, expansion residual and cost expansion", smp::run_rates},
        {"adjoint", "first adjoint solve, per-knot diagnostics and duality gaps", smp::run_adjoint},
        {"second-adjoint", "bilinear-form checks and conditional flow estimates", smp::run_second_adjoint},
        {"check-mp", "maximum-principle inequality on brute-force optimal/worst controls", smp::run_check_mp},
        {"bdg", "stochastic-integral moment inequality harness", smp::run_bdg},
        {"oracle", "brute-force control search with shared noise", smp::run_oracle},
        {"accept", "full acceptance suite (one pass/fail line per criterion)", smp::run_accept},
    };
    for (const auto& sub : subs) app.add_subcommand(sub.name, sub.help);

    CLI11_PARSE(app, argc, argv);

    try {
        const smp::ExperimentConfig cfg =
            assemble(config_path, seed_override, has_seed, threads, out_override);
        for (const auto& sub : subs)
            if (app.got_subcommand(sub.name)) return sub.run(cfg);
    } catch (const smp::SimulationError& e) {
        std::fprintf(stderr, "simulation aborted: %s (knot %d, sample %llu)\n", e.what(), e.knot,
                     static_cast<unsigned long long>(e.sample));
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 2;
}

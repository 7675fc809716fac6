#pragma once

#include "smp/config.hpp"
#include "smp/manifest.hpp"
#include "smp/principle.hpp"

namespace smp {

/// Everything a pipeline needs, assembled and validated from one config.
struct Workbench {
    ExperimentConfig cfg;
    SpacePtr space;
    TimeGrid grid;
    ProblemModel model;
    SeedPolicy seeds;

    ControlPath base_control() const { return ControlPath::constant(cfg.base_u); }
    ControlPath spike_control() const { return ControlPath::constant(cfg.spike_v); }
};

Workbench make_workbench(const ExperimentConfig& cfg);

struct OracleEntry {
    std::string name;
    double J = 0.0;
    double std_error = 0.0;
};

struct OracleReport {
    std::vector<OracleEntry> table;
    int best = 0;
    int worst = 0;
    ControlPath best_control;
    ControlPath worst_control;
};

/// Exhaustive sweep over constant and two-piece controls with shared noise;
/// the returned optimum is the ground truth the maximum-principle check uses.
OracleReport brute_force_oracle(const Workbench& wb, std::uint64_t tag);

// Pipelines write artifacts plus a manifest into cfg.out_dir and return a
// nonzero status when one of their acceptance gates fails.
int run_simulate(const ExperimentConfig& cfg);
int run_rates(const ExperimentConfig& cfg);
int run_adjoint(const ExperimentConfig& cfg);
int run_second_adjoint(const ExperimentConfig& cfg);
int run_check_mp(const ExperimentConfig& cfg);
int run_bdg(const ExperimentConfig& cfg);
int run_oracle(const ExperimentConfig& cfg);
int run_accept(const ExperimentConfig& cfg);

}  // namespace smp

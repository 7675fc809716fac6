#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace smp {

/// Experiment parameters shared by every pipeline; loaded from a JSON file,
/// echoed verbatim into the run manifest.
struct ExperimentConfig {
    std::string scenario = "nonconvex-sigma";
    std::map<std::string, double> params;

    int n_modes = 64;
    int n_points = 128;  // 0 selects the pseudo-spectral default 2*n_modes
    int n_steps = 512;
    double T = 1.0;

    int outer_samples = 2000;
    int inner_branches = 256;

    std::vector<double> eps_sweep;
    double spike_t0 = 0.25;
    double spike_v = 1.0;
    double base_u = -1.0;

    std::uint64_t master_seed = 20260809;
    std::string out_dir = "out";
    int threads = 0;  // 0 = hardware default; outputs do not depend on it

    std::map<std::string, double> tolerances;

    double dt() const { return T / n_steps; }
    double tolerance(const std::string& key, double fallback) const {
        auto it = tolerances.find(key);
        return it == tolerances.end() ? fallback : it->second;
    }

    /// Throws std::invalid_argument naming the offending key.
    void validate() const;
};

nlohmann::json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);

}  // namespace smp

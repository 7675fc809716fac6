#include "smp/config.hpp"

#include <fstream>
#include <stdexcept>

namespace smp {

void ExperimentConfig::validate() const {
    auto fail = [](const std::string& key, const std::string& why) {
        throw std::invalid_argument("config key '" + key + "': " + why);
    };
    if (n_modes < 1) fail("n_modes", "must be positive");
    if (n_points != 0 && n_points <= n_modes) fail("n_points", "must exceed n_modes (or be 0 for default)");
    if (n_steps < 1) fail("n_steps", "must be positive");
    if (!(T > 0.0)) fail("T", "must be positive");
    if (outer_samples < 2) fail("outer_samples", "must be at least 2");
    if (inner_branches < 2) fail("inner_branches", "must be at least 2");
    if (!(spike_t0 > 0.0) || !(spike_t0 < T)) fail("spike.t0", "must lie in (0, T)");
    if (!eps_sweep.empty()) {
        double emin = eps_sweep.front(), emax = eps_sweep.front();
        for (double e : eps_sweep) {
            if (!(e > 0.0)) fail("eps_sweep", "entries must be positive");
            emin = std::min(emin, e);
            emax = std::max(emax, e);
        }
        if (emin < 4.0 * dt()) fail("eps_sweep", "smallest eps must be at least 4*dt so the window is resolved");
        if (!(spike_t0 + emax < T)) fail("eps_sweep", "t0 + largest eps must stay below T");
    }
}

nlohmann::json config_to_json(const ExperimentConfig& cfg) {
    nlohmann::json j;
    j["scenario"] = cfg.scenario;
    j["params"] = cfg.params;
    j["n_modes"] = cfg.n_modes;
    j["n_points"] = cfg.n_points;
    j["n_steps"] = cfg.n_steps;
    j["T"] = cfg.T;
    j["outer_samples"] = cfg.outer_samples;
    j["inner_branches"] = cfg.inner_branches;
    j["eps_sweep"] = cfg.eps_sweep;
    j["spike"] = {{"t0", cfg.spike_t0}, {"v", cfg.spike_v}};
    j["base_u"] = cfg.base_u;
    j["master_seed"] = cfg.master_seed;
    j["out_dir"] = cfg.out_dir;
    j["threads"] = cfg.threads;
    j["tolerances"] = cfg.tolerances;
    return j;
}

namespace {

template <typename T>
T take(const nlohmann::json& j, const std::string& key, const T& fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw std::invalid_argument("config key '" + key + "': wrong type");
    }
}

}  // namespace

ExperimentConfig config_from_json(const nlohmann::json& j) {
    ExperimentConfig cfg;
    static const std::vector<std::string> known = {
        "scenario", "params",      "n_modes",   "n_points",  "n_steps",
        "T",        "outer_samples", "inner_branches", "eps_sweep", "spike",
        "base_u",   "master_seed", "out_dir",   "threads",   "tolerances"};
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (std::find(known.begin(), known.end(), it.key()) == known.end())
            throw std::invalid_argument("config key '" + it.key() + "': unknown key");
    }
    cfg.scenario = take(j, "scenario", cfg.scenario);
    cfg.params = take(j, "params", cfg.params);
    cfg.n_modes = take(j, "n_modes", cfg.n_modes);
    cfg.n_points = take(j, "n_points", cfg.n_points);
    cfg.n_steps = take(j, "n_steps", cfg.n_steps);
    cfg.T = take(j, "T", cfg.T);
    cfg.outer_samples = take(j, "outer_samples", cfg.outer_samples);
    cfg.inner_branches = take(j, "inner_branches", cfg.inner_branches);
    cfg.eps_sweep = take(j, "eps_sweep", cfg.eps_sweep);
    if (j.contains("spike")) {
        cfg.spike_t0 = take(j.at("spike"), "t0", cfg.spike_t0);
        cfg.spike_v = take(j.at("spike"), "v", cfg.spike_v);
    }
    cfg.base_u = take(j, "base_u", cfg.base_u);
    cfg.master_seed = take(j, "master_seed", cfg.master_seed);
    cfg.out_dir = take(j, "out_dir", cfg.out_dir);
    cfg.threads = take(j, "threads", cfg.threads);
    cfg.tolerances = take(j, "tolerances", cfg.tolerances);
    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument("config parse error in " + path + ": " + e.what());
    }
    return config_from_json(j);
}

}  // namespace smp

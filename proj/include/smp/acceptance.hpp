#pragma once

#include "smp/config.hpp"
#include "smp/stochastics.hpp"

#include <string>
#include <vector>

namespace smp {

struct CriterionResult {
    int id = 0;
    std::string name;
    bool pass = false;
    std::string details;
};

struct BdgCase {
    int integrand = 0;  // 0: constant field, 1: heat flow, 2: progressive two-noise
    BdgReport report;
    double boot99 = 0.0;  // bootstrap 99% upper confidence bound on the ratio
};

/// The integral-inequality harness cases shared by the bdg pipeline and the
/// acceptance suite: three test integrands, p in {2,4}, t in {T/4, T/2, T}.
std::vector<BdgCase> acceptance_bdg_reports(const SpacePtr& space, const TimeGrid& grid,
                                            const SeedPolicy& seeds, int n_samples);

/// Runs the acceptance criteria (all groups when `group` is empty), printing
/// one pass/fail line per criterion and writing artifacts under out_dir.
/// Groups: rates, duality, adjoint-closedform, second-adjoint, flow,
/// final-duality, mp, bdg, oracle, determinism.
std::vector<CriterionResult> run_acceptance(const std::string& out_dir, std::uint64_t master_seed,
                                            const std::string& group);

}  // namespace smp

#pragma once

#include "smp/variation.hpp"

namespace smp {

/// H(t, u, X, p, q) = int_D [ l + b p + sigma_j q^j ] dm.
double hamiltonian(double t, double v, const SpectralField& X, const SpectralField& p,
                   const std::vector<SpectralField>& q, const ProblemModel& model);

struct MPCell {
    int knot = 0;
    int sample = 0;
    double v = 0.0;
    double dH = 0.0;     // Hamiltonian difference at v versus the realized action
    double quad = 0.0;   // 1/2 sum_j <P [sigma_j(v)-sigma_j(u)], sigma_j(v)-sigma_j(u)>
    double total = 0.0;  // dH + quad
    double std_error = 0.0;
};

struct MPConfig {
    std::vector<int> knots;
    int n_outer = 16;
    int inner_branches = 256;
    double se_threshold = 3.0;  // violation when total < -threshold * SE
    std::uint64_t tag = 0;
};

struct MPReport {
    std::vector<MPCell> cells;
    int n_cells = 0;
    int n_violations = 0;
    double violation_fraction = 0.0;
    MPConfig config;
};

/// One cell of the maximum-principle statistic, evaluated on a prepared form.
MPCell mp_statistic(int knot, int sample, double v, const ProblemModel& model,
                    const AdjointPath& adj, const SecondAdjointForm& form,
                    const SpectralField& state, double realized_u);

/// Tests the displayed inequality of the maximum principle for a candidate
/// control over sampled knots, outer paths and all actions v in U.
MPReport check_mp(const ProblemModel& model, const ControlPath& candidate, const AdjointPath& adj,
                  const MPConfig& cfg, const SeedPolicy& seeds, const TimeGrid& grid,
                  const SpacePtr& space);

struct FinalDualityRow {
    double eps = 0.0;
    double lhs = 0.0, se_lhs = 0.0;  // E int <Hbar Y^eps, Y^eps> + E <hbar Y_T, Y_T>
    double rhs = 0.0, se_rhs = 0.0;  // E int_window <P_s delta sigma_j, delta sigma_j> ds
    double gap = 0.0;
};

struct FinalDualityConfig {
    double t0 = 0.25;
    ControlPath v;
    std::vector<double> eps_values;
    int n_lhs_samples = 256;
    int n_rhs_outer = 48;
    int window_knots = 4;  // subsampled quadrature knots inside each window
    int inner_branches = 64;
    std::uint64_t tag = 0;
};

std::vector<FinalDualityRow> final_duality_check(const ProblemModel& model, const ControlPath& u,
                                                 const AdjointPath& adj,
                                                 const FinalDualityConfig& cfg,
                                                 const SeedPolicy& seeds, const TimeGrid& grid,
                                                 const SpacePtr& space);

struct RateFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
};

/// Least-squares fit of log(value) against log(eps); values must be positive
/// and at least four points are required.
RateFit rate_estimate(const std::vector<std::pair<double, double>>& table);

}  // namespace smp

#include "smp/stochastics.hpp"

#include <cmath>

namespace smp {

namespace {
const std::uint64_t kDefaultWienerTag = SeedPolicy::tag("wiener");
const std::uint64_t kBranchSalt = SeedPolicy::tag("wiener/branch");
}  // namespace

WienerPath sample_wiener(const SeedPolicy& seeds, const TimeGrid& grid, int d,
                         std::uint64_t sample_index, std::uint64_t tag_hash) {
    if (d < 1) throw std::invalid_argument("sample_wiener: d must be >= 1");
    Rng rng = seeds.stream(tag_hash, sample_index);
    const double sd = std::sqrt(grid.dt());
    WienerPath path;
    path.increments.resize(grid.n_steps, d);
    for (int k = 0; k < grid.n_steps; ++k)
        for (int j = 0; j < d; ++j) path.increments(k, j) = sd * rng.normal();
    path.dt = grid.dt();
    path.tag_hash = tag_hash;
    path.sample_index = sample_index;
    return path;
}

WienerPath sample_wiener(const SeedPolicy& seeds, const TimeGrid& grid, int d,
                         std::uint64_t sample_index) {
    return sample_wiener(seeds, grid, d, sample_index, kDefaultWienerTag);
}

WienerPath branch(const WienerPath& path, int knot, const SeedPolicy& seeds,
                  std::uint64_t branch_index) {
    if (knot < 0 || knot > path.n_steps()) throw std::out_of_range("branch: knot out of range");
    if (knot == path.n_steps()) return path;
    WienerPath out = path;
    // Tail stream keyed by (sample, knot, branch) so branches at different
    // knots and of different paths never share randomness.
    Rng rng = seeds.stream(path.tag_hash ^ kBranchSalt, path.sample_index,
                           static_cast<std::uint64_t>(knot), branch_index);
    const double sd = std::sqrt(path.dt);
    for (int k = knot; k < path.n_steps(); ++k)
        for (int j = 0; j < path.dim(); ++j) out.increments(k, j) = sd * rng.normal();
    return out;
}

WienerPath coarsen(const WienerPath& path, int factor) {
    if (factor < 1 || path.n_steps() % factor != 0)
        throw std::invalid_argument("coarsen: factor must divide n_steps");
    WienerPath out;
    out.dt = path.dt * factor;
    out.tag_hash = path.tag_hash;
    out.sample_index = path.sample_index;
    out.increments.resize(path.n_steps() / factor, path.dim());
    for (int k = 0; k < out.n_steps(); ++k)
        out.increments.row(k) = path.increments.middleRows(k * factor, factor).colwise().sum();
    return out;
}

double bdg_constant(double p) {
    if (p < 2.0) throw std::invalid_argument("bdg_constant: p must be >= 2");
    if (p == 2.0) return 4.0;
    if (p == 4.0) {
        const double davis = (3.0 + std::sqrt(6.0)) * (3.0 + std::sqrt(6.0));
        const double doob = std::pow(4.0 / 3.0, 4.0);
        return doob * davis;
    }
    // Generic fallback: classical terminal-moment bound times Doob's factor.
    const double terminal = std::pow(p * (p - 1.0) / 2.0, p / 2.0);
    return std::pow(p / (p - 1.0), p) * terminal;
}

BdgReport bdg_lp_check(const SeedPolicy& seeds, const TimeGrid& grid, const SpacePtr& space,
                       const BdgIntegrand& integrand, double p, int d, double t, int n_samples,
                       std::uint64_t tag_hash) {
    if (p < 2.0 || p > 8.0) throw std::invalid_argument("bdg_lp_check: p outside [2, 8]");
    if (n_samples < 2) throw std::invalid_argument("bdg_lp_check: need at least 2 samples");
    const int k_end = static_cast<int>(std::llround(t / grid.dt()));
    if (k_end < 1 || k_end > grid.n_steps)
        throw std::invalid_argument("bdg_lp_check: t must land on a knot in (0, T]");

    const auto& w = space->grid().weights();
    BdgReport report;
    report.p = p;
    report.t = t;
    report.c_p = bdg_constant(p);
    report.n_samples = n_samples;
    report.sample_lhs.resize(n_samples);
    report.sample_integrand_pp.resize(n_samples, k_end);

    std::vector<ArrayXd> h(d, ArrayXd::Zero(space->n_points()));
    for (int i = 0; i < n_samples; ++i) {
        WienerPath path = sample_wiener(seeds, grid, d, static_cast<std::uint64_t>(i), tag_hash);
        ArrayXd integral = ArrayXd::Zero(space->n_points());
        for (int k = 0; k < k_end; ++k) {
            integrand(k, path, h);
            ArrayXd sq = ArrayXd::Zero(space->n_points());
            for (int j = 0; j < d; ++j) {
                integral += h[j] * path.increments(k, j);
                sq += h[j] * h[j];
            }
            report.sample_integrand_pp(i, k) = (sq.pow(p / 2.0) * w).sum();
        }
        report.sample_lhs[i] = (integral.abs().pow(p) * w).sum();
    }

    double lhs = 0.0, lhs2 = 0.0;
    for (const double v : report.sample_lhs) {
        lhs += v;
        lhs2 += v * v;
    }
    lhs /= n_samples;
    report.lhs = lhs;
    report.lhs_std_error =
        std::sqrt(std::max(0.0, lhs2 / n_samples - lhs * lhs) / (n_samples - 1.0));

    double time_integral = 0.0;
    for (int k = 0; k < k_end; ++k) {
        const double mean_pp = report.sample_integrand_pp.col(k).mean();
        time_integral += std::pow(mean_pp, 2.0 / p) * grid.dt();
    }
    report.rhs = report.c_p * std::pow(time_integral, p / 2.0);
    report.ratio = (report.rhs > 0.0) ? report.lhs / report.rhs : 0.0;
    return report;
}

}  // namespace smp

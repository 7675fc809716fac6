#pragma once

#include "smp/spectral.hpp"

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace smp {

/// Uniform knots t_k = k*T/n_steps, k = 0..n_steps.
struct TimeGrid {
    double T = 1.0;
    int n_steps = 1;

    TimeGrid() = default;
    TimeGrid(double horizon, int steps) : T(horizon), n_steps(steps) {
        if (!(T > 0.0) || n_steps < 1) throw std::invalid_argument("TimeGrid: need T > 0 and n_steps >= 1");
    }

    double dt() const { return T / n_steps; }
    double knot(int k) const { return k * dt(); }
    int n_knots() const { return n_steps + 1; }
};

/// Deterministic stream generator: uniform doubles from mt19937_64, normals
/// via Box-Muller (self-contained so output does not depend on the standard
/// library's normal_distribution implementation).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double uniform() {  // [0,1)
        return (engine_() >> 11) * 0x1.0p-53;
    }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = ((engine_() >> 11) + 1) * 0x1.0p-53;  // (0,1]
        const double u2 = (engine_() >> 11) * 0x1.0p-53;
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 6.283185307179586476925286766559 * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// Counter-style seed derivation: a stream is addressed by a hashed purpose
/// tag plus up to three indices. Streams are independent of evaluation order
/// and of how many other streams exist, so adding modules never perturbs
/// existing ones.
class SeedPolicy {
public:
    explicit SeedPolicy(std::uint64_t master_seed) : master_(master_seed) {}

    std::uint64_t master_seed() const { return master_; }

    static std::uint64_t tag(std::string_view purpose) {
        // FNV-1a 64
        std::uint64_t h = 1469598103934665603ull;
        for (const char c : purpose) {
            h ^= static_cast<unsigned char>(c);
            h *= 1099511628211ull;
        }
        return h;
    }

    std::uint64_t derive(std::uint64_t tag_hash, std::uint64_t i0, std::uint64_t i1 = 0,
                         std::uint64_t i2 = 0) const {
        std::uint64_t s = mix(master_ ^ mix(tag_hash));
        s = mix(s ^ mix(i0 + 1));
        s = mix(s ^ mix(i1 + 1));
        s = mix(s ^ mix(i2 + 1));
        return s;
    }

    Rng stream(std::uint64_t tag_hash, std::uint64_t i0, std::uint64_t i1 = 0,
               std::uint64_t i2 = 0) const {
        return Rng(derive(tag_hash, i0, i1, i2));
    }

private:
    static std::uint64_t mix(std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ull;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
        return x ^ (x >> 31);
    }

    std::uint64_t master_;
};

/// Increments of a d-dimensional Wiener path on a TimeGrid; row k holds
/// W_{t_{k+1}} - W_{t_k}. Carries its stream identity so branches can derive
/// independent tail streams.
struct WienerPath {
    Eigen::MatrixXd increments;  // n_steps x d
    double dt = 0.0;
    std::uint64_t tag_hash = 0;
    std::uint64_t sample_index = 0;

    int n_steps() const { return static_cast<int>(increments.rows()); }
    int dim() const { return static_cast<int>(increments.cols()); }

    /// W at knot k (cumulative sum of increments).
    Eigen::RowVectorXd level(int k) const { return increments.topRows(k).colwise().sum(); }
};

WienerPath sample_wiener(const SeedPolicy& seeds, const TimeGrid& grid, int d,
                         std::uint64_t sample_index, std::uint64_t tag_hash);
WienerPath sample_wiener(const SeedPolicy& seeds, const TimeGrid& grid, int d,
                         std::uint64_t sample_index);

/// Conditional resampling given F_{t_k}: increments before knot k are copied,
/// the tail is freshly sampled, independently across branch_index.
WienerPath branch(const WienerPath& path, int knot, const SeedPolicy& seeds,
                  std::uint64_t branch_index);

/// Coarsen a path by an integer factor (pairs of fine increments summed);
/// used by step-refinement studies so that coarse and fine runs share noise.
WienerPath coarsen(const WienerPath& path, int factor);

/// Progressive L^p(D;R^d)-valued integrand: fills one grid-value array per
/// noise coordinate at knot k; it may inspect the path strictly before k.
using BdgIntegrand =
    std::function<void(int k, const WienerPath& w, std::vector<ArrayXd>& out)>;

struct BdgReport {
    double p = 2.0;
    double t = 0.0;
    double c_p = 0.0;
    double lhs = 0.0;        // E || I_t ||_p^p
    double rhs = 0.0;        // c_p ( int_0^t (E||H_s||_p^p)^{2/p} ds )^{p/2}
    double ratio = 0.0;      // lhs / rhs (0 when both vanish)
    double lhs_std_error = 0.0;
    int n_samples = 0;
    // Per-sample statistics retained for bootstrap confidence work.
    std::vector<double> sample_lhs;            // ||I_t||_p^p per sample
    Eigen::MatrixXd sample_integrand_pp;       // n_samples x knots_used, ||H_k||_p^p
};

/// Scalar martingale moment constant used on the right-hand side of the
/// integral inequality: best known Burkholder-Davis-Gundy constant for
/// E sup |M|^p <= c_p E <M>^{p/2} (p = 2 is Doob's sharp 4; p = 4 combines
/// Doob with the sharp terminal-moment constant (3+sqrt6)^2).
double bdg_constant(double p);

BdgReport bdg_lp_check(const SeedPolicy& seeds, const TimeGrid& grid, const SpacePtr& space,
                       const BdgIntegrand& integrand, double p, int d, double t, int n_samples,
                       std::uint64_t tag_hash);

}  // namespace smp

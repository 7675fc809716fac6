#pragma once

#include "smp/adjoint.hpp"

namespace smp {

/// Spike window snapped to knots: controls are replaced on knots [k0, k1).
struct SpikeWindow {
    int k0 = 0;
    int k1 = 0;
    double t0 = 0.0;
    double t1 = 0.0;
    int length() const { return k1 - k0; }
};

SpikeWindow snap_window(const SpikeSpec& s, const TimeGrid& grid);

/// u^eps: equals v on the spike window and u elsewhere.
ControlPath spike(const ControlPath& u, const SpikeSpec& s, const TimeGrid& grid);

/// Coefficient differences along the unperturbed trajectory,
/// delta phi(t,x) = phi(t,x,X_t(x),u^eps_t) - phi(t,x,X_t(x),u_t);
/// they vanish off the window by construction, so only window knots are stored.
struct DeltaFields {
    SpikeWindow window;
    std::vector<ArrayXd> db, dbp, dl;            // window knots: delta b, delta b', delta l
    std::vector<std::vector<ArrayXd>> ds, dsp;   // per window knot, per j

    bool in_window(int k) const { return k >= window.k0 && k < window.k1; }
    int local(int k) const { return k - window.k0; }
};

DeltaFields delta_fields(const ProblemModel& model, const StatePath& X, const ControlPath& u,
                         const SpikeSpec& s, const TimeGrid& grid, const SpacePtr& space);

/// First variation Y^eps: linearized dynamics along X forced by the spike,
/// with the control difference entering both the drift and the noise.
std::vector<SpectralField> first_variation(const ProblemModel& model, const StatePath& X,
                                           const DeltaFields& deltas, const WienerPath& w,
                                           const TimeGrid& grid, const SpacePtr& space);

/// Second variation Z^eps: same linearized dynamics forced by the quadratic
/// Taylor terms in Y^eps and the first-derivative control differences.
std::vector<SpectralField> second_variation(const ProblemModel& model, const StatePath& X,
                                            const DeltaFields& deltas,
                                            const std::vector<SpectralField>& Y, const WienerPath& w,
                                            const TimeGrid& grid, const SpacePtr& space);

/// Everything the expansion tests need for one sample, coupled on one path.
struct VariationBundle {
    StatePath X, Xeps;
    std::vector<SpectralField> Y, Z;
    DeltaFields deltas;
};

VariationBundle make_bundle(const ProblemModel& model, const ControlPath& u, const SpikeSpec& s,
                            const WienerPath& w, const TimeGrid& grid, const SpacePtr& space);

struct SweepRow {
    double eps = 0;
    double norm_Y_p4 = 0, se_Y = 0;        // |||Y|||_4; SE of the mean at the argmax knot
    double norm_Z_p2 = 0, se_Z = 0;        // |||Z|||_2
    double residual = 0, se_residual = 0;  // sup_t (E||Xeps-X-Y-Z||_2^2)^{1/2}
    double j_diff = 0, se_j_diff = 0;
    double expansion_prelim = 0;
    double gap_prelim = 0, se_gap_prelim = 0;
    double expansion_adjoint = 0;
    double gap_adjoint = 0, se_gap_adjoint = 0;
    double quad_l_term = 0, quad_l_direct = 0, quad_l_se = 0;  // 1/2 int l'' Y^2 both routes
};

struct SweepConfig {
    double t0 = 0.25;
    ControlPath v;
    std::vector<double> eps_values;
    int n_samples = 512;
    std::uint64_t tag = 0;
};

/// Dyadic spike sweep with all comparisons on shared Wiener increments:
/// per-knot norms of Y, Z, the expansion residual, the pathwise cost
/// difference and both expansion forms of it.
std::vector<SweepRow> variation_sweep(const ProblemModel& model, const ControlPath& u,
                                      const SweepConfig& cfg, const SeedPolicy& seeds,
                                      const TimeGrid& grid, const SpacePtr& space,
                                      const AdjointPath* adj = nullptr);

}  // namespace smp

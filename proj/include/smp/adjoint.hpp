#pragma once

#include "smp/spde.hpp"

namespace smp {

/// Regression basis for the backward conditional expectations: polynomials of
/// degree <= 2 in the leading n_reg mode coefficients of the state.
struct RegressionSpec {
    int n_reg = 4;
    int degree = 2;
    double ridge = 1e-8;
};

int feature_count(const RegressionSpec& spec);

/// Time-discretized first adjoint pair as regression functions per knot:
/// p and q^j mode coefficients are fitted against state features, so the
/// fields can be re-evaluated along any path (outer samples or inner
/// branches). At the terminal knot p is the exact function h'(., X_T).
class AdjointPath {
public:
    SpacePtr space;
    TimeGrid grid;
    RegressionSpec reg;
    int noise_dim = 0;

    std::vector<VectorXd> feat_shift;   // per knot, feature standardization
    std::vector<VectorXd> feat_scale;
    std::vector<MatrixXd> p_coef;               // per knot 0..n-1: n_modes x P
    std::vector<std::vector<MatrixXd>> q_coef;  // per knot 0..n-1, per j
    TerminalCost::Fn terminal_deriv;            // h' for the exact terminal evaluation
    int ridge_fallbacks = 0;

    int n_steps() const { return grid.n_steps; }
};

/// Workspace-carrying evaluator of the regression fields at a single state.
class AdjointEvaluator {
public:
    explicit AdjointEvaluator(const AdjointPath& adj);

    /// Evaluates p (and q when with_q) at knot k for the given state.
    void eval(int k, const VectorXd& state_modes, const ArrayXd& state_grid, bool with_q);

    const VectorXd& p_modes() const { return p_modes_; }
    const ArrayXd& p_grid() const { return p_grid_; }
    const VectorXd& q_modes(int j) const { return q_modes_[j]; }
    const ArrayXd& q_grid(int j) const { return q_grids_[j]; }

    const AdjointPath& path() const { return *adj_; }

private:
    const AdjointPath* adj_;
    VectorXd feat_;
    VectorXd p_modes_;
    ArrayXd p_grid_;
    std::vector<VectorXd> q_modes_;
    std::vector<ArrayXd> q_grids_;
    ArrayXd hbuf_;
};

/// H_bar = l'' + p b'' + q^j sigma_j'' on the grid at knot k; uses the
/// evaluator's current workspace.
void curvature_at(const ProblemModel& model, AdjointEvaluator& eval, int k,
                  const VectorXd& state_modes, const ArrayXd& state_grid, double u, ArrayXd& out);

/// h_bar = h''(., X_T) on the grid.
void terminal_curvature(const ProblemModel& model, const SpacePtr& space, const ArrayXd& state_grid,
                        ArrayXd& out);

struct AdjointDiagnostics {
    VectorXd p_norm;  // per knot: mean ||p||_2 over the training ensemble
    MatrixXd q_norm;  // per knot x noise dim
    VectorXd q_se;    // per knot: regression standard error scale of the q fit
    int ridge_fallbacks = 0;
};

struct FirstAdjointResult {
    AdjointPath path;
    AdjointDiagnostics diag;
};

/// Backward least-squares Monte Carlo sweep for the first adjoint BSDE.
/// The ensemble must have been simulated under the candidate control.
FirstAdjointResult solve_first_adjoint(const ProblemModel& model, const EnsembleStates& ensemble,
                                       const RegressionSpec& reg);

/// Spike perturbation parameters; the window is snapped to knots.
struct SpikeSpec {
    double t0 = 0.25;
    double eps = 0.0625;
    ControlPath v;
};

struct DualityReport {
    double lhs1 = 0, rhs1 = 0, gap1 = 0, se1_combined = 0, se1_paired = 0;
    double lhs2 = 0, rhs2 = 0, gap2 = 0, se2_combined = 0, se2_paired = 0;
    int n_samples = 0;
};

/// Monte Carlo evaluation of both sides of the two duality relations
/// pairing (Y, Z) with (p, q); gaps should vanish within noise.
/// sample_refine > 1 draws the driving noise on a grid that many times finer
/// and aggregates it, so runs at different resolutions share the same paths.
DualityReport duality_checks(const ProblemModel& model, const ControlPath& u, const SpikeSpec& s,
                             const AdjointPath& adj, const SeedPolicy& seeds, std::uint64_t tag,
                             int n_samples, const TimeGrid& grid, const SpacePtr& space,
                             int sample_refine = 1);

/// Bilinear form <P_t f, g> evaluated by conditional Monte Carlo: inner
/// branches of the state from a fixed outer prefix carry the flows Y^{t,f},
/// Y^{t,g}, and the curvature fields are read off the regression functions.
/// All argument pairs passed to eval_pairs share the same branches, so
/// symmetry and bilinearity hold to round-off.
class SecondAdjointForm {
public:
    SecondAdjointForm(const ProblemModel& model, const ControlPath& control, const AdjointPath& adj,
                      const WienerPath& outer, const VectorXd& state_modes_at_knot, int knot,
                      const SeedPolicy& seeds, int inner_branches);

    struct Value {
        double value = 0.0;
        double std_error = 0.0;
    };

    std::vector<Value> eval_pairs(
        const std::vector<std::pair<const SpectralField*, const SpectralField*>>& pairs) const;
    Value eval(const SpectralField& f, const SpectralField& g) const;
    Value eval(const SpectralField& f) const;  // <P f, f>, one flow per branch

    int knot() const { return knot_; }
    int inner_branches() const { return inner_branches_; }

private:
    const ProblemModel* model_;
    const ControlPath* control_;
    const AdjointPath* adj_;
    const SeedPolicy* seeds_;
    WienerPath outer_;
    VectorXd state_modes_;
    int knot_;
    int inner_branches_;
};

struct FlowReport {
    double f_norm4 = 0.0;
    std::vector<double> s_values;
    std::vector<double> ratio;  // (E^{F_t}||Y_s^{t,f}||_4^4)^{1/4} / ||f||_4, max over outer prefixes
    std::vector<double> eta;
    std::vector<std::vector<double>> weighted;  // per eta: (s-t)^eta scaled ratios for (-A)^eta f
};

/// Conditional flow estimates: uniform boundedness of the L^4 ratio and the
/// (s-t)^eta-weighted ratios for fractionally rough initial data.
FlowReport flow_estimates_check(const ProblemModel& model, const ControlPath& control,
                                const SeedPolicy& seeds, std::uint64_t tag, const TimeGrid& grid,
                                const SpacePtr& space, int knot, const SpectralField& f,
                                int n_outer, int n_branches, const std::vector<double>& etas);

}  // namespace smp

#pragma once

#include "smp/problem.hpp"

#include <limits>

namespace smp {

/// Raised when a simulated field stops being finite: coefficients are
/// globally Lipschitz, so a blow-up signals a configuration bug.
struct SimulationError : std::runtime_error {
    SimulationError(const std::string& what, int knot_, std::uint64_t sample_)
        : std::runtime_error(what), knot(knot_), sample(sample_) {}
    int knot = -1;
    std::uint64_t sample = 0;
};

/// In-place exponential-Euler stepper: the semigroup is applied after the
/// explicit increment, mirroring the variation-of-constants form term by term.
class MildStepper {
public:
    MildStepper(SpacePtr space, double dt)
        : space_(std::move(space)), decay_((-dt * space_->eigenvalues()).exp()) {
        if (!(dt > 0.0)) throw std::invalid_argument("MildStepper: dt must be positive");
    }

    const SpacePtr& space() const { return space_; }
    const ArrayXd& decay() const { return decay_; }

    /// modes <- decay .* (modes + P(increment)); grid <- synthesis(modes)
    void advance(VectorXd& modes, ArrayXd& grid, const ArrayXd& increment_grid) const {
        modes.noalias() += space_->analysis() * increment_grid.matrix();
        modes.array() *= decay_;
        grid = (space_->synthesis() * modes).array();
    }

private:
    SpacePtr space_;
    ArrayXd decay_;
};

/// One exponential-Euler update e^{dt A}(X + drift dt + sum_j noise_j dW^j).
SpectralField mild_step(const SpectralField& X, const SpectralField& drift,
                        const std::vector<SpectralField>& noise, const VectorXd& dW, double dt);

struct StatePath {
    std::vector<SpectralField> states;  // n_steps + 1 knots
    VectorXd controls;                  // realized actions, n_steps entries
};

StatePath solve_state(const ProblemModel& model, const ControlPath& control, const WienerPath& w,
                      const TimeGrid& grid, const SpacePtr& space);

/// Coefficients of the linear template dV = AV dt + (aV + alpha)dt + (b^j V + beta^j)dW^j
/// at one knot; arrays live on the collocation grid.
struct LinearStepCoeffs {
    ArrayXd a, alpha;
    std::vector<ArrayXd> b, beta;
    void resize(int n_points, int d);
};

struct LinearSPDESpec {
    int start_knot = 0;
    SpectralField initial;  // value at start_knot (zero field for the variation equations)
    std::function<void(int k, LinearStepCoeffs&)> coeffs;
    double bound_a = std::numeric_limits<double>::infinity();
    double bound_b = std::numeric_limits<double>::infinity();
};

/// Mild solution of the linear template; the returned vector holds knots
/// start_knot..n_steps. This single solver instantiates the first and second
/// variations and the conditional flows.
std::vector<SpectralField> solve_linear(const LinearSPDESpec& spec, const WienerPath& w,
                                        const TimeGrid& grid);

/// Streaming variant: on_knot(k, modes, grid) is invoked at every knot from
/// start_knot to n_steps without storing the path.
void run_linear(const LinearSPDESpec& spec, const WienerPath& w, const TimeGrid& grid,
                const std::function<void(int k, const VectorXd& modes, const ArrayXd& grid_values)>& on_knot);

/// Mode coefficients of a whole ensemble at every knot (column per sample),
/// plus realized controls and the driving increments. Grid values are
/// re-synthesized on demand.
struct EnsembleStates {
    SpacePtr space;
    TimeGrid grid;
    std::vector<MatrixXd> modes;     // per knot: n_modes x N
    MatrixXd controls;               // n_steps x N
    std::vector<WienerPath> paths;   // N driving paths

    int n_samples() const { return static_cast<int>(paths.size()); }
};

EnsembleStates simulate_ensemble(const ProblemModel& model, const ControlPath& control,
                                 const SeedPolicy& seeds, std::uint64_t tag_hash, int n_samples,
                                 const TimeGrid& grid, const SpacePtr& space);

/// Pathwise cost of one realized trajectory (left-point rule in time).
double path_cost(const ProblemModel& model, const StatePath& path, const TimeGrid& grid,
                 const SpacePtr& space);

struct CostEstimate {
    double J = 0.0;
    double std_error = 0.0;
    int n_samples = 0;
};

CostEstimate estimate_cost(const ProblemModel& model, const ControlPath& control,
                           const SeedPolicy& seeds, std::uint64_t tag_hash, int n_samples,
                           const TimeGrid& grid, const SpacePtr& space);

}  // namespace smp

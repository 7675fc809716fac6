#include "smp/spde.hpp"

#include <cmath>

namespace smp {

SpectralField mild_step(const SpectralField& X, const SpectralField& drift,
                        const std::vector<SpectralField>& noise, const VectorXd& dW, double dt) {
    if (!(dt > 0.0)) throw std::invalid_argument("mild_step: dt must be positive");
    if (static_cast<int>(noise.size()) != dW.size())
        throw std::invalid_argument("mild_step: noise fields and increments disagree");
    ArrayXd increment = dt * drift.grid_values();
    for (size_t j = 0; j < noise.size(); ++j) {
        require_same_space(X, noise[j]);
        increment += dW[static_cast<int>(j)] * noise[j].grid_values();
    }
    VectorXd modes = X.modes();
    ArrayXd grid = X.grid_values();
    MildStepper stepper(X.space(), dt);
    stepper.advance(modes, grid, increment);
    return SpectralField::from_modes(X.space(), std::move(modes));
}

StatePath solve_state(const ProblemModel& model, const ControlPath& control, const WienerPath& w,
                      const TimeGrid& grid, const SpacePtr& space) {
    const int n = grid.n_steps;
    const int d = model.noise_dim();
    if (w.n_steps() != n || w.dim() != d)
        throw std::invalid_argument("solve_state: Wiener path does not match grid/model");

    MildStepper stepper(space, grid.dt());
    const ArrayXd& x = space->grid().points();
    StatePath path;
    path.states.reserve(n + 1);
    path.states.push_back(model.x0);
    path.controls.resize(n);

    VectorXd modes = model.x0.modes();
    ArrayXd gvals = model.x0.grid_values();
    ArrayXd drift(space->n_points()), sig(space->n_points()), increment(space->n_points());
    for (int k = 0; k < n; ++k) {
        const double t = grid.knot(k);
        const double u = control.value(k, gvals);
        path.controls[k] = u;
        model.b.value(t, x, gvals, u, drift);
        increment = grid.dt() * drift;
        for (int j = 0; j < d; ++j) {
            model.sigma[j].value(t, x, gvals, u, sig);
            increment += w.increments(k, j) * sig;
        }
        stepper.advance(modes, gvals, increment);
        if (!modes.allFinite())
            throw SimulationError("state blow-up (non-finite field)", k + 1, w.sample_index);
        path.states.push_back(SpectralField::from_modes(space, modes));
    }
    return path;
}

void LinearStepCoeffs::resize(int n_points, int d) {
    a.resize(n_points);
    alpha.resize(n_points);
    b.assign(d, ArrayXd::Zero(n_points));
    beta.assign(d, ArrayXd::Zero(n_points));
}

void run_linear(const LinearSPDESpec& spec, const WienerPath& w, const TimeGrid& grid,
                const std::function<void(int, const VectorXd&, const ArrayXd&)>& on_knot) {
    const SpacePtr& space = spec.initial.space();
    const int n = grid.n_steps;
    const int d = w.dim();
    if (spec.start_knot < 0 || spec.start_knot > n)
        throw std::invalid_argument("run_linear: start knot out of range");

    MildStepper stepper(space, grid.dt());
    LinearStepCoeffs c;
    c.resize(space->n_points(), d);

    VectorXd modes = spec.initial.modes();
    ArrayXd gvals = spec.initial.grid_values();
    ArrayXd increment(space->n_points());
    on_knot(spec.start_knot, modes, gvals);
    for (int k = spec.start_knot; k < n; ++k) {
        spec.coeffs(k, c);
        if (c.a.abs().maxCoeff() > spec.bound_a)
            throw SimulationError("linear SPDE drift coefficient exceeds declared bound", k, w.sample_index);
        increment = grid.dt() * (c.a * gvals + c.alpha);
        for (int j = 0; j < d; ++j) {
            if (c.b[j].abs().maxCoeff() > spec.bound_b)
                throw SimulationError("linear SPDE noise coefficient exceeds declared bound", k,
                                      w.sample_index);
            increment += w.increments(k, j) * (c.b[j] * gvals + c.beta[j]);
        }
        stepper.advance(modes, gvals, increment);
        if (!modes.allFinite())
            throw SimulationError("linear SPDE blow-up (non-finite field)", k + 1, w.sample_index);
        on_knot(k + 1, modes, gvals);
    }
}

std::vector<SpectralField> solve_linear(const LinearSPDESpec& spec, const WienerPath& w,
                                        const TimeGrid& grid) {
    std::vector<SpectralField> out;
    out.reserve(grid.n_steps - spec.start_knot + 1);
    const SpacePtr space = spec.initial.space();
    run_linear(spec, w, grid, [&](int, const VectorXd& modes, const ArrayXd&) {
        out.push_back(SpectralField::from_modes(space, modes));
    });
    return out;
}

EnsembleStates simulate_ensemble(const ProblemModel& model, const ControlPath& control,
                                 const SeedPolicy& seeds, std::uint64_t tag_hash, int n_samples,
                                 const TimeGrid& grid, const SpacePtr& space) {
    const int n = grid.n_steps;
    const int d = model.noise_dim();
    const int m = space->n_modes();
    const int np = space->n_points();
    const double dt = grid.dt();

    EnsembleStates ens;
    ens.space = space;
    ens.grid = grid;
    ens.modes.assign(n + 1, MatrixXd(m, n_samples));
    ens.controls.resize(n, n_samples);
    ens.paths.reserve(n_samples);
    for (int i = 0; i < n_samples; ++i)
        ens.paths.push_back(sample_wiener(seeds, grid, d, static_cast<std::uint64_t>(i), tag_hash));

    ens.modes[0].colwise() = model.x0.modes();
    const ArrayXd decay = (-dt * space->eigenvalues()).exp();
    const ArrayXd& x = space->grid().points();

    MatrixXd gvals(np, n_samples), increment(np, n_samples);
    ArrayXd coeff(np);
    for (int k = 0; k < n; ++k) {
        const double t = grid.knot(k);
        gvals.noalias() = space->synthesis() * ens.modes[k];
        for (int i = 0; i < n_samples; ++i) {
            const auto col = gvals.col(i).array();
            const double u = control.value(k, col);
            ens.controls(k, i) = u;
            model.b.value(t, x, col, u, coeff);
            increment.col(i).array() = dt * coeff;
            for (int j = 0; j < d; ++j) {
                model.sigma[j].value(t, x, col, u, coeff);
                increment.col(i).array() += ens.paths[i].increments(k, j) * coeff;
            }
        }
        ens.modes[k + 1].noalias() = ens.modes[k] + space->analysis() * increment;
        ens.modes[k + 1].array().colwise() *= decay;
        if (!ens.modes[k + 1].allFinite())
            throw SimulationError("ensemble blow-up (non-finite field)", k + 1, 0);
    }
    return ens;
}

double path_cost(const ProblemModel& model, const StatePath& path, const TimeGrid& grid,
                 const SpacePtr& space) {
    const ArrayXd& x = space->grid().points();
    ArrayXd l(space->n_points());
    double cost = 0.0;
    for (int k = 0; k < grid.n_steps; ++k) {
        model.l.value(grid.knot(k), x, path.states[k].grid_values(), path.controls[k], l);
        cost += grid.dt() * space->grid().integrate(l);
    }
    ArrayXd h(space->n_points());
    model.h.value(x, path.states[grid.n_steps].grid_values(), h);
    return cost + space->grid().integrate(h);
}

CostEstimate estimate_cost(const ProblemModel& model, const ControlPath& control,
                           const SeedPolicy& seeds, std::uint64_t tag_hash, int n_samples,
                           const TimeGrid& grid, const SpacePtr& space) {
    if (n_samples < 2) throw std::invalid_argument("estimate_cost: need at least 2 samples");
    const int n = grid.n_steps;
    const int d = model.noise_dim();
    const int np = space->n_points();
    const double dt = grid.dt();
    const ArrayXd decay = (-dt * space->eigenvalues()).exp();
    const ArrayXd& x = space->grid().points();
    const ArrayXd& wq = space->grid().weights();

    // Streaming batched simulation; per-sample costs accumulated knot by knot.
    MatrixXd modes(space->n_modes(), n_samples);
    modes.colwise() = model.x0.modes();
    std::vector<WienerPath> paths;
    paths.reserve(n_samples);
    for (int i = 0; i < n_samples; ++i)
        paths.push_back(sample_wiener(seeds, grid, d, static_cast<std::uint64_t>(i), tag_hash));

    VectorXd cost = VectorXd::Zero(n_samples);
    MatrixXd gvals(np, n_samples), increment(np, n_samples);
    ArrayXd coeff(np);
    for (int k = 0; k < n; ++k) {
        const double t = grid.knot(k);
        gvals.noalias() = space->synthesis() * modes;
        for (int i = 0; i < n_samples; ++i) {
            const auto col = gvals.col(i).array();
            const double u = control.value(k, col);
            model.l.value(t, x, col, u, coeff);
            cost[i] += dt * (coeff * wq).sum();
            model.b.value(t, x, col, u, coeff);
            increment.col(i).array() = dt * coeff;
            for (int j = 0; j < d; ++j) {
                model.sigma[j].value(t, x, col, u, coeff);
                increment.col(i).array() += paths[i].increments(k, j) * coeff;
            }
        }
        modes.noalias() += space->analysis() * increment;
        modes.array().colwise() *= decay;
        if (!modes.allFinite()) throw SimulationError("cost ensemble blow-up", k + 1, 0);
    }
    gvals.noalias() = space->synthesis() * modes;
    for (int i = 0; i < n_samples; ++i) {
        model.h.value(x, gvals.col(i).array(), coeff);
        cost[i] += (coeff * wq).sum();
    }

    CostEstimate est;
    est.n_samples = n_samples;
    est.J = cost.mean();
    const double var = (cost.array() - est.J).square().sum() / (n_samples - 1.0);
    est.std_error = std::sqrt(var / n_samples);
    return est;
}

}  // namespace smp

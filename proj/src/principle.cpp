#include "smp/principle.hpp"

#include <cmath>

namespace smp {

double hamiltonian(double t, double v, const SpectralField& X, const SpectralField& p,
                   const std::vector<SpectralField>& q, const ProblemModel& model) {
    const SpacePtr& space = X.space();
    const ArrayXd& x = space->grid().points();
    const ArrayXd& wq = space->grid().weights();
    ArrayXd buf(space->n_points());
    model.l.value(t, x, X.grid_values(), v, buf);
    double value = (buf * wq).sum();
    model.b.value(t, x, X.grid_values(), v, buf);
    value += (buf * p.grid_values() * wq).sum();
    for (int j = 0; j < model.noise_dim(); ++j) {
        model.sigma[j].value(t, x, X.grid_values(), v, buf);
        value += (buf * q[j].grid_values() * wq).sum();
    }
    return value;
}

namespace {

// Delta sigma_j(v) = sigma_j(t,.,X,v) - sigma_j(t,.,X,u) as spectral fields.
std::vector<SpectralField> sigma_differences(const ProblemModel& model, double t,
                                             const SpectralField& state, double v, double u) {
    const SpacePtr& space = state.space();
    const ArrayXd& x = space->grid().points();
    ArrayXd at_v(space->n_points()), at_u(space->n_points());
    std::vector<SpectralField> out;
    out.reserve(model.noise_dim());
    for (int j = 0; j < model.noise_dim(); ++j) {
        model.sigma[j].value(t, x, state.grid_values(), v, at_v);
        model.sigma[j].value(t, x, state.grid_values(), u, at_u);
        out.push_back(SpectralField::from_grid(space, at_v - at_u));
    }
    return out;
}

}  // namespace

MPCell mp_statistic(int knot, int sample, double v, const ProblemModel& model,
                    const AdjointPath& adj, const SecondAdjointForm& form,
                    const SpectralField& state, double realized_u) {
    const double t = adj.grid.knot(knot);
    AdjointEvaluator ev(adj);
    ev.eval(knot, state.modes(), state.grid_values(), true);
    const SpectralField p = SpectralField::from_modes(adj.space, ev.p_modes());
    std::vector<SpectralField> q;
    for (int j = 0; j < adj.noise_dim; ++j)
        q.push_back(SpectralField::from_modes(adj.space, ev.q_modes(j)));

    MPCell cell;
    cell.knot = knot;
    cell.sample = sample;
    cell.v = v;
    cell.dH = hamiltonian(t, v, state, p, q, model) - hamiltonian(t, realized_u, state, p, q, model);

    const auto dsig = sigma_differences(model, t, state, v, realized_u);
    std::vector<std::pair<const SpectralField*, const SpectralField*>> pairs;
    for (const auto& f : dsig) pairs.emplace_back(&f, &f);
    const auto vals = form.eval_pairs(pairs);
    double quad = 0.0, se2 = 0.0;
    for (const auto& val : vals) {
        quad += 0.5 * val.value;
        se2 += 0.25 * val.std_error * val.std_error;
    }
    cell.quad = quad;
    cell.std_error = std::sqrt(se2);
    cell.total = cell.dH + cell.quad;
    return cell;
}

MPReport check_mp(const ProblemModel& model, const ControlPath& candidate, const AdjointPath& adj,
                  const MPConfig& cfg, const SeedPolicy& seeds, const TimeGrid& grid,
                  const SpacePtr& space) {
    const int d = model.noise_dim();
    const int n_knots = static_cast<int>(cfg.knots.size());
    const int n_actions = static_cast<int>(model.actions.size());
    MPReport report;
    report.config = cfg;
    report.cells.assign(static_cast<size_t>(n_knots) * cfg.n_outer * n_actions, MPCell{});

#pragma omp parallel for schedule(dynamic)
    for (int o = 0; o < cfg.n_outer; ++o) {
        const WienerPath w = sample_wiener(seeds, grid, d, static_cast<std::uint64_t>(o), cfg.tag);
        const StatePath path = solve_state(model, candidate, w, grid, space);
        AdjointEvaluator ev(adj);
        for (int ki = 0; ki < n_knots; ++ki) {
            const int k = cfg.knots[ki];
            const double t = grid.knot(k);
            const SpectralField& state = path.states[k];
            const double realized = (k < grid.n_steps) ? path.controls[k]
                                                       : candidate.value(grid.n_steps - 1,
                                                                         state.grid_values());
            ev.eval(k, state.modes(), state.grid_values(), true);
            const SpectralField p = SpectralField::from_modes(adj.space, ev.p_modes());
            std::vector<SpectralField> q;
            for (int j = 0; j < adj.noise_dim; ++j)
                q.push_back(SpectralField::from_modes(adj.space, ev.q_modes(j)));
            const double h_at_realized = hamiltonian(t, realized, state, p, q, model);

            // one branch set per (knot, sample): all actions share it, which
            // also bounds the nested cost to one flow solve per noise term
            SecondAdjointForm form(model, candidate, adj, w, state.modes(), k, seeds,
                                   cfg.inner_branches);
            std::vector<std::vector<SpectralField>> dsig(n_actions);
            std::vector<std::pair<const SpectralField*, const SpectralField*>> pairs;
            std::vector<std::pair<int, int>> where;  // (action, noise) per pair
            for (int vi = 0; vi < n_actions; ++vi) {
                const double v = model.actions[vi];
                if (v == realized) continue;
                dsig[vi] = sigma_differences(model, t, state, v, realized);
                for (int j = 0; j < d; ++j) {
                    pairs.emplace_back(&dsig[vi][j], &dsig[vi][j]);
                    where.emplace_back(vi, j);
                }
            }
            const auto vals = pairs.empty() ? std::vector<SecondAdjointForm::Value>{}
                                            : form.eval_pairs(pairs);

            for (int vi = 0; vi < n_actions; ++vi) {
                MPCell cell;
                cell.knot = k;
                cell.sample = o;
                cell.v = model.actions[vi];
                if (model.actions[vi] != realized) {
                    cell.dH = hamiltonian(t, model.actions[vi], state, p, q, model) - h_at_realized;
                    double se2 = 0.0;
                    for (size_t pi = 0; pi < pairs.size(); ++pi) {
                        if (where[pi].first != vi) continue;
                        cell.quad += 0.5 * vals[pi].value;
                        se2 += 0.25 * vals[pi].std_error * vals[pi].std_error;
                    }
                    cell.std_error = std::sqrt(se2);
                }
                cell.total = cell.dH + cell.quad;
                report.cells[(static_cast<size_t>(o) * n_knots + ki) * n_actions + vi] = cell;
            }
        }
    }

    report.n_cells = static_cast<int>(report.cells.size());
    for (const auto& c : report.cells)
        if (c.total < -cfg.se_threshold * c.std_error) ++report.n_violations;
    report.violation_fraction =
        report.n_cells > 0 ? static_cast<double>(report.n_violations) / report.n_cells : 0.0;
    return report;
}

std::vector<FinalDualityRow> final_duality_check(const ProblemModel& model, const ControlPath& u,
                                                 const AdjointPath& adj,
                                                 const FinalDualityConfig& cfg,
                                                 const SeedPolicy& seeds, const TimeGrid& grid,
                                                 const SpacePtr& space) {
    const int n = grid.n_steps;
    const int d = model.noise_dim();
    const int np = space->n_points();
    const double dt = grid.dt();
    const ArrayXd& wq = space->grid().weights();
    const int n_eps = static_cast<int>(cfg.eps_values.size());

    std::vector<SpikeWindow> windows;
    int k0 = n;
    for (double e : cfg.eps_values) {
        windows.push_back(snap_window(SpikeSpec{cfg.t0, e, cfg.v}, grid));
        k0 = std::min(k0, windows.back().k0);
    }

    // left side: along outer paths, curvature against the first variation
    MatrixXd lhs(n_eps, cfg.n_lhs_samples);
    const std::uint64_t lhs_tag = cfg.tag ^ SeedPolicy::tag("final-duality/lhs");
    const int block_size = 8;
    const int n_blocks = (cfg.n_lhs_samples + block_size - 1) / block_size;
#pragma omp parallel for schedule(dynamic)
    for (int blk = 0; blk < n_blocks; ++blk) {
        AdjointEvaluator ev(adj);
        ArrayXd hbar(np), hbar_T(np);
        for (int i = blk * block_size; i < std::min(cfg.n_lhs_samples, (blk + 1) * block_size); ++i) {
            const WienerPath w = sample_wiener(seeds, grid, d, static_cast<std::uint64_t>(i), lhs_tag);
            const StatePath X = solve_state(model, u, w, grid, space);
            std::vector<ArrayXd> hbar_k(n - k0);
            for (int k = k0; k < n; ++k) {
                curvature_at(model, ev, k, X.states[k].modes(), X.states[k].grid_values(),
                             X.controls[k], hbar);
                hbar_k[k - k0] = hbar;
            }
            terminal_curvature(model, space, X.states[n].grid_values(), hbar_T);
            for (int e = 0; e < n_eps; ++e) {
                const DeltaFields deltas =
                    delta_fields(model, X, u, SpikeSpec{cfg.t0, cfg.eps_values[e], cfg.v}, grid, space);
                double acc = 0.0;
                LinearSPDESpec yspec;
                yspec.start_knot = 0;
                yspec.initial = SpectralField::zero(space);
                yspec.bound_a = model.bound_K + 1.0;
                yspec.bound_b = model.bound_K + 1.0;
                yspec.coeffs = [&](int k, LinearStepCoeffs& c) {
                    const double t = grid.knot(k);
                    const ArrayXd& st = X.states[k].grid_values();
                    model.b.deriv(t, space->grid().points(), st, X.controls[k], c.a);
                    for (int j = 0; j < d; ++j)
                        model.sigma[j].deriv(t, space->grid().points(), st, X.controls[k], c.b[j]);
                    if (deltas.in_window(k)) {
                        const int loc = deltas.local(k);
                        c.alpha = deltas.db[loc];
                        for (int j = 0; j < d; ++j) c.beta[j] = deltas.ds[loc][j];
                    } else {
                        c.alpha.setZero();
                        for (auto& bj : c.beta) bj.setZero();
                    }
                };
                run_linear(yspec, w, grid, [&](int k, const VectorXd&, const ArrayXd& yg) {
                    if (k >= k0 && k < n) acc += dt * (hbar_k[k - k0] * yg.square() * wq).sum();
                    if (k == n) acc += (hbar_T * yg.square() * wq).sum();
                });
                lhs(e, i) = acc;
            }
        }
    }

    // right side: nested second-adjoint evaluations on subsampled window
    // knots; outer paths reuse the left side's streams so the two estimates
    // share their common state-driven variation
    const std::uint64_t rhs_tag = lhs_tag;
    MatrixXd rhs(n_eps, cfg.n_rhs_outer);
#pragma omp parallel for schedule(dynamic)
    for (int o = 0; o < cfg.n_rhs_outer; ++o) {
        const WienerPath w = sample_wiener(seeds, grid, d, static_cast<std::uint64_t>(o), rhs_tag);
        const StatePath X = solve_state(model, u, w, grid, space);
        for (int e = 0; e < n_eps; ++e) {
            const SpikeWindow& win = windows[e];
            const int n_sub = std::min(cfg.window_knots, win.length());
            double acc = 0.0;
            for (int si = 0; si < n_sub; ++si) {
                // stratified left-point subsample of the window knots
                const int k = win.k0 + (win.length() * si) / n_sub;
                const double t = grid.knot(k);
                const double realized = X.controls[k];
                const double vact = cfg.v.value(k, X.states[k].grid_values());
                const auto dsig = sigma_differences(model, t, X.states[k], vact, realized);
                SecondAdjointForm form(model, u, adj, w, X.states[k].modes(), k, seeds,
                                       cfg.inner_branches);
                std::vector<std::pair<const SpectralField*, const SpectralField*>> pairs;
                for (const auto& f : dsig) pairs.emplace_back(&f, &f);
                const auto vals = form.eval_pairs(pairs);
                double sum = 0.0;
                for (const auto& val : vals) sum += val.value;
                acc += sum * (win.length() * dt / n_sub);
            }
            rhs(e, o) = acc;
        }
    }

    std::vector<FinalDualityRow> rows(n_eps);
    for (int e = 0; e < n_eps; ++e) {
        FinalDualityRow& r = rows[e];
        r.eps = windows[e].length() * dt;
        r.lhs = lhs.row(e).mean();
        r.se_lhs = std::sqrt((lhs.row(e).array() - r.lhs).square().sum() /
                             std::max(1, cfg.n_lhs_samples - 1) / cfg.n_lhs_samples);
        r.rhs = rhs.row(e).mean();
        r.se_rhs = std::sqrt((rhs.row(e).array() - r.rhs).square().sum() /
                             std::max(1, cfg.n_rhs_outer - 1) / cfg.n_rhs_outer);
        r.gap = r.lhs - r.rhs;
    }
    return rows;
}

RateFit rate_estimate(const std::vector<std::pair<double, double>>& table) {
    if (table.size() < 4) throw std::invalid_argument("rate_estimate: need at least 4 points");
    const int n = static_cast<int>(table.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    for (const auto& [eps, value] : table) {
        if (!(eps > 0.0) || !(value > 0.0))
            throw std::invalid_argument("rate_estimate: eps and value must be positive");
        const double lx = std::log(eps);
        const double ly = std::log(value);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
        syy += ly * ly;
    }
    const double denom = n * sxx - sx * sx;
    if (std::abs(denom) < 1e-14) throw std::invalid_argument("rate_estimate: degenerate abscissae");
    RateFit fit;
    fit.slope = (n * sxy - sx * sy) / denom;
    fit.intercept = (sy - fit.slope * sx) / n;
    const double ss_tot = syy - sy * sy / n;
    double ss_res = 0.0;
    for (const auto& [eps, value] : table) {
        const double pred = fit.intercept + fit.slope * std::log(eps);
        ss_res += (std::log(value) - pred) * (std::log(value) - pred);
    }
    fit.r2 = ss_tot > 0 ? 1.0 - ss_res / ss_tot : 1.0;
    return fit;
}

}  // namespace smp

#include "smp/adjoint.hpp"
#include "smp/variation.hpp"

#include <cmath>
#include <optional>

namespace smp {

int feature_count(const RegressionSpec& spec) {
    if (spec.n_reg < 1) throw std::invalid_argument("RegressionSpec: n_reg must be >= 1");
    if (spec.degree < 1 || spec.degree > 2)
        throw std::invalid_argument("RegressionSpec: degree must be 1 or 2");
    int count = 1 + spec.n_reg;
    if (spec.degree >= 2) count += spec.n_reg * (spec.n_reg + 1) / 2;
    return count;
}

namespace {

void raw_features(const RegressionSpec& spec, const VectorXd& modes, VectorXd& out) {
    const int nr = spec.n_reg;
    out[0] = 1.0;
    for (int i = 0; i < nr; ++i) out[1 + i] = modes[i];
    if (spec.degree >= 2) {
        int idx = 1 + nr;
        for (int i = 0; i < nr; ++i)
            for (int j = i; j < nr; ++j) out[idx++] = modes[i] * modes[j];
    }
}

}  // namespace

AdjointEvaluator::AdjointEvaluator(const AdjointPath& adj)
    : adj_(&adj),
      feat_(adj.space ? feature_count(adj.reg) : 0),
      p_modes_(adj.space ? adj.space->n_modes() : 0),
      p_grid_(adj.space ? adj.space->n_points() : 0),
      q_modes_(adj.noise_dim, VectorXd(adj.space ? adj.space->n_modes() : 0)),
      q_grids_(adj.noise_dim, ArrayXd(adj.space ? adj.space->n_points() : 0)),
      hbuf_(adj.space ? adj.space->n_points() : 0) {}

void AdjointEvaluator::eval(int k, const VectorXd& state_modes, const ArrayXd& state_grid,
                            bool with_q) {
    const AdjointPath& adj = *adj_;
    const int n = adj.grid.n_steps;
    if (k < 0 || k > n) throw std::out_of_range("AdjointEvaluator: knot out of range");
    if (k == n) {
        adj.terminal_deriv(adj.space->grid().points(), state_grid, hbuf_);
        p_modes_.noalias() = adj.space->analysis() * hbuf_.matrix();
        p_grid_ = (adj.space->synthesis() * p_modes_).array();
        if (with_q)
            for (int j = 0; j < adj.noise_dim; ++j) {
                q_modes_[j].setZero();
                q_grids_[j].setZero();
            }
        return;
    }
    raw_features(adj.reg, state_modes, feat_);
    feat_.array() -= adj.feat_shift[k].array();
    feat_.array() /= adj.feat_scale[k].array();
    p_modes_.noalias() = adj.p_coef[k] * feat_;
    p_grid_ = (adj.space->synthesis() * p_modes_).array();
    if (with_q)
        for (int j = 0; j < adj.noise_dim; ++j) {
            q_modes_[j].noalias() = adj.q_coef[k][j] * feat_;
            q_grids_[j] = (adj.space->synthesis() * q_modes_[j]).array();
        }
}

void curvature_at(const ProblemModel& model, AdjointEvaluator& ev, int k,
                  const VectorXd& state_modes, const ArrayXd& state_grid, double u, ArrayXd& out) {
    const AdjointPath& adj = ev.path();
    const double t = adj.grid.knot(k);
    const ArrayXd& x = adj.space->grid().points();
    ev.eval(k, state_modes, state_grid, true);
    static thread_local ArrayXd work;
    work.resize(state_grid.size());
    model.l.deriv2(t, x, state_grid, u, out);
    model.b.deriv2(t, x, state_grid, u, work);
    out += ev.p_grid() * work;
    for (int j = 0; j < model.noise_dim(); ++j) {
        model.sigma[j].deriv2(t, x, state_grid, u, work);
        out += ev.q_grid(j) * work;
    }
}

void terminal_curvature(const ProblemModel& model, const SpacePtr& space, const ArrayXd& state_grid,
                        ArrayXd& out) {
    model.h.deriv2(space->grid().points(), state_grid, out);
}

FirstAdjointResult solve_first_adjoint(const ProblemModel& model, const EnsembleStates& ens,
                                       const RegressionSpec& reg) {
    const SpacePtr& space = ens.space;
    const TimeGrid& grid = ens.grid;
    const int n = grid.n_steps;
    const int N = ens.n_samples();
    const int m = space->n_modes();
    const int np = space->n_points();
    const int d = model.noise_dim();
    const int P = feature_count(reg);
    const double dt = grid.dt();
    if (N <= 2 * P) throw std::invalid_argument("solve_first_adjoint: ensemble too small for the basis");

    FirstAdjointResult result;
    AdjointPath& adj = result.path;
    adj.space = space;
    adj.grid = grid;
    adj.reg = reg;
    adj.noise_dim = d;
    adj.terminal_deriv = model.h.deriv;
    adj.feat_shift.assign(n, VectorXd::Zero(P));
    adj.feat_scale.assign(n, VectorXd::Ones(P));
    adj.p_coef.assign(n, MatrixXd::Zero(m, P));
    adj.q_coef.assign(n, std::vector<MatrixXd>(d, MatrixXd::Zero(m, P)));

    AdjointDiagnostics& diag = result.diag;
    diag.p_norm.setZero(n + 1);
    diag.q_norm.setZero(n, d);
    diag.q_se.setZero(n);

    const ArrayXd decay = (-dt * space->eigenvalues()).exp();
    const ArrayXd& x = space->grid().points();

    // terminal condition p_T = h'(., X_T), exact per sample
    MatrixXd state_grid(np, N), work_grid(np, N);
    state_grid.noalias() = space->synthesis() * ens.modes[n];
#pragma omp parallel for schedule(static)
    for (int i = 0; i < N; ++i) {
        ArrayXd buf(np);
        model.h.deriv(x, state_grid.col(i).array(), buf);
        work_grid.col(i) = buf.matrix();
    }
    MatrixXd Pvals = space->analysis() * work_grid;  // m x N
    std::vector<MatrixXd> Qvals(d, MatrixXd::Zero(m, N));
    diag.p_norm[n] = Pvals.colwise().norm().mean();

    MatrixXd driver(np, N), Pgrid(np, N);
    std::vector<MatrixXd> Qgrid(d, MatrixXd(np, N));
    MatrixXd features(P, N);
    MatrixXd targetP(m, N);
    std::vector<MatrixXd> targetQ(d, MatrixXd(m, N));

    for (int k = n - 1; k >= 0; --k) {
        const double t1 = grid.knot(k + 1);
        const int uk = std::min(k + 1, n - 1);
        state_grid.noalias() = space->synthesis() * ens.modes[k + 1];
        Pgrid.noalias() = space->synthesis() * Pvals;
        for (int j = 0; j < d; ++j) Qgrid[j].noalias() = space->synthesis() * Qvals[j];

#pragma omp parallel for schedule(static)
        for (int i = 0; i < N; ++i) {
            ArrayXd buf(np);
            const auto st = state_grid.col(i).array();
            const double u = ens.controls(uk, i);
            model.b.deriv(t1, x, st, u, buf);
            driver.col(i).array() = buf * Pgrid.col(i).array();
            for (int j = 0; j < d; ++j) {
                model.sigma[j].deriv(t1, x, st, u, buf);
                driver.col(i).array() += buf * Qgrid[j].col(i).array();
            }
            model.l.deriv(t1, x, st, u, buf);
            driver.col(i).array() += buf;
        }

        targetP.noalias() = Pvals + dt * (space->analysis() * driver);
        targetP.array().colwise() *= decay;
        MatrixXd propagated = Pvals;  // e^{dt A} p_{k+1} per sample, before the driver
        propagated.array().colwise() *= decay;

        // features of the knot-k states, standardized per row; rows with no
        // variation across the ensemble carry no information and are dropped
#pragma omp parallel for schedule(static)
        for (int i = 0; i < N; ++i) {
            VectorXd f(P);
            raw_features(reg, ens.modes[k].col(i), f);
            features.col(i) = f;
        }
        VectorXd shift = features.rowwise().mean();
        shift[0] = 0.0;
        VectorXd scale(P);
        std::vector<int> alive;
        for (int r = 0; r < P; ++r) {
            features.row(r).array() -= shift[r];
            const double sd = std::sqrt(features.row(r).squaredNorm() / N);
            const bool dead = (r != 0) && sd <= 1e-10 * (1.0 + std::abs(shift[r]));
            scale[r] = (r == 0 || dead) ? 1.0 : sd;
            features.row(r) /= scale[r];
            if (!dead) alive.push_back(r);
        }
        adj.feat_shift[k] = shift;
        adj.feat_scale[k] = scale;

        const int Pa = static_cast<int>(alive.size());
        MatrixXd fa(Pa, N);
        for (int r = 0; r < Pa; ++r) fa.row(r) = features.row(alive[r]);

        MatrixXd G = fa * fa.transpose();  // Pa x Pa
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(G);
        const double emin = es.eigenvalues().minCoeff();
        const double emax = es.eigenvalues().maxCoeff();
        if (!(emin > 1e-10 * std::max(1.0, emax))) {
            G.diagonal().array() += reg.ridge * std::max(1.0, G.trace() / Pa);
            ++adj.ridge_fallbacks;
        }
        Eigen::LDLT<MatrixXd> ldlt(G);

        auto scatter = [&](const MatrixXd& compact) {
            MatrixXd full = MatrixXd::Zero(m, P);
            for (int r = 0; r < Pa; ++r) full.col(alive[r]) = compact.col(r);
            return full;
        };
        adj.p_coef[k] = scatter(ldlt.solve(fa * targetP.transpose()).transpose());
        Pvals.noalias() = adj.p_coef[k] * features;

        // martingale-increment extraction with the fitted p_k as a control
        // variate: E_k[c dW] = 0 for F_k-measurable c, so subtracting the
        // fitted value leaves the estimator unbiased while removing the
        // O(1/dt) variance of the raw increment target
        for (int j = 0; j < d; ++j) {
            targetQ[j] = propagated - Pvals;
            for (int i = 0; i < N; ++i)
                targetQ[j].col(i) *= ens.paths[i].increments(k, j) / dt;
            adj.q_coef[k][j] = scatter(ldlt.solve(fa * targetQ[j].transpose()).transpose());
            Qvals[j].noalias() = adj.q_coef[k][j] * features;
        }

        diag.p_norm[k] = Pvals.colwise().norm().mean();
        for (int j = 0; j < d; ++j) diag.q_norm(k, j) = Qvals[j].colwise().norm().mean();

        // regression noise scale of the q fit: standard error of the fitted
        // field at the mean feature vector, aggregated over modes
        {
            VectorXd xbar = fa.rowwise().mean();
            const double lever = xbar.dot(ldlt.solve(xbar));
            double resvar = 0.0;
            for (int j = 0; j < d; ++j)
                resvar += (targetQ[j] - Qvals[j]).squaredNorm() / std::max(1, N - Pa);
            diag.q_se[k] = std::sqrt(std::max(0.0, resvar * lever));
        }
    }
    result.diag.ridge_fallbacks = adj.ridge_fallbacks;
    return result;
}

DualityReport duality_checks(const ProblemModel& model, const ControlPath& u, const SpikeSpec& s,
                             const AdjointPath& adj, const SeedPolicy& seeds, std::uint64_t tag,
                             int n_samples, const TimeGrid& grid, const SpacePtr& space,
                             int sample_refine) {
    const int n = grid.n_steps;
    const int d = model.noise_dim();
    const int np = space->n_points();
    const double dt = grid.dt();
    const ArrayXd& x = space->grid().points();
    const ArrayXd& wq = space->grid().weights();

    VectorXd lhs1(n_samples), rhs1(n_samples), lhs2(n_samples), rhs2(n_samples);

    const int block_size = 16;
    const int n_blocks = (n_samples + block_size - 1) / block_size;
#pragma omp parallel for schedule(dynamic)
    for (int blk = 0; blk < n_blocks; ++blk) {
        AdjointEvaluator ev(adj);
        ArrayXd buf(np), buf2(np);
        for (int i = blk * block_size; i < std::min(n_samples, (blk + 1) * block_size); ++i) {
            const WienerPath w =
                sample_refine <= 1
                    ? sample_wiener(seeds, grid, d, static_cast<std::uint64_t>(i), tag)
                    : coarsen(sample_wiener(seeds, TimeGrid(grid.T, grid.n_steps * sample_refine), d,
                                            static_cast<std::uint64_t>(i), tag),
                              sample_refine);
            const StatePath X = solve_state(model, u, w, grid, space);
            const DeltaFields deltas = delta_fields(model, X, u, s, grid, space);
            const auto Y = first_variation(model, X, deltas, w, grid, space);
            const auto Z = second_variation(model, X, deltas, Y, w, grid, space);
            const int k0 = deltas.window.k0;

            double a1 = 0, b1 = 0, a2 = 0, b2 = 0;
            for (int k = 0; k < n; ++k) {
                const double t = grid.knot(k);
                const ArrayXd& st = X.states[k].grid_values();
                model.l.deriv(t, x, st, X.controls[k], buf);
                a1 += dt * (buf * Y[k].grid_values() * wq).sum();
                a2 += dt * (buf * Z[k].grid_values() * wq).sum();
            }
            model.h.deriv(x, X.states[n].grid_values(), buf);
            a1 += (buf * Y[n].grid_values() * wq).sum();
            a2 += (buf * Z[n].grid_values() * wq).sum();

            for (int k = k0; k < n; ++k) {
                const double t = grid.knot(k);
                const ArrayXd& st = X.states[k].grid_values();
                const ArrayXd& yk = Y[k].grid_values();
                ev.eval(k, X.states[k].modes(), st, true);
                if (deltas.in_window(k)) {
                    const int loc = deltas.local(k);
                    for (int j = 0; j < d; ++j)
                        b1 += dt * (deltas.ds[loc][j] * ev.q_grid(j) * wq).sum();
                    b2 += dt * ((deltas.db[loc] + deltas.dbp[loc] * yk) * ev.p_grid() * wq).sum();
                    for (int j = 0; j < d; ++j)
                        b2 += dt * (deltas.dsp[loc][j] * yk * ev.q_grid(j) * wq).sum();
                }
                model.b.deriv2(t, x, st, X.controls[k], buf);
                b2 += dt * 0.5 * (buf * yk.square() * ev.p_grid() * wq).sum();
                for (int j = 0; j < d; ++j) {
                    model.sigma[j].deriv2(t, x, st, X.controls[k], buf);
                    b2 += dt * 0.5 * (buf * yk.square() * ev.q_grid(j) * wq).sum();
                }
            }
            lhs1[i] = a1;
            rhs1[i] = b1;
            lhs2[i] = a2;
            rhs2[i] = b2;
        }
    }

    auto stats = [n_samples](const VectorXd& v) {
        const double mu = v.mean();
        const double var = (v.array() - mu).square().sum() / std::max(1, n_samples - 1);
        return std::pair<double, double>(mu, std::sqrt(var / n_samples));
    };
    DualityReport rep;
    rep.n_samples = n_samples;
    auto [m_l1, se_l1] = stats(lhs1);
    auto [m_r1, se_r1] = stats(rhs1);
    auto [m_l2, se_l2] = stats(lhs2);
    auto [m_r2, se_r2] = stats(rhs2);
    rep.lhs1 = m_l1;
    rep.rhs1 = m_r1;
    rep.gap1 = m_l1 - m_r1;
    rep.se1_combined = std::hypot(se_l1, se_r1);
    rep.se1_paired = stats(lhs1 - rhs1).second;
    rep.lhs2 = m_l2;
    rep.rhs2 = m_r2;
    rep.gap2 = m_l2 - m_r2;
    rep.se2_combined = std::hypot(se_l2, se_r2);
    rep.se2_paired = stats(lhs2 - rhs2).second;
    return rep;
}

SecondAdjointForm::SecondAdjointForm(const ProblemModel& model, const ControlPath& control,
                                     const AdjointPath& adj, const WienerPath& outer,
                                     const VectorXd& state_modes_at_knot, int knot,
                                     const SeedPolicy& seeds, int inner_branches)
    : model_(&model),
      control_(&control),
      adj_(&adj),
      seeds_(&seeds),
      outer_(outer),
      state_modes_(state_modes_at_knot),
      knot_(knot),
      inner_branches_(inner_branches) {
    if (inner_branches < 2) throw std::invalid_argument("SecondAdjointForm: need at least 2 branches");
    if (knot < 0 || knot > adj.grid.n_steps)
        throw std::out_of_range("SecondAdjointForm: knot out of range");
}

std::vector<SecondAdjointForm::Value> SecondAdjointForm::eval_pairs(
    const std::vector<std::pair<const SpectralField*, const SpectralField*>>& pairs) const {
    const SpacePtr& space = adj_->space;
    const TimeGrid& grid = adj_->grid;
    const int n = grid.n_steps;
    const int np = space->n_points();
    const int d = model_->noise_dim();
    const double dt = grid.dt();
    const ArrayXd& x = space->grid().points();
    const ArrayXd& wq = space->grid().weights();

    // deduplicate flow initial data
    std::vector<const SpectralField*> fields;
    std::vector<std::pair<int, int>> idx;
    for (const auto& pr : pairs) {
        auto find = [&](const SpectralField* f) {
            for (size_t i = 0; i < fields.size(); ++i)
                if (fields[i] == f) return static_cast<int>(i);
            fields.push_back(f);
            return static_cast<int>(fields.size() - 1);
        };
        idx.emplace_back(find(pr.first), find(pr.second));
    }
    const int nf = static_cast<int>(fields.size());
    const int npairs = static_cast<int>(pairs.size());

    MildStepper stepper(space, dt);
    AdjointEvaluator ev(*adj_);
    VectorXd xmodes(space->n_modes());
    ArrayXd xgrid(np), hbar(np), coeff(np), inc(np);
    std::vector<VectorXd> fmodes(nf, VectorXd(space->n_modes()));
    std::vector<ArrayXd> fgrids(nf, ArrayXd(np));
    std::vector<ArrayXd> a_arr(1, ArrayXd(np));
    std::vector<ArrayXd> c_arr(d, ArrayXd(np));

    MatrixXd branch_vals(npairs, inner_branches_);
    std::vector<double> val(npairs, 0.0);
    for (int m = 0; m < inner_branches_; ++m) {
        const WienerPath wb = branch(outer_, knot_, *seeds_, static_cast<std::uint64_t>(m));
        xmodes = state_modes_;
        xgrid = (space->synthesis() * xmodes).array();
        for (int f = 0; f < nf; ++f) {
            fmodes[f] = fields[f]->modes();
            fgrids[f] = fields[f]->grid_values();
        }
        std::fill(val.begin(), val.end(), 0.0);

        for (int s = knot_; s < n; ++s) {
            const double t = grid.knot(s);
            const double u = control_->value(s, xgrid);
            curvature_at(*model_, ev, s, xmodes, xgrid, u, hbar);
            for (int pi = 0; pi < npairs; ++pi)
                val[pi] += dt * (hbar * fgrids[idx[pi].first] * fgrids[idx[pi].second] * wq).sum();

            model_->b.deriv(t, x, xgrid, u, a_arr[0]);
            for (int j = 0; j < d; ++j) model_->sigma[j].deriv(t, x, xgrid, u, c_arr[j]);

            // advance the flows with the frozen coefficients, then the state
            for (int f = 0; f < nf; ++f) {
                inc = dt * a_arr[0] * fgrids[f];
                for (int j = 0; j < d; ++j) inc += wb.increments(s, j) * (c_arr[j] * fgrids[f]);
                stepper.advance(fmodes[f], fgrids[f], inc);
            }
            model_->b.value(t, x, xgrid, u, coeff);
            inc = dt * coeff;
            for (int j = 0; j < d; ++j) {
                model_->sigma[j].value(t, x, xgrid, u, coeff);
                inc += wb.increments(s, j) * coeff;
            }
            stepper.advance(xmodes, xgrid, inc);
        }
        terminal_curvature(*model_, space, xgrid, hbar);
        for (int pi = 0; pi < npairs; ++pi)
            val[pi] += (hbar * fgrids[idx[pi].first] * fgrids[idx[pi].second] * wq).sum();

        for (int pi = 0; pi < npairs; ++pi) branch_vals(pi, m) = val[pi];
    }

    // two-pass moments: identical branch values must yield an exactly zero SE
    std::vector<Value> out(npairs);
    for (int pi = 0; pi < npairs; ++pi) {
        const double mean = branch_vals.row(pi).mean();
        const double var = (branch_vals.row(pi).array() - mean).square().sum() /
                           std::max(1, inner_branches_ - 1);
        out[pi] = {mean, std::sqrt(var / inner_branches_)};
    }
    return out;
}

SecondAdjointForm::Value SecondAdjointForm::eval(const SpectralField& f, const SpectralField& g) const {
    return eval_pairs({{&f, &g}})[0];
}

SecondAdjointForm::Value SecondAdjointForm::eval(const SpectralField& f) const {
    return eval_pairs({{&f, &f}})[0];
}

FlowReport flow_estimates_check(const ProblemModel& model, const ControlPath& control,
                                const SeedPolicy& seeds, std::uint64_t tag, const TimeGrid& grid,
                                const SpacePtr& space, int knot, const SpectralField& f,
                                int n_outer, int n_branches, const std::vector<double>& etas) {
    const int n = grid.n_steps;
    const int np = space->n_points();
    const int d = model.noise_dim();
    const double dt = grid.dt();
    const ArrayXd& x = space->grid().points();
    const ArrayXd& wq = space->grid().weights();

    // geometric ladder of gaps after the conditioning knot
    std::vector<int> gaps;
    for (int g = 1; knot + g <= n; g = std::max(g + 1, static_cast<int>(g * 1.5)))
        gaps.push_back(g);
    if (gaps.empty() || knot + gaps.back() != n)
        if (knot < n) gaps.push_back(n - knot);

    FlowReport rep;
    rep.f_norm4 = lp_norm(f, 4.0);
    rep.eta = etas;
    for (int g : gaps) rep.s_values.push_back(grid.knot(knot + g));

    const int n_flows = 1 + static_cast<int>(etas.size());
    std::vector<SpectralField> initial;
    initial.push_back(f);
    for (double eta : etas) initial.push_back(apply_fractional_power(f, eta, +1));

    // moment accumulators: flow x gap, summed over branches, maxed over outers
    std::vector<MatrixXd> acc(n_outer,
                              MatrixXd::Zero(n_flows, static_cast<int>(gaps.size())));

#pragma omp parallel for schedule(dynamic)
    for (int o = 0; o < n_outer; ++o) {
        MildStepper stepper(space, dt);
        ArrayXd xgrid(np), coeff(np), inc(np);
        VectorXd xmodes(space->n_modes());
        std::vector<VectorXd> fmodes(n_flows, VectorXd(space->n_modes()));
        std::vector<ArrayXd> fgrids(n_flows, ArrayXd(np));
        std::vector<ArrayXd> c_arr(d, ArrayXd(np));
        ArrayXd a_arr(np);

        const WienerPath outer = sample_wiener(seeds, grid, d, static_cast<std::uint64_t>(o), tag);
        const StatePath X = solve_state(model, control, outer, grid, space);

        for (int m = 0; m < n_branches; ++m) {
            const WienerPath wb = branch(outer, knot, seeds, static_cast<std::uint64_t>(m));
            xmodes = X.states[knot].modes();
            xgrid = X.states[knot].grid_values();
            for (int fl = 0; fl < n_flows; ++fl) {
                fmodes[fl] = initial[fl].modes();
                fgrids[fl] = initial[fl].grid_values();
            }
            size_t gi = 0;
            for (int s = knot; s < n && gi < gaps.size(); ++s) {
                const double t = grid.knot(s);
                const double u = control.value(s, xgrid);
                model.b.deriv(t, x, xgrid, u, a_arr);
                for (int j = 0; j < d; ++j) model.sigma[j].deriv(t, x, xgrid, u, c_arr[j]);
                for (int fl = 0; fl < n_flows; ++fl) {
                    inc = dt * a_arr * fgrids[fl];
                    for (int j = 0; j < d; ++j) inc += wb.increments(s, j) * (c_arr[j] * fgrids[fl]);
                    stepper.advance(fmodes[fl], fgrids[fl], inc);
                }
                model.b.value(t, x, xgrid, u, coeff);
                inc = dt * coeff;
                for (int j = 0; j < d; ++j) {
                    model.sigma[j].value(t, x, xgrid, u, coeff);
                    inc += wb.increments(s, j) * coeff;
                }
                stepper.advance(xmodes, xgrid, inc);

                if (s + 1 - knot == gaps[gi]) {
                    for (int fl = 0; fl < n_flows; ++fl)
                        acc[o](fl, static_cast<int>(gi)) +=
                            (fgrids[fl].square().square() * wq).sum();
                    ++gi;
                }
            }
        }
    }

    rep.ratio.assign(gaps.size(), 0.0);
    rep.weighted.assign(etas.size(), std::vector<double>(gaps.size(), 0.0));
    for (size_t gi = 0; gi < gaps.size(); ++gi) {
        const double gap_t = gaps[static_cast<int>(gi)] * dt;
        for (int o = 0; o < n_outer; ++o) {
            const double r0 = std::pow(acc[o](0, static_cast<int>(gi)) / n_branches, 0.25) / rep.f_norm4;
            rep.ratio[gi] = std::max(rep.ratio[gi], r0);
            for (size_t e = 0; e < etas.size(); ++e) {
                const double re =
                    std::pow(acc[o](1 + static_cast<int>(e), static_cast<int>(gi)) / n_branches, 0.25) /
                    rep.f_norm4;
                rep.weighted[e][gi] = std::max(rep.weighted[e][gi], std::pow(gap_t, etas[e]) * re);
            }
        }
    }
    return rep;
}

}  // namespace smp

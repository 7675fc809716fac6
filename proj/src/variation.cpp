#include "smp/variation.hpp"

#include <cmath>
#include <optional>

namespace smp {

SpikeWindow snap_window(const SpikeSpec& s, const TimeGrid& grid) {
    const double dt = grid.dt();
    SpikeWindow w;
    w.k0 = static_cast<int>(std::llround(s.t0 / dt));
    w.k1 = static_cast<int>(std::llround((s.t0 + s.eps) / dt));
    if (w.k1 <= w.k0) throw std::invalid_argument("spike window collapsed after snapping (eps < dt)");
    if (w.k0 < 1 || w.k1 > grid.n_steps - 1)
        throw std::invalid_argument("spike window must lie strictly inside (0, T)");
    w.t0 = grid.knot(w.k0);
    w.t1 = grid.knot(w.k1);
    const double snapped = w.t1 - w.t0;
    if (std::abs(snapped - s.eps) > 0.25 * s.eps)
        throw std::invalid_argument("spike window off-grid: snapping would distort eps by more than 25%");
    return w;
}

ControlPath spike(const ControlPath& u, const SpikeSpec& s, const TimeGrid& grid) {
    const SpikeWindow w = snap_window(s, grid);
    ControlPath v = s.v;
    ControlPath base = u;
    return ControlPath::feedback([w, base, v](int knot, CArr state) {
        return (knot >= w.k0 && knot < w.k1) ? v.value(knot, state) : base.value(knot, state);
    });
}

DeltaFields delta_fields(const ProblemModel& model, const StatePath& X, const ControlPath&,
                         const SpikeSpec& s, const TimeGrid& grid, const SpacePtr& space) {
    DeltaFields out;
    out.window = snap_window(s, grid);
    const int len = out.window.length();
    const int d = model.noise_dim();
    const int np = space->n_points();
    const ArrayXd& x = space->grid().points();

    out.db.assign(len, ArrayXd(np));
    out.dbp.assign(len, ArrayXd(np));
    out.dl.assign(len, ArrayXd(np));
    out.ds.assign(len, std::vector<ArrayXd>(d, ArrayXd(np)));
    out.dsp.assign(len, std::vector<ArrayXd>(d, ArrayXd(np)));

    ArrayXd at_u(np), at_v(np);
    for (int k = out.window.k0; k < out.window.k1; ++k) {
        const int i = k - out.window.k0;
        const double t = grid.knot(k);
        const ArrayXd& state = X.states[k].grid_values();
        const double uu = X.controls[k];
        const double uv = s.v.value(k, state);
        auto diff = [&](const Nemytskii::Fn& fn, ArrayXd& dst) {
            fn(t, x, state, uv, at_v);
            fn(t, x, state, uu, at_u);
            dst = at_v - at_u;
        };
        diff(model.b.value, out.db[i]);
        diff(model.b.deriv, out.dbp[i]);
        diff(model.l.value, out.dl[i]);
        for (int j = 0; j < d; ++j) {
            diff(model.sigma[j].value, out.ds[i][j]);
            diff(model.sigma[j].deriv, out.dsp[i][j]);
        }
    }
    return out;
}

namespace {

// Shared linearized coefficients a = b'(t,.,X_t,u_t), b_j = sigma_j'(t,.,X_t,u_t).
void fill_linearized(const ProblemModel& model, const StatePath& X, const TimeGrid& grid,
                     const SpacePtr& space, int k, LinearStepCoeffs& c) {
    const double t = grid.knot(k);
    const ArrayXd& x = space->grid().points();
    const ArrayXd& state = X.states[k].grid_values();
    const double u = X.controls[k];
    model.b.deriv(t, x, state, u, c.a);
    for (int j = 0; j < model.noise_dim(); ++j) model.sigma[j].deriv(t, x, state, u, c.b[j]);
}

}  // namespace

std::vector<SpectralField> first_variation(const ProblemModel& model, const StatePath& X,
                                           const DeltaFields& deltas, const WienerPath& w,
                                           const TimeGrid& grid, const SpacePtr& space) {
    LinearSPDESpec spec;
    spec.start_knot = 0;
    spec.initial = SpectralField::zero(space);
    spec.bound_a = model.bound_K + 1.0;
    spec.bound_b = model.bound_K + 1.0;
    spec.coeffs = [&](int k, LinearStepCoeffs& c) {
        fill_linearized(model, X, grid, space, k, c);
        if (deltas.in_window(k)) {
            const int i = deltas.local(k);
            c.alpha = deltas.db[i];
            for (int j = 0; j < model.noise_dim(); ++j) c.beta[j] = deltas.ds[i][j];
        } else {
            c.alpha.setZero();
            for (auto& bj : c.beta) bj.setZero();
        }
    };
    return solve_linear(spec, w, grid);
}

std::vector<SpectralField> second_variation(const ProblemModel& model, const StatePath& X,
                                            const DeltaFields& deltas,
                                            const std::vector<SpectralField>& Y, const WienerPath& w,
                                            const TimeGrid& grid, const SpacePtr& space) {
    const ArrayXd& x = space->grid().points();
    LinearSPDESpec spec;
    spec.start_knot = 0;
    spec.initial = SpectralField::zero(space);
    spec.bound_a = model.bound_K + 1.0;
    spec.bound_b = model.bound_K + 1.0;
    ArrayXd work(space->n_points());
    spec.coeffs = [&, work](int k, LinearStepCoeffs& c) mutable {
        fill_linearized(model, X, grid, space, k, c);
        const double t = grid.knot(k);
        const ArrayXd& state = X.states[k].grid_values();
        const double u = X.controls[k];
        const ArrayXd& yk = Y[k].grid_values();
        model.b.deriv2(t, x, state, u, work);
        c.alpha = 0.5 * work * yk.square();
        for (int j = 0; j < model.noise_dim(); ++j) {
            model.sigma[j].deriv2(t, x, state, u, work);
            c.beta[j] = 0.5 * work * yk.square();
        }
        if (deltas.in_window(k)) {
            const int i = deltas.local(k);
            c.alpha += deltas.db[i] + deltas.dbp[i] * yk;
            for (int j = 0; j < model.noise_dim(); ++j) c.beta[j] += deltas.dsp[i][j] * yk;
        }
    };
    return solve_linear(spec, w, grid);
}

VariationBundle make_bundle(const ProblemModel& model, const ControlPath& u, const SpikeSpec& s,
                            const WienerPath& w, const TimeGrid& grid, const SpacePtr& space) {
    VariationBundle b;
    b.X = solve_state(model, u, w, grid, space);
    b.Xeps = solve_state(model, spike(u, s, grid), w, grid, space);
    b.deltas = delta_fields(model, b.X, u, s, grid, space);
    b.Y = first_variation(model, b.X, b.deltas, w, grid, space);
    b.Z = second_variation(model, b.X, b.deltas, b.Y, w, grid, space);
    return b;
}

namespace {

struct KnotAccum {
    // per (eps, knot): sums and squared sums across samples
    std::vector<MatrixXd> sum, sum2;  // each entry: n_eps x n_knots
    KnotAccum(int n_stats, int n_eps, int n_knots)
        : sum(n_stats, MatrixXd::Zero(n_eps, n_knots)), sum2(n_stats, MatrixXd::Zero(n_eps, n_knots)) {}
    void add(int stat, int e, int k, double v) {
        sum[stat](e, k) += v;
        sum2[stat](e, k) += v * v;
    }
    void merge(const KnotAccum& other) {
        for (size_t s = 0; s < sum.size(); ++s) {
            sum[s] += other.sum[s];
            sum2[s] += other.sum2[s];
        }
    }
};

constexpr int kStatY4 = 0;    // ||Y||_4^4
constexpr int kStatZ2 = 1;    // ||Z||_2^2
constexpr int kStatRes = 2;   // ||Xeps - X - Y - Z||_2^2
constexpr int kNumKnotStats = 3;

}  // namespace

std::vector<SweepRow> variation_sweep(const ProblemModel& model, const ControlPath& u,
                                      const SweepConfig& cfg, const SeedPolicy& seeds,
                                      const TimeGrid& grid, const SpacePtr& space,
                                      const AdjointPath* adj) {
    const int n_eps = static_cast<int>(cfg.eps_values.size());
    const int n = grid.n_steps;
    const int np = space->n_points();
    const int d = model.noise_dim();
    const int N = cfg.n_samples;
    const double dt = grid.dt();
    const ArrayXd& x = space->grid().points();
    const auto& wq = space->grid().weights();

    // windows share t0, so the curvature knots [k0, n] coincide across eps
    std::vector<SpikeWindow> windows;
    int k0 = n;
    for (double e : cfg.eps_values) {
        SpikeSpec s{cfg.t0, e, cfg.v};
        windows.push_back(snap_window(s, grid));
        k0 = std::min(k0, windows.back().k0);
    }

    // fixed-size sample blocks so the reduction order does not depend on the
    // worker count
    const int block_size = 16;
    const int n_blocks = (N + block_size - 1) / block_size;
    std::vector<KnotAccum> accums(n_blocks, KnotAccum(kNumKnotStats, n_eps, n + 1));

    MatrixXd j_diff(n_eps, N), prelim(n_eps, N), adjexp(n_eps, N), quad_l(n_eps, N), quad_direct(n_eps, N);
    j_diff.setZero();
    prelim.setZero();
    adjexp.setZero();
    quad_l.setZero();
    quad_direct.setZero();

#pragma omp parallel for schedule(dynamic)
    for (int blk = 0; blk < n_blocks; ++blk) {
        ArrayXd lp(np), lpp(np), hp(np), hpp(np);
        std::optional<AdjointEvaluator> ev;
        if (adj) ev.emplace(*adj);
        std::vector<ArrayXd> hbar;      // along [k0, n-1]
        std::vector<ArrayXd> padj;      // p grid on window knots
        std::vector<std::vector<ArrayXd>> qadj;
        ArrayXd hbar_T(np);
        for (int i = blk * block_size; i < std::min(N, (blk + 1) * block_size); ++i) {
            const WienerPath w = sample_wiener(seeds, grid, d, static_cast<std::uint64_t>(i), cfg.tag);
            const StatePath X = solve_state(model, u, w, grid, space);

            // cost-derivative fields along the base path (shared by all eps)
            std::vector<ArrayXd> lp_k(n), lpp_k(n);
            for (int k = 0; k < n; ++k) {
                const double t = grid.knot(k);
                model.l.deriv(t, x, X.states[k].grid_values(), X.controls[k], lp);
                model.l.deriv2(t, x, X.states[k].grid_values(), X.controls[k], lpp);
                lp_k[k] = lp;
                lpp_k[k] = lpp;
            }
            model.h.deriv(x, X.states[n].grid_values(), hp);
            model.h.deriv2(x, X.states[n].grid_values(), hpp);

            if (adj) {
                // curvature along the path and adjoint fields on the widest window
                hbar.assign(n - k0, ArrayXd(np));
                for (int k = k0; k < n; ++k)
                    curvature_at(model, *ev, k, X.states[k].modes(), X.states[k].grid_values(),
                                 X.controls[k], hbar[k - k0]);
                terminal_curvature(model, space, X.states[n].grid_values(), hbar_T);
                int k1max = 0;
                for (const auto& wd : windows) k1max = std::max(k1max, wd.k1);
                padj.assign(k1max - k0, ArrayXd(np));
                qadj.assign(k1max - k0, std::vector<ArrayXd>(d, ArrayXd(np)));
                for (int k = k0; k < k1max; ++k) {
                    ev->eval(k, X.states[k].modes(), X.states[k].grid_values(), true);
                    padj[k - k0] = ev->p_grid();
                    for (int j = 0; j < d; ++j) qadj[k - k0][j] = ev->q_grid(j);
                }
            }

            const double cost_base = path_cost(model, X, grid, space);

            for (int e = 0; e < n_eps; ++e) {
                SpikeSpec s{cfg.t0, cfg.eps_values[e], cfg.v};
                const DeltaFields deltas = delta_fields(model, X, u, s, grid, space);
                const StatePath Xeps = solve_state(model, spike(u, s, grid), w, grid, space);
                const std::vector<SpectralField> Y = first_variation(model, X, deltas, w, grid, space);

                double acc_prelim = 0.0, acc_adj = 0.0, acc_quadl = 0.0, acc_quad_direct = 0.0;
                // window terms
                for (int k = deltas.window.k0; k < deltas.window.k1; ++k) {
                    const int loc = deltas.local(k);
                    const double dlint = (deltas.dl[loc] * wq).sum();
                    acc_prelim += dt * dlint;
                    if (adj) {
                        double v = dlint + (padj[k - k0] * deltas.db[loc] * wq).sum();
                        for (int j = 0; j < d; ++j) v += (qadj[k - k0][j] * deltas.ds[loc][j] * wq).sum();
                        acc_adj += dt * v;
                    }
                }

                // running first/second-order terms, streamed with the Z solve
                LinearSPDESpec zspec;
                zspec.start_knot = 0;
                zspec.initial = SpectralField::zero(space);
                zspec.bound_a = model.bound_K + 1.0;
                zspec.bound_b = model.bound_K + 1.0;
                ArrayXd w2(np);
                zspec.coeffs = [&, w2](int k, LinearStepCoeffs& c) mutable {
                    fill_linearized(model, X, grid, space, k, c);
                    const double t = grid.knot(k);
                    const ArrayXd& state = X.states[k].grid_values();
                    const double uu = X.controls[k];
                    const ArrayXd& yk = Y[k].grid_values();
                    model.b.deriv2(t, x, state, uu, w2);
                    c.alpha = 0.5 * w2 * yk.square();
                    for (int j = 0; j < d; ++j) {
                        model.sigma[j].deriv2(t, x, state, uu, w2);
                        c.beta[j] = 0.5 * w2 * yk.square();
                    }
                    if (deltas.in_window(k)) {
                        const int loc = deltas.local(k);
                        c.alpha += deltas.db[loc] + deltas.dbp[loc] * yk;
                        for (int j = 0; j < d; ++j) c.beta[j] += deltas.dsp[loc][j] * yk;
                    }
                };

                KnotAccum& acc = accums[blk];
                run_linear(zspec, w, grid, [&](int k, const VectorXd&, const ArrayXd& zg) {
                    const ArrayXd& yg = Y[k].grid_values();
                    acc.add(kStatY4, e, k, (yg.square().square() * wq).sum());
                    acc.add(kStatZ2, e, k, (zg.square() * wq).sum());
                    const ArrayXd res =
                        Xeps.states[k].grid_values() - X.states[k].grid_values() - yg - zg;
                    acc.add(kStatRes, e, k, (res.square() * wq).sum());
                    if (k < n) {
                        const double yz = (lp_k[k] * (yg + zg) * wq).sum();
                        const double quad = 0.5 * (lpp_k[k] * yg.square() * wq).sum();
                        acc_prelim += dt * (yz + quad);
                        acc_quadl += dt * quad;
                        acc_quad_direct += dt * (yg.square() * wq).sum();
                        if (adj && k >= k0)
                            acc_adj += dt * 0.5 * (hbar[k - k0] * yg.square() * wq).sum();
                    } else {
                        const double term = ((hp * (yg + zg) + 0.5 * hpp * yg.square()) * wq).sum();
                        acc_prelim += term;
                        if (adj) acc_adj += 0.5 * (hbar_T * yg.square() * wq).sum();
                    }
                });

                const double jd = path_cost(model, Xeps, grid, space) - cost_base;
                j_diff(e, i) = jd;
                prelim(e, i) = acc_prelim;
                adjexp(e, i) = acc_adj;
                quad_l(e, i) = acc_quadl;
                quad_direct(e, i) = acc_quad_direct;
            }
        }
    }

    // deterministic merge
    KnotAccum total(kNumKnotStats, n_eps, n + 1);
    for (const auto& a : accums) total.merge(a);

    std::vector<SweepRow> rows(n_eps);
    for (int e = 0; e < n_eps; ++e) {
        SweepRow& r = rows[e];
        r.eps = grid.dt() * windows[e].length();  // snapped value

        auto max_knot = [&](int stat, double power) {
            int karg = 0;
            double best = -1.0;
            for (int k = 0; k <= n; ++k) {
                const double m = total.sum[stat](e, k) / N;
                if (m > best) {
                    best = m;
                    karg = k;
                }
            }
            const double mean = total.sum[stat](e, karg) / N;
            const double var =
                std::max(0.0, total.sum2[stat](e, karg) / N - mean * mean) / std::max(1, N - 1);
            return std::pair<double, double>(std::pow(mean, power), std::sqrt(var));
        };
        std::tie(r.norm_Y_p4, r.se_Y) = max_knot(kStatY4, 0.25);
        std::tie(r.norm_Z_p2, r.se_Z) = max_knot(kStatZ2, 0.5);
        std::tie(r.residual, r.se_residual) = max_knot(kStatRes, 0.5);

        auto mean_se = [&](const MatrixXd& m) {
            const double mu = m.row(e).mean();
            const double var = (m.row(e).array() - mu).square().sum() / std::max(1, N - 1);
            return std::pair<double, double>(mu, std::sqrt(var / N));
        };
        std::tie(r.j_diff, r.se_j_diff) = mean_se(j_diff);
        r.expansion_prelim = prelim.row(e).mean();
        r.quad_l_term = quad_l.row(e).mean();
        auto qd = mean_se(quad_direct);
        r.quad_l_direct = qd.first;
        r.quad_l_se = qd.second;

        MatrixXd gap = j_diff - prelim;
        std::tie(r.gap_prelim, r.se_gap_prelim) = mean_se(gap);
        if (adj) {
            r.expansion_adjoint = mean_se(adjexp).first;
            MatrixXd gap2 = j_diff - adjexp;
            std::tie(r.gap_adjoint, r.se_gap_adjoint) = mean_se(gap2);
        }
    }
    return rows;
}

}  // namespace smp

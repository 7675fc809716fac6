#include "smp/problem.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace smp {

ControlPath ControlPath::constant(double u) {
    ControlPath c;
    c.kind_ = Kind::Constant;
    c.constant_ = u;
    return c;
}

ControlPath ControlPath::table(VectorXd per_knot) {
    ControlPath c;
    c.kind_ = Kind::Table;
    c.table_ = std::move(per_knot);
    return c;
}

ControlPath ControlPath::feedback(FeedbackRule rule) {
    ControlPath c;
    c.kind_ = Kind::Feedback;
    c.rule_ = std::move(rule);
    return c;
}

double ControlPath::value(int knot, CArr state_grid) const {
    switch (kind_) {
        case Kind::Constant:
            return constant_;
        case Kind::Table:
            if (knot < 0 || knot >= table_.size()) throw std::out_of_range("ControlPath: knot outside table");
            return table_[knot];
        case Kind::Feedback:
            return rule_(knot, state_grid);
    }
    return constant_;
}

namespace {

double param(const std::map<std::string, double>& params, const std::string& key, double fallback) {
    auto it = params.find(key);
    return it == params.end() ? fallback : it->second;
}

constexpr double kPi = std::numbers::pi;

Nemytskii constant_coeff(double c) {
    Nemytskii n;
    n.value = [c](double, CArr, CArr, double, MArr out) {
        out.setConstant(c);
    };
    n.deriv = [](double, CArr, CArr, double, MArr out) {
        out.setZero();
    };
    n.deriv2 = n.deriv;
    return n;
}

}  // namespace

ModelCheckReport validate_model(const ProblemModel& model, const SpectralSpace& space,
                                const SeedPolicy& seeds, int n_trials) {
    ModelCheckReport report;
    Rng rng = seeds.stream(SeedPolicy::tag("model-check"), 0);
    const int n = space.n_points();
    const double r_scale = 2.0 + 4.0 * model.x0.grid_values().abs().maxCoeff();
    const double fd_h = 1e-4;
    const double tol = 1e-4 * (1.0 + model.bound_K);

    ArrayXd x = space.grid().points();
    ArrayXd r(n), out(n), lo(n), hi(n), d1(n), d2(n);

    auto check_coeff = [&](const Nemytskii& c, const char* name, bool u_dependent) {
        for (int trial = 0; trial < n_trials && report.ok; ++trial) {
            const double t = rng.uniform() * model.T;
            const double u = u_dependent && !model.actions.empty()
                                 ? model.actions[static_cast<size_t>(rng.uniform() * model.actions.size()) %
                                                 model.actions.size()]
                                 : 0.0;
            for (int i = 0; i < n; ++i) r[i] = r_scale * (2.0 * rng.uniform() - 1.0);
            c.value(t, x, r, u, out);
            c.deriv(t, x, r, u, d1);
            c.deriv2(t, x, r, u, d2);
            if (d1.abs().maxCoeff() > model.bound_K + tol || d2.abs().maxCoeff() > model.bound_K + tol) {
                std::ostringstream os;
                os << name << ": derivative bound K=" << model.bound_K << " exceeded";
                report = {false, os.str()};
                return;
            }
            const ArrayXd growth = model.bound_K * (r.abs() + model.psi_bar.grid_values().abs());
            if ((out.abs() - growth).maxCoeff() > tol) {
                std::ostringstream os;
                os << name << ": growth bound K(|r|+|psi|) exceeded";
                report = {false, os.str()};
                return;
            }
            // central-difference consistency of the declared derivative
            c.value(t, x, r + fd_h, u, hi);
            c.value(t, x, r - fd_h, u, lo);
            const double fd_err = ((hi - lo) / (2.0 * fd_h) - d1).abs().maxCoeff();
            if (fd_err > 1e-5 + 1e-3 * model.bound_K) {
                std::ostringstream os;
                os << name << ": derivative callback inconsistent with value (fd error " << fd_err << ")";
                report = {false, os.str()};
                return;
            }
        }
    };

    check_coeff(model.b, "b", true);
    for (size_t j = 0; j < model.sigma.size() && report.ok; ++j) check_coeff(model.sigma[j], "sigma", true);
    check_coeff(model.l, "l", true);

    if (report.ok) {
        // terminal cost: same checks without t, u
        for (int trial = 0; trial < n_trials && report.ok; ++trial) {
            for (int i = 0; i < n; ++i) r[i] = r_scale * (2.0 * rng.uniform() - 1.0);
            model.h.value(x, r, out);
            model.h.deriv(x, r, d1);
            model.h.deriv2(x, r, d2);
            if (d1.abs().maxCoeff() > model.bound_K + tol || d2.abs().maxCoeff() > model.bound_K + tol)
                report = {false, "h: derivative bound K exceeded"};
            model.h.value(x, r + fd_h, hi);
            model.h.value(x, r - fd_h, lo);
            if (((hi - lo) / (2.0 * fd_h) - d1).abs().maxCoeff() > 1e-5 + 1e-3 * model.bound_K)
                report = {false, "h: derivative callback inconsistent with value"};
        }
    }
    return report;
}

namespace {

/// Linear-quadratic benchmark: affine coefficients, quadratic cost.
///   b = beta r + gamma u,  sigma_j = delta r + rho u + sigma0,
///   l = ql r^2 + ru u^2 + cross u r,  h = qT r^2.
ProblemModel make_lq(const std::map<std::string, double>& p, const SpacePtr& space) {
    const double beta = param(p, "beta", 0.5);
    const double gamma = param(p, "gamma", 0.3);
    const double delta = param(p, "delta", 0.4);
    const double rho = param(p, "rho", 0.2);
    const double sigma0 = param(p, "sigma0", 0.3);
    const double ql = param(p, "ql", 1.0);
    const double ru = param(p, "ru", 0.1);
    const double cross = param(p, "cross", 0.0);
    const double qT = param(p, "qT", 1.0);
    const double amp = param(p, "x0_amp", 1.0);
    const int d = static_cast<int>(param(p, "d", 1.0));

    ProblemModel m;
    m.b.value = [beta, gamma](double, CArr, CArr r, double u, MArr out) {
        out = beta * r + gamma * u;
    };
    m.b.deriv = [beta](double, CArr, CArr, double, MArr out) {
        out.setConstant(beta);
    };
    m.b.deriv2 = [](double, CArr, CArr, double, MArr out) { out.setZero(); };
    for (int j = 0; j < d; ++j) {
        const double scale = (j == 0) ? 1.0 : 0.5;
        Nemytskii s;
        s.value = [delta, rho, sigma0, scale](double, CArr, CArr r, double u, MArr out) {
            out = scale * (delta * r + rho * u + sigma0);
        };
        s.deriv = [delta, scale](double, CArr, CArr, double, MArr out) {
            out.setConstant(scale * delta);
        };
        s.deriv2 = [](double, CArr, CArr, double, MArr out) { out.setZero(); };
        m.sigma.push_back(std::move(s));
    }
    m.l.value = [ql, ru, cross](double, CArr, CArr r, double u, MArr out) {
        out = ql * r.square() + ru * u * u + cross * u * r;
    };
    m.l.deriv = [ql, cross](double, CArr, CArr r, double u, MArr out) {
        out = 2.0 * ql * r + cross * u;
    };
    m.l.deriv2 = [ql](double, CArr, CArr, double, MArr out) {
        out.setConstant(2.0 * ql);
    };
    m.h.value = [qT](CArr, CArr r, MArr out) { out = qT * r.square(); };
    m.h.deriv = [qT](CArr, CArr r, MArr out) { out = 2.0 * qT * r; };
    m.h.deriv2 = [qT](CArr, CArr, MArr out) { out.setConstant(2.0 * qT); };
    m.x0 = SpectralField::from_function(space, [amp](double x) { return amp * std::sin(kPi * x); });
    m.T = param(p, "T", 1.0);
    m.actions = {-1.0, 0.0, 1.0};
    m.bound_K = 8.0 * (std::abs(beta) + std::abs(gamma) + std::abs(delta) + std::abs(rho) + sigma0 + ql + qT +
                       std::abs(cross) + ru + 1.0);
    m.psi_bar = SpectralField::from_function(space, [](double) { return 1.0; });
    return m;
}

/// Nonconvex showcase: two-point control set acting in the diffusion.
///   b = b_amp tanh(r)  (control-free, so the spike enters through sigma),
///   sigma_1 = (gamma r + rho u + c) s(x),  s(x) = sin(pi x) + s2 sin(2 pi x),
///   l = a_l r^2 + kappa u,  h = a_h r^2.
/// The initial datum and the noise profile mix odd and even modes so that no
/// mode is identically dead along the dynamics.
ProblemModel make_nonconvex_sigma(const std::map<std::string, double>& p, const SpacePtr& space) {
    const double b_amp = param(p, "b_amp", 0.5);
    const double gamma = param(p, "gamma", 0.4);
    const double rho = param(p, "rho", 0.6);
    const double c = param(p, "c", 0.8);
    const double a_l = param(p, "a_l", 1.0);
    const double kappa = param(p, "kappa", 0.25);
    const double a_h = param(p, "a_h", 0.5);
    const double amp = param(p, "x0_amp", 1.0);
    const double s2 = param(p, "s2", 0.5);
    const double x0_2 = param(p, "x0_amp2", 0.4);

    ProblemModel m;
    m.b.value = [b_amp](double, CArr, CArr r, double, MArr out) {
        out = b_amp * r.tanh();
    };
    m.b.deriv = [b_amp](double, CArr, CArr r, double, MArr out) {
        out = b_amp * (1.0 - r.tanh().square());
    };
    m.b.deriv2 = [b_amp](double, CArr, CArr r, double, MArr out) {
        const ArrayXd th = r.tanh();
        out = -2.0 * b_amp * th * (1.0 - th.square());
    };
    Nemytskii s;
    s.value = [gamma, rho, c, s2](double, CArr x, CArr r, double u, MArr out) {
        out = (gamma * r + rho * u + c) * ((kPi * x).sin() + s2 * (2.0 * kPi * x).sin());
    };
    s.deriv = [gamma, s2](double, CArr x, CArr, double, MArr out) {
        out = gamma * ((kPi * x).sin() + s2 * (2.0 * kPi * x).sin());
    };
    s.deriv2 = [](double, CArr, CArr, double, MArr out) { out.setZero(); };
    m.sigma.push_back(std::move(s));
    m.l.value = [a_l, kappa](double, CArr, CArr r, double u, MArr out) {
        out = a_l * r.square() + kappa * u;
    };
    m.l.deriv = [a_l](double, CArr, CArr r, double, MArr out) { out = 2.0 * a_l * r; };
    m.l.deriv2 = [a_l](double, CArr, CArr, double, MArr out) {
        out.setConstant(2.0 * a_l);
    };
    m.h.value = [a_h](CArr, CArr r, MArr out) { out = a_h * r.square(); };
    m.h.deriv = [a_h](CArr, CArr r, MArr out) { out = 2.0 * a_h * r; };
    m.h.deriv2 = [a_h](CArr, CArr, MArr out) { out.setConstant(2.0 * a_h); };
    m.x0 = SpectralField::from_function(space, [amp, x0_2](double x) {
        return amp * std::sin(kPi * x) + x0_2 * std::sin(2.0 * kPi * x);
    });
    m.T = param(p, "T", 1.0);
    m.actions = {-1.0, 1.0};
    m.bound_K = 8.0 * (b_amp + gamma + rho + c + a_l + kappa + a_h + 1.0);
    m.psi_bar = SpectralField::from_function(space, [](double) { return 1.0; });
    return m;
}

/// Decoupled models used by the closed-form adjoint checks: zero drift,
/// constant diffusion, and a cost whose derivatives are explicit.
ProblemModel make_decoupled(const std::map<std::string, double>& p, const SpacePtr& space, bool quadratic_h) {
    const double sigma0 = param(p, "sigma0", 0.4);
    const double amp = param(p, "x0_amp", 1.0);
    ProblemModel m;
    m.b = constant_coeff(0.0);
    m.sigma.push_back(constant_coeff(sigma0));
    m.l = constant_coeff(0.0);
    if (quadratic_h) {
        m.h.value = [](CArr, CArr r, MArr out) { out = 0.5 * r.square(); };
        m.h.deriv = [](CArr, CArr r, MArr out) { out = r; };
        m.h.deriv2 = [](CArr, CArr, MArr out) { out.setOnes(); };
    } else {
        m.h.value = [](CArr, CArr r, MArr out) { out = r; };
        m.h.deriv = [](CArr, CArr, MArr out) { out.setOnes(); };
        m.h.deriv2 = [](CArr, CArr, MArr out) { out.setZero(); };
    }
    m.x0 = SpectralField::from_function(space, [amp](double x) { return amp * std::sin(kPi * x); });
    m.T = param(p, "T", 1.0);
    m.actions = {0.0};
    m.bound_K = 4.0 * (sigma0 + 2.0);
    m.psi_bar = SpectralField::from_function(space, [](double) { return 1.0; });
    return m;
}

}  // namespace

ProblemModel make_scenario(const std::string& name, const std::map<std::string, double>& params,
                           const SpacePtr& space) {
    if (name == "lq") return make_lq(params, space);
    if (name == "nonconvex-sigma") return make_nonconvex_sigma(params, space);
    if (name == "adjoint-closedform") return make_decoupled(params, space, false);
    if (name == "second-adjoint-closedform") return make_decoupled(params, space, true);
    throw std::invalid_argument("unknown scenario '" + name + "'");
}

std::vector<std::string> scenario_names() {
    return {"lq", "nonconvex-sigma", "adjoint-closedform", "second-adjoint-closedform"};
}

}  // namespace smp

#pragma once

#include "smp/spectral.hpp"
#include "smp/stochastics.hpp"

#include <map>
#include <string>
#include <vector>

namespace smp {

using CArr = Eigen::Ref<const ArrayXd>;
using MArr = Eigen::Ref<ArrayXd>;

/// Pointwise-in-x (Nemytskii) coefficient with first and second derivatives
/// in the state value r. Callbacks fill a presized grid-value array for a
/// whole field; `out` must not be resized.
struct Nemytskii {
    using Fn = std::function<void(double t, CArr x, CArr r, double u, MArr out)>;
    Fn value;
    Fn deriv;   // d/dr
    Fn deriv2;  // d2/dr2
};

struct TerminalCost {
    using Fn = std::function<void(CArr x, CArr r, MArr out)>;
    Fn value;
    Fn deriv;
    Fn deriv2;
};

/// Coefficients, cost, initial datum and control set of one control problem.
struct ProblemModel {
    Nemytskii b;                   // drift
    std::vector<Nemytskii> sigma;  // one diffusion coefficient per noise coordinate
    Nemytskii l;                   // running cost density
    TerminalCost h;                // terminal cost density
    SpectralField x0;
    double T = 1.0;
    std::vector<double> actions;   // finite control set U
    double bound_K = 0.0;          // derivative / growth bound (spot-checked)
    SpectralField psi_bar;         // growth profile in |phi| <= K (|r| + |psi_bar(x)|)

    int noise_dim() const { return static_cast<int>(sigma.size()); }
};

/// Progressively measurable control rule: the action at knot k may depend
/// only on k and on the state at knot k.
class ControlPath {
public:
    using FeedbackRule = std::function<double(int knot, CArr state_grid)>;

    ControlPath() = default;

    static ControlPath constant(double u);
    static ControlPath table(VectorXd per_knot);
    static ControlPath feedback(FeedbackRule rule);

    double value(int knot, CArr state_grid) const;

private:
    enum class Kind { Constant, Table, Feedback };
    Kind kind_ = Kind::Constant;
    double constant_ = 0.0;
    VectorXd table_;
    FeedbackRule rule_;
};

struct ModelCheckReport {
    bool ok = true;
    std::string message;  // first violation found, empty when clean
};

/// Spot-checks the declared bounds and the consistency of the derivative
/// callbacks (central differences) on randomly sampled (t, x, r, u) points.
ModelCheckReport validate_model(const ProblemModel& model, const SpectralSpace& space,
                                const SeedPolicy& seeds, int n_trials = 256);

/// Named scenario registry; scalar parameters override the built-in defaults.
ProblemModel make_scenario(const std::string& name, const std::map<std::string, double>& params,
                           const SpacePtr& space);
std::vector<std::string> scenario_names();

}  // namespace smp

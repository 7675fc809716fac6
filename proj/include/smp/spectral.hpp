#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <stdexcept>

namespace smp {

using Eigen::ArrayXd;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Uniform midpoint collocation grid on D = (0,1) with Lebesgue measure.
/// Points x_i = (2i-1)/(2n), i = 1..n; quadrature weights 1/n sum to m(D) = 1.
class SpatialGrid {
public:
    explicit SpatialGrid(int n_points);

    int n_points() const { return static_cast<int>(points_.size()); }
    const ArrayXd& points() const { return points_; }
    const ArrayXd& weights() const { return weights_; }

    /// Quadrature of grid values against the measure.
    double integrate(const ArrayXd& values) const { return (values * weights_).sum(); }

private:
    ArrayXd points_;
    ArrayXd weights_;
};

/// Spectrum of the Dirichlet Laplacian A = d²/dx² on (0,1):
/// -A has eigenvalues lambda_k = (k*pi)², eigenfunctions e_k(x) = sqrt(2) sin(k*pi*x).
class DirichletLaplacian {
public:
    explicit DirichletLaplacian(int n_modes);
    /// Custom spectrum hook used by tests (e.g. all-zero eigenvalues to reduce
    /// the exponential-Euler step to plain Euler).
    static DirichletLaplacian with_eigenvalues(ArrayXd eigenvalues);

    int n_modes() const { return static_cast<int>(eigenvalues_.size()); }
    const ArrayXd& eigenvalues() const { return eigenvalues_; }

private:
    DirichletLaplacian() = default;
    ArrayXd eigenvalues_;
};

/// Grid, spectrum and the sine transform pair between them. Shared immutably
/// by every field; all members are computed once at construction.
class SpectralSpace {
public:
    SpectralSpace(DirichletLaplacian laplacian, SpatialGrid grid);

    static std::shared_ptr<const SpectralSpace> make(int n_modes, int n_points);
    /// Default pseudo-spectral sizing n_points = 2*n_modes.
    static std::shared_ptr<const SpectralSpace> make(int n_modes);

    int n_modes() const { return laplacian_.n_modes(); }
    int n_points() const { return grid_.n_points(); }
    const SpatialGrid& grid() const { return grid_; }
    const DirichletLaplacian& laplacian() const { return laplacian_; }
    const ArrayXd& eigenvalues() const { return laplacian_.eigenvalues(); }

    /// synthesis(i,k) = sqrt(2) sin((k+1) pi x_i); grid values = synthesis * modes.
    const MatrixXd& synthesis() const { return synthesis_; }
    /// modes = analysis * grid values (discrete sine projection).
    const MatrixXd& analysis() const { return analysis_; }

    VectorXd to_modes(const ArrayXd& grid_values) const { return analysis_ * grid_values.matrix(); }
    ArrayXd to_grid(const VectorXd& modes) const { return (synthesis_ * modes).array(); }

private:
    DirichletLaplacian laplacian_;
    SpatialGrid grid_;
    MatrixXd synthesis_;
    MatrixXd analysis_;
};

using SpacePtr = std::shared_ptr<const SpectralSpace>;

/// A function on (0,1) held in the Dirichlet sine basis together with its
/// cached collocation values. The two representations are kept coherent:
/// grid values always equal the synthesis of the modes.
class SpectralField {
public:
    SpectralField() = default;

    static SpectralField zero(SpacePtr space);
    static SpectralField from_modes(SpacePtr space, VectorXd modes);
    /// Projects arbitrary grid values onto the mode span, then re-synthesizes
    /// (content outside the span is filtered out).
    static SpectralField from_grid(SpacePtr space, const ArrayXd& grid_values);
    /// Samples f pointwise on the grid and projects.
    static SpectralField from_function(SpacePtr space, const std::function<double(double)>& f);

    bool valid() const { return space_ != nullptr; }
    const SpacePtr& space() const { return space_; }
    const VectorXd& modes() const { return modes_; }
    const ArrayXd& grid_values() const { return grid_; }
    int n_modes() const { return static_cast<int>(modes_.size()); }
    bool all_finite() const { return modes_.allFinite() && grid_.allFinite(); }

    SpectralField& operator+=(const SpectralField& rhs);
    SpectralField& operator-=(const SpectralField& rhs);
    SpectralField& operator*=(double a);

    friend SpectralField operator+(SpectralField lhs, const SpectralField& rhs) { return lhs += rhs; }
    friend SpectralField operator-(SpectralField lhs, const SpectralField& rhs) { return lhs -= rhs; }
    friend SpectralField operator*(double a, SpectralField f) { return f *= a; }

private:
    SpectralField(SpacePtr space, VectorXd modes, ArrayXd grid)
        : space_(std::move(space)), modes_(std::move(modes)), grid_(std::move(grid)) {}

    SpacePtr space_;
    VectorXd modes_;
    ArrayXd grid_;
};

/// e^{tA} f: mode k decays by exp(-lambda_k t). t = 0 is the identity.
SpectralField apply_semigroup(const SpectralField& f, double t);

/// (-A)^{sign*eta} f for eta in [0,1], sign in {+1,-1}.
SpectralField apply_fractional_power(const SpectralField& f, double eta, int sign);

/// Quadrature approximation of the L^p(D) norm, p in [1, inf).
double lp_norm(const SpectralField& f, double p);

/// Quadrature of the product of two fields, <f, g>_{L^2}.
double inner_product(const SpectralField& f, const SpectralField& g);

/// Nemytskii product: grid values multiplied pointwise, then re-projected.
SpectralField multiply_pointwise(const SpectralField& f, const SpectralField& g);

void require_same_space(const SpectralField& f, const SpectralField& g);

}  // namespace smp

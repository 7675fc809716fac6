#include "smp/spectral.hpp"

#include <cmath>
#include <numbers>

namespace smp {

namespace {
constexpr double kPi = std::numbers::pi;
}

SpatialGrid::SpatialGrid(int n_points) {
    if (n_points < 2) throw std::invalid_argument("SpatialGrid: n_points must be >= 2");
    points_.resize(n_points);
    for (int i = 0; i < n_points; ++i) points_[i] = (2.0 * i + 1.0) / (2.0 * n_points);
    weights_ = ArrayXd::Constant(n_points, 1.0 / n_points);
}

DirichletLaplacian::DirichletLaplacian(int n_modes) {
    if (n_modes < 1) throw std::invalid_argument("DirichletLaplacian: n_modes must be >= 1");
    eigenvalues_.resize(n_modes);
    for (int k = 0; k < n_modes; ++k) {
        const double kpi = (k + 1) * kPi;
        eigenvalues_[k] = kpi * kpi;
    }
}

DirichletLaplacian DirichletLaplacian::with_eigenvalues(ArrayXd eigenvalues) {
    if (eigenvalues.size() < 1) throw std::invalid_argument("DirichletLaplacian: empty spectrum");
    DirichletLaplacian op;
    op.eigenvalues_ = std::move(eigenvalues);
    return op;
}

SpectralSpace::SpectralSpace(DirichletLaplacian laplacian, SpatialGrid grid)
    : laplacian_(std::move(laplacian)), grid_(std::move(grid)) {
    const int m = laplacian_.n_modes();
    const int n = grid_.n_points();
    if (m >= n) throw std::invalid_argument("SpectralSpace: need n_points > n_modes for a stable projection");
    synthesis_.resize(n, m);
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < m; ++k)
            synthesis_(i, k) = std::sqrt(2.0) * std::sin((k + 1) * kPi * grid_.points()[i]);
    // Discrete orthogonality sum_i sin(k pi x_i) sin(l pi x_i) = n/2 (k,l < n)
    // makes the projection the exact transpose up to the quadrature weight.
    analysis_ = synthesis_.transpose() / static_cast<double>(n);
}

std::shared_ptr<const SpectralSpace> SpectralSpace::make(int n_modes, int n_points) {
    return std::make_shared<const SpectralSpace>(DirichletLaplacian(n_modes), SpatialGrid(n_points));
}

std::shared_ptr<const SpectralSpace> SpectralSpace::make(int n_modes) {
    return make(n_modes, 2 * n_modes);
}

SpectralField SpectralField::zero(SpacePtr space) {
    VectorXd modes = VectorXd::Zero(space->n_modes());
    ArrayXd grid = ArrayXd::Zero(space->n_points());
    return SpectralField(std::move(space), std::move(modes), std::move(grid));
}

SpectralField SpectralField::from_modes(SpacePtr space, VectorXd modes) {
    if (modes.size() != space->n_modes()) throw std::invalid_argument("from_modes: size mismatch");
    ArrayXd grid = space->to_grid(modes);
    return SpectralField(std::move(space), std::move(modes), std::move(grid));
}

SpectralField SpectralField::from_grid(SpacePtr space, const ArrayXd& grid_values) {
    if (grid_values.size() != space->n_points()) throw std::invalid_argument("from_grid: size mismatch");
    VectorXd modes = space->to_modes(grid_values);
    ArrayXd grid = space->to_grid(modes);
    return SpectralField(std::move(space), std::move(modes), std::move(grid));
}

SpectralField SpectralField::from_function(SpacePtr space, const std::function<double(double)>& f) {
    ArrayXd values(space->n_points());
    for (int i = 0; i < space->n_points(); ++i) values[i] = f(space->grid().points()[i]);
    return from_grid(std::move(space), values);
}

void require_same_space(const SpectralField& f, const SpectralField& g) {
    if (f.space() != g.space()) {
        if (!f.space() || !g.space() || f.space()->n_modes() != g.space()->n_modes() ||
            f.space()->n_points() != g.space()->n_points())
            throw std::invalid_argument("fields live on different grids");
    }
}

SpectralField& SpectralField::operator+=(const SpectralField& rhs) {
    require_same_space(*this, rhs);
    modes_ += rhs.modes_;
    grid_ += rhs.grid_;
    return *this;
}

SpectralField& SpectralField::operator-=(const SpectralField& rhs) {
    require_same_space(*this, rhs);
    modes_ -= rhs.modes_;
    grid_ -= rhs.grid_;
    return *this;
}

SpectralField& SpectralField::operator*=(double a) {
    modes_ *= a;
    grid_ *= a;
    return *this;
}

SpectralField apply_semigroup(const SpectralField& f, double t) {
    if (t < 0.0) throw std::invalid_argument("apply_semigroup: negative time");
    if (t == 0.0) return f;
    VectorXd modes = (f.modes().array() * (-t * f.space()->eigenvalues()).exp()).matrix();
    return SpectralField::from_modes(f.space(), std::move(modes));
}

SpectralField apply_fractional_power(const SpectralField& f, double eta, int sign) {
    if (eta < 0.0 || eta > 1.0) throw std::invalid_argument("apply_fractional_power: eta outside [0,1]");
    if (sign != 1 && sign != -1) throw std::invalid_argument("apply_fractional_power: sign must be +-1");
    if (eta == 0.0) return f;
    VectorXd modes = (f.modes().array() * f.space()->eigenvalues().pow(sign * eta)).matrix();
    return SpectralField::from_modes(f.space(), std::move(modes));
}

double lp_norm(const SpectralField& f, double p) {
    if (p < 1.0) throw std::invalid_argument("lp_norm: p must be >= 1");
    const auto& w = f.space()->grid().weights();
    return std::pow((f.grid_values().abs().pow(p) * w).sum(), 1.0 / p);
}

double inner_product(const SpectralField& f, const SpectralField& g) {
    require_same_space(f, g);
    return f.space()->grid().integrate(f.grid_values() * g.grid_values());
}

SpectralField multiply_pointwise(const SpectralField& f, const SpectralField& g) {
    require_same_space(f, g);
    return SpectralField::from_grid(f.space(), f.grid_values() * g.grid_values());
}

}  // namespace smp

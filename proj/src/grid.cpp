#include "heatctl/grid.hpp"

#include <algorithm>
#include <cmath>

namespace heatctl {

Grid1D build_grid(double x_a, double x_b, int n_nodes, BoundaryCondition bc) {
    if (!(x_a < x_b))
        throw std::invalid_argument("build_grid: x_a must be < x_b");
    if (n_nodes < 3)
        throw std::invalid_argument("build_grid: n_nodes must be >= 3");

    Grid1D g;
    g.x_a = x_a;
    g.x_b = x_b;
    g.n_nodes = n_nodes;
    g.h = (x_b - x_a) / static_cast<double>(n_nodes - 1);
    g.bc = bc;
    g.nodes = Vector::LinSpaced(n_nodes, x_a, x_b);
    g.quad_weights = Vector::Constant(n_nodes, g.h);
    g.quad_weights(0) = 0.5 * g.h;
    g.quad_weights(n_nodes - 1) = 0.5 * g.h;
    return g;
}

namespace {

std::vector<int> nodes_in(const Grid1D& grid, double left, double right) {
    std::vector<int> idx;
    for (int i = 0; i < grid.n_nodes; ++i) {
        const double x = grid.nodes(i);
        if (x >= left && x <= right) idx.push_back(i);
    }
    return idx;
}

} // namespace

ControlWindow build_window(const Grid1D& grid, double omega_left, double omega_right) {
    // Default core: the middle half of omega.
    const double quarter = 0.25 * (omega_right - omega_left);
    return build_window(grid, omega_left, omega_right,
                        omega_left + quarter, omega_right - quarter);
}

ControlWindow build_window(const Grid1D& grid, double omega_left, double omega_right,
                           double omega0_left, double omega0_right) {
    if (!(omega_left < omega_right))
        throw std::invalid_argument("build_window: omega must be a nonempty interval");
    if (omega_left < grid.x_a || omega_right > grid.x_b)
        throw std::invalid_argument("build_window: omega must be contained in the domain");
    if (!(omega_left <= omega0_left && omega0_left < omega0_right && omega0_right <= omega_right))
        throw std::invalid_argument("build_window: omega0 must sit inside omega");

    ControlWindow w;
    w.omega_left = omega_left;
    w.omega_right = omega_right;
    w.omega0_left = omega0_left;
    w.omega0_right = omega0_right;
    w.omega_nodes = nodes_in(grid, omega_left, omega_right);
    w.omega0_nodes = nodes_in(grid, omega0_left, omega0_right);

    int interior_omega = 0;
    for (int i : w.omega_nodes)
        if (i > 0 && i < grid.n_nodes - 1) ++interior_omega;
    if (interior_omega < 2)
        throw std::invalid_argument("build_window: omega must contain >= 2 interior nodes");

    int interior_omega0 = 0;
    for (int i : w.omega0_nodes)
        if (i > 0 && i < grid.n_nodes - 1) ++interior_omega0;
    if (interior_omega0 < 1)
        throw std::invalid_argument("build_window: omega0 must contain an interior node");

    return w;
}

Vector window_indicator(const Grid1D& grid, const ControlWindow& w) {
    if (w.omega_nodes.empty())
        throw std::invalid_argument("window_indicator: empty node set");
    Vector ind = Vector::Zero(grid.n_nodes);
    for (int i : w.omega_nodes) ind(i) = 1.0;
    return ind;
}

Vector laplacian_apply(const Grid1D& grid, const Vector& u) {
    const int n = grid.n_nodes;
    if (u.size() != n)
        throw std::invalid_argument("laplacian_apply: field length does not match grid");

    const double inv_h2 = 1.0 / (grid.h * grid.h);
    Vector out(n);
    for (int i = 1; i < n - 1; ++i)
        out(i) = (u(i - 1) - 2.0 * u(i) + u(i + 1)) * inv_h2;

    if (grid.bc == BoundaryCondition::Neumann) {
        out(0) = 2.0 * (u(1) - u(0)) * inv_h2;
        out(n - 1) = 2.0 * (u(n - 2) - u(n - 1)) * inv_h2;
    } else {
        out(0) = 0.0;
        out(n - 1) = 0.0;
    }
    return out;
}

double norm_lp(const Grid1D& grid, const Vector& u, double p) {
    if (u.size() != grid.n_nodes)
        throw std::invalid_argument("norm_lp: field length does not match grid");
    if (p < 1.0)
        throw std::invalid_argument("norm_lp: p must be >= 1");
    if (std::isinf(p))
        return u.cwiseAbs().maxCoeff();
    const double s = (grid.quad_weights.array() * u.array().abs().pow(p)).sum();
    return std::pow(s, 1.0 / p);
}

double integrate(const Grid1D& grid, const Vector& u) {
    return grid.quad_weights.dot(u);
}

double integrate_window(const Grid1D& grid, const ControlWindow& w, const Vector& u) {
    double s = 0.0;
    for (int i : w.omega_nodes) s += grid.quad_weights(i) * u(i);
    return s;
}

void enforce_bc(const Grid1D& grid, Vector& u) {
    if (grid.bc == BoundaryCondition::Dirichlet) {
        u(0) = 0.0;
        u(grid.n_nodes - 1) = 0.0;
    }
}

} // namespace heatctl

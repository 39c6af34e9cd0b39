#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <vector>

namespace heatctl {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class BoundaryCondition { Neumann, Dirichlet };

/// Uniform discretization of the interval (x_a, x_b).
///
/// Nodes are x_i = x_a + i*h, i = 0..n_nodes-1. Integrals are composite
/// trapezoid sums; quad_weights() returns the node weights (h/2 at the two
/// boundary nodes, h inside), which also define the weighted L2 inner
/// product used by the solvers and the optimization layer.
struct Grid1D {
    double x_a = 0.0;
    double x_b = 1.0;
    int n_nodes = 0;
    double h = 0.0;
    BoundaryCondition bc = BoundaryCondition::Neumann;

    Vector nodes;        // x_i, strictly increasing
    Vector quad_weights; // trapezoid weights w_i

    int n() const { return n_nodes; }
    double length() const { return x_b - x_a; }
    bool is_dirichlet() const { return bc == BoundaryCondition::Dirichlet; }
};

Grid1D build_grid(double x_a, double x_b, int n_nodes, BoundaryCondition bc);

/// Control region omega and its compactly contained core omega0.
/// Both are realized as closed sets of grid nodes; omega needs at least
/// two nodes strictly inside the domain, omega0 at least one.
struct ControlWindow {
    double omega_left = 0.0;
    double omega_right = 0.0;
    double omega0_left = 0.0;
    double omega0_right = 0.0;
    std::vector<int> omega_nodes;
    std::vector<int> omega0_nodes;

    double omega_length() const { return omega_right - omega_left; }
};

ControlWindow build_window(const Grid1D& grid, double omega_left, double omega_right);
ControlWindow build_window(const Grid1D& grid, double omega_left, double omega_right,
                           double omega0_left, double omega0_right);

/// 1 at nodes inside omega, 0 elsewhere.
Vector window_indicator(const Grid1D& grid, const ControlWindow& w);

/// Second-difference Laplacian. Neumann boundary rows use ghost-node
/// reflection (u_{-1} = u_1), Dirichlet rows return zero. Self-adjoint in
/// the trapezoid-weighted inner product.
Vector laplacian_apply(const Grid1D& grid, const Vector& u);

/// Trapezoid L^p norm; p = infinity gives max |u_i|.
double norm_lp(const Grid1D& grid, const Vector& u, double p);

/// Trapezoid integral over the whole interval.
double integrate(const Grid1D& grid, const Vector& u);

/// Trapezoid integral restricted to the nodes of omega.
double integrate_window(const Grid1D& grid, const ControlWindow& w, const Vector& u);

/// Weighted inner product <u, v> = sum_i w_i u_i v_i.
inline double inner_w(const Grid1D& grid, const Vector& u, const Vector& v) {
    return (grid.quad_weights.array() * u.array() * v.array()).sum();
}

inline double norm_w(const Grid1D& grid, const Vector& u) {
    return std::sqrt(inner_w(grid, u, u));
}

/// Zero out boundary entries (used to keep Dirichlet fields admissible).
void enforce_bc(const Grid1D& grid, Vector& u);

} // namespace heatctl

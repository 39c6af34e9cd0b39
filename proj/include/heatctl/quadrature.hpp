#pragma once

#include <Eigen/Dense>
#include <utility>

namespace heatctl {

/// Gauss-Legendre nodes and weights on [-1, 1], computed once per order by
/// the Golub-Welsch eigen decomposition of the Jacobi matrix.
const std::pair<Eigen::VectorXd, Eigen::VectorXd>& gauss_legendre(int order);

/// Fixed-order Gauss-Legendre panel integral of fn over [a, b].
template <typename Fn>
double integrate_gl(Fn&& fn, double a, double b, int order) {
    const auto& [x, w] = gauss_legendre(order);
    const double mid = 0.5 * (a + b);
    const double half = 0.5 * (b - a);
    double sum = 0.0;
    for (int i = 0; i < x.size(); ++i)
        sum += w(i) * fn(mid + half * x(i));
    return half * sum;
}

} // namespace heatctl

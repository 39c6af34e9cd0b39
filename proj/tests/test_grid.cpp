#include <doctest.h>

#include "heatctl/grid.hpp"

#include <cmath>
#include <random>

using namespace heatctl;

TEST_CASE("build_grid basics") {
    Grid1D g = build_grid(0.0, 1.0, 5, BoundaryCondition::Neumann);
    CHECK(g.h == doctest::Approx(0.25).epsilon(0));
    CHECK(g.nodes(0) == 0.0);
    CHECK(g.nodes(2) == 0.5);
    CHECK(g.nodes(4) == 1.0);

    Grid1D gd = build_grid(0.0, 2.0, 201, BoundaryCondition::Dirichlet);
    CHECK(gd.h == doctest::Approx(0.01).epsilon(1e-15));

    CHECK_THROWS_AS(build_grid(0.0, 1.0, 2, BoundaryCondition::Neumann), std::invalid_argument);
    CHECK_THROWS_AS(build_grid(1.0, 1.0, 5, BoundaryCondition::Neumann), std::invalid_argument);
}

TEST_CASE("laplacian on constants and eigenmodes") {
    Grid1D g = build_grid(0.0, 1.0, 101, BoundaryCondition::Neumann);
    Vector c = Vector::Constant(g.n(), 4.2);
    CHECK(laplacian_apply(g, c).cwiseAbs().maxCoeff() == 0.0);

    // sin(pi x) is an eigenfunction; second-order accuracy
    auto mode_error = [](int n) {
        Grid1D gd = build_grid(0.0, 1.0, n, BoundaryCondition::Dirichlet);
        Vector u(gd.n());
        for (int i = 0; i < gd.n(); ++i) u(i) = std::sin(M_PI * gd.nodes(i));
        Vector lu = laplacian_apply(gd, u);
        double err = 0.0;
        for (int i = 1; i < gd.n() - 1; ++i)
            err = std::max(err, std::abs(lu(i) + M_PI * M_PI * u(i)));
        return err;
    };
    const double e1 = mode_error(101), e2 = mode_error(201);
    CHECK(e1 < std::pow(M_PI, 4) / 12.0 * (0.01 * 0.01) * 1.2);
    CHECK(e2 < e1 / 3.0); // halving h quarters the error

    // hat function: raw stencil values
    Grid1D g5 = build_grid(0.0, 1.0, 5, BoundaryCondition::Neumann);
    Vector hat = Vector::Zero(5);
    hat(2) = 1.0;
    Vector lh = laplacian_apply(g5, hat);
    const double inv_h2 = 16.0;
    CHECK(lh(1) == doctest::Approx(inv_h2));
    CHECK(lh(2) == doctest::Approx(-2.0 * inv_h2));
    CHECK(lh(3) == doctest::Approx(inv_h2));

    CHECK_THROWS_AS(laplacian_apply(g5, Vector::Zero(7)), std::invalid_argument);
}

TEST_CASE("laplacian is linear and weighted-self-adjoint") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> N(0.0, 1.0);
    for (auto bc : {BoundaryCondition::Neumann, BoundaryCondition::Dirichlet}) {
        Grid1D g = build_grid(-1.0, 2.0, 33, bc);
        Vector u(g.n()), v(g.n());
        for (int i = 0; i < g.n(); ++i) {
            u(i) = N(rng);
            v(i) = N(rng);
        }
        enforce_bc(g, u);
        enforce_bc(g, v);
        Vector lin = laplacian_apply(g, Vector(2.5 * u - 1.5 * v));
        Vector ref = 2.5 * laplacian_apply(g, u) - 1.5 * laplacian_apply(g, v);
        CHECK((lin - ref).cwiseAbs().maxCoeff() < 1e-9);

        const double left = inner_w(g, laplacian_apply(g, u), v);
        const double right = inner_w(g, u, laplacian_apply(g, v));
        CHECK(std::abs(left - right) < 1e-9 * (1.0 + std::abs(left)));
    }
}

TEST_CASE("norm_lp") {
    Grid1D g = build_grid(0.0, 1.0, 11, BoundaryCondition::Neumann);
    Vector one = Vector::Ones(g.n());
    CHECK(norm_lp(g, one, 1.0) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(norm_lp(g, one, std::numeric_limits<double>::infinity()) == 1.0);

    Grid1D g4 = build_grid(0.0, 1.0, 401, BoundaryCondition::Neumann);
    Vector s(g4.n());
    for (int i = 0; i < g4.n(); ++i) s(i) = std::sin(M_PI * g4.nodes(i));
    CHECK(norm_lp(g4, s, 2.0) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-4));

    CHECK_THROWS_AS(norm_lp(g, one, 0.5), std::invalid_argument);
}

TEST_CASE("discrete Hoelder chain") {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> N(0.0, 2.0);
    Grid1D g = build_grid(0.0, 3.0, 57, BoundaryCondition::Neumann);
    const double len = g.length();
    for (int trial = 0; trial < 20; ++trial) {
        Vector u(g.n());
        for (int i = 0; i < g.n(); ++i) u(i) = N(rng);
        const double l1 = norm_lp(g, u, 1.0);
        const double l2 = norm_lp(g, u, 2.0);
        const double li = norm_lp(g, u, std::numeric_limits<double>::infinity());
        CHECK(l1 <= std::sqrt(len) * l2 * (1.0 + 1e-12));
        CHECK(std::sqrt(len) * l2 <= len * li * (1.0 + 1e-12));
    }
}

TEST_CASE("control window and indicator") {
    Grid1D g5 = build_grid(0.0, 1.0, 5, BoundaryCondition::Neumann);
    ControlWindow w = build_window(g5, 0.2, 0.8);
    Vector ind = window_indicator(g5, w);
    CHECK(ind(0) == 0.0);
    CHECK(ind(1) == 1.0);
    CHECK(ind(2) == 1.0);
    CHECK(ind(3) == 1.0);
    CHECK(ind(4) == 0.0);

    ControlWindow all = build_window(g5, 0.0, 1.0, 0.3, 0.7);
    CHECK(window_indicator(g5, all).minCoeff() == 1.0);

    // no interior node inside (0.9, 0.95) on this grid
    CHECK_THROWS_AS(build_window(g5, 0.9, 0.95), std::invalid_argument);
    // omega0 must sit inside omega
    CHECK_THROWS_AS(build_window(g5, 0.2, 0.6, 0.1, 0.5), std::invalid_argument);
}

TEST_CASE("window quadrature is the adjoint of indicator injection") {
    Grid1D g = build_grid(0.0, 1.0, 41, BoundaryCondition::Neumann);
    ControlWindow w = build_window(g, 0.25, 0.65);
    Vector ind = window_indicator(g, w);
    std::mt19937_64 rng(3);
    std::normal_distribution<double> N(0.0, 1.0);
    Vector u(g.n());
    for (int i = 0; i < g.n(); ++i) u(i) = N(rng);
    CHECK(integrate_window(g, w, u) == doctest::Approx(inner_w(g, ind, u)).epsilon(1e-14));
}

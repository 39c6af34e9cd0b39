#include <doctest.h>

#include "heatctl/parabolic.hpp"
#include "test_helpers.hpp"

#include <cmath>
#include <random>

using namespace heatctl;

namespace {

Vector random_vector(std::mt19937_64& rng, int n, double scale = 1.0) {
    std::normal_distribution<double> N(0.0, scale);
    Vector v(n);
    for (int i = 0; i < n; ++i) v(i) = N(rng);
    return v;
}

} // namespace

TEST_CASE("forward solve: homogeneous potential decay") {
    Grid1D g = build_grid(0.0, 1.0, 31, BoundaryCondition::Neumann);
    TimeGrid tg = build_time_grid(0.0, 1.0, 4000);
    LinearProblem p = LinearProblem::make(g, tg, SpaceTimeField::constant(g, tg, 2.0),
                                          SpaceTimeField::zero(tg), Vector::Constant(g.n(), 3.0));
    SolveResult r = solve_forward(p, 1.0, StepMode::Monotone);
    const Vector yT = r.final_state();
    const double expected = 3.0 * std::exp(-2.0);
    CHECK((yT.array() - expected).abs().maxCoeff() < 1e-3); // O(tau)
    CHECK((yT.array() - yT(0)).abs().maxCoeff() < 1e-12);   // stays spatially flat
}

TEST_CASE("forward solve: Dirichlet eigenmode decay") {
    Grid1D g = build_grid(0.0, 1.0, 1001, BoundaryCondition::Dirichlet);
    TimeGrid tg = build_time_grid(0.0, 0.1, 100);
    Vector y0(g.n());
    for (int i = 0; i < g.n(); ++i) y0(i) = std::sin(M_PI * g.nodes(i));
    LinearProblem p =
        LinearProblem::make(g, tg, SpaceTimeField::zero(tg), SpaceTimeField::zero(tg), y0);
    SolveResult r = solve_forward(p, 0.5);
    const double decay = std::exp(-M_PI * M_PI * 0.1);
    double err = 0.0;
    for (int i = 0; i < g.n(); ++i)
        err = std::max(err, std::abs(r.final_state()(i) - decay * y0(i)));
    CHECK(err < 1e-4);
}

TEST_CASE("forward solve: Neumann constants are preserved exactly") {
    Grid1D g = build_grid(0.0, 2.0, 41, BoundaryCondition::Neumann);
    TimeGrid tg = build_time_grid(0.0, 0.5, 200);
    LinearProblem p = LinearProblem::make(g, tg, SpaceTimeField::zero(tg),
                                          SpaceTimeField::zero(tg), Vector::Constant(g.n(), 7.5));
    SolveResult r = solve_forward(p, 1.0, StepMode::Monotone);
    CHECK((r.final_state().array() - 7.5).abs().maxCoeff() < 1e-12);
}

TEST_CASE("mass conservation under Neumann") {
    Grid1D g = build_grid(0.0, 1.0, 51, BoundaryCondition::Neumann);
    TimeGrid tg = build_time_grid(0.0, 0.3, 300);
    std::mt19937_64 rng(5);
    Vector y0 = random_vector(rng, g.n());
    LinearProblem p =
        LinearProblem::make(g, tg, SpaceTimeField::zero(tg), SpaceTimeField::zero(tg), y0);
    SolveResult r = solve_forward(p, 1.0, StepMode::Monotone);
    const double m0 = integrate(g, y0);
    const double mT = integrate(g, r.final_state());
    CHECK(std::abs(mT - m0) <= 1e-12 * std::abs(m0));
}

TEST_CASE("time stepping orders: backward Euler 1, Crank-Nicolson 2") {
    Grid1D g = build_grid(0.0, 1.0, 1001, BoundaryCondition::Dirichlet);
    Vector y0(g.n());
    for (int i = 0; i < g.n(); ++i) y0(i) = std::sin(M_PI * g.nodes(i));
    const double decay = std::exp(-M_PI * M_PI * 0.1);

    auto error_at = [&](double theta, int steps) {
        TimeGrid tg = build_time_grid(0.0, 0.1, steps);
        LinearProblem p =
            LinearProblem::make(g, tg, SpaceTimeField::zero(tg), SpaceTimeField::zero(tg), y0);
        SolveResult r = solve_forward(p, theta);
        double err = 0.0;
        for (int i = 0; i < g.n(); ++i)
            err = std::max(err, std::abs(r.final_state()(i) - decay * y0(i)));
        return err;
    };

    const double be_order = std::log2(error_at(1.0, 25) / error_at(1.0, 50));
    CHECK(be_order == doctest::Approx(1.0).epsilon(0.15));
    const double cn_order = std::log2(error_at(0.5, 25) / error_at(0.5, 50));
    CHECK(cn_order == doctest::Approx(2.0).epsilon(0.075));
}

TEST_CASE("adjoint solve: constants and exponential potential") {
    Grid1D g = build_grid(0.0, 1.0, 41, BoundaryCondition::Neumann);
    TimeGrid tg = build_time_grid(0.0, 0.5, 2000);

    SolveResult r0 =
        solve_adjoint(g, tg, SpaceTimeField::zero(tg), Vector::Ones(g.n()), 1.0, StepMode::Monotone);
    CHECK((r0.trajectory.at(0).array() - 1.0).abs().maxCoeff() < 1e-12);

    const double m = 1.7;
    SolveResult rm = solve_adjoint(g, tg, SpaceTimeField::constant(g, tg, m), Vector::Ones(g.n()),
                                   1.0, StepMode::Monotone);
    CHECK((rm.trajectory.at(0).array() - std::exp(-m * 0.5)).abs().maxCoeff() < 1e-3);
}

TEST_CASE("adjoint preserves nonnegativity in monotone mode") {
    Grid1D g = build_grid(0.0, 1.0, 41, BoundaryCondition::Neumann);
    TimeGrid tg = build_time_grid(0.0, 0.4, 500); // tau below the monotone bound for |a| <= 1
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 5; ++trial) {
        Vector qT = random_vector(rng, g.n()).cwiseAbs();
        SpaceTimeField a;
        a.tg = tg;
        a.values.resize(tg.n_steps + 1, g.n());
        for (int k = 0; k <= tg.n_steps; ++k)
            a.values.row(k) = random_vector(rng, g.n(), 0.5).transpose();
        SolveResult r = solve_adjoint(g, tg, a, qT, 1.0, StepMode::Monotone);
        CHECK(r.trajectory.values.minCoeff() >= -1e-14);
    }
}

TEST_CASE("duality residual is machine zero") {
    std::mt19937_64 rng(42);
    for (auto bc : {BoundaryCondition::Neumann, BoundaryCondition::Dirichlet}) {
        Grid1D g = build_grid(0.0, 1.0, 61, bc);
        TimeGrid tg = build_time_grid(0.0, 1.0, 400);
        Vector y0 = random_vector(rng, g.n()), pT = random_vector(rng, g.n());
        enforce_bc(g, y0);
        enforce_bc(g, pT);
        SpaceTimeField a = SpaceTimeField::sample(
            g, tg, [](double t, double x) { return std::sin(3.0 * x + t); });
        SpaceTimeField h = SpaceTimeField::sample(
            g, tg, [](double t, double x) { return std::cos(5.0 * x - 2.0 * t); });
        const double scale = norm_w(g, y0) + norm_w(g, pT) + h.max_abs() + 1.0;
        for (double theta : {1.0, 0.5})
            CHECK(duality_residual(g, tg, a, h, y0, pT, theta) <= 1e-10 * scale);

        // zero control: pure transpose identity
        CHECK(duality_residual(g, tg, a, SpaceTimeField::zero(tg), y0, pT, 1.0) <= 1e-10 * scale);
        // zero terminal datum: everything vanishes
        CHECK(duality_residual(g, tg, a, h, y0, Vector::Zero(g.n()), 1.0) == 0.0);
    }
}

TEST_CASE("monotone mode rejects too-large steps") {
    Grid1D g = build_grid(0.0, 1.0, 21, BoundaryCondition::Neumann);
    TimeGrid tg = build_time_grid(0.0, 1.0, 10); // tau = 0.1
    SpaceTimeField a = SpaceTimeField::constant(g, tg, -30.0);
    LinearProblem p = LinearProblem::make(g, tg, a, SpaceTimeField::zero(tg), Vector::Ones(g.n()));
    CHECK(monotone_tau_max(-30.0) == doctest::Approx(1.0 / 61.0));
    CHECK_THROWS_AS(solve_forward(p, 1.0, StepMode::Monotone), std::invalid_argument);
    CHECK_NOTHROW(solve_forward(p, 1.0, StepMode::Accuracy));
}

TEST_CASE("discrete maximum principle") {
    Grid1D g = build_grid(0.0, 1.0, 41, BoundaryCondition::Neumann);
    TimeGrid tg = build_time_grid(0.0, 0.5, 400);
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 5; ++trial) {
        Vector y0 = random_vector(rng, g.n()).cwiseAbs();
        SpaceTimeField F;
        F.tg = tg;
        F.values.resize(tg.n_steps + 1, g.n());
        for (int k = 0; k <= tg.n_steps; ++k)
            F.values.row(k) = random_vector(rng, g.n()).cwiseAbs().transpose();
        SpaceTimeField a;
        a.tg = tg;
        a.values.resize(tg.n_steps + 1, g.n());
        for (int k = 0; k <= tg.n_steps; ++k)
            a.values.row(k) = random_vector(rng, g.n(), 0.4).transpose();
        LinearProblem p = LinearProblem::make(g, tg, a, F, y0);
        SolveResult r = solve_forward(p, 1.0, StepMode::Monotone);
        CHECK(r.trajectory.values.minCoeff() >= -1e-14);
    }
}

TEST_CASE("sup bound and L1 dissipativity") {
    Grid1D g = build_grid(0.0, 1.0, 41, BoundaryCondition::Neumann);
    TimeGrid tg = build_time_grid(0.0, 0.5, 600);
    std::mt19937_64 rng(29);
    for (int trial = 0; trial < 5; ++trial) {
        Vector y0 = random_vector(rng, g.n());
        const double a_amp = 0.6;
        SpaceTimeField a;
        a.tg = tg;
        a.values.resize(tg.n_steps + 1, g.n());
        for (int k = 0; k <= tg.n_steps; ++k)
            a.values.row(k) = random_vector(rng, g.n(), a_amp / 2.0)
                                  .cwiseMax(-a_amp)
                                  .cwiseMin(a_amp)
                                  .transpose();
        SpaceTimeField F;
        F.tg = tg;
        F.values.resize(tg.n_steps + 1, g.n());
        for (int k = 0; k <= tg.n_steps; ++k)
            F.values.row(k) = random_vector(rng, g.n(), 0.5).transpose();
        LinearProblem p = LinearProblem::make(g, tg, a, F, y0);
        SolveResult r = solve_forward(p, 1.0, StepMode::Monotone);

        // the backward Euler growth factor (1 - tau a)^{-1} overshoots
        // e^{tau a} by e^{tau^2 a^2/2} per step; fold that into the slack
        const double discrete_slack = std::exp(0.5 * tg.tau * p.a_sup * p.a_sup * 0.5);
        const double bound = std::exp(p.a_sup * 0.5) *
                             (y0.cwiseAbs().maxCoeff() + 0.5 * F.values.cwiseAbs().maxCoeff());
        double sup = 0.0;
        for (double v : r.norm_linf) sup = std::max(sup, v);
        CHECK(sup <= bound * discrete_slack * (1.0 + 1e-8));

        // F = 0 run for the L1 contraction along the flow
        LinearProblem p0 = LinearProblem::make(g, tg, a, SpaceTimeField::zero(tg), y0);
        SolveResult r0 = solve_forward(p0, 1.0, StepMode::Monotone);
        for (std::size_t k1 = 0; k1 + 100 < r0.norm_l1.size(); k1 += 150) {
            const std::size_t k2 = k1 + 100;
            const double factor = std::exp(p.a_sup * (r0.times[k2] - r0.times[k1]));
            CHECK(r0.norm_l1[k2] <= factor * r0.norm_l1[k1] * discrete_slack * (1.0 + 1e-10));
        }
    }
}

TEST_CASE("semilinear reduction: f(s) = s equals linear solve with unit potential") {
    Grid1D g = build_grid(0.0, 1.0, 41, BoundaryCondition::Neumann);
    TimeGrid tg = build_time_grid(0.0, 0.4, 400);
    std::mt19937_64 rng(31);
    Vector y0 = random_vector(rng, g.n());
    SpaceTimeField h = SpaceTimeField::sample(
        g, tg, [](double t, double x) { return std::sin(2.0 * x) * std::cos(t); });

    NonlinearitySpec linear_f = make_nonlinearity(NonlinearityFamily::Poly, +1, 1.0);
    SolveResult semi = solve_semilinear(g, tg, linear_f, y0, h);

    LinearProblem p = LinearProblem::make(g, tg, SpaceTimeField::constant(g, tg, 1.0), h, y0);
    SolveResult lin = solve_forward(p, 1.0, StepMode::Monotone);
    CHECK((semi.final_state() - lin.final_state()).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("semilinear blow-up matches the ODE quadrature for constant data") {
    Grid1D g = build_grid(0.0, 1.0, 31, BoundaryCondition::Neumann);
    TimeGrid tg = build_time_grid(0.0, 1.0, 2000);
    NonlinearitySpec focusing = make_nonlinearity(NonlinearityFamily::AbsLog, -1, 1.8, 2.0);
    SemilinearOptions opt;
    opt.blowup_threshold = 1e250;
    SolveResult r =
        solve_semilinear(g, tg, focusing, Vector::Constant(g.n(), 100.0), SpaceTimeField::zero(tg), opt);
    REQUIRE(r.blew_up());
    const double oracle_t = blowup_time(focusing.negated(), 100.0);
    CHECK(std::abs(r.blowup_time - oracle_t) <= 0.05 * oracle_t);
    CHECK(r.trajectory.values.rows() == r.last_step + 1); // truncated at last finite step
}

TEST_CASE("semilinear dissipative solve stays under the ODE envelope") {
    Grid1D g = build_grid(0.0, 1.0, 41, BoundaryCondition::Neumann);
    TimeGrid tg = build_time_grid(0.0, 2.0, 2000);
    NonlinearitySpec f = make_nonlinearity(NonlinearityFamily::OddLog, +1, 1.8, 2.0);
    Vector y0(g.n());
    for (int i = 0; i < g.n(); ++i) y0(i) = 3.0 + 2.0 * std::sin(7.0 * g.nodes(i));
    SolveResult r = solve_semilinear(g, tg, f, y0, SpaceTimeField::zero(tg));
    REQUIRE_FALSE(r.blew_up());
    CHECK(r.trajectory.values.minCoeff() >= -1e-12);

    // RK envelope from the sup of the data (+1 headroom)
    for (int k = 200; k <= tg.n_steps; k += 400) {
        const double v = oracle::rk4([&](double s) { return -f.f(s); },
                                     y0.maxCoeff() + 1.0, tg.node(k), 4000);
        CHECK(r.trajectory.values.row(k).maxCoeff() <= v + 1e-6);
    }
}

TEST_CASE("semilinear preconditions") {
    Grid1D g = build_grid(0.0, 1.0, 11, BoundaryCondition::Neumann);
    TimeGrid tg = build_time_grid(0.0, 1.0, 10);
    NonlinearitySpec f = make_nonlinearity(NonlinearityFamily::OddLog, +1, 1.8, 2.0);
    SemilinearOptions opt;
    opt.blowup_threshold = 1.0; // below ||y0||
    CHECK_THROWS_AS(
        solve_semilinear(g, tg, f, Vector::Constant(g.n(), 5.0), SpaceTimeField::zero(tg), opt),
        std::invalid_argument);
}

TEST_CASE("check_comparison") {
    Grid1D g = build_grid(0.0, 1.0, 31, BoundaryCondition::Neumann);
    TimeGrid tg = build_time_grid(0.0, 0.5, 200);
    std::mt19937_64 rng(37);
    SpaceTimeField a = SpaceTimeField::constant(g, tg, 0.3);

    Vector z0 = random_vector(rng, g.n()).cwiseAbs();
    Vector y0 = z0 - random_vector(rng, g.n()).cwiseAbs(); // y0 <= z0
    LinearProblem py = LinearProblem::make(g, tg, a, SpaceTimeField::zero(tg), y0);
    LinearProblem pz = LinearProblem::make(g, tg, a, SpaceTimeField::zero(tg), z0);
    SolveResult ry = solve_forward(py, 1.0, StepMode::Monotone);
    SolveResult rz = solve_forward(pz, 1.0, StepMode::Monotone);

    CHECK(check_comparison(ry, rz, 1e-12).pass);
    ComparisonReport swapped = check_comparison(rz, ry, 1e-12);
    CHECK_FALSE(swapped.pass);
    CHECK(swapped.worst_violation > 0.0);
}

TEST_CASE("heat kernel smoothing exponent") {
    Grid1D g = build_grid(0.0, 1.0, 401, BoundaryCondition::Neumann);
    SmoothingFit fit = estimate_smoothing_exponent(g, build_time_grid(1e-3, 1e-1, 1), 1000);
    CHECK(fit.slope == doctest::Approx(-0.5).epsilon(0.2));
    CHECK(fit.times.size() >= 3);

    CHECK_THROWS_AS(estimate_smoothing_exponent(g, build_time_grid(0.05, 0.1, 1), 100),
                    std::invalid_argument);
}

TEST_CASE("adjoint basis maps agree with direct solves") {
    Grid1D g = build_grid(0.0, 1.0, 31, BoundaryCondition::Neumann);
    TimeGrid tg = build_time_grid(0.0, 0.3, 150);
    ControlWindow w = build_window(g, 0.3, 0.7);
    SpaceTimeField a = SpaceTimeField::constant(g, tg, -1.0);
    AdjointBasisMaps maps = assemble_adjoint_basis_maps(g, tg, a, w, 1.0, StepMode::Monotone);

    std::mt19937_64 rng(41);
    Vector qT = random_vector(rng, g.n());
    SolveResult adj = solve_adjoint(g, tg, a, qT, 1.0, StepMode::Monotone);

    // q(0) through the assembled columns
    Vector q0_maps = maps.q0_columns * qT;
    CHECK((q0_maps - adj.trajectory.at(0)).cwiseAbs().maxCoeff() < 1e-10);

    // window L2 form against the stepwise observation sums
    double obs = 0.0, l1 = 0.0;
    for (int k = 1; k <= tg.n_steps; ++k)
        for (int i : w.omega_nodes) {
            const double lam = adj.stage.values(k, i);
            obs += tg.tau * g.quad_weights(i) * lam * lam;
            l1 += tg.tau * g.quad_weights(i) * lam;
        }
    CHECK(qT.dot(maps.window_l2_form * qT) == doctest::Approx(obs).epsilon(1e-11));
    CHECK(maps.window_l1_functional.dot(qT) == doctest::Approx(l1).epsilon(1e-11));
}

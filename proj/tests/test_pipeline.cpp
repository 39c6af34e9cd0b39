#include <doctest.h>

#include "heatctl/pipeline.hpp"
#include "test_helpers.hpp"

#include <cmath>

using namespace heatctl;

namespace {

PipelineConfig small_config() {
    PipelineConfig pc;
    pc.f = make_nonlinearity(NonlinearityFamily::OddLog, +1, 1.8, 2.0);
    pc.T1 = 0.5;
    pc.delta = 0.1;
    pc.eps_schedule = {1e-1, 1e-2, 1e-3};
    pc.eps_final = 1e-4;
    pc.picard_tol = 1e-7;
    pc.picard_max = 30;
    pc.phase3_horizon = 0.5;
    pc.steps_phase1 = 500;
    pc.tau_phase2 = 5e-4;
    pc.steps_phase3 = 500;
    return pc;
}

} // namespace

TEST_CASE("pipeline config validation") {
    PipelineConfig pc = small_config();
    pc.delta = -1.0;
    CHECK_THROWS_AS(pc.validate(), std::invalid_argument);

    PipelineConfig sign = small_config();
    sign.f = make_nonlinearity(NonlinearityFamily::OddLog, -1, 1.8, 2.0);
    CHECK_THROWS_AS(sign.validate(), std::invalid_argument); // wrong branch sign

    PipelineConfig nonpos = small_config();
    nonpos.f = make_nonlinearity(NonlinearityFamily::AbsLog, -1, 1.8, 2.0);
    nonpos.branch = SteeringBranch::Nonpositive;
    CHECK_NOTHROW(nonpos.validate());
}

TEST_CASE("phase 1: nonnegative data need no control") {
    Grid1D g = build_grid(0.0, 1.0, 41, BoundaryCondition::Neumann);
    ControlWindow w = build_window(g, 0.3, 0.7);
    PipelineConfig pc = small_config();
    Vector y0 = Vector::Constant(g.n(), 2.0);

    Phase1Result r = picard_steer(g, w, pc, y0);
    CHECK(r.converged);
    CHECK(r.picard_iterations == 0);
    CHECK(r.control.values.cwiseAbs().maxCoeff() == 0.0);
    CHECK(r.neg_part_norm <= 1e-12);
    CHECK(r.y_T1.minCoeff() >= -1e-12);
}

TEST_CASE("phase 1: mixed-sign bump converges and lands nearly nonnegative") {
    Grid1D g = build_grid(0.0, 1.0, 61, BoundaryCondition::Neumann);
    ControlWindow w = build_window(g, 0.3, 0.7);
    PipelineConfig pc = small_config();
    Vector y0(g.n());
    for (int i = 0; i < g.n(); ++i) {
        const double r = (g.nodes(i) - 0.5) / 0.125;
        y0(i) = -5.0 * std::exp(-r * r);
    }

    Phase1Result r = picard_steer(g, w, pc, y0);
    CHECK(r.converged);
    CHECK(r.picard_iterations <= 20);
    CHECK(r.t_star <= pc.T1);
    CHECK(r.t_star > 0.0);
    CHECK(r.control_level > 0.0); // steering upward
    const double tol = 1e-5 + 100.0 * pc.picard_tol;
    CHECK(r.neg_part_norm <= pc.working_eps() + tol);
}

TEST_CASE("phase 1: constant-quotient nonlinearity converges immediately") {
    // g(z) = const makes the linearized problem independent of the iterate,
    // so the second sweep already matches the first.
    Grid1D g = build_grid(0.0, 1.0, 41, BoundaryCondition::Neumann);
    ControlWindow w = build_window(g, 0.3, 0.7);
    PipelineConfig pc = small_config();
    pc.f = make_nonlinearity(NonlinearityFamily::Poly, +1, 1.0); // f(s) = s, g = 1
    Vector y0 = Vector::Constant(g.n(), -1.0);

    Phase1Result r = picard_steer(g, w, pc, y0);
    CHECK(r.converged);
    CHECK(r.picard_iterations <= 3);
}

TEST_CASE("phase 2: quadratic fixture has exact waiting time") {
    Grid1D g = build_grid(0.0, 1.0, 41, BoundaryCondition::Neumann);
    PipelineConfig pc = small_config();
    pc.f = make_nonlinearity(NonlinearityFamily::Poly, +1, 2.0);
    pc.delta = 0.1;
    pc.T1 = 1.0;
    pc.tau_phase2 = 2e-3;

    Phase2Result r = certify_decay(g, pc, Vector::Constant(g.n(), 3.0));
    CHECK(r.T2 == doctest::Approx(1.0 + 10.0).epsilon(1e-12)); // F(delta) = 1/delta
    CHECK(r.pass);
    CHECK(r.max_violation <= pc.envelope_tol);
    CHECK(r.final_sup <= pc.delta + pc.envelope_tol);
}

TEST_CASE("phase 2: constant Neumann data track the free ODE") {
    Grid1D g = build_grid(0.0, 1.0, 31, BoundaryCondition::Neumann);
    PipelineConfig pc = small_config();
    pc.delta = 0.5;
    pc.T1 = 1.0;
    pc.tau_phase2 = 1e-3;
    const double c = 2.0;

    Phase2Result r = certify_decay(g, pc, Vector::Constant(g.n(), c));
    CHECK(r.pass);

    // PDE equals the ODE for flat data: compare against RK4 at a few times
    const TimeGrid& tg = r.free_solve.trajectory.tg;
    for (int k = 100; k <= tg.n_steps; k += 500) {
        const double t = tg.node(k) - pc.T1;
        const double v = oracle::rk4([&](double s) { return -pc.f.f(s); }, c, t, 20000);
        const double pde = r.free_solve.trajectory.values(k, g.n() / 2);
        CHECK(std::abs(pde - v) <= 5.0 * pc.tau_phase2);
    }
}

TEST_CASE("phase 2: waiting time is data independent") {
    Grid1D g = build_grid(0.0, 1.0, 31, BoundaryCondition::Neumann);
    PipelineConfig pc = small_config();
    pc.tau_phase2 = 1e-3;
    Phase2Result r1 = certify_decay(g, pc, Vector::Constant(g.n(), 10.0));
    Phase2Result r2 = certify_decay(g, pc, Vector::Constant(g.n(), 1000.0));
    CHECK(r1.T2 == r2.T2); // byte identical: T2 depends only on (f, delta)
    CHECK(r1.pass);
    CHECK(r2.pass);
    CHECK(r1.final_sup <= pc.delta + pc.envelope_tol);
    CHECK(r2.final_sup <= pc.delta + pc.envelope_tol);
}

TEST_CASE("phase 2: negativity beyond tolerance is rejected") {
    Grid1D g = build_grid(0.0, 1.0, 31, BoundaryCondition::Neumann);
    PipelineConfig pc = small_config();
    CHECK_THROWS_AS(certify_decay(g, pc, Vector::Constant(g.n(), -1.0)), std::invalid_argument);
}

TEST_CASE("phase 3: zero state is immediately controllable") {
    Grid1D g = build_grid(0.0, 1.0, 41, BoundaryCondition::Neumann);
    ControlWindow w = build_window(g, 0.3, 0.7);
    PipelineConfig pc = small_config();
    Phase3Result r = local_null_control(g, w, pc, Vector::Zero(g.n()), 11.0);
    CHECK(r.converged);
    CHECK(r.final_l2 <= pc.eps_final + 1e-10);
    CHECK(r.T3 == doctest::Approx(11.5));
}

TEST_CASE("phase 3: small state reaches the epsilon ball") {
    Grid1D g = build_grid(0.0, 1.0, 41, BoundaryCondition::Neumann);
    ControlWindow w = build_window(g, 0.3, 0.7);
    PipelineConfig pc = small_config();
    Vector y(g.n());
    for (int i = 0; i < g.n(); ++i) y(i) = pc.delta * std::abs(std::sin(3.0 * g.nodes(i)));

    Phase3Result r = local_null_control(g, w, pc, y, 0.0);
    CHECK(r.converged);
    CHECK(r.final_l2 <= 2.0 * pc.eps_final);

    Vector too_big = Vector::Constant(g.n(), 2.0 * pc.delta);
    CHECK_THROWS_AS(local_null_control(g, w, pc, too_big, 0.0), std::invalid_argument);
}

TEST_CASE("global pipeline end to end at desk scale") {
    Grid1D g = build_grid(0.0, 1.0, 61, BoundaryCondition::Neumann);
    ControlWindow w = build_window(g, 0.3, 0.7);
    PipelineConfig pc = small_config();
    Vector y0(g.n());
    for (int i = 0; i < g.n(); ++i) y0(i) = 5.0 * std::sin(3.0 * M_PI * g.nodes(i));

    PipelineReport rep = run_global_null(g, w, pc, y0);
    REQUIRE(rep.success());
    CHECK(rep.final_l2 <= 2.0 * pc.eps_final);
    CHECK(rep.T1 < rep.T2);
    CHECK(rep.T2 < rep.T3);

    // the horizon never depends on the data size
    PipelineReport rep_scaled = run_global_null(g, w, pc, Vector(100.0 * y0));
    REQUIRE(rep_scaled.success());
    CHECK(rep_scaled.T2 == rep.T2);
    CHECK(rep_scaled.T3 == rep.T3);
}

TEST_CASE("blow-up demo with controlled companion") {
    Grid1D g = build_grid(0.0, 1.0, 41, BoundaryCondition::Neumann);
    ControlWindow w = build_window(g, 0.3, 0.7);
    NonlinearitySpec focusing = make_nonlinearity(NonlinearityFamily::AbsLog, -1, 1.8, 2.0);

    PipelineConfig companion = small_config();
    companion.f = focusing;
    companion.branch = SteeringBranch::Nonpositive;
    companion.eps_schedule = {1e-1, 1e-2};
    companion.picard_tol = 1e-6;
    companion.blowup_threshold = 1e250;

    BlowupReport rep = run_blowup_demo(g, w, focusing, Vector::Constant(g.n(), 100.0), 1.0, 2000,
                                       companion, true);
    CHECK(rep.detected);
    CHECK(rep.constant_data);
    CHECK(rep.rel_gap <= 0.05);
    CHECK(rep.companion_ran);
    CHECK(rep.companion_completed);
    CHECK(rep.companion_final_sup < 10.0); // steered to a tame nonpositive state

    // subcritical growth never escapes within the horizon
    NonlinearitySpec slow = make_nonlinearity(NonlinearityFamily::AbsLog, -1, 0.5, 2.0);
    BlowupReport tame = run_blowup_demo(g, w, slow, Vector::Constant(g.n(), 100.0), 10.0, 2000,
                                        companion, false);
    CHECK_FALSE(tame.detected);
}

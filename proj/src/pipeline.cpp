#include "heatctl/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace heatctl {

void PipelineConfig::validate() const {
    if (!(delta > 0.0)) throw std::invalid_argument("pipeline: delta must be > 0");
    if (!(T1 > 0.0)) throw std::invalid_argument("pipeline: T1 must be > 0");
    if (!(eps_final > 0.0)) throw std::invalid_argument("pipeline: eps_final must be > 0");
    if (!(picard_tol > 0.0) || picard_max < 1)
        throw std::invalid_argument("pipeline: bad Picard parameters");
    if (branch == SteeringBranch::Nonnegative && !f.sign_pos())
        throw std::invalid_argument("pipeline: nonnegative branch needs f(s) >= 0 for s >= 0");
    if (branch == SteeringBranch::Nonpositive && !f.sign_neg())
        throw std::invalid_argument("pipeline: nonpositive branch needs f(s) <= 0 for s <= 0");
}

namespace {

SpaceTimeField apply_g(const NonlinearitySpec& f, const SpaceTimeField& z) {
    SpaceTimeField g;
    g.tg = z.tg;
    g.values = z.values.unaryExpr([&](double s) { return f.g(s); });
    return g;
}

StepMode mode_for(const TimeGrid& tg, const SpaceTimeField& a) {
    const double a_min = a.is_zero() ? 0.0 : a.values.minCoeff();
    return tg.tau <= monotone_tau_max(a_min) ? StepMode::Monotone : StepMode::Accuracy;
}

Phase1Result picard_steer_nonneg(const Grid1D& grid, const ControlWindow& window,
                                 const PipelineConfig& config, const Vector& y0) {
    const NonlinearitySpec& f = config.f;
    Phase1Result res;
    TimeGrid tg = build_time_grid(0.0, config.T1, config.steps_phase1);
    const int n = grid.n_nodes;

    SpaceTimeField zero_control;
    zero_control.tg = tg;
    zero_control.values = Matrix::Zero(tg.n_steps + 1, n);

    // Maximum-principle shortcut: nonnegative data stay nonnegative freely.
    if (y0.minCoeff() >= 0.0) {
        SemilinearOptions opt;
        opt.blowup_threshold = config.blowup_threshold;
        SolveResult sol = solve_semilinear(grid, tg, f, y0, zero_control, opt);
        if (sol.blew_up()) {
            res.converged = false;
            return res;
        }
        res.y_T1 = sol.final_state();
        res.converged = true;
        res.control = zero_control;
        res.neg_part_norm = norm_w(grid, (-res.y_T1).cwiseMax(0.0));
        res.t_star = 0.0;
        return res;
    }

    HumConfig hum_cfg;
    hum_cfg.cone = true;
    hum_cfg.observation = ObservationKind::L1Window;
    hum_cfg.eps_schedule = config.eps_schedule;
    hum_cfg.epsilon = config.working_eps();
    hum_cfg.stop_tol = config.hum_stop_tol;
    hum_cfg.max_iterations = config.hum_max_iterations;

    SpaceTimeField z = SpaceTimeField::of_spatial(grid, tg, y0);
    SpaceTimeField h_ext = zero_control;
    double prev_diff = std::numeric_limits<double>::infinity();

    for (int it = 0; it < config.picard_max; ++it) {
        SpaceTimeField g_field = apply_g(f, z);
        const double g_sup = g_field.max_abs();
        const double t_star = g_sup > 0.0 ? std::min(config.T1, 1.0 / std::sqrt(g_sup)) : config.T1;
        const int n_star = std::clamp(static_cast<int>(std::llround(t_star / tg.tau)), 1, tg.n_steps);
        TimeGrid tg_star = build_time_grid(0.0, n_star * tg.tau, n_star);

        SpaceTimeField a_star;
        a_star.tg = tg_star;
        a_star.values = g_field.values.topRows(n_star + 1);

        HumResult hum = steer_nonnegative(grid, tg_star, a_star, window, y0, hum_cfg);
        if (!hum.warning.empty())
            throw std::runtime_error("picard_steer: " + hum.warning);

        h_ext.values.setZero();
        h_ext.values.topRows(n_star + 1) = hum.control.values;

        LinearProblem lp = LinearProblem::make(grid, tg, g_field, h_ext, y0);
        res.mode_used = mode_for(tg, g_field);
        SolveResult lin = solve_forward(lp, 1.0, res.mode_used);

        double diff = (lin.trajectory.values - z.values).cwiseAbs().maxCoeff();
        if (res.damped) {
            lin.trajectory.values = 0.5 * (lin.trajectory.values + z.values);
            diff = (lin.trajectory.values - z.values).cwiseAbs().maxCoeff();
        } else if (diff > prev_diff && it >= 1) {
            res.damped = true; // oscillating iterates: relax from now on
        }
        prev_diff = diff;
        res.picard_deltas.push_back(diff);
        z.values = lin.trajectory.values;
        res.picard_iterations = it + 1;
        res.t_star = tg_star.t1;
        res.control_level = hum.control.values.row(1).cwiseAbs().maxCoeff();
        res.control_sup = hum.control_sup;
        res.duality_residual_value = hum.duality_residual_value;

        const double scale = std::max(1.0, z.max_abs());
        if (diff <= config.picard_tol * scale) {
            res.converged = true;
            break;
        }
    }
    if (!res.converged) return res;

    SemilinearOptions opt;
    opt.blowup_threshold = std::max(config.blowup_threshold, 10.0 * z.max_abs());
    SolveResult sol = solve_semilinear(grid, tg, f, y0, h_ext, opt);
    if (sol.blew_up()) {
        res.converged = false;
        return res;
    }
    res.control = h_ext;
    res.y_T1 = sol.final_state();
    res.neg_part_norm = norm_w(grid, (-res.y_T1).cwiseMax(0.0));
    return res;
}

} // namespace

Phase1Result picard_steer(const Grid1D& grid, const ControlWindow& window,
                          const PipelineConfig& config, const Vector& y0) {
    config.validate();
    if (config.branch == SteeringBranch::Nonnegative)
        return picard_steer_nonneg(grid, window, config, y0);

    // Nonpositive steering of y is nonnegative steering of w = -y under the
    // reflected nonlinearity; reflect back afterwards.
    PipelineConfig reflected_cfg = config;
    reflected_cfg.f = config.f.reflected();
    reflected_cfg.branch = SteeringBranch::Nonnegative;
    Phase1Result r = picard_steer_nonneg(grid, window, reflected_cfg, -y0);
    if (r.y_T1.size() > 0) r.y_T1 = -r.y_T1;
    if (!r.control.is_zero()) r.control.values = -r.control.values;
    r.control_level = -r.control_level;
    return r;
}

Phase2Result certify_decay(const Grid1D& grid, const PipelineConfig& config,
                           const Vector& y_T1) {
    config.validate();
    const NonlinearitySpec& f = config.f;
    if (!f.integrable_tail())
        throw std::invalid_argument("certify_decay: needs f > 0 on (0,inf) with integrable tail");

    Phase2Result res;
    const double neg = y_T1.minCoeff();
    if (neg < -config.working_eps() * 10.0)
        throw std::invalid_argument("certify_decay: y(T1) has negativity beyond tolerance");
    Vector start = y_T1.cwiseMax(0.0);
    res.clip_norm = norm_w(grid, start - y_T1);

    const double elapsed = decay_time_for_target(f, config.delta);
    res.T2 = config.T1 + elapsed;
    const int n_steps = std::max(16, static_cast<int>(std::ceil(elapsed / config.tau_phase2)));
    TimeGrid tg = build_time_grid(config.T1, res.T2, n_steps);

    res.certificate = make_decay_certificate(f, start.maxCoeff() + 1.0, config.T1, config.delta);

    SemilinearOptions opt;
    opt.blowup_threshold = std::max(config.blowup_threshold, 10.0 * (start.maxCoeff() + 2.0));
    SolveResult sol = solve_semilinear(grid, tg, f, start, SpaceTimeField::zero(tg), opt);
    if (sol.blew_up())
        throw std::runtime_error("certify_decay: free dissipative solve blew up (wrong sign?)");

    // March the envelope v(t) by exact ODE steps and track violations.
    double v = res.certificate.v_T1;
    double worst = std::max(0.0, -sol.trajectory.values.row(0).minCoeff());
    for (int k = 1; k <= tg.n_steps; ++k) {
        v = decay_step(f, v, tg.tau);
        const double row_max = sol.trajectory.values.row(k).maxCoeff();
        const double row_min = sol.trajectory.values.row(k).minCoeff();
        worst = std::max({worst, row_max - v, -row_min});
    }
    res.max_violation = worst;
    res.final_sup = sol.trajectory.values.row(tg.n_steps).cwiseAbs().maxCoeff();
    res.pass = worst <= config.envelope_tol &&
               res.final_sup <= config.delta + config.envelope_tol;
    res.free_solve = std::move(sol);
    return res;
}

Phase3Result local_null_control(const Grid1D& grid, const ControlWindow& window,
                                const PipelineConfig& config, const Vector& y_T2, double T2) {
    config.validate();
    const NonlinearitySpec& f = config.f;
    if (y_T2.cwiseAbs().maxCoeff() > config.delta * (1.0 + 1e-9))
        throw std::invalid_argument("local_null_control: ||y(T2)||_inf exceeds delta");

    Phase3Result res;
    res.T3 = T2 + config.phase3_horizon;
    TimeGrid tg = build_time_grid(T2, res.T3, config.steps_phase3);

    HumConfig hum_cfg;
    hum_cfg.cone = false;
    hum_cfg.observation = ObservationKind::L2Window;
    hum_cfg.eps_schedule = config.eps_schedule;
    hum_cfg.eps_schedule.push_back(config.eps_final);
    hum_cfg.epsilon = config.eps_final;
    hum_cfg.stop_tol = config.hum_stop_tol;
    hum_cfg.max_iterations = config.hum_max_iterations;

    SpaceTimeField z = SpaceTimeField::of_spatial(grid, tg, y_T2);
    SpaceTimeField h;
    double prev_diff = std::numeric_limits<double>::infinity();
    bool damped = false;

    for (int it = 0; it < config.picard_max; ++it) {
        SpaceTimeField g_field = apply_g(f, z);
        HumResult hum = null_control(grid, tg, g_field, window, y_T2, hum_cfg);
        if (!hum.warning.empty())
            throw std::runtime_error("local_null_control: " + hum.warning +
                                     " (try a smaller delta)");
        h = hum.control;

        LinearProblem lp = LinearProblem::make(grid, tg, g_field, h, y_T2);
        SolveResult lin = solve_forward(lp, 1.0, mode_for(tg, g_field));
        double diff = (lin.trajectory.values - z.values).cwiseAbs().maxCoeff();
        if (damped) {
            lin.trajectory.values = 0.5 * (lin.trajectory.values + z.values);
            diff = (lin.trajectory.values - z.values).cwiseAbs().maxCoeff();
        } else if (diff > prev_diff && it >= 1) {
            damped = true;
        }
        prev_diff = diff;
        res.picard_deltas.push_back(diff);
        z.values = lin.trajectory.values;
        res.picard_iterations = it + 1;
        if (diff <= config.picard_tol * std::max(1.0, z.max_abs())) {
            res.converged = true;
            break;
        }
    }
    if (!res.converged)
        throw std::runtime_error("local_null_control: Picard diverged; try a smaller delta");

    SemilinearOptions opt;
    opt.blowup_threshold = config.blowup_threshold;
    SolveResult sol = solve_semilinear(grid, tg, f, y_T2, h, opt);
    if (sol.blew_up())
        throw std::runtime_error("local_null_control: semilinear re-solve blew up");
    res.y_T3 = sol.final_state();
    res.final_l2 = norm_w(grid, res.y_T3);
    res.final_sup = res.y_T3.cwiseAbs().maxCoeff();
    res.control = h;
    res.control_sup = h.max_abs();
    return res;
}

PipelineReport run_global_null(const Grid1D& grid, const ControlWindow& window,
                               const PipelineConfig& config, const Vector& y0) {
    config.validate();
    PipelineReport rep;
    rep.T1 = config.T1;
    // The waiting time is fixed by (f, delta) alone, before any solve.
    rep.T2 = config.T1 + decay_time_for_target(config.f, config.delta);
    rep.T3 = rep.T2 + config.phase3_horizon;

    rep.phase1 = picard_steer(grid, window, config, y0);
    if (!rep.phase1.converged) {
        rep.status = PipelineStatus::Phase1Failed;
        rep.failure = "phase 1: Picard steering did not converge";
        return rep;
    }

    try {
        rep.phase2 = certify_decay(grid, config, rep.phase1.y_T1);
    } catch (const std::exception& e) {
        rep.status = PipelineStatus::Phase2Failed;
        rep.failure = std::string("phase 2: ") + e.what();
        return rep;
    }
    if (!rep.phase2.pass) {
        rep.status = PipelineStatus::Phase2Failed;
        rep.failure = "phase 2: envelope certificate failed";
        return rep;
    }

    try {
        Vector y_T2 = rep.phase2.free_solve.final_state().cwiseMax(0.0).cwiseMin(config.delta);
        rep.phase3 = local_null_control(grid, window, config, y_T2, rep.T2);
    } catch (const std::exception& e) {
        rep.status = PipelineStatus::Phase3Failed;
        rep.failure = std::string("phase 3: ") + e.what();
        return rep;
    }
    rep.final_l2 = rep.phase3.final_l2;
    return rep;
}

BlowupReport run_blowup_demo(const Grid1D& grid, const ControlWindow& window,
                             const NonlinearitySpec& spec, const Vector& y0, double horizon,
                             int steps, const PipelineConfig& companion_config,
                             bool with_companion) {
    BlowupReport rep;
    TimeGrid tg = build_time_grid(0.0, horizon, steps);
    SemilinearOptions opt;
    opt.blowup_threshold = std::max(1e8, 10.0 * y0.cwiseAbs().maxCoeff());

    SolveResult free_run = solve_semilinear(grid, tg, spec, y0, SpaceTimeField::zero(tg), opt);
    rep.detected = free_run.blew_up();
    rep.t_star = free_run.blowup_time;
    rep.t_star_uncertainty = free_run.blowup_uncertainty;
    rep.final_sup = free_run.blew_up() ? free_run.blowup_norm
                                       : free_run.final_state().cwiseAbs().maxCoeff();

    const double span = y0.maxCoeff() - y0.minCoeff();
    rep.constant_data = span <= 1e-12 * std::max(1.0, y0.cwiseAbs().maxCoeff()) &&
                        grid.bc == BoundaryCondition::Neumann;
    if (rep.constant_data && y0(0) > 0.0 && spec.f(y0(0)) < 0.0) {
        // Spatially constant data reduce the PDE to v' = -f(v); the escape
        // time is the tail integral of 1/(-f).
        rep.oracle_t_star = blowup_time(spec.negated(), y0(0));
        if (rep.detected && std::isfinite(rep.oracle_t_star) && rep.oracle_t_star > 0.0)
            rep.rel_gap = std::abs(rep.t_star - rep.oracle_t_star) / rep.oracle_t_star;
    }

    if (with_companion) {
        rep.companion_ran = true;
        PipelineConfig cfg = companion_config;
        cfg.f = spec;
        cfg.T1 = horizon;
        cfg.steps_phase1 = steps;
        cfg.branch = spec.sign_neg() ? SteeringBranch::Nonpositive : SteeringBranch::Nonnegative;
        Phase1Result steer = picard_steer(grid, window, cfg, y0);
        rep.companion_completed = steer.converged;
        rep.companion_picard_iterations = steer.picard_iterations;
        if (steer.converged) rep.companion_final_sup = steer.y_T1.cwiseAbs().maxCoeff();
    }
    return rep;
}

} // namespace heatctl

#include "heatctl/scenarios.hpp"

#include "heatctl/carleman.hpp"
#include "heatctl/hum.hpp"
#include "heatctl/pipeline.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <thread>

namespace heatctl {

namespace {

struct ScenarioContext {
    const KeyValueConfig& cfg;
    std::string out_dir;
    std::uint64_t seed = 1;
    RunManifest manifest;

    std::string path(const std::string& name) {
        const std::string p = out_dir + "/" + name;
        manifest.outputs.push_back(name);
        return p;
    }
    void assert_that(const std::string& name, bool ok) { manifest.assertions[name] = ok; }
    void metric(const std::string& name, double v) { manifest.metrics[name] = v; }
};

Grid1D grid_from(const KeyValueConfig& cfg) {
    const double x_a = cfg.get_double("grid.x_a", 0.0);
    const double x_b = cfg.get_double("grid.x_b", 1.0);
    const int n = cfg.get_int("grid.n_nodes", 101);
    const std::string bc = cfg.get_string("grid.bc", "neumann");
    if (!(x_a < x_b)) throw ConfigError("grid.x_b", "grid.x_b must exceed grid.x_a");
    if (n < 3) throw ConfigError("grid.n_nodes", "grid.n_nodes must be >= 3");
    if (bc != "neumann" && bc != "dirichlet")
        throw ConfigError("grid.bc", "grid.bc must be 'neumann' or 'dirichlet'");
    return build_grid(x_a, x_b, n,
                      bc == "neumann" ? BoundaryCondition::Neumann : BoundaryCondition::Dirichlet);
}

ControlWindow window_from(const KeyValueConfig& cfg, const Grid1D& grid) {
    const double l = cfg.get_double("window.left", 0.3);
    const double r = cfg.get_double("window.right", 0.7);
    const double quarter = 0.25 * (r - l);
    const double cl = cfg.get_double("window.core_left", l + quarter);
    const double cr = cfg.get_double("window.core_right", r - quarter);
    try {
        return build_window(grid, l, r, cl, cr);
    } catch (const std::invalid_argument& e) {
        throw ConfigError("window.left", e.what());
    }
}

NonlinearitySpec nonlinearity_from(const KeyValueConfig& cfg) {
    const std::string family = cfg.get_string("nonlinearity.family", "odd_log");
    const int sigma = cfg.get_int("nonlinearity.sigma", 1);
    const double exponent = cfg.get_double("nonlinearity.exponent", 1.8);
    const double shift = cfg.get_double("nonlinearity.shift", 2.0);
    try {
        return nonlinearity_from_tag(family, sigma, exponent, shift);
    } catch (const std::invalid_argument& e) {
        throw ConfigError("nonlinearity.family", e.what());
    }
}

Vector initial_state(const KeyValueConfig& cfg, const Grid1D& grid) {
    const std::string kind = cfg.get_string("initial.kind", "constant");
    const double amplitude = cfg.get_double("initial.amplitude", -1.0);
    Vector y0(grid.n_nodes);
    if (kind == "constant") {
        y0.setConstant(amplitude);
    } else if (kind == "sine") {
        const int mode = cfg.get_int("initial.mode", 1);
        for (int i = 0; i < grid.n_nodes; ++i) {
            const double xi = (grid.nodes(i) - grid.x_a) / grid.length();
            y0(i) = amplitude * std::sin(mode * M_PI * xi);
        }
    } else if (kind == "bump") {
        const double center = cfg.get_double("initial.center", 0.5 * (grid.x_a + grid.x_b));
        const double width = cfg.get_double("initial.width", grid.length() / 8.0);
        for (int i = 0; i < grid.n_nodes; ++i) {
            const double r = (grid.nodes(i) - center) / width;
            y0(i) = amplitude * std::exp(-r * r);
        }
    } else {
        throw ConfigError("initial.kind", "initial.kind must be constant, sine, or bump");
    }
    enforce_bc(grid, y0);
    return y0;
}

HumConfig hum_from(const KeyValueConfig& cfg) {
    HumConfig hum;
    hum.epsilon = cfg.get_double("hum.epsilon", 1e-4);
    hum.eps_schedule = cfg.get_double_list("hum.eps_schedule", {1e-1, 1e-2, 1e-3, 1e-4});
    hum.stop_tol = cfg.get_double("hum.stop_tol", 1e-12);
    hum.max_iterations = cfg.get_int("hum.max_iterations", 20000);
    if (!(hum.epsilon > 0.0)) throw ConfigError("hum.epsilon", "hum.epsilon must be > 0");
    return hum;
}

PipelineConfig pipeline_from(const KeyValueConfig& cfg) {
    PipelineConfig pc;
    pc.f = nonlinearity_from(cfg);
    pc.T1 = cfg.get_double("pipeline.T1", 1.0);
    pc.delta = cfg.get_double("pipeline.delta", 0.05);
    pc.eps_schedule = cfg.get_double_list("hum.eps_schedule", {1e-1, 1e-2, 1e-3, 1e-4});
    pc.eps_final = cfg.get_double("pipeline.eps_final", 1e-5);
    pc.picard_tol = cfg.get_double("pipeline.picard_tol", 1e-8);
    pc.picard_max = cfg.get_int("pipeline.picard_max", 30);
    pc.phase3_horizon = cfg.get_double("pipeline.phase3_horizon", 1.0);
    pc.steps_phase1 = cfg.get_int("pipeline.steps_phase1", 2000);
    pc.tau_phase2 = cfg.get_double("pipeline.tau_phase2", 2e-4);
    pc.steps_phase3 = cfg.get_int("pipeline.steps_phase3", 2000);
    pc.blowup_threshold = cfg.get_double("pipeline.blowup_threshold", 1e8);
    pc.envelope_tol = cfg.get_double("pipeline.envelope_tol", 1e-6);
    pc.hum_stop_tol = cfg.get_double("hum.stop_tol", 1e-12);
    pc.hum_max_iterations = cfg.get_int("hum.max_iterations", 20000);
    if (!(pc.delta > 0.0)) throw ConfigError("pipeline.delta", "pipeline.delta must be > 0");
    try {
        pc.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError("pipeline", e.what());
    }
    return pc;
}

void write_json(ScenarioContext& ctx, const std::string& name, const nlohmann::json& j) {
    std::ofstream out(ctx.path(name));
    if (!out) throw IoError("cannot open output file: " + ctx.out_dir + "/" + name);
    out << j.dump(2) << "\n";
}

nlohmann::json hum_record_json(const HumResult& res) {
    nlohmann::json stages = nlohmann::json::array();
    for (const auto& st : res.stages)
        stages.push_back({{"epsilon", st.epsilon},
                          {"iterations", st.iterations},
                          {"J", st.J},
                          {"residual", st.residual}});
    return {{"stages", stages},
            {"iterations_total", res.iterations_total},
            {"J", res.J_value},
            {"neg_part_norm", res.neg_part_norm},
            {"final_norm_l2", res.final_norm_l2},
            {"control_sup", res.control_sup},
            {"cost_ratio", res.cost_ratio},
            {"duality_residual", res.duality_residual_value},
            {"converged", res.converged},
            {"j_monotone", res.j_monotone},
            {"warning", res.warning}};
}

// Exactly one distinct nonzero value, supported on omega at every step.
bool control_is_single_constant(const Grid1D& grid, const ControlWindow& w,
                                const SpaceTimeField& h) {
    std::set<double> nonzero;
    Vector ind = window_indicator(grid, w);
    for (int k = 0; k < h.values.rows(); ++k)
        for (int i = 0; i < grid.n_nodes; ++i) {
            const double v = h.values(k, i);
            if (v != 0.0) {
                if (ind(i) == 0.0) return false;
                nonzero.insert(v);
            }
        }
    return nonzero.size() == 1;
}

// ---------------------------------------------------------------------------
// NonnegSteer
// ---------------------------------------------------------------------------
void scenario_nonneg_steer(ScenarioContext& ctx) {
    Grid1D grid = grid_from(ctx.cfg);
    ControlWindow window = window_from(ctx.cfg, grid);
    Vector y0 = initial_state(ctx.cfg, grid);
    HumConfig hum = hum_from(ctx.cfg);
    const double T = ctx.cfg.get_double("time.t1", 1.0);
    const int steps = ctx.cfg.get_int("time.steps", 2000);
    if (steps < 1) throw ConfigError("time.steps", "time.steps must be >= 1");
    TimeGrid tg = build_time_grid(0.0, T, steps);

    const double M = ctx.cfg.get_double("potential.M", 0.0);
    SpaceTimeField a = M == 0.0 ? SpaceTimeField::zero(tg) : SpaceTimeField::constant(grid, tg, -M);

    HumResult res = steer_nonnegative(grid, tg, a, window, y0, hum);

    write_control_csv(ctx.path("control.csv"), grid, res.control);
    write_csv(ctx.path("final_state.csv"), {"x", "y"}, [&] {
        std::vector<std::vector<double>> rows;
        const Vector yT = res.trajectory.at(tg.n_steps);
        for (int i = 0; i < grid.n_nodes; ++i) rows.push_back({grid.nodes(i), yT(i)});
        return rows;
    }());
    write_json(ctx, "hum_record.json", hum_record_json(res));

    const double scale = 1.0 + norm_w(grid, y0);
    const double tol = 10.0 * (res.duality_residual_value + 1e-14 * scale);
    ctx.assert_that("hum_converged", res.converged);
    ctx.assert_that("j_nonpositive", res.J_value <= 1e-12 * scale);
    ctx.assert_that("j_monotone", res.j_monotone);
    ctx.assert_that("neg_part_bound", res.neg_part_norm <= hum.epsilon + tol);
    ctx.assert_that("control_constant",
                    res.control_sup == 0.0 || control_is_single_constant(grid, window, res.control));
    ctx.metric("neg_part_norm", res.neg_part_norm);
    ctx.metric("J", res.J_value);
    ctx.metric("control_sup", res.control_sup);
    ctx.metric("cost_ratio", res.cost_ratio);
    ctx.metric("duality_residual", res.duality_residual_value);
    ctx.metric("epsilon", hum.epsilon);
}

// ---------------------------------------------------------------------------
// GlobalNull
// ---------------------------------------------------------------------------
void scenario_global_null(ScenarioContext& ctx) {
    Grid1D grid = grid_from(ctx.cfg);
    ControlWindow window = window_from(ctx.cfg, grid);
    Vector y0 = initial_state(ctx.cfg, grid);
    PipelineConfig pc = pipeline_from(ctx.cfg);

    PipelineReport rep = run_global_null(grid, window, pc, y0);

    write_control_csv(ctx.path("phase1_control.csv"), grid, rep.phase1.control);
    if (rep.phase2.free_solve.times.size() > 0)
        write_norm_series_csv(ctx.path("phase2_norms.csv"), rep.phase2.free_solve);
    if (!rep.phase3.control.is_zero())
        write_control_csv(ctx.path("phase3_control.csv"), grid, rep.phase3.control);

    // Combined control over [0, T3]: phase 1 rows, zero rows on [T1, T2],
    // phase 3 rows, all on their own meshes (t is explicit per row).
    {
        std::ofstream out(ctx.path("combined_control.csv"));
        if (!out) throw IoError("cannot open combined_control.csv");
        out << "t,x,h\n";
        auto dump = [&](const SpaceTimeField& f, bool skip_first_row) {
            if (f.is_zero()) return;
            for (int k = skip_first_row ? 1 : 0; k < f.values.rows(); ++k)
                for (int i = 0; i < grid.n_nodes; ++i)
                    out << format_g17(f.tg.node(k)) << ',' << format_g17(grid.nodes(i)) << ','
                        << format_g17(f.values(k, i)) << "\n";
        };
        dump(rep.phase1.control, false);
        if (rep.phase2.free_solve.times.size() > 0) {
            SpaceTimeField zeros;
            zeros.tg = rep.phase2.free_solve.trajectory.tg;
            zeros.values = Matrix::Zero(zeros.tg.n_steps + 1, grid.n_nodes);
            dump(zeros, true);
        }
        dump(rep.phase3.control, true);
    }

    nlohmann::json j{{"T1", rep.T1},
                     {"T2", rep.T2},
                     {"T3", rep.T3},
                     {"status", static_cast<int>(rep.status)},
                     {"failure", rep.failure},
                     {"final_l2", rep.final_l2},
                     {"phase1",
                      {{"iterations", rep.phase1.picard_iterations},
                       {"neg_part_norm", rep.phase1.neg_part_norm},
                       {"t_star", rep.phase1.t_star},
                       {"control_level", rep.phase1.control_level},
                       {"damped", rep.phase1.damped}}},
                     {"phase2",
                      {{"max_violation", rep.phase2.max_violation},
                       {"clip_norm", rep.phase2.clip_norm},
                       {"final_sup", rep.phase2.final_sup},
                       {"interp_error_bound", rep.phase2.certificate.interp_error_bound}}},
                     {"phase3",
                      {{"iterations", rep.phase3.picard_iterations},
                       {"final_l2", rep.phase3.final_l2},
                       {"control_sup", rep.phase3.control_sup}}}};
    write_json(ctx, "report.json", j);

    const double phase1_tol = 1e-6 + 100.0 * pc.picard_tol;
    ctx.assert_that("pipeline_success", rep.success());
    ctx.assert_that("final_norm", rep.success() && rep.final_l2 <= 2.0 * pc.eps_final);
    ctx.assert_that("phase1_neg_bound",
                    rep.phase1.converged && rep.phase1.neg_part_norm <= pc.working_eps() + phase1_tol);
    ctx.assert_that("phase2_envelope", rep.phase2.pass);
    ctx.metric("T1", rep.T1);
    ctx.metric("T2", rep.T2);
    ctx.metric("T3", rep.T3);
    ctx.metric("final_l2", rep.final_l2);
    ctx.metric("phase1_neg", rep.phase1.neg_part_norm);
    ctx.metric("phase2_violation", rep.phase2.max_violation);
    ctx.metric("phase1_iterations", rep.phase1.picard_iterations);
    ctx.metric("phase3_iterations", rep.phase3.picard_iterations);
}

// ---------------------------------------------------------------------------
// BlowupDemo
// ---------------------------------------------------------------------------
void scenario_blowup_demo(ScenarioContext& ctx) {
    KeyValueConfig cfg = ctx.cfg;
    if (!cfg.has("nonlinearity.family")) cfg.set("nonlinearity.family", "abs_log");
    if (!cfg.has("nonlinearity.sigma")) cfg.set("nonlinearity.sigma", "-1");
    if (!cfg.has("initial.amplitude")) cfg.set("initial.amplitude", "100");

    Grid1D grid = grid_from(cfg);
    ControlWindow window = window_from(cfg, grid);
    NonlinearitySpec spec = nonlinearity_from(cfg);
    Vector y0 = initial_state(cfg, grid);
    const double horizon = cfg.get_double("blowup.horizon", 1.0);
    const int steps = cfg.get_int("blowup.steps", 5000);
    const bool with_companion = cfg.get_bool("blowup.with_companion", true);

    PipelineConfig companion;
    companion.f = spec;
    companion.eps_schedule = cfg.get_double_list("hum.eps_schedule", {1e-1, 1e-2, 1e-3});
    companion.picard_tol = cfg.get_double("pipeline.picard_tol", 1e-6);
    companion.picard_max = cfg.get_int("pipeline.picard_max", 30);
    companion.blowup_threshold = cfg.get_double("blowup.threshold", 1e8);
    companion.branch = spec.sign_neg() ? SteeringBranch::Nonpositive : SteeringBranch::Nonnegative;

    BlowupReport rep =
        run_blowup_demo(grid, window, spec, y0, horizon, steps, companion, with_companion);

    nlohmann::json j{{"detected", rep.detected},
                     {"t_star", rep.t_star},
                     {"t_star_uncertainty", rep.t_star_uncertainty},
                     {"oracle_t_star", rep.oracle_t_star},
                     {"rel_gap", rep.rel_gap},
                     {"constant_data", rep.constant_data},
                     {"final_sup", rep.final_sup},
                     {"companion_ran", rep.companion_ran},
                     {"companion_completed", rep.companion_completed},
                     {"companion_final_sup", rep.companion_final_sup},
                     {"companion_picard_iterations", rep.companion_picard_iterations}};
    write_json(ctx, "report.json", j);

    ctx.assert_that("blowup_detected", rep.detected);
    if (rep.constant_data && rep.oracle_t_star > 0.0)
        ctx.assert_that("oracle_match", rep.detected && rep.rel_gap <= 0.05);
    if (rep.companion_ran) ctx.assert_that("companion_no_blowup", rep.companion_completed);
    ctx.metric("t_star", rep.t_star);
    ctx.metric("oracle_t_star", rep.oracle_t_star);
    ctx.metric("rel_gap", rep.rel_gap);
}

// ---------------------------------------------------------------------------
// ObservabilitySweep
// ---------------------------------------------------------------------------
void scenario_observability_sweep(ScenarioContext& ctx) {
    Grid1D grid = grid_from(ctx.cfg);
    ControlWindow window = window_from(ctx.cfg, grid);
    const std::vector<double> Ms =
        ctx.cfg.get_double_list("observability.M_values", {0, 4, 16, 64, 256});
    const int restarts = ctx.cfg.get_int("observability.restarts", 12);
    const double T = ctx.cfg.get_double("observability.T", 0.3);
    int steps = ctx.cfg.get_int("observability.steps", 0);
    const double M_max = *std::max_element(Ms.begin(), Ms.end());
    {
        const int needed = static_cast<int>(std::ceil(T / monotone_tau_max(-M_max))) + 1;
        if (steps <= 0) steps = std::max(300, needed);
        if (T / steps > monotone_tau_max(-M_max))
            throw ConfigError("observability.steps",
                              "observability.steps too small for the monotone restriction at max M");
    }
    TimeGrid tg = build_time_grid(0.0, T, steps);
    Vector y0 = initial_state(ctx.cfg, grid);

    HumConfig hum = hum_from(ctx.cfg);

    std::vector<std::vector<double>> obs_rows, cost_rows;
    std::vector<std::pair<double, double>> cost_samples, nonneg_samples, signed_samples;
    bool orderings_ok = true, steers_ok = true;
    for (std::size_t idx = 0; idx < Ms.size(); ++idx) {
        const double M = Ms[idx];
        SpaceTimeField a =
            M == 0.0 ? SpaceTimeField::zero(tg) : SpaceTimeField::constant(grid, tg, -M);

        SignedObservability sig = estimate_observability_signed(grid, tg, a, window);
        ObservabilityEstimate est = estimate_observability_nonneg(
            grid, tg, a, window, restarts, ctx.seed + 1000 * idx);
        est.M = M;
        est.C_signed_L2 = std::max(sig.C_signed_L2, est.C_cone_L2);
        est.regularized = sig.regularized;
        orderings_ok = orderings_ok && est.orderings_hold();

        HumResult steer = steer_nonnegative(grid, tg, a, window, y0, hum);
        steers_ok = steers_ok && steer.converged;

        obs_rows.push_back({M, est.C_nonneg_L1, est.C_cone_L2, est.C_signed_L2,
                            static_cast<double>(est.restarts_used)});
        cost_rows.push_back({M, steer.cost_ratio});
        cost_samples.emplace_back(M, steer.cost_ratio);
        nonneg_samples.emplace_back(M, est.C_nonneg_L1);
        signed_samples.emplace_back(M, est.C_signed_L2);
    }

    write_csv(ctx.path("observability_sweep.csv"),
              {"M", "C_nonneg_L1", "C_cone_L2", "C_signed_L2", "restarts_used"}, obs_rows);
    write_csv(ctx.path("cost_sweep.csv"), {"M", "cost_ratio"}, cost_rows);

    CostModel cost_model = fit_cost_exponent(cost_samples);
    CostModel nonneg_model = fit_cost_exponent(nonneg_samples);
    CostModel signed_model = fit_cost_exponent(signed_samples);

    auto fit_json = [](const CostModel& m) {
        return nlohmann::json{
            {"half", {{"c0", m.fit_half.c0}, {"c1", m.fit_half.c1}, {"r2", m.fit_half.r_squared}}},
            {"twothirds",
             {{"c0", m.fit_twothirds.c0},
              {"c1", m.fit_twothirds.c1},
              {"r2", m.fit_twothirds.r_squared}}},
            {"selected_beta", m.selected_beta},
            {"indeterminate", m.indeterminate}};
    };
    write_json(ctx, "fit_report.json",
               {{"steering_cost", fit_json(cost_model)},
                {"C_nonneg_L1", fit_json(nonneg_model)},
                {"C_signed_L2", fit_json(signed_model)}});

    ctx.assert_that("orderings", orderings_ok);
    ctx.assert_that("steering_converged", steers_ok);
    ctx.assert_that("cost_fit_r2", cost_model.fit_half.r_squared >= 0.9);
    ctx.assert_that("beta_ordering",
                    cost_model.selected_beta <= signed_model.selected_beta + 0.15);
    ctx.metric("cost_r2_half", cost_model.fit_half.r_squared);
    ctx.metric("beta_nonneg", cost_model.selected_beta);
    ctx.metric("beta_signed", signed_model.selected_beta);
}

// ---------------------------------------------------------------------------
// CarlemanCheck
// ---------------------------------------------------------------------------
void scenario_carleman_check(ScenarioContext& ctx) {
    Grid1D grid = grid_from(ctx.cfg);
    ControlWindow window = window_from(ctx.cfg, grid);
    const double lambda = ctx.cfg.get_double("carleman.lambda", 1.2);
    if (lambda < 1.0) throw ConfigError("carleman.lambda", "carleman.lambda must be >= 1");
    const std::vector<double> s_factors = ctx.cfg.get_double_list("carleman.s_factors", {1, 2, 4});
    const std::vector<double> potentials =
        ctx.cfg.get_double_list("carleman.potentials", {0, -10, -100});
    const int ensemble = ctx.cfg.get_int("carleman.ensemble", 20);
    const double T = ctx.cfg.get_double("carleman.T", 0.5);
    int steps = ctx.cfg.get_int("carleman.steps", 0);
    const bool calibrate = ctx.cfg.get_bool("carleman.calibrate", false);
    const double safety = ctx.cfg.get_double("carleman.safety", 2.0);
    const double frozen = ctx.cfg.get_double("carleman.C1_cal", 40.0);

    double a_worst = 0.0;
    for (double av : potentials) a_worst = std::min(a_worst, av);
    {
        const int needed = static_cast<int>(std::ceil(T / monotone_tau_max(a_worst))) + 1;
        if (steps <= 0) steps = std::max(500, needed);
        if (T / steps > monotone_tau_max(a_worst))
            throw ConfigError("carleman.steps",
                              "carleman.steps too small for the monotone restriction");
    }
    TimeGrid tg = build_time_grid(0.0, T, steps);
    WeightProfile profile = build_eta0(grid, window);

    // Seeded ensemble of nonnegative terminal data: constants, window bumps,
    // far bumps, |gaussian| profiles.
    std::mt19937_64 rng(ctx.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_int_distribution<int> node_pick(1, grid.n_nodes - 2);
    std::vector<Vector> members;
    members.push_back(Vector::Ones(grid.n_nodes));
    while (static_cast<int>(members.size()) < ensemble) {
        Vector q;
        switch (members.size() % 3) {
            case 0: {
                q = Vector::Zero(grid.n_nodes);
                q(node_pick(rng)) = 1.0;
                break;
            }
            case 1: {
                q = Vector::Zero(grid.n_nodes);
                const int c = node_pick(rng);
                for (int i = std::max(1, c - 3); i <= std::min(grid.n_nodes - 2, c + 3); ++i)
                    q(i) = 1.0 - std::abs(i - c) / 4.0;
                break;
            }
            default: {
                q.resize(grid.n_nodes);
                for (int i = 0; i < grid.n_nodes; ++i) q(i) = std::abs(gauss(rng));
                break;
            }
        }
        enforce_bc(grid, q);
        if (q.maxCoeff() > 0.0) members.push_back(q);
    }

    std::vector<std::vector<double>> rows;
    double max_ratio = 0.0;
    double scaling_rel_diff = 0.0;
    for (double av : potentials) {
        SpaceTimeField a =
            av == 0.0 ? SpaceTimeField::zero(tg) : SpaceTimeField::constant(grid, tg, av);
        CarlemanParams params;
        params.lambda = lambda;
        params.T = T;
        params.a_norm = std::abs(av);
        params.C_geom = 1.0;
        params.eta0_max = profile.eta0_max;
        params.bc = grid.bc;
        const double s1 = s1_threshold(params);
        for (std::size_t mi = 0; mi < members.size(); ++mi) {
            SolveResult q = solve_adjoint(grid, tg, a, members[mi], 1.0, StepMode::Monotone);
            for (double factor : s_factors) {
                params.s = factor * s1;
                const double ratio = carleman_ratio(q, grid, window, profile, params);
                if (std::isfinite(ratio)) max_ratio = std::max(max_ratio, ratio);
                rows.push_back({av, factor, static_cast<double>(mi), ratio});

                if (mi == 0 && factor == s_factors.front() && av == potentials.front()) {
                    SolveResult q5 =
                        solve_adjoint(grid, tg, a, 5.0 * members[mi], 1.0, StepMode::Monotone);
                    const double r5 = carleman_ratio(q5, grid, window, profile, params);
                    scaling_rel_diff = std::abs(r5 - ratio) / std::max(1e-300, std::abs(ratio));
                }
            }
        }
    }
    write_csv(ctx.path("carleman_ratios.csv"), {"a", "s_factor", "member", "ratio"}, rows);

    ctx.metric("max_ratio", max_ratio);
    ctx.metric("scaling_rel_diff", scaling_rel_diff);
    ctx.metric("m_grad_min_sq", profile.grad_min_sq);
    ctx.assert_that("scaling_invariance", scaling_rel_diff <= 1e-12);
    if (calibrate) {
        const double c1_cal = safety * max_ratio;
        ctx.manifest.constants["C1_cal"] = c1_cal;
        ctx.assert_that("calibration_positive", max_ratio > 0.0);
    } else {
        ctx.manifest.constants["C1_cal"] = frozen;
        ctx.assert_that("ratio_bound", max_ratio <= frozen);
    }
}

// ---------------------------------------------------------------------------
// SmoothingCheck
// ---------------------------------------------------------------------------
void scenario_smoothing_check(ScenarioContext& ctx) {
    Grid1D grid = grid_from(ctx.cfg);
    const double t_min = ctx.cfg.get_double("smoothing.t_min", 1e-3);
    const double t_max = ctx.cfg.get_double("smoothing.t_max", 1e-1);
    const int steps = ctx.cfg.get_int("smoothing.steps_per_sample", 2000);
    if (!(t_min > 0.0 && t_min < t_max))
        throw ConfigError("smoothing.t_min", "need 0 < smoothing.t_min < smoothing.t_max");
    TimeGrid window = build_time_grid(t_min, t_max, 1);

    SmoothingFit fit = estimate_smoothing_exponent(grid, window, steps);
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < fit.times.size(); ++i)
        rows.push_back({fit.times[i], fit.log_ratio[i]});
    write_csv(ctx.path("smoothing.csv"), {"t", "log_ratio"}, rows);

    // Constants are invariant under the Neumann flow: flat control case.
    double const_drift = 0.0;
    if (grid.bc == BoundaryCondition::Neumann) {
        TimeGrid tg = build_time_grid(0.0, t_max, 200);
        LinearProblem p = LinearProblem::make(grid, tg, SpaceTimeField::zero(tg),
                                              SpaceTimeField::zero(tg),
                                              Vector::Constant(grid.n_nodes, 3.0));
        SolveResult r = solve_forward(p, 1.0, StepMode::Monotone);
        const_drift = std::abs(r.final_state().cwiseAbs().maxCoeff() - 3.0) / 3.0;
        ctx.assert_that("constant_preserved", const_drift <= 1e-10);
    }

    ctx.assert_that("slope_near_minus_half", std::abs(fit.slope + 0.5) <= 0.1);
    ctx.metric("slope", fit.slope);
    ctx.metric("constant_drift", const_drift);
}

// ---------------------------------------------------------------------------
// DeltaCalibration
// ---------------------------------------------------------------------------
void scenario_delta_calibration(ScenarioContext& ctx) {
    Grid1D grid = grid_from(ctx.cfg);
    ControlWindow window = window_from(ctx.cfg, grid);
    PipelineConfig pc = pipeline_from(ctx.cfg);
    double lo = ctx.cfg.get_double("delta_calib.lo", 1e-3);
    double hi = ctx.cfg.get_double("delta_calib.hi", 0.5);
    const int iterations = ctx.cfg.get_int("delta_calib.iterations", 8);
    if (!(lo > 0.0 && lo < hi)) throw ConfigError("delta_calib.lo", "need 0 < lo < hi");

    std::vector<std::vector<double>> rows;
    auto feasible = [&](double delta) {
        PipelineConfig trial = pc;
        trial.delta = delta;
        Vector state = Vector::Constant(grid.n_nodes, delta);
        enforce_bc(grid, state);
        double final_l2 = std::numeric_limits<double>::quiet_NaN();
        bool ok = false;
        try {
            Phase3Result r = local_null_control(grid, window, trial, state, 0.0);
            final_l2 = r.final_l2;
            ok = r.converged && r.final_l2 <= 2.0 * trial.eps_final;
        } catch (const std::exception&) {
            ok = false;
        }
        rows.push_back({delta, ok ? 1.0 : 0.0, final_l2});
        return ok;
    };

    bool lo_ok = feasible(lo);
    double delta_star = 0.0;
    if (lo_ok) {
        if (feasible(hi)) {
            delta_star = hi;
        } else {
            double good = lo, bad = hi;
            for (int it = 0; it < iterations; ++it) {
                const double mid = std::sqrt(good * bad);
                if (feasible(mid))
                    good = mid;
                else
                    bad = mid;
            }
            delta_star = good;
        }
    }
    write_csv(ctx.path("delta_calibration.csv"), {"delta", "success", "final_l2"}, rows);
    ctx.manifest.constants["delta_star"] = delta_star;
    ctx.assert_that("lo_feasible", lo_ok);
    ctx.metric("delta_star", delta_star);
}

using ScenarioFn = void (*)(ScenarioContext&);

ScenarioFn find_scenario(const std::string& tag) {
    if (tag == "NonnegSteer") return scenario_nonneg_steer;
    if (tag == "GlobalNull") return scenario_global_null;
    if (tag == "BlowupDemo") return scenario_blowup_demo;
    if (tag == "ObservabilitySweep") return scenario_observability_sweep;
    if (tag == "CarlemanCheck") return scenario_carleman_check;
    if (tag == "SmoothingCheck") return scenario_smoothing_check;
    if (tag == "DeltaCalibration") return scenario_delta_calibration;
    return nullptr;
}

} // namespace

ScenarioOutcome run_scenario(const KeyValueConfig& cfg, const std::string& out_dir) {
    ScenarioOutcome outcome;
    ScenarioContext ctx{cfg, out_dir};
    ctx.manifest.config_echo = cfg.entries();
    const auto t0 = std::chrono::steady_clock::now();

    try {
        const std::string tag = cfg.require_string("scenario");
        ScenarioFn fn = find_scenario(tag);
        if (fn == nullptr)
            throw ConfigError("scenario", "unknown scenario '" + tag + "'");
        const long long seed = cfg.get_int("seed", 1);
        if (seed < 0) throw ConfigError("seed", "seed must be nonnegative");
        ctx.seed = static_cast<std::uint64_t>(seed);
        ctx.manifest.seed = ctx.seed;
        fn(ctx);
    } catch (const ConfigError& e) {
        outcome.exit_code = 2;
        outcome.message = std::string(e.what()) + (e.key.empty() ? "" : " [" + e.key + "]");
        return outcome;
    } catch (const IoError& e) {
        outcome.exit_code = 3;
        outcome.message = e.what();
        return outcome;
    } catch (const std::exception& e) {
        ctx.assert_that("completed_without_error", false);
        outcome.message = e.what();
    }

    const auto t1 = std::chrono::steady_clock::now();
    ctx.manifest.wall_clock_seconds = std::chrono::duration<double>(t1 - t0).count();
    try {
        write_manifest(out_dir + "/manifest.json", ctx.manifest);
    } catch (const IoError& e) {
        outcome.exit_code = 3;
        outcome.message = e.what();
        return outcome;
    }
    outcome.manifest = ctx.manifest;
    if (!ctx.manifest.all_assertions_pass()) {
        outcome.exit_code = 1;
        if (outcome.message.empty()) {
            for (const auto& [name, ok] : ctx.manifest.assertions)
                if (!ok) {
                    outcome.message = "assertion failed: " + name;
                    break;
                }
        }
    }
    return outcome;
}

ScenarioOutcome run_sweep(const KeyValueConfig& cfg, const std::string& param,
                          const std::vector<std::string>& values, const std::string& out_dir,
                          int workers) {
    ScenarioOutcome outcome;
    if (values.empty()) {
        outcome.exit_code = 2;
        outcome.message = "sweep requires a nonempty value list";
        return outcome;
    }
    if (param.empty()) {
        outcome.exit_code = 2;
        outcome.message = "sweep requires --param";
        return outcome;
    }

    std::vector<ScenarioOutcome> cells(values.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= values.size()) return;
            KeyValueConfig cell_cfg = cfg;
            cell_cfg.set(param, values[i]);
            cells[i] = run_scenario(cell_cfg, out_dir + "/cell_" + std::to_string(i));
        }
    };
    const int n_threads = std::max(1, std::min<int>(workers, static_cast<int>(values.size())));
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    // Aggregate: the swept value, exit code, pass flag, then the union of
    // cell metrics (missing entries become nan).
    std::set<std::string> metric_keys;
    for (const auto& c : cells)
        for (const auto& [k, v] : c.manifest.metrics) metric_keys.insert(k);
    std::vector<std::string> header{param, "exit_code", "pass"};
    header.insert(header.end(), metric_keys.begin(), metric_keys.end());
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < values.size(); ++i) {
        std::vector<double> row;
        char* end = nullptr;
        const double v = std::strtod(values[i].c_str(), &end);
        row.push_back(end != values[i].c_str() ? v : static_cast<double>(i));
        row.push_back(cells[i].exit_code);
        row.push_back(cells[i].manifest.all_assertions_pass() && cells[i].exit_code == 0 ? 1.0 : 0.0);
        for (const auto& k : metric_keys) {
            auto it = cells[i].manifest.metrics.find(k);
            row.push_back(it == cells[i].manifest.metrics.end()
                              ? std::numeric_limits<double>::quiet_NaN()
                              : it->second);
        }
        rows.push_back(std::move(row));
    }
    try {
        write_csv(out_dir + "/sweep.csv", header, rows);
        RunManifest agg;
        agg.config_echo = cfg.entries();
        agg.config_echo["sweep.param"] = param;
        agg.seed = static_cast<std::uint64_t>(cfg.get_int("seed", 1));
        for (std::size_t i = 0; i < cells.size(); ++i)
            agg.assertions["cell_" + std::to_string(i)] =
                cells[i].exit_code == 0 && cells[i].manifest.all_assertions_pass();
        agg.outputs.push_back("sweep.csv");
        write_manifest(out_dir + "/manifest.json", agg);
        outcome.manifest = agg;
    } catch (const IoError& e) {
        outcome.exit_code = 3;
        outcome.message = e.what();
        return outcome;
    }
    for (const auto& c : cells)
        if (c.exit_code != 0) {
            outcome.exit_code = 1;
            outcome.message = "one or more sweep cells failed";
        }
    return outcome;
}

} // namespace heatctl

#include "heatctl/hum.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace heatctl {

Representers precompute_representers(const Grid1D& grid, const TimeGrid& tg,
                                     const SpaceTimeField& a, const ControlWindow& window,
                                     const Vector& y0, double theta, StepMode mode) {
    Representers reps;
    Vector ind = window_indicator(grid, window);
    enforce_bc(grid, ind);
    {
        LinearProblem p = LinearProblem::make(grid, tg, a, SpaceTimeField::of_spatial(grid, tg, ind),
                                              Vector::Zero(grid.n_nodes));
        reps.zT = solve_forward(p, theta, mode).final_state();
    }
    {
        LinearProblem p = LinearProblem::make(grid, tg, a, SpaceTimeField::zero(tg), y0);
        reps.YT = solve_forward(p, theta, mode).final_state();
    }
    return reps;
}

HumProblem make_hum_problem(const Grid1D& grid, const TimeGrid& tg, const SpaceTimeField& a,
                            const ControlWindow& window, const Vector& y0, double theta,
                            StepMode mode) {
    HumProblem pb;
    pb.grid = grid;
    pb.tg = tg;
    pb.a = a;
    pb.window = window;
    pb.y0 = y0;
    enforce_bc(pb.grid, pb.y0);
    pb.theta = theta;
    pb.mode = mode;
    pb.reps = precompute_representers(grid, tg, a, window, y0, theta, mode);
    return pb;
}

namespace {

void ensure_gramian(HumProblem& pb) {
    if (pb.has_gramian) return;
    AdjointBasisMaps maps =
        assemble_adjoint_basis_maps(pb.grid, pb.tg, pb.a, pb.window, pb.theta, pb.mode);
    pb.gramian = std::move(maps.window_l2_form);
    pb.has_gramian = true;
}

// Hessian of the smooth part as an operator in the weighted geometry.
Vector smooth_hessian_apply(const HumProblem& pb, const HumConfig& cfg, const Vector& v) {
    if (cfg.cone) return inner_w(pb.grid, pb.reps.zT, v) * pb.reps.zT;
    return (pb.gramian * v).cwiseQuotient(pb.grid.quad_weights);
}

double power_iteration_curvature(HumProblem& pb, const HumConfig& cfg) {
    if (!cfg.cone) ensure_gramian(pb);
    std::mt19937_64 rng(0x9e3779b97f4a7c15ull);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Vector v(pb.grid.n_nodes);
    for (int i = 0; i < v.size(); ++i) v(i) = gauss(rng);
    enforce_bc(pb.grid, v);
    double lam = 0.0;
    for (int it = 0; it < 40; ++it) {
        const double nv = norm_w(pb.grid, v);
        if (nv == 0.0) return 0.0;
        v /= nv;
        Vector hv = smooth_hessian_apply(pb, cfg, v);
        lam = norm_w(pb.grid, hv);
        if (lam == 0.0) return 0.0;
        v = hv;
    }
    return lam;
}

// L2 window observation int int_omega q^2 by an adjoint solve (the
// by-definition route; the assembled form gives the same sums).
double window_l2_observation(const HumProblem& pb, const Vector& q_T) {
    SolveResult adj = solve_adjoint(pb.grid, pb.tg, pb.a, q_T, pb.theta, pb.mode);
    double obs = 0.0;
    for (int k = 1; k <= pb.tg.n_steps; ++k)
        for (int i : pb.window.omega_nodes) {
            const double lam = adj.stage.values(k, i);
            obs += pb.tg.tau * pb.grid.quad_weights(i) * lam * lam;
        }
    return obs;
}

Vector prox_project(const Grid1D& grid, Vector v, double shrink, bool cone) {
    const double nv = norm_w(grid, v);
    const double factor = nv > 0.0 ? std::max(1.0 - shrink / nv, 0.0) : 0.0;
    v *= factor;
    if (cone) v = v.cwiseMax(0.0);
    enforce_bc(grid, v);
    return v;
}

} // namespace

Vector project_nonneg(const Vector& u) { return u.cwiseMax(0.0); }

double eval_J(const HumProblem& problem, const HumConfig& config, const Vector& q_T) {
    const double scale = std::max(1.0, q_T.cwiseAbs().maxCoeff());
    if (config.cone && q_T.minCoeff() < -1e-12 * scale)
        throw std::invalid_argument("eval_J: cone mode requires q_T >= 0");
    double smooth;
    if (config.cone) {
        const double obs = inner_w(problem.grid, problem.reps.zT, q_T);
        smooth = 0.5 * obs * obs;
    } else {
        smooth = 0.5 * window_l2_observation(problem, q_T);
    }
    return smooth + config.epsilon * norm_w(problem.grid, q_T) +
           inner_w(problem.grid, problem.reps.YT, q_T);
}

Vector smooth_gradient(HumProblem& problem, const HumConfig& config, const Vector& q_T) {
    if (config.cone)
        return inner_w(problem.grid, problem.reps.zT, q_T) * problem.reps.zT + problem.reps.YT;
    ensure_gramian(problem);
    return (problem.gramian * q_T).cwiseQuotient(problem.grid.quad_weights) + problem.reps.YT;
}

HumResult minimize_J(HumProblem& problem, const HumConfig& config) {
    config.validate();
    HumResult res;
    const Grid1D& grid = problem.grid;
    const int n = grid.n_nodes;
    if (!config.cone) ensure_gramian(problem);

    const double L = power_iteration_curvature(problem, config);
    if (!(L > 0.0)) {
        res.warning = "observation-degenerate window";
        res.q_T_min = Vector::Zero(n);
        res.J_value = 0.0;
        return res;
    }
    const double base_step = 1.0 / (1.05 * L);
    const double scale = std::max(1.0, norm_w(grid, problem.reps.YT));

    std::vector<double> schedule = config.eps_schedule;
    if (schedule.empty()) schedule.push_back(config.epsilon);

    Vector q = Vector::Zero(n);
    HumConfig stage_cfg = config;
    for (double eps : schedule) {
        stage_cfg.epsilon = eps;
        auto J = [&](const Vector& v) { return eval_J(problem, stage_cfg, v); };
        auto grad = [&](const Vector& v) { return smooth_gradient(problem, stage_cfg, v); };

        HumStageRecord record;
        record.epsilon = eps;
        Vector q_prev = q;
        double Jq = J(q);
        double t_momentum = 1.0;
        double residual = std::numeric_limits<double>::infinity();
        res.j_history.push_back(Jq);

        for (int it = 0; it < config.max_iterations; ++it) {
            ++record.iterations;
            ++res.iterations_total;

            const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t_momentum * t_momentum));
            Vector extr = q + ((t_momentum - 1.0) / t_next) * (q - q_prev);
            if (config.cone) extr = extr.cwiseMax(0.0);
            t_momentum = t_next;

            Vector cand = prox_project(grid, extr - base_step * grad(extr),
                                       base_step * eps, config.cone);
            double Jc = J(cand);

            if (!(Jc <= Jq)) {
                // Momentum overshoot: restart from the stable iterate with
                // backtracking so the stage stays monotone.
                t_momentum = 1.0;
                double step = base_step;
                bool ok = false;
                for (int back = 0; back < 60; ++back) {
                    cand = prox_project(grid, q - step * grad(q), step * eps, config.cone);
                    Jc = J(cand);
                    if (Jc <= Jq) {
                        ok = true;
                        break;
                    }
                    step *= 0.5;
                }
                if (!ok) { // no descent direction left: converged
                    residual = 0.0;
                    break;
                }
                residual = norm_w(grid, cand - q) / step;
            } else {
                residual = norm_w(grid, cand - q) / base_step;
            }

            q_prev = q;
            q = cand;
            if (Jc > Jq + 1e-12 * std::max(1.0, std::abs(Jq))) res.j_monotone = false;
            Jq = Jc;
            res.j_history.push_back(Jq);
            if (residual <= config.stop_tol * scale) break;
        }
        record.J = Jq;
        record.residual = residual;
        res.stages.push_back(record);
        res.opt_residual = residual;
        res.converged = residual <= config.stop_tol * scale;
    }

    res.q_T_min = q;
    res.J_value = res.stages.back().J;
    return res;
}

SpaceTimeField extract_control(HumProblem& problem, const Vector& q_min, bool cone) {
    const Grid1D& grid = problem.grid;
    const TimeGrid& tg = problem.tg;
    Vector ind = window_indicator(grid, problem.window);
    enforce_bc(grid, ind);

    SpaceTimeField h;
    h.tg = tg;
    h.values = Matrix::Zero(tg.n_steps + 1, grid.n_nodes);
    if (cone) {
        const double level = inner_w(grid, problem.reps.zT, q_min);
        for (int k = 0; k <= tg.n_steps; ++k) h.values.row(k) = (level * ind).transpose();
    } else {
        SolveResult adj = solve_adjoint(grid, tg, problem.a, q_min, problem.theta, problem.mode);
        for (int k = 1; k <= tg.n_steps; ++k)
            h.values.row(k) = adj.stage.values.row(k).cwiseProduct(ind.transpose());
    }
    return h;
}

namespace {

HumResult run_hum(const Grid1D& grid, const TimeGrid& tg, const SpaceTimeField& a,
                  const ControlWindow& window, const Vector& y0, const HumConfig& config) {
    HumProblem pb = make_hum_problem(grid, tg, a, window, y0, 1.0, StepMode::Accuracy);
    // Verification solves honor the monotone restriction whenever tau allows it.
    const double a_min = a.is_zero() ? 0.0 : a.values.minCoeff();
    if (tg.tau <= monotone_tau_max(a_min)) pb.mode = StepMode::Monotone;

    HumResult res = minimize_J(pb, config);
    if (!res.warning.empty()) return res;

    res.control = extract_control(pb, res.q_T_min, config.cone);
    LinearProblem verify = LinearProblem::make(grid, tg, a, res.control, y0);
    SolveResult fwd = solve_forward(verify, pb.theta, pb.mode);
    res.trajectory = fwd.trajectory;

    const Vector yT = fwd.final_state();
    res.neg_part_norm = norm_w(grid, (-yT).cwiseMax(0.0));
    res.final_norm_l2 = norm_w(grid, yT);
    res.control_sup = res.control.max_abs();
    const double y0_norm = norm_w(grid, pb.y0);
    res.cost_ratio = y0_norm > 0.0 ? res.control_sup / y0_norm : 0.0;
    res.duality_residual_value =
        duality_residual(grid, tg, a, res.control, pb.y0, res.q_T_min, pb.theta, pb.mode);
    return res;
}

} // namespace

HumResult steer_nonnegative(const Grid1D& grid, const TimeGrid& tg, const SpaceTimeField& a,
                            const ControlWindow& window, const Vector& y0,
                            const HumConfig& config) {
    HumConfig cfg = config;
    cfg.cone = true;
    cfg.observation = ObservationKind::L1Window;
    return run_hum(grid, tg, a, window, y0, cfg);
}

HumResult null_control(const Grid1D& grid, const TimeGrid& tg, const SpaceTimeField& a,
                       const ControlWindow& window, const Vector& y0, const HumConfig& config) {
    HumConfig cfg = config;
    cfg.cone = false;
    cfg.observation = ObservationKind::L2Window;
    return run_hum(grid, tg, a, window, y0, cfg);
}

} // namespace heatctl

#include "heatctl/parabolic.hpp"

#include <algorithm>
#include <cmath>

namespace heatctl {

namespace {

/// Symmetric tridiagonal system; Thomas elimination without pivoting
/// (valid for the M-matrix / positive definite steps used here).
struct SymTridiag {
    Vector diag; // n
    Vector off;  // n-1, couples (i, i+1)

    Vector apply(const Vector& v) const {
        const int n = static_cast<int>(diag.size());
        Vector out(n);
        for (int i = 0; i < n; ++i) {
            double s = diag(i) * v(i);
            if (i > 0) s += off(i - 1) * v(i - 1);
            if (i < n - 1) s += off(i) * v(i + 1);
            out(i) = s;
        }
        return out;
    }

    Vector solve(Vector rhs) const {
        const int n = static_cast<int>(diag.size());
        Vector d = diag;
        const double scale = diag.cwiseAbs().maxCoeff() + off.cwiseAbs().maxCoeff();
        for (int i = 1; i < n; ++i) {
            if (std::abs(d(i - 1)) < 1e-14 * scale)
                throw SolverError("step matrix is numerically singular");
            const double m = off(i - 1) / d(i - 1);
            d(i) -= m * off(i - 1);
            rhs(i) -= m * rhs(i - 1);
        }
        if (std::abs(d(n - 1)) < 1e-14 * scale)
            throw SolverError("step matrix is numerically singular");
        Vector x(n);
        x(n - 1) = rhs(n - 1) / d(n - 1);
        for (int i = n - 2; i >= 0; --i)
            x(i) = (rhs(i) - off(i) * x(i + 1)) / d(i);
        return x;
    }

    // Same elimination applied to every column at once.
    Matrix solve(Matrix rhs) const {
        const int n = static_cast<int>(diag.size());
        Vector d = diag;
        const double scale = diag.cwiseAbs().maxCoeff() + off.cwiseAbs().maxCoeff();
        for (int i = 1; i < n; ++i) {
            if (std::abs(d(i - 1)) < 1e-14 * scale)
                throw SolverError("step matrix is numerically singular");
            const double m = off(i - 1) / d(i - 1);
            d(i) -= m * off(i - 1);
            rhs.row(i) -= m * rhs.row(i - 1);
        }
        if (std::abs(d(n - 1)) < 1e-14 * scale)
            throw SolverError("step matrix is numerically singular");
        Matrix x(n, rhs.cols());
        x.row(n - 1) = rhs.row(n - 1) / d(n - 1);
        for (int i = n - 2; i >= 0; --i)
            x.row(i) = (rhs.row(i) - off(i) * x.row(i + 1)) / d(i);
        return x;
    }

    Matrix apply(const Matrix& v) const {
        const int n = static_cast<int>(diag.size());
        Matrix out = diag.asDiagonal() * v;
        out.topRows(n - 1) += off.asDiagonal() * v.bottomRows(n - 1);
        out.bottomRows(n - 1) += off.asDiagonal() * v.topRows(n - 1);
        return out;
    }
};

// Stiffness K = -W * Lap as a symmetric tridiagonal; Dirichlet boundary
// rows are decoupled (identity handled by the caller).
SymTridiag stiffness(const Grid1D& grid) {
    const int n = grid.n_nodes;
    const double inv_h = 1.0 / grid.h;
    SymTridiag K;
    K.diag = Vector::Constant(n, 2.0 * inv_h);
    K.off = Vector::Constant(n - 1, -inv_h);
    K.diag(0) = inv_h;
    K.diag(n - 1) = inv_h;
    if (grid.is_dirichlet()) {
        K.diag(0) = 0.0;
        K.diag(n - 1) = 0.0;
        K.off(0) = 0.0;
        K.off(n - 2) = 0.0;
    }
    return K;
}

Vector potential_at(const SpaceTimeField& a, int k, int n) {
    if (a.is_zero()) return Vector::Zero(n);
    return a.at(k);
}

// B_k = W + tau theta (K + W a^k); boundary rows become identity for
// Dirichlet so the factored solve stays symmetric.
SymTridiag step_matrix_implicit(const Grid1D& grid, const SymTridiag& K,
                                const Vector& a_k, double tau, double theta) {
    const int n = grid.n_nodes;
    SymTridiag B;
    B.diag = grid.quad_weights + tau * theta * (K.diag + grid.quad_weights.cwiseProduct(a_k));
    B.off = tau * theta * K.off;
    if (grid.is_dirichlet()) {
        B.diag(0) = 1.0;
        B.diag(n - 1) = 1.0;
    }
    return B;
}

// C_{k-1} = W - tau (1-theta) (K + W a^{k-1}); Dirichlet boundary rows zero.
SymTridiag step_matrix_explicit(const Grid1D& grid, const SymTridiag& K,
                                const Vector& a_k, double tau, double theta) {
    const int n = grid.n_nodes;
    SymTridiag C;
    C.diag = grid.quad_weights - tau * (1.0 - theta) * (K.diag + grid.quad_weights.cwiseProduct(a_k));
    C.off = -tau * (1.0 - theta) * K.off;
    if (grid.is_dirichlet()) {
        C.diag(0) = 0.0;
        C.diag(n - 1) = 0.0;
    }
    return C;
}

void check_scheme(double theta, const TimeGrid& tg, double a_min, StepMode mode) {
    if (theta != 1.0 && theta != 0.5)
        throw std::invalid_argument("theta must be 1 (backward Euler) or 1/2 (Crank-Nicolson)");
    if (mode == StepMode::Monotone) {
        if (theta != 1.0)
            throw std::invalid_argument("monotone mode requires backward Euler");
        const double tau_max = monotone_tau_max(a_min);
        if (tg.tau > tau_max * (1.0 + 1e-12))
            throw std::invalid_argument("monotone mode requires tau <= 1/(1+2 max(0,-min a)); got tau = " +
                                        std::to_string(tg.tau) + ", bound = " + std::to_string(tau_max));
    }
}

void record_norms(const Grid1D& grid, const Vector& y, double t, SolveResult& res) {
    res.times.push_back(t);
    res.norm_l1.push_back(norm_lp(grid, y, 1.0));
    res.norm_l2.push_back(norm_lp(grid, y, 2.0));
    res.norm_linf.push_back(y.cwiseAbs().maxCoeff());
}

} // namespace

double monotone_tau_max(double min_potential) {
    return 1.0 / (1.0 + 2.0 * std::max(0.0, -min_potential));
}

LinearProblem LinearProblem::make(const Grid1D& grid, const TimeGrid& tg,
                                  SpaceTimeField a, SpaceTimeField source, Vector y0) {
    if (y0.size() != grid.n_nodes)
        throw std::invalid_argument("LinearProblem: y0 length does not match grid");
    auto check_field = [&](const SpaceTimeField& f, const char* name) {
        if (f.is_zero()) return;
        if (f.values.rows() != tg.n_steps + 1 || f.values.cols() != grid.n_nodes)
            throw std::invalid_argument(std::string("LinearProblem: ") + name +
                                        " shape does not match the grids");
    };
    check_field(a, "potential");
    check_field(source, "source");

    LinearProblem p;
    p.grid = grid;
    p.tg = tg;
    p.a = std::move(a);
    p.source = std::move(source);
    p.y0 = std::move(y0);
    p.a_sup = p.a.is_zero() ? 0.0 : p.a.values.cwiseAbs().maxCoeff();
    p.a_min = p.a.is_zero() ? 0.0 : p.a.values.minCoeff();
    enforce_bc(p.grid, p.y0);
    return p;
}

SolveResult solve_forward(const LinearProblem& p, double theta, StepMode mode) {
    check_scheme(theta, p.tg, p.a_min, mode);
    const Grid1D& grid = p.grid;
    const int n = grid.n_nodes;
    const int N = p.tg.n_steps;
    const double tau = p.tg.tau;
    const SymTridiag K = stiffness(grid);

    SolveResult res;
    res.mode = mode;
    res.trajectory.tg = p.tg;
    res.trajectory.values.resize(N + 1, n);

    Vector y = p.y0;
    enforce_bc(grid, y);
    res.trajectory.values.row(0) = y.transpose();
    record_norms(grid, y, p.tg.node(0), res);

    for (int k = 1; k <= N; ++k) {
        const Vector a_prev = potential_at(p.a, k - 1, n);
        const Vector a_next = potential_at(p.a, k, n);
        const SymTridiag C = step_matrix_explicit(grid, K, a_prev, tau, theta);
        const SymTridiag B = step_matrix_implicit(grid, K, a_next, tau, theta);

        Vector rhs = C.apply(y);
        if (!p.source.is_zero()) {
            Vector s = theta * p.source.at(k) + (1.0 - theta) * p.source.at(k - 1);
            enforce_bc(grid, s);
            rhs += tau * grid.quad_weights.cwiseProduct(s);
        }
        if (grid.is_dirichlet()) {
            rhs(0) = 0.0;
            rhs(n - 1) = 0.0;
        }
        y = B.solve(rhs);
        enforce_bc(grid, y);
        res.trajectory.values.row(k) = y.transpose();
        record_norms(grid, y, p.tg.node(k), res);
    }
    res.last_step = N;
    return res;
}

SolveResult solve_adjoint(const Grid1D& grid, const TimeGrid& tg, const SpaceTimeField& a,
                          const Vector& q_T, double theta, StepMode mode) {
    double a_min = a.is_zero() ? 0.0 : a.values.minCoeff();
    check_scheme(theta, tg, a_min, mode);
    if (q_T.size() != grid.n_nodes)
        throw std::invalid_argument("solve_adjoint: q_T length does not match grid");

    const int n = grid.n_nodes;
    const int N = tg.n_steps;
    const double tau = tg.tau;
    const SymTridiag K = stiffness(grid);

    SolveResult res;
    res.mode = mode;
    res.trajectory.tg = tg;
    res.trajectory.values.resize(N + 1, n);
    res.stage.tg = tg;
    res.stage.values = Matrix::Zero(N + 1, n);

    Vector q = q_T;
    enforce_bc(grid, q);
    res.trajectory.values.row(N) = q.transpose();

    // Weighted transpose of the forward step:
    //   lambda_k = B_k^{-1} (W q^k),  q^{k-1} = W^{-1} C_{k-1} lambda_k.
    for (int k = N; k >= 1; --k) {
        const Vector a_prev = potential_at(a, k - 1, n);
        const Vector a_next = potential_at(a, k, n);
        const SymTridiag B = step_matrix_implicit(grid, K, a_next, tau, theta);
        const SymTridiag C = step_matrix_explicit(grid, K, a_prev, tau, theta);

        Vector rhs = grid.quad_weights.cwiseProduct(q);
        if (grid.is_dirichlet()) {
            rhs(0) = 0.0;
            rhs(n - 1) = 0.0;
        }
        Vector lambda = B.solve(rhs);
        res.stage.values.row(k) = lambda.transpose();
        q = C.apply(lambda).cwiseQuotient(grid.quad_weights);
        enforce_bc(grid, q);
        res.trajectory.values.row(k - 1) = q.transpose();
    }
    res.last_step = N;
    for (int k = 0; k <= N; ++k)
        record_norms(grid, res.trajectory.at(k), tg.node(k), res);
    return res;
}

double duality_residual(const Grid1D& grid, const TimeGrid& tg, const SpaceTimeField& a,
                        const SpaceTimeField& h, const Vector& y0, const Vector& p_T,
                        double theta, StepMode mode) {
    LinearProblem p = LinearProblem::make(grid, tg, a, h, y0);
    SolveResult fwd = solve_forward(p, theta, mode);
    SolveResult adj = solve_adjoint(grid, tg, a, p_T, theta, mode);

    double source_pairing = 0.0;
    if (!h.is_zero()) {
        for (int k = 1; k <= tg.n_steps; ++k) {
            Vector s = theta * h.at(k) + (1.0 - theta) * h.at(k - 1);
            enforce_bc(grid, s);
            source_pairing += tg.tau * inner_w(grid, s, adj.stage.at(k));
        }
    }
    const double terminal = inner_w(grid, fwd.final_state(), adj.trajectory.at(tg.n_steps));
    const double initial = inner_w(grid, p.y0, adj.trajectory.at(0));
    return std::abs(source_pairing - terminal + initial);
}

namespace {

struct SemiStep {
    bool converged = false;
    bool escaped = false;
    Vector y;
    int iterations = 0;
};

SemiStep semilinear_step(const Grid1D& grid, const SymTridiag& K, const NonlinearitySpec& f,
                         const Vector& y_old, const Vector& source, double tau,
                         const SemilinearOptions& opt) {
    const int n = grid.n_nodes;
    SymTridiag B;
    B.diag = grid.quad_weights + tau * K.diag;
    B.off = tau * K.off;
    if (grid.is_dirichlet()) {
        B.diag(0) = 1.0;
        B.diag(n - 1) = 1.0;
    }

    SemiStep out;
    Vector iterate = y_old;
    for (int m = 0; m < opt.max_inner; ++m) {
        Vector reaction(n);
        for (int i = 0; i < n; ++i) reaction(i) = f.f(iterate(i));
        Vector rhs = grid.quad_weights.cwiseProduct(y_old - tau * reaction + tau * source);
        if (grid.is_dirichlet()) {
            rhs(0) = 0.0;
            rhs(n - 1) = 0.0;
        }
        Vector next = B.solve(rhs);
        enforce_bc(grid, next);
        const double diff = (next - iterate).cwiseAbs().maxCoeff();
        const double scale = std::max(1.0, next.cwiseAbs().maxCoeff());
        iterate = next;
        out.iterations = m + 1;
        if (iterate.cwiseAbs().maxCoeff() > opt.blowup_threshold) {
            out.escaped = true;
            out.y = iterate;
            return out;
        }
        if (diff <= opt.inner_tol * scale) {
            out.converged = true;
            out.y = iterate;
            return out;
        }
    }
    out.y = iterate;
    return out;
}

} // namespace

SolveResult solve_semilinear(const Grid1D& grid, const TimeGrid& tg,
                             const NonlinearitySpec& f, const Vector& y0,
                             const SpaceTimeField& h, const SemilinearOptions& opt) {
    if (y0.size() != grid.n_nodes)
        throw std::invalid_argument("solve_semilinear: y0 length does not match grid");
    if (!(opt.blowup_threshold > y0.cwiseAbs().maxCoeff()))
        throw std::invalid_argument("solve_semilinear: blowup_threshold must exceed ||y0||_inf");

    const int n = grid.n_nodes;
    const int N = tg.n_steps;
    const double tau = tg.tau;
    const SymTridiag K = stiffness(grid);

    SolveResult res;
    res.mode = StepMode::Monotone;
    res.trajectory.tg = tg;
    res.trajectory.values.resize(N + 1, n);

    Vector y = y0;
    enforce_bc(grid, y);
    res.trajectory.values.row(0) = y.transpose();
    record_norms(grid, y, tg.node(0), res);
    res.last_step = 0;

    // Growth is only rate-limited well above the data scale, where the only
    // mechanism left is the focusing reaction term.
    const double growth_floor = 10.0 * (1.0 + y0.cwiseAbs().maxCoeff());
    auto growth_ok = [&](const Vector& before, const Vector& after) {
        if (!(opt.max_step_growth > 0.0)) return true;
        const double b = std::max(before.cwiseAbs().maxCoeff(), growth_floor);
        return after.cwiseAbs().maxCoeff() <= opt.max_step_growth * b;
    };

    for (int k = 1; k <= N; ++k) {
        Vector source = h.is_zero() ? Vector::Zero(n) : h.at(k);
        SemiStep step = semilinear_step(grid, K, f, y, source, tau, opt);
        bool stepped = step.converged && !step.escaped &&
                       step.y.cwiseAbs().maxCoeff() <= opt.blowup_threshold &&
                       growth_ok(y, step.y);
        if (stepped) {
            y = step.y;
        } else if (opt.refine_blowup) {
            // Re-integrate (t_{k-1}, t_k] with adaptive local steps: the inner
            // loop contracts again once tau_local f' < 1, so either the step
            // completes or the trajectory genuinely escapes the threshold.
            double t_local = tg.node(k - 1);
            const double t_end = tg.node(k);
            Vector state = y;
            double local_tau = 0.5 * tau;
            bool escaped = false;
            double cross_width = tau;
            for (long long guard = 0; t_local < t_end; ++guard) {
                if (guard > 500000)
                    throw SolverError("semilinear blow-up march exceeded the substep budget at t = " +
                                      std::to_string(t_local));
                local_tau = std::min(local_tau, t_end - t_local);
                SemiStep sub = semilinear_step(grid, K, f, state, source, local_tau, opt);
                const bool finite = sub.y.allFinite();
                if (sub.converged && !sub.escaped && finite && growth_ok(state, sub.y)) {
                    state = sub.y;
                    t_local += local_tau;
                    if (state.cwiseAbs().maxCoeff() > opt.blowup_threshold) {
                        escaped = true;
                        cross_width = local_tau;
                        break;
                    }
                    local_tau = std::min(local_tau * 2.0, tau);
                    continue;
                }
                if (local_tau <= tau * 1e-12) {
                    if (state.cwiseAbs().maxCoeff() > 1e6 * (1.0 + y0.cwiseAbs().maxCoeff())) {
                        escaped = true; // stability floor reached while diverging
                        cross_width = local_tau;
                        break;
                    }
                    throw SolverError("semilinear inner loop did not converge at t = " +
                                      std::to_string(t_local) + " (|y| = " +
                                      std::to_string(state.cwiseAbs().maxCoeff()) + ")");
                }
                local_tau *= 0.5;
            }
            if (escaped) {
                res.status = SolveStatus::BlewUp;
                res.blowup_time = t_local - 0.5 * cross_width;
                res.blowup_uncertainty = cross_width;
                res.blowup_norm = state.cwiseAbs().maxCoeff();
                res.trajectory.values.conservativeResize(res.last_step + 1, n);
                return res;
            }
            y = state; // the adaptive march carried the step through
        } else {
            if (!step.converged && !step.escaped)
                throw SolverError("semilinear inner loop did not converge at t = " +
                                  std::to_string(tg.node(k)) + " after " +
                                  std::to_string(step.iterations) + " iterations");
            res.status = SolveStatus::BlewUp;
            res.blowup_time = tg.node(k - 1) + 0.5 * tau;
            res.blowup_uncertainty = tau;
            res.blowup_norm = step.y.cwiseAbs().maxCoeff();
            res.trajectory.values.conservativeResize(res.last_step + 1, n);
            return res;
        }
        res.trajectory.values.row(k) = y.transpose();
        record_norms(grid, y, tg.node(k), res);
        res.last_step = k;
    }
    return res;
}

AdjointBasisMaps assemble_adjoint_basis_maps(const Grid1D& grid, const TimeGrid& tg,
                                             const SpaceTimeField& a, const ControlWindow& w,
                                             double theta, StepMode mode) {
    const double a_min = a.is_zero() ? 0.0 : a.values.minCoeff();
    check_scheme(theta, tg, a_min, mode);
    const int n = grid.n_nodes;
    const int N = tg.n_steps;
    const double tau = tg.tau;
    const SymTridiag K = stiffness(grid);

    Matrix Q = Matrix::Identity(n, n); // columns: current q^k per unit terminal datum
    if (grid.is_dirichlet()) {
        Q(0, 0) = 0.0;
        Q(n - 1, n - 1) = 0.0;
    }

    AdjointBasisMaps maps;
    maps.window_l2_form = Matrix::Zero(n, n);
    maps.window_l1_functional = Vector::Zero(n);

    Vector w_omega = Vector::Zero(n);
    for (int i : w.omega_nodes) w_omega(i) = grid.quad_weights(i);

    for (int k = N; k >= 1; --k) {
        const Vector a_prev = potential_at(a, k - 1, n);
        const Vector a_next = potential_at(a, k, n);
        const SymTridiag B = step_matrix_implicit(grid, K, a_next, tau, theta);
        const SymTridiag C = step_matrix_explicit(grid, K, a_prev, tau, theta);

        Matrix rhs = grid.quad_weights.asDiagonal() * Q;
        if (grid.is_dirichlet()) {
            rhs.row(0).setZero();
            rhs.row(n - 1).setZero();
        }
        Matrix lambda = B.solve(std::move(rhs));
        Matrix masked = w_omega.asDiagonal() * lambda;
        maps.window_l2_form.noalias() += tau * lambda.transpose() * masked;
        maps.window_l1_functional.noalias() += tau * masked.colwise().sum().transpose();

        Q = grid.quad_weights.cwiseInverse().asDiagonal() * C.apply(lambda);
        if (grid.is_dirichlet()) {
            Q.row(0).setZero();
            Q.row(n - 1).setZero();
        }
    }
    maps.q0_columns = std::move(Q);
    maps.window_l2_form = 0.5 * (maps.window_l2_form + maps.window_l2_form.transpose()).eval();
    return maps;
}

ComparisonReport check_comparison(const SolveResult& y, const SolveResult& z, double tol) {
    ComparisonReport rep;
    const int steps = std::min(y.last_step, z.last_step);
    rep.pass = true;
    for (int k = 0; k <= steps; ++k) {
        for (int i = 0; i < y.trajectory.values.cols(); ++i) {
            const double violation = y.trajectory.values(k, i) - z.trajectory.values(k, i);
            if (violation > rep.worst_violation) {
                rep.worst_violation = violation;
                rep.time_index = k;
                rep.space_index = i;
            }
        }
    }
    rep.pass = rep.worst_violation <= tol;
    return rep;
}

SmoothingFit estimate_smoothing_exponent(const Grid1D& grid, const TimeGrid& window,
                                         int steps_per_sample) {
    SmoothingFit fit;
    const double t_min = window.t0;
    const double t_max = window.t1;
    if (!(t_min > 0.0))
        throw std::invalid_argument("estimate_smoothing_exponent: window must start at t > 0");

    std::vector<double> samples;
    for (double t = t_max; t >= t_min * (1.0 - 1e-12); t *= 0.5) samples.push_back(t);
    std::reverse(samples.begin(), samples.end());
    if (samples.size() < 3)
        throw std::invalid_argument("estimate_smoothing_exponent: window spans fewer than 3 dyadic times");

    // Unit-mass discrete delta at the center node.
    const int i0 = grid.n_nodes / 2;
    Vector y0 = Vector::Zero(grid.n_nodes);
    y0(i0) = 1.0 / grid.quad_weights(i0);
    const double l1_0 = norm_lp(grid, y0, 1.0);

    for (double t : samples) {
        TimeGrid tg = build_time_grid(0.0, t, steps_per_sample);
        LinearProblem p = LinearProblem::make(grid, tg, SpaceTimeField::zero(tg),
                                              SpaceTimeField::zero(tg), y0);
        SolveResult r = solve_forward(p, 1.0, StepMode::Monotone);
        fit.times.push_back(t);
        fit.log_ratio.push_back(std::log(r.final_state().cwiseAbs().maxCoeff()) - std::log(l1_0));
    }

    // Least squares slope of log ratio against log t.
    const int m = static_cast<int>(fit.times.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (int i = 0; i < m; ++i) {
        const double x = std::log(fit.times[i]);
        sx += x;
        sy += fit.log_ratio[i];
        sxx += x * x;
        sxy += x * fit.log_ratio[i];
    }
    fit.slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    return fit;
}

} // namespace heatctl

#include "heatctl/carleman.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace heatctl {

double WeightProfile::value(double x) const {
    const double left = (x - x_a) / (x_star - x_a);
    const double right = (x_b - x) / (x_b - x_star);
    if (left <= 0.0 || right <= 0.0) return 0.0;
    return std::pow(left, p) * std::pow(right, q);
}

double WeightProfile::derivative(double x) const {
    if (x <= x_a) {
        if (p > 1.0) return 0.0;
        if (p == 1.0) return std::pow((x_b - x_a) / (x_b - x_star), q) / (x_star - x_a);
        return std::numeric_limits<double>::infinity();
    }
    if (x >= x_b) {
        if (q > 1.0) return 0.0;
        if (q == 1.0) return -std::pow((x_b - x_a) / (x_star - x_a), p) / (x_b - x_star);
        return -std::numeric_limits<double>::infinity();
    }
    return value(x) * (p / (x - x_a) - q / (x_b - x));
}

WeightProfile build_eta0(const Grid1D& grid, const ControlWindow& w) {
    if (!(w.omega0_left > grid.x_a && w.omega0_right < grid.x_b))
        throw std::invalid_argument("build_eta0: omega0 must not touch the boundary");

    WeightProfile prof;
    prof.x_a = grid.x_a;
    prof.x_b = grid.x_b;
    prof.x_star = 0.5 * (w.omega0_left + w.omega0_right);
    // p + q = 2 with p (x_b - x*) = q (x* - x_a), so the only critical point is x*.
    prof.p = 2.0 * (prof.x_star - grid.x_a) / grid.length();
    prof.q = 2.0 * (grid.x_b - prof.x_star) / grid.length();
    prof.eta0_max = 1.0;

    prof.eta0.resize(grid.n_nodes);
    for (int i = 0; i < grid.n_nodes; ++i) prof.eta0(i) = prof.value(grid.nodes(i));

    double m = std::numeric_limits<double>::infinity();
    for (int i = 0; i < grid.n_nodes; ++i) {
        const double x = grid.nodes(i);
        if (x > w.omega0_left && x < w.omega0_right) continue;
        const double d = prof.derivative(x);
        if (std::isfinite(d)) m = std::min(m, d * d);
    }
    if (!std::isfinite(m) || !(m > 0.0))
        throw std::invalid_argument("build_eta0: gradient bound m is not positive on this grid");
    prof.grad_min_sq = m;
    return prof;
}

WeightValues eval_weights(const WeightProfile& profile, double lambda, double T,
                          double t, int x_index) {
    if (!(t > 0.0 && t < T))
        throw std::domain_error("eval_weights: t must lie strictly inside (0, T)");
    const double eta = profile.eta0(x_index);
    const double denom = t * (T - t);
    const double peak = std::exp(2.0 * lambda * profile.eta0_max);
    WeightValues v;
    v.alpha = (peak - std::exp(lambda * eta)) / denom;
    v.xi = std::exp(lambda * eta) / denom;
    v.alpha_tilde = (peak - std::exp(-lambda * eta)) / denom;
    v.xi_tilde = std::exp(-lambda * eta) / denom;
    return v;
}

double s1_threshold(const CarlemanParams& params) {
    if (!(params.lambda >= 1.0))
        throw std::invalid_argument("s1_threshold: lambda must be >= 1");
    const double T = params.T;
    const double root_a = std::sqrt(params.a_norm);
    if (params.bc == BoundaryCondition::Neumann)
        return params.C_geom * std::exp(4.0 * params.lambda * params.eta0_max) *
               (T + T * T + T * T * root_a);
    return params.C_geom * (std::exp(2.0 * params.lambda * params.eta0_max) * T + T * T +
                            T * T * root_a);
}

double carleman_ratio(const SolveResult& q, const Grid1D& grid, const ControlWindow& w,
                      const WeightProfile& profile, const CarlemanParams& params) {
    const TimeGrid& tg = q.trajectory.tg;
    const int N = tg.n_steps;
    const double tau = tg.tau;
    const double T = params.T;
    const double scale = std::max(1.0, q.trajectory.values.cwiseAbs().maxCoeff());
    if (q.trajectory.values.minCoeff() < -1e-12 * scale)
        throw std::invalid_argument("carleman_ratio: adjoint trajectory is not nonnegative");
    {
        CarlemanParams p1 = params;
        const double s1 = s1_threshold(p1);
        if (params.s < s1 * (1.0 - 1e-12))
            throw std::invalid_argument("carleman_ratio: s below the admissible threshold s1");
    }

    Vector in_omega = Vector::Zero(grid.n_nodes);
    for (int i : w.omega_nodes) in_omega(i) = 1.0;

    double lhs = 0.0, rhs = 0.0;
    for (int k = 1; k < N; ++k) {
        const double t = tg.node(k) - tg.t0; // weights live on (0, T) of this solve
        for (int i = 0; i < grid.n_nodes; ++i) {
            const double qv = std::max(0.0, q.trajectory.values(k, i));
            if (qv == 0.0) continue;
            const WeightValues wv = eval_weights(profile, params.lambda, T, t, i);
            const double sa = params.s * wv.alpha;
            const double damp = sa > 700.0 ? 0.0 : std::exp(-sa);
            if (damp == 0.0) continue;
            const double cell = tau * grid.quad_weights(i) * damp * qv;
            if (params.bc == BoundaryCondition::Neumann) {
                lhs += cell * wv.xi * wv.xi;
                if (in_omega(i) != 0.0) rhs += cell * wv.xi * wv.xi;
            } else {
                lhs += cell * (params.lambda * params.s * wv.xi * wv.xi * profile.eta0(i) + wv.xi);
                if (in_omega(i) != 0.0)
                    rhs += cell * params.lambda * params.s * wv.xi * wv.xi;
            }
        }
    }
    if (rhs == 0.0) return lhs == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    return lhs / rhs;
}

SignedObservability estimate_observability_signed(const Grid1D& grid, const TimeGrid& tg,
                                                  const SpaceTimeField& a,
                                                  const ControlWindow& w, double theta) {
    AdjointBasisMaps maps = assemble_adjoint_basis_maps(grid, tg, a, w, theta, StepMode::Monotone);
    const Matrix Wd = grid.quad_weights.asDiagonal();
    Matrix A = maps.q0_columns.transpose() * Wd * maps.q0_columns;
    A = 0.5 * (A + A.transpose()).eval();
    Matrix B = maps.window_l2_form;

    SignedObservability out;
    Eigen::LLT<Matrix> llt(B);
    if (llt.info() != Eigen::Success) {
        const double shift = 1e-14 * std::max(1.0, B.diagonal().maxCoeff());
        B.diagonal().array() += shift;
        out.regularized = true;
    }
    Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> ges(A, B);
    if (ges.info() != Eigen::Success)
        throw std::runtime_error("estimate_observability_signed: eigensolver failed");
    out.C_signed_L2 = ges.eigenvalues().maxCoeff();
    return out;
}

namespace {

struct ConeAscent {
    double best_value = 0.0;
    Vector best_point;
    int iterations = 0;
    bool degenerate = true;
};

// Maximizes num(q)/den(q) over {q >= 0, |q| = 1} by projected gradient
// ascent with backtracking; both functionals are ratios of quadratics
// evaluated through the assembled maps.
template <typename Value, typename Grad>
ConeAscent ascend(const Vector& start, Value value, Grad grad, int max_iter) {
    ConeAscent res;
    Vector q = start.cwiseMax(0.0);
    const double nrm = q.norm();
    if (nrm == 0.0) return res;
    q /= nrm;
    double r = value(q);
    if (!std::isfinite(r)) return res;
    res.degenerate = false;

    double step = 1.0;
    int stalls = 0;
    for (int it = 0; it < max_iter && stalls < 5; ++it) {
        ++res.iterations;
        Vector g = grad(q);
        const double gn = g.norm();
        if (gn == 0.0) break;
        bool improved = false;
        for (int back = 0; back < 30; ++back) {
            Vector trial = (q + (step / gn) * g).cwiseMax(0.0);
            const double tn = trial.norm();
            if (tn > 0.0) {
                trial /= tn;
                const double rt = value(trial);
                if (std::isfinite(rt) && rt > r * (1.0 + 1e-13)) {
                    q = trial;
                    r = rt;
                    step *= 1.5;
                    improved = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if (!improved) ++stalls;
    }
    res.best_value = r;
    res.best_point = q;
    return res;
}

} // namespace

ObservabilityEstimate estimate_observability_nonneg(const Grid1D& grid, const TimeGrid& tg,
                                                    const SpaceTimeField& a,
                                                    const ControlWindow& w, int restarts,
                                                    std::uint64_t seed, double theta) {
    if (restarts < 1)
        throw std::invalid_argument("estimate_observability_nonneg: restarts must be >= 1");
    AdjointBasisMaps maps = assemble_adjoint_basis_maps(grid, tg, a, w, theta, StepMode::Monotone);
    const int n = grid.n_nodes;
    const Matrix Wd = grid.quad_weights.asDiagonal();
    Matrix A = maps.q0_columns.transpose() * Wd * maps.q0_columns;
    A = 0.5 * (A + A.transpose()).eval();
    const Matrix& B = maps.window_l2_form;
    const Vector& ell = maps.window_l1_functional;

    ObservabilityEstimate est;
    est.q_window_measure = 0.0;
    for (int i : w.omega_nodes) est.q_window_measure += grid.quad_weights(i);
    est.q_window_measure *= tg.horizon();

    auto value_l1 = [&](const Vector& q) {
        const double d = ell.dot(q);
        return d == 0.0 ? std::numeric_limits<double>::quiet_NaN()
                        : q.dot(A * q) / (d * d);
    };
    auto grad_l1 = [&](const Vector& q) -> Vector {
        const double d = ell.dot(q);
        const double num = q.dot(A * q);
        return (2.0 / (d * d)) * (A * q) - (2.0 * num / (d * d * d)) * ell;
    };
    auto value_l2 = [&](const Vector& q) {
        const double d = q.dot(B * q);
        return d == 0.0 ? std::numeric_limits<double>::quiet_NaN() : q.dot(A * q) / d;
    };
    auto grad_l2 = [&](const Vector& q) -> Vector {
        const double d = q.dot(B * q);
        const double num = q.dot(A * q);
        return (2.0 / d) * (A * q) - (2.0 * num / (d * d)) * (B * q);
    };

    // Start list: the constant profile, unit bumps far from omega, then
    // seeded random nonnegative data.
    std::vector<std::pair<std::string, Vector>> starts;
    starts.emplace_back("constant", Vector::Ones(n));
    std::vector<int> far(n);
    for (int i = 0; i < n; ++i) far[i] = i;
    auto dist_to_omega = [&](int i) {
        const double x = grid.nodes(i);
        if (x >= w.omega_left && x <= w.omega_right) return 0.0;
        return std::min(std::abs(x - w.omega_left), std::abs(x - w.omega_right));
    };
    std::sort(far.begin(), far.end(), [&](int i, int j) {
        const double di = dist_to_omega(i), dj = dist_to_omega(j);
        return di != dj ? di > dj : i < j;
    });
    const int n_bumps = std::min(restarts / 2, n);
    for (int b = 0; b < n_bumps; ++b) {
        const int i = far[b];
        if (grid.is_dirichlet() && (i == 0 || i == n - 1)) continue;
        Vector e = Vector::Zero(n);
        e(i) = 1.0;
        starts.emplace_back("bump_" + std::to_string(i), e);
    }
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    while (static_cast<int>(starts.size()) < restarts) {
        Vector r(n);
        for (int i = 0; i < n; ++i) r(i) = std::abs(gauss(rng));
        starts.emplace_back("random", std::move(r));
    }

    Vector best_l1_point, best_l2_point;
    int degenerate_count = 0;
    for (auto& [tag, q0] : starts) {
        Vector s = q0;
        enforce_bc(grid, s);
        ConeAscent r1 = ascend(s, value_l1, grad_l1, 400);
        ConeAscent r2 = ascend(s, value_l2, grad_l2, 400);
        est.iterations += r1.iterations + r2.iterations;
        if (r1.degenerate && r2.degenerate) {
            ++degenerate_count;
            continue;
        }
        if (!r1.degenerate && r1.best_value > est.C_nonneg_L1) {
            est.C_nonneg_L1 = r1.best_value;
            est.best_init = tag;
            best_l1_point = r1.best_point;
        }
        if (!r2.degenerate && r2.best_value > est.C_cone_L2) {
            est.C_cone_L2 = r2.best_value;
            best_l2_point = r2.best_point;
        }
    }
    est.restarts_used = static_cast<int>(starts.size());
    if (degenerate_count == static_cast<int>(starts.size()))
        throw std::runtime_error("estimate_observability_nonneg: every start had zero observation");

    // Cross-evaluate the witnesses so the Cauchy-Schwarz and sup-over-subset
    // orderings hold for the reported values, not just the true suprema.
    if (best_l2_point.size() == n) {
        const double v = value_l1(best_l2_point);
        if (std::isfinite(v)) est.C_nonneg_L1 = std::max(est.C_nonneg_L1, v);
    }
    if (best_l1_point.size() == n) {
        const double v = value_l2(best_l1_point);
        if (std::isfinite(v)) est.C_cone_L2 = std::max(est.C_cone_L2, v);
    }
    return est;
}

CostModel fit_cost_exponent(const std::vector<std::pair<double, double>>& samples) {
    if (samples.size() < 4)
        throw std::domain_error("fit_cost_exponent: need at least 4 samples");
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (!(samples[i].second > 0.0))
            throw std::domain_error("fit_cost_exponent: costs must be positive");
        if (i > 0 && !(samples[i].first > samples[i - 1].first))
            throw std::domain_error("fit_cost_exponent: amplitudes must be increasing");
    }

    auto fit_beta = [&](double beta) {
        const int m = static_cast<int>(samples.size());
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        for (const auto& [M, C] : samples) {
            const double x = std::pow(M, beta);
            const double y = std::log(C);
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
        }
        ExponentFit f;
        const double det = m * sxx - sx * sx;
        f.c1 = (m * sxy - sx * sy) / det;
        f.c0 = (sy - f.c1 * sx) / m;
        double ss_res = 0, ss_tot = 0;
        const double y_mean = sy / m;
        for (const auto& [M, C] : samples) {
            const double y = std::log(C);
            const double pred = f.c0 + f.c1 * std::pow(M, beta);
            ss_res += (y - pred) * (y - pred);
            ss_tot += (y - y_mean) * (y - y_mean);
        }
        f.r_squared = ss_tot == 0.0 ? 1.0 : 1.0 - ss_res / ss_tot;
        return f;
    };

    CostModel model;
    model.fit_half = fit_beta(0.5);
    model.fit_twothirds = fit_beta(2.0 / 3.0);
    model.selected_beta = model.fit_half.r_squared >= model.fit_twothirds.r_squared ? 0.5 : 2.0 / 3.0;
    const double c1_best =
        model.selected_beta == 0.5 ? model.fit_half.c1 : model.fit_twothirds.c1;
    const double c0_best =
        model.selected_beta == 0.5 ? model.fit_half.c0 : model.fit_twothirds.c0;
    model.indeterminate = std::abs(c1_best) <= 1e-6 * std::max(1.0, std::abs(c0_best));
    return model;
}

} // namespace heatctl

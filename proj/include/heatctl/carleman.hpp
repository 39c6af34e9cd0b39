#pragma once

#include "heatctl/grid.hpp"
#include "heatctl/parabolic.hpp"
#include "heatctl/time_grid.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace heatctl {

/// The weight-generating function eta0: positive inside the domain, zero on
/// the boundary, with its only critical point at the center of omega0.
/// eta0(x) = ((x - x_a)/(x* - x_a))^p ((x_b - x)/(x_b - x*))^q with p + q = 2
/// chosen so the critical point is x*; the maximum value is 1.
struct WeightProfile {
    Vector eta0;
    double eta0_max = 1.0;
    double grad_min_sq = 0.0; // m = min |eta0'|^2 over nodes outside omega0
    double x_star = 0.0;
    double p = 1.0, q = 1.0;
    double x_a = 0.0, x_b = 1.0;

    double value(double x) const;
    double derivative(double x) const;
};

WeightProfile build_eta0(const Grid1D& grid, const ControlWindow& w);

struct CarlemanParams {
    double lambda = 1.0;
    double s = 0.0;
    double T = 1.0;
    double a_norm = 0.0;   // ||a||_{L^inf(Q_T)}
    double C_geom = 1.0;   // empirical stand-in for the geometric constant
    double eta0_max = 1.0;
    BoundaryCondition bc = BoundaryCondition::Neumann;
};

/// Point values of the four Carleman weights at time t in (0, T).
struct WeightValues {
    double alpha = 0.0;
    double xi = 0.0;
    double alpha_tilde = 0.0;
    double xi_tilde = 0.0;
};

WeightValues eval_weights(const WeightProfile& profile, double lambda, double T,
                          double t, int x_index);

/// Smallest admissible s for the given lambda:
///   Neumann:   C e^{4 lambda max} (T + T^2 + T^2 sqrt(||a||)),
///   Dirichlet: C (e^{2 lambda max} T + T^2 + T^2 sqrt(||a||)).
double s1_threshold(const CarlemanParams& params);

/// LHS / RHS of the weighted inequality for a nonnegative adjoint
/// trajectory; the first and last time slices carry zero weight and
/// e^{-s alpha} is clipped to 0 once s*alpha > 700.
double carleman_ratio(const SolveResult& q, const Grid1D& grid, const ControlWindow& w,
                      const WeightProfile& profile, const CarlemanParams& params);

struct SignedObservability {
    double C_signed_L2 = 0.0;
    bool regularized = false;
};

/// Largest generalized eigenvalue of ||q(0)||^2 against the window
/// observation int int_omega q^2, over all terminal data (dense assembly,
/// desk scale).
SignedObservability estimate_observability_signed(const Grid1D& grid, const TimeGrid& tg,
                                                  const SpaceTimeField& a,
                                                  const ControlWindow& w,
                                                  double theta = 1.0);

struct ObservabilityEstimate {
    double M = 0.0;            // potential amplitude of the sweep point
    double C_nonneg_L1 = 0.0;  // best found ||q(0)||^2 / (int int_omega q)^2 over the cone
    double C_cone_L2 = 0.0;    // best found ||q(0)||^2 / int int_omega q^2 over the cone
    double C_signed_L2 = 0.0;
    double q_window_measure = 0.0; // |(0,T) x omega| in the discrete quadrature
    int restarts_used = 0;
    int iterations = 0;
    std::string best_init;
    bool regularized = false;

    bool orderings_hold() const {
        return C_cone_L2 <= C_signed_L2 && C_cone_L2 <= q_window_measure * C_nonneg_L1;
    }
};

/// Projected gradient ascent over the nonnegative cone with multi-start;
/// the returned constants are certified lower bounds on the suprema.
ObservabilityEstimate estimate_observability_nonneg(const Grid1D& grid, const TimeGrid& tg,
                                                    const SpaceTimeField& a,
                                                    const ControlWindow& w, int restarts,
                                                    std::uint64_t seed, double theta = 1.0);

struct ExponentFit {
    double c0 = 0.0;
    double c1 = 0.0;
    double r_squared = 0.0;
};

struct CostModel {
    ExponentFit fit_half;      // log C ~ c0 + c1 M^{1/2}
    ExponentFit fit_twothirds; // log C ~ c0 + c1 M^{2/3}
    double selected_beta = 0.5;
    bool indeterminate = false;
};

CostModel fit_cost_exponent(const std::vector<std::pair<double, double>>& samples);

} // namespace heatctl

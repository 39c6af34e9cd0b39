#pragma once

#include "heatctl/grid.hpp"
#include "heatctl/parabolic.hpp"
#include "heatctl/time_grid.hpp"

#include <string>
#include <vector>

namespace heatctl {

enum class ObservationKind {
    L1Window, // int int_omega q   (cone mode)
    L2Window, // int int_omega q^2 (classical null control)
};

struct HumConfig {
    double epsilon = 1e-3;
    bool cone = true;
    ObservationKind observation = ObservationKind::L1Window;
    int max_iterations = 20000;
    double stop_tol = 1e-12;
    std::vector<double> eps_schedule; // continuation stages; empty = single stage

    void validate() const {
        if (!(epsilon > 0.0))
            throw std::invalid_argument("HumConfig: epsilon must be > 0");
        if (cone && observation != ObservationKind::L1Window)
            throw std::invalid_argument("HumConfig: cone mode uses the L1 window observation");
        for (double e : eps_schedule)
            if (!(e > 0.0))
                throw std::invalid_argument("HumConfig: schedule entries must be > 0");
    }
};

/// zT: state at T of the forward problem driven by the window indicator
/// from zero data; YT: free state at T from y0. In cone mode the smooth
/// part of the functional is exactly  1/2 <zT, q>^2 + <YT, q>  by discrete
/// duality.
struct Representers {
    Vector zT;
    Vector YT;
};

struct HumProblem {
    Grid1D grid;
    TimeGrid tg;
    SpaceTimeField a;
    ControlWindow window;
    Vector y0;
    double theta = 1.0;
    StepMode mode = StepMode::Accuracy;
    Representers reps;
    Matrix gramian; // W-form matrix of the L2 window observation (lazy)
    bool has_gramian = false;
};

HumProblem make_hum_problem(const Grid1D& grid, const TimeGrid& tg, const SpaceTimeField& a,
                            const ControlWindow& window, const Vector& y0, double theta,
                            StepMode mode);

Representers precompute_representers(const Grid1D& grid, const TimeGrid& tg,
                                     const SpaceTimeField& a, const ControlWindow& window,
                                     const Vector& y0, double theta, StepMode mode);

Vector project_nonneg(const Vector& u);

double eval_J(const HumProblem& problem, const HumConfig& config, const Vector& q_T);

/// Gradient of the smooth part (in the weighted geometry); exposed for the
/// finite-difference check.
Vector smooth_gradient(HumProblem& problem, const HumConfig& config, const Vector& q_T);

struct HumStageRecord {
    double epsilon = 0.0;
    int iterations = 0;
    double J = 0.0;
    double residual = 0.0;
};

struct HumResult {
    Vector q_T_min;
    double J_value = 0.0;
    SpaceTimeField control;
    SpaceTimeField trajectory;
    double duality_residual_value = 0.0;
    double neg_part_norm = 0.0;  // ||y(T)^-||_{L2}
    double final_norm_l2 = 0.0;  // ||y(T)||_{L2}
    double control_sup = 0.0;
    double cost_ratio = 0.0;     // ||h||_inf / ||y0||_{L2}
    bool converged = false;
    bool j_monotone = true;
    double opt_residual = 0.0;
    int iterations_total = 0;
    std::string warning;
    std::vector<HumStageRecord> stages;
    std::vector<double> j_history;
};

/// Accelerated projected proximal gradient on
///   1/2 (observation)^2-or-quadratic + eps ||q||_{L2} + <YT, q>,
/// with radial shrinkage for the eps term, cone projection in cone mode,
/// and warm-started epsilon continuation.
HumResult minimize_J(HumProblem& problem, const HumConfig& config);

/// Cone mode: the single constant <zT, q*> on (0,T) x omega; classical
/// mode: the adjoint solution restricted to omega, stepwise.
SpaceTimeField extract_control(HumProblem& problem, const Vector& q_min, bool cone);

/// Full nonnegative-steering chain: representers, cone minimization,
/// constant control, verification solve, epsilon-bound bookkeeping.
HumResult steer_nonnegative(const Grid1D& grid, const TimeGrid& tg, const SpaceTimeField& a,
                            const ControlWindow& window, const Vector& y0,
                            const HumConfig& config);

/// Classical penalized null control (unconstrained terminal data).
HumResult null_control(const Grid1D& grid, const TimeGrid& tg, const SpaceTimeField& a,
                       const ControlWindow& window, const Vector& y0, const HumConfig& config);

} // namespace heatctl

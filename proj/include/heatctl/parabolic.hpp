#pragma once

#include "heatctl/grid.hpp"
#include "heatctl/nonlinearity.hpp"
#include "heatctl/time_grid.hpp"

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace heatctl {

/// Numerical failure inside a time step (singular step matrix, inner loop
/// divergence). Distinct from detected blow-up, which is a result status.
struct SolverError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Monotone mode enforces the M-matrix step restriction
/// tau <= 1 / (1 + 2 max(0, -min a)), under which the discrete comparison
/// and maximum principles hold; Accuracy mode does not.
enum class StepMode { Accuracy, Monotone };

double monotone_tau_max(double min_potential);

/// d/dt y - Lap y + a(t,x) y = F with y(t0) = y0 on the given grids.
/// Empty fields stand for zero. ||a||_inf is recorded on construction.
struct LinearProblem {
    Grid1D grid;
    TimeGrid tg;
    SpaceTimeField a;
    SpaceTimeField source;
    Vector y0;
    double a_sup = 0.0;
    double a_min = 0.0;

    static LinearProblem make(const Grid1D& grid, const TimeGrid& tg,
                              SpaceTimeField a, SpaceTimeField source, Vector y0);
};

enum class SolveStatus { Completed, BlewUp };

struct SolveResult {
    SpaceTimeField trajectory;
    /// Adjoint solves also carry the per-step stage values lambda_k
    /// (row k, k = 1..n_steps); sources pair against these in the exact
    /// duality identity.
    SpaceTimeField stage;
    SolveStatus status = SolveStatus::Completed;
    double blowup_time = 0.0;
    double blowup_uncertainty = 0.0;
    double blowup_norm = 0.0;
    int last_step = 0;
    StepMode mode = StepMode::Accuracy;

    std::vector<double> times, norm_l1, norm_l2, norm_linf;

    bool blew_up() const { return status == SolveStatus::BlewUp; }
    Vector final_state() const { return trajectory.at(last_step); }
};

/// theta = 1 is backward Euler, theta = 1/2 Crank-Nicolson. The one-step
/// map is (W + tau theta (K + W a^{k})) y^k
///        = (W - tau (1-theta) (K + W a^{k-1})) y^{k-1} + tau W s^k
/// with s^k = theta F^k + (1-theta) F^{k-1}.
SolveResult solve_forward(const LinearProblem& p, double theta,
                          StepMode mode = StepMode::Accuracy);

/// Backward solve of -d/dt q - Lap q + a q = 0 from q(T) = q_T, using the
/// exact weighted transpose of the forward one-step operator.
SolveResult solve_adjoint(const Grid1D& grid, const TimeGrid& tg, const SpaceTimeField& a,
                          const Vector& q_T, double theta,
                          StepMode mode = StepMode::Accuracy);

/// | sum_k tau <s^k, lambda_k>_W  -  <y(T), p_T>_W  +  <y0, p(0)>_W |
/// where y solves forward with source h and p solves the adjoint from p_T.
/// Machine-zero by discrete-adjoint construction.
double duality_residual(const Grid1D& grid, const TimeGrid& tg, const SpaceTimeField& a,
                        const SpaceTimeField& h, const Vector& y0, const Vector& p_T,
                        double theta, StepMode mode = StepMode::Accuracy);

struct SemilinearOptions {
    double inner_tol = 1e-10;
    int max_inner = 50;
    double blowup_threshold = 1e8;
    bool refine_blowup = true;
    /// Once the sup norm is far above the data scale, a step may not grow it
    /// by more than this factor; faster growth is re-integrated on finer
    /// local steps so the escape time is resolved.
    double max_step_growth = 1.05;
};

/// Semi-implicit stepping for d/dt y - Lap y + f(y) = h: the linear part is
/// implicit (backward Euler), f is re-evaluated at the current inner
/// iterate until the step is a fixed point.
SolveResult solve_semilinear(const Grid1D& grid, const TimeGrid& tg,
                             const NonlinearitySpec& f, const Vector& y0,
                             const SpaceTimeField& h,
                             const SemilinearOptions& opt = {});

/// Dense maps from terminal adjoint data to (initial state, window
/// observation), assembled by one backward block march over the identity
/// basis. q0_columns(:, j) is q(0) for the j-th unit terminal datum;
/// window_l2_form is the matrix of q_T -> int int_omega q^2 and
/// window_l1_functional the vector of q_T -> int int_omega q, all in the
/// discrete quadrature that the duality identity uses.
struct AdjointBasisMaps {
    Matrix q0_columns;
    Matrix window_l2_form;
    Vector window_l1_functional;
};

AdjointBasisMaps assemble_adjoint_basis_maps(const Grid1D& grid, const TimeGrid& tg,
                                             const SpaceTimeField& a, const ControlWindow& w,
                                             double theta, StepMode mode);

struct ComparisonReport {
    bool pass = false;
    double worst_violation = 0.0;
    int time_index = -1;
    int space_index = -1;
};

/// Checks y <= z + tol at every shared node.
ComparisonReport check_comparison(const SolveResult& y, const SolveResult& z, double tol);

struct SmoothingFit {
    double slope = 0.0;
    std::vector<double> times;
    std::vector<double> log_ratio; // log ||y(t)||_inf - log ||y0||_L1
};

/// Evolves a unit-mass near-delta datum under the bare heat flow and fits
/// the L1->Linf decay exponent over dyadic sample times inside the window.
SmoothingFit estimate_smoothing_exponent(const Grid1D& grid, const TimeGrid& window,
                                         int steps_per_sample = 2000);

} // namespace heatctl

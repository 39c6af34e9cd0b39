#pragma once

#include "heatctl/grid.hpp"
#include "heatctl/hum.hpp"
#include "heatctl/nonlinearity.hpp"
#include "heatctl/parabolic.hpp"

#include <string>
#include <vector>

namespace heatctl {

enum class SteeringBranch { Nonnegative, Nonpositive };

struct PipelineConfig {
    NonlinearitySpec f;
    SteeringBranch branch = SteeringBranch::Nonnegative;
    double T1 = 1.0;
    double delta = 0.05;
    std::vector<double> eps_schedule = {1e-1, 1e-2, 1e-3, 1e-4};
    double eps_final = 1e-5;    // phase-3 terminal penalty
    double picard_tol = 1e-8;
    int picard_max = 30;
    double phase3_horizon = 1.0;
    int steps_phase1 = 2000;
    double tau_phase2 = 2e-4;
    int steps_phase3 = 2000;
    double blowup_threshold = 1e8;
    double envelope_tol = 1e-6;
    double hum_stop_tol = 1e-12;
    int hum_max_iterations = 20000;

    double working_eps() const { return eps_schedule.empty() ? 1e-4 : eps_schedule.back(); }

    void validate() const;
};

struct Phase1Result {
    Vector y_T1;
    int picard_iterations = 0;
    bool converged = false;
    bool damped = false;
    double neg_part_norm = 0.0; // ||y(T1)^-||_{L2} of the semilinear re-solve
    double t_star = 0.0;        // active control horizon of the last iterate
    double control_level = 0.0; // the single constant the control takes
    double control_sup = 0.0;
    double duality_residual_value = 0.0;
    StepMode mode_used = StepMode::Monotone;
    SpaceTimeField control; // on [0, T1]
    std::vector<double> picard_deltas;
};

/// Picard realization of the fixed point behind nonnegative steering:
/// freeze the potential g(z_k), control on (0, T*_{z_k}) with the constant
/// cone control, coast to T1, repeat; then re-solve the semilinear
/// equation with the frozen control.
Phase1Result picard_steer(const Grid1D& grid, const ControlWindow& window,
                          const PipelineConfig& config, const Vector& y0);

struct Phase2Result {
    double T2 = 0.0;
    DecayCertificate certificate;
    double clip_norm = 0.0;      // negativity removed from y(T1)
    double max_violation = 0.0;  // worst of y - v(t) and -y over all nodes
    double final_sup = 0.0;      // ||y(T2)||_inf
    bool pass = false;
    SolveResult free_solve;
};

Phase2Result certify_decay(const Grid1D& grid, const PipelineConfig& config,
                           const Vector& y_T1);

struct Phase3Result {
    double T3 = 0.0;
    Vector y_T3;
    double final_l2 = 0.0;
    double final_sup = 0.0;
    int picard_iterations = 0;
    bool converged = false;
    double control_sup = 0.0;
    SpaceTimeField control; // on [T2, T3]
    std::vector<double> picard_deltas;
};

Phase3Result local_null_control(const Grid1D& grid, const ControlWindow& window,
                                const PipelineConfig& config, const Vector& y_T2, double T2);

enum class PipelineStatus { Success, Phase1Failed, Phase2Failed, Phase3Failed };

struct PipelineReport {
    PipelineStatus status = PipelineStatus::Success;
    double T1 = 0.0, T2 = 0.0, T3 = 0.0;
    Phase1Result phase1;
    Phase2Result phase2;
    Phase3Result phase3;
    double final_l2 = 0.0;
    std::string failure;

    bool success() const { return status == PipelineStatus::Success; }
};

/// Chains the three phases. T2 - T1 depends only on (f, delta), never on
/// the data, and is fixed before the first solve.
PipelineReport run_global_null(const Grid1D& grid, const ControlWindow& window,
                               const PipelineConfig& config, const Vector& y0);

struct BlowupReport {
    bool detected = false;
    double t_star = 0.0;
    double t_star_uncertainty = 0.0;
    double oracle_t_star = 0.0; // quadrature value; 0 when not applicable
    double rel_gap = 0.0;       // |t*_pde - t*_ode| / t*_ode
    bool constant_data = false;
    double final_sup = 0.0;
    bool companion_ran = false;
    bool companion_completed = false;
    double companion_final_sup = 0.0;
    int companion_picard_iterations = 0;
};

/// Free focusing solve until blow-up, the ODE quadrature oracle for
/// spatially constant Neumann data, and the optional companion run where
/// the steering control prevents the blow-up.
BlowupReport run_blowup_demo(const Grid1D& grid, const ControlWindow& window,
                             const NonlinearitySpec& spec, const Vector& y0, double horizon,
                             int steps, const PipelineConfig& companion_config,
                             bool with_companion);

} // namespace heatctl

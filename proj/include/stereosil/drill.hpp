#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "stereosil/breathing.hpp"
#include "stereosil/robot.hpp"

namespace stereosil {

/// Inputs of the drill velocity law. The linear command, expressed in the
/// base frame, is
///   v = R [k x_ep; k y_ep; tip_feed - c (f_d - f_m)] + [0; 0; breathing_velocity]
/// and the angular command is the alignment feedback as given. Upper and
/// lower velocity bounds coincide, so the command is an equality constraint.
struct ControlInputs {
  Eigen::MatrixXd jacobian;  // 6 x dof, tip twist in the base frame
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();  // tip frame -> base frame
  double x_ep = 0.0, y_ep = 0.0;  // entry point in the tip frame, m
  double k = 0.0;                 // entry-point following gain, 1/s
  double c = 0.0;                 // force compliance, m/(N s)
  double f_d = 15.0;              // target force, N
  double f_m = 0.0;               // measured force, N
  double tip_feed = 0.0;          // nominal tip-frame feed along z, m/s
  double breathing_velocity = 0.0;  // base-frame feedforward along z, m/s
  Eigen::Vector3d omega_align = Eigen::Vector3d::Zero();  // alignment command, rad/s
};

/// Equality velocity bound [v; omega] for the drill controller.
Eigen::Matrix<double, 6, 1> build_velocity_bound(const ControlInputs& inputs);

struct DrillQpResult {
  Eigen::VectorXd qdot;
  int rank = 0;
  bool full_row_rank = false;  // false means the least-squares fallback ran
  double residual = 0.0;       // ||J qdot - bound||
};

/// Minimum-norm joint velocity subject to J qdot = bound. With full row rank
/// the constraint holds to machine precision and no shorter solution exists;
/// a rank-deficient Jacobian falls back to the least-squares minimiser with
/// the residual reported.
DrillQpResult solve_drill_qp(const Eigen::MatrixXd& jacobian,
                             const Eigen::Matrix<double, 6, 1>& bound);

enum class DrillPhase { PreContact = 0, PostContact = 1, DrillStop = 2, Retraction = 3 };

const char* drill_phase_name(DrillPhase phase);

/// Phase start times; the pre-contact phase begins at t = 0 and each phase
/// runs until the next one starts (retraction until the end of the run).
struct PhaseSchedule {
  double post_contact_start = 20.0;
  double drill_stop_start = 40.0;
  double retraction_start = 50.0;
};

enum class CompensationMode {
  Off,     // no breathing feedforward
  Fitted,  // feedforward from the sliding-window Fourier fit of noisy samples
  Oracle,  // feedforward from the true model (superposition check)
};

struct ScenarioConfig {
  BreathingModel true_breathing;   // anatomy displacement along base z, mm
  double duration_s = 60.0;
  double sample_rate_hz = 20.0;    // control and measurement rate (>= 10 Hz)
  double noise_sigma_mm = 0.05;    // measurement noise on tracked displacement
  PhaseSchedule phases;
  double anatomy_surface_z = 0.0;  // rest height of the anatomy surface, m
  double contact_stiffness = 3000.0;  // spring ramp, N/m
  CompensationMode compensation = CompensationMode::Fitted;
  // Per-axis feedforward flags; breathing is modelled along the
  // anterior-posterior axis (base z), so only the z flag has any effect.
  bool compensate_x = false;
  bool compensate_y = false;
  bool compensate_z = true;
  std::uint64_t seed = 0;

  void validate() const;  // ordered phases inside [0, duration], positive rates
};

struct ControlGains {
  double k = 1.0;               // entry-point following, 1/s
  double c = 0.001;             // force compliance, m/(N s)
  double f_d = 15.0;            // target force, N
  double align_gain = 1.0;      // drill-axis alignment feedback, 1/s
  double approach_speed = 0.002;  // pre-contact feed, m/s
  double retract_speed = 0.003;   // retraction feed, m/s
};

struct DrillLogRow {
  double t_s = 0.0;
  DrillPhase phase = DrillPhase::PreContact;
  double true_z_mm = 0.0;       // anatomy displacement integrated by the plant
  double estimated_z_mm = 0.0;  // current breathing estimate at t (0 when invalid)
  bool fit_valid = false;
  double force_n = 0.0;
  Eigen::Vector3d tip = Eigen::Vector3d::Zero();  // base frame, m
  double anatomy_surface_z = 0.0;                 // base frame, m
  Eigen::VectorXd qdot;
};

struct DrillSimResult {
  std::vector<DrillLogRow> rows;
  bool any_rank_deficient = false;
};

/// Closed-loop drilling simulation. The plant is kinematic: the commanded
/// joint velocity comes from solve_drill_qp, the executed tip twist is
/// J qdot, and both the tip and the breathing anatomy integrate their
/// velocities with the same explicit rule so compensation error, not
/// integrator mismatch, drives the logged relative motion. In Fitted mode
/// noisy displacement samples feed fit_breathing over the causal sliding
/// window [t - horizon, t]; compensation is disabled during the drill-stop
/// and retraction phases. Deterministic under the scenario seed.
DrillSimResult simulate_drilling(const ScenarioConfig& scenario, const FitConfig& fit_cfg,
                                 const ControlGains& gains, const RobotModel& model,
                                 const Eigen::VectorXd& q0);

/// Spread (max - min) of the tip-to-anatomy distance over rows with
/// t in [t_begin, t_end]; zero when fewer than two rows fall inside.
double relative_motion_amplitude(const DrillSimResult& result, double t_begin, double t_end);

void save_drill_log_csv(const DrillSimResult& result, const std::string& path);

}  // namespace stereosil

#include "stereosil/drill.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "stereosil/rng.hpp"

namespace stereosil {

Eigen::Matrix<double, 6, 1> build_velocity_bound(const ControlInputs& inputs) {
  if (!(inputs.k >= 0.0) || !(inputs.c >= 0.0)) {
    throw std::invalid_argument("build_velocity_bound: gains must be non-negative");
  }
  const double scalars[] = {inputs.x_ep, inputs.y_ep,  inputs.f_d,
                            inputs.f_m,  inputs.tip_feed, inputs.breathing_velocity};
  for (double v : scalars) {
    if (!std::isfinite(v)) throw std::invalid_argument("build_velocity_bound: non-finite input");
  }
  if (!inputs.rotation.allFinite() || !inputs.omega_align.allFinite()) {
    throw std::invalid_argument("build_velocity_bound: non-finite input");
  }
  Eigen::Vector3d tip_frame(inputs.k * inputs.x_ep, inputs.k * inputs.y_ep,
                            inputs.tip_feed - inputs.c * (inputs.f_d - inputs.f_m));
  Eigen::Matrix<double, 6, 1> bound;
  bound.head<3>() = inputs.rotation * tip_frame + Eigen::Vector3d(0, 0, inputs.breathing_velocity);
  bound.tail<3>() = inputs.omega_align;
  return bound;
}

DrillQpResult solve_drill_qp(const Eigen::MatrixXd& jacobian,
                             const Eigen::Matrix<double, 6, 1>& bound) {
  if (jacobian.rows() != 6) throw std::invalid_argument("solve_drill_qp: Jacobian must have 6 rows");
  if (jacobian.cols() < 1) throw std::invalid_argument("solve_drill_qp: Jacobian has no columns");
  if (!jacobian.allFinite() || !bound.allFinite()) {
    throw std::invalid_argument("solve_drill_qp: non-finite input");
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(jacobian, Eigen::ComputeThinU | Eigen::ComputeThinV);
  DrillQpResult out;
  out.rank = static_cast<int>(svd.rank());
  out.full_row_rank = out.rank == 6;
  out.qdot = svd.solve(bound);
  out.residual = (jacobian * out.qdot - bound).norm();
  return out;
}

const char* drill_phase_name(DrillPhase phase) {
  switch (phase) {
    case DrillPhase::PreContact: return "pre_contact";
    case DrillPhase::PostContact: return "post_contact";
    case DrillPhase::DrillStop: return "drill_stop";
    case DrillPhase::Retraction: return "retraction";
  }
  return "unknown";
}

void ScenarioConfig::validate() const {
  true_breathing.validate();
  if (!(duration_s > 0.0)) throw std::invalid_argument("scenario needs duration > 0");
  if (!(sample_rate_hz >= 10.0)) throw std::invalid_argument("scenario needs sample rate >= 10 Hz");
  if (!(noise_sigma_mm >= 0.0)) throw std::invalid_argument("scenario needs noise sigma >= 0");
  if (!(contact_stiffness >= 0.0)) throw std::invalid_argument("scenario needs stiffness >= 0");
  const bool ordered = 0.0 <= phases.post_contact_start &&
                       phases.post_contact_start <= phases.drill_stop_start &&
                       phases.drill_stop_start <= phases.retraction_start &&
                       phases.retraction_start <= duration_s;
  if (!ordered) throw std::invalid_argument("scenario phases inconsistent: starts must be ordered within the run");
}

namespace {

DrillPhase phase_at(const PhaseSchedule& phases, double t) {
  if (t < phases.post_contact_start) return DrillPhase::PreContact;
  if (t < phases.drill_stop_start) return DrillPhase::PostContact;
  if (t < phases.retraction_start) return DrillPhase::DrillStop;
  return DrillPhase::Retraction;
}

constexpr double kTwoPi = 6.283185307179586476925286766559;

}  // namespace

DrillSimResult simulate_drilling(const ScenarioConfig& scenario, const FitConfig& fit_cfg,
                                 const ControlGains& gains, const RobotModel& model,
                                 const Eigen::VectorXd& q0) {
  scenario.validate();
  fit_cfg.validate();
  if (q0.size() != model.dof()) {
    throw std::invalid_argument("simulate_drilling: q0 size does not match the robot's joint count");
  }
  if (model.dof() < 1) throw std::invalid_argument("simulate_drilling: robot has no actuated joints");

  const int terminal = model.terminal_link();
  const std::string& tip_link = model.links[terminal].name;

  Eigen::VectorXd q = q0;
  Eigen::Isometry3d tip_pose = forward_kinematics(model, q)[terminal];
  Eigen::Vector3d tip = tip_pose.translation();
  Eigen::Matrix3d rot = tip_pose.rotation();
  const double entry_x = tip.x();
  const double entry_y = tip.y();

  const double dt = 1.0 / scenario.sample_rate_hz;
  const int steps = static_cast<int>(std::llround(scenario.duration_s * scenario.sample_rate_hz));
  const double base_z = scenario.anatomy_surface_z;
  double surface = base_z + 1e-3 * eval_breathing(scenario.true_breathing, 0.0).displacement_mm;

  std::mt19937_64 rng(scenario.seed);
  std::vector<BreathingSample> samples;
  samples.reserve(steps);
  BreathingModel fitted;
  bool fit_valid = false;

  DrillSimResult result;
  result.rows.reserve(steps);

  for (int i = 0; i < steps; ++i) {
    const double t = i * dt;
    const DrillPhase phase = phase_at(scenario.phases, t);
    const double true_disp_mm = (surface - base_z) * 1e3;
    const BreathingState true_state = eval_breathing(scenario.true_breathing, t);

    if (scenario.compensation == CompensationMode::Fitted) {
      samples.push_back({t, true_disp_mm + scenario.noise_sigma_mm * gaussian(rng)});
      const std::vector<BreathingSample> window = causal_window(samples, t, fit_cfg.horizon_s);
      if (window.size() >= 15) {
        const double span = window.back().t_s - window.front().t_s;
        if (span >= kTwoPi / fit_cfg.omega_max) {
          fitted = fit_breathing(window, fit_cfg).model;
          fit_valid = true;
        }
      }
    }

    const bool comp_phase = phase == DrillPhase::PreContact || phase == DrillPhase::PostContact;
    double comp_velocity_mm = 0.0;
    double estimate_mm = 0.0;
    bool estimate_valid = false;
    if (scenario.compensation == CompensationMode::Oracle) {
      estimate_mm = true_state.displacement_mm;
      estimate_valid = true;
      comp_velocity_mm = true_state.velocity_mm_s;
    } else if (scenario.compensation == CompensationMode::Fitted && fit_valid) {
      const BreathingState est = eval_breathing(fitted, t);
      estimate_mm = est.displacement_mm;
      estimate_valid = true;
      comp_velocity_mm = est.velocity_mm_s;
    }
    if (!comp_phase || !scenario.compensate_z) comp_velocity_mm = 0.0;

    const double force = scenario.contact_stiffness * std::max(0.0, surface - tip.z());

    const Eigen::MatrixXd jac = geometric_jacobian(model, q, tip_link);
    Eigen::Matrix<double, 6, 1> bound = Eigen::Matrix<double, 6, 1>::Zero();
    if (phase != DrillPhase::DrillStop) {
      ControlInputs inputs;
      inputs.jacobian = jac;
      inputs.rotation = rot;
      const Eigen::Vector3d entry_tip =
          rot.transpose() * Eigen::Vector3d(entry_x - tip.x(), entry_y - tip.y(), 0.0);
      inputs.x_ep = entry_tip.x();
      inputs.y_ep = entry_tip.y();
      inputs.k = gains.k;
      inputs.f_d = gains.f_d;
      inputs.f_m = force;
      const Eigen::Vector3d axis = rot.col(2);
      inputs.omega_align = gains.align_gain * axis.cross(Eigen::Vector3d::UnitZ());
      switch (phase) {
        case DrillPhase::PreContact:
          inputs.c = gains.c;
          inputs.tip_feed = -gains.approach_speed;
          inputs.breathing_velocity = 1e-3 * comp_velocity_mm;
          break;
        case DrillPhase::PostContact:
          inputs.c = gains.c;
          inputs.tip_feed = 0.0;
          inputs.breathing_velocity = 1e-3 * comp_velocity_mm;
          break;
        case DrillPhase::Retraction:
          inputs.c = 0.0;
          inputs.f_m = gains.f_d;  // inert with c = 0; keeps the row self-describing
          inputs.tip_feed = gains.retract_speed;
          inputs.breathing_velocity = 0.0;
          break;
        case DrillPhase::DrillStop:
          break;
      }
      bound = build_velocity_bound(inputs);
    }

    const DrillQpResult qp = solve_drill_qp(jac, bound);
    if (!qp.full_row_rank) result.any_rank_deficient = true;

    DrillLogRow row;
    row.t_s = t;
    row.phase = phase;
    row.true_z_mm = true_disp_mm;
    row.estimated_z_mm = estimate_valid ? estimate_mm : 0.0;
    row.fit_valid = estimate_valid;
    row.force_n = force;
    row.tip = tip;
    row.anatomy_surface_z = surface;
    row.qdot = qp.qdot;
    result.rows.push_back(std::move(row));

    const Eigen::Matrix<double, 6, 1> twist = jac * qp.qdot;
    tip += twist.head<3>() * dt;
    const Eigen::Vector3d w = twist.tail<3>();
    const double wn = w.norm();
    if (wn > 0.0) rot = Eigen::AngleAxisd(wn * dt, w / wn).toRotationMatrix() * rot;
    q += qp.qdot * dt;
    // The anatomy integrates the same analytic velocity sample the oracle
    // feedforward saw, so perfect compensation cancels exactly.
    surface += 1e-3 * true_state.velocity_mm_s * dt;
  }
  return result;
}

double relative_motion_amplitude(const DrillSimResult& result, double t_begin, double t_end) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  int count = 0;
  for (const DrillLogRow& row : result.rows) {
    if (row.t_s < t_begin || row.t_s > t_end) continue;
    const double d = row.tip.z() - row.anatomy_surface_z;
    lo = std::min(lo, d);
    hi = std::max(hi, d);
    ++count;
  }
  return count >= 2 ? hi - lo : 0.0;
}

void save_drill_log_csv(const DrillSimResult& result, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.precision(17);
  const int dof = result.rows.empty() ? 0 : static_cast<int>(result.rows.front().qdot.size());
  out << "time_s,phase,true_z_mm,estimated_z_mm,fit_valid,force_n,tip_x_m,tip_y_m,tip_z_m,"
         "anatomy_surface_z_m";
  for (int j = 0; j < dof; ++j) out << ",qdot_" << j;
  out << "\n";
  for (const DrillLogRow& row : result.rows) {
    out << row.t_s << ',' << drill_phase_name(row.phase) << ',' << row.true_z_mm << ','
        << row.estimated_z_mm << ',' << (row.fit_valid ? 1 : 0) << ',' << row.force_n << ','
        << row.tip.x() << ',' << row.tip.y() << ',' << row.tip.z() << ',' << row.anatomy_surface_z;
    for (int j = 0; j < row.qdot.size(); ++j) out << ',' << row.qdot[j];
    out << "\n";
  }
  if (!out) throw std::runtime_error("failed while writing " + path);
}

}  // namespace stereosil

#include "stereosil/sdr.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <utility>

namespace stereosil {

void OptimConfig::validate() const {
  if (max_iters <= 0) throw std::runtime_error("optim config: max_iters must be positive");
  if (!(step_size > 0)) throw std::runtime_error("optim config: step_size must be positive");
  if (!(convergence_tol > 0)) throw std::runtime_error("optim config: convergence_tol must be positive");
  if (convergence_window <= 0) throw std::runtime_error("optim config: convergence_window must be positive");
  if (!(grad_tol > 0)) throw std::runtime_error("optim config: grad_tol must be positive");
  if (!(momentum_decay >= 0 && momentum_decay < 1) || !(rms_decay >= 0 && rms_decay < 1))
    throw std::runtime_error("optim config: decay rates must lie in [0, 1)");
  if (!(update_epsilon > 0)) throw std::runtime_error("optim config: update_epsilon must be positive");
}

namespace {

void check_visible_at_init(const PoseParam& init, const RobotModel& model,
                           const std::vector<TriangleMesh>& link_meshes,
                           const std::vector<Eigen::VectorXd>& q_set, const StereoRig& rig,
                           const RenderConfig& render_cfg) {
  const Eigen::Isometry3d pose = decode_pose(init).transform;
  double best = 0;
  for (const Eigen::VectorXd& q : q_set) {
    best = std::max(best, visible_vertex_fraction(model, link_meshes, q, pose, rig.left, render_cfg));
    best = std::max(best, visible_vertex_fraction(model, link_meshes, q, rig.left_to_right * pose,
                                                  rig.right, render_cfg));
  }
  if (best <= 0)
    throw std::runtime_error(
        "sdr_refine: robot invisible in every view at the initial pose (visible vertex fraction 0 "
        "across " +
        std::to_string(q_set.size()) + " configurations); supply a better initialisation");
}

}  // namespace

RefineResult sdr_refine_cached(const PoseParam& init, const RobotModel& model,
                               const std::vector<TriangleMesh>& link_meshes,
                               const std::vector<Eigen::VectorXd>& q_set,
                               const std::vector<LossTarget>& targets, const StereoRig& rig,
                               const RenderConfig& render_cfg, const OptimConfig& opt_cfg) {
  opt_cfg.validate();

  RefineResult result;
  Eigen::Matrix<double, 12, 1> x = init.packed();
  Eigen::Matrix<double, 12, 1> m = Eigen::Matrix<double, 12, 1>::Zero();
  Eigen::Matrix<double, 12, 1> v = Eigen::Matrix<double, 12, 1>::Zero();
  Eigen::Matrix<double, 12, 1> grad;

  result.pose = init;
  result.loss = std::numeric_limits<double>::infinity();
  result.stop_reason = "max_iters";
  result.trace.reserve(static_cast<std::size_t>(opt_cfg.max_iters));

  std::vector<double> losses;
  losses.reserve(static_cast<std::size_t>(opt_cfg.max_iters));

  for (int iter = 0; iter < opt_cfg.max_iters; ++iter) {
    const PoseParam current = PoseParam::unpack(x);
    const double loss = stereo_objective_with_grad(current, model, link_meshes, q_set, targets,
                                                   rig, render_cfg, grad);
    if (loss < result.loss) {
      result.loss = loss;
      result.pose = current;
    }
    losses.push_back(loss);

    const double grad_norm = grad.norm();
    if (grad_norm < opt_cfg.grad_tol) {
      result.trace.push_back({iter, loss, grad_norm, 0.0});
      result.converged = true;
      result.stop_reason = "grad_tol";
      return result;
    }

    m = opt_cfg.momentum_decay * m + (1.0 - opt_cfg.momentum_decay) * grad;
    v = opt_cfg.rms_decay * v + (1.0 - opt_cfg.rms_decay) * grad.cwiseProduct(grad);
    const double mc = 1.0 - std::pow(opt_cfg.momentum_decay, iter + 1);
    const double vc = 1.0 - std::pow(opt_cfg.rms_decay, iter + 1);
    const Eigen::Matrix<double, 12, 1> step =
        -opt_cfg.step_size *
        ((m / mc).array() / ((v / vc).array().sqrt() + opt_cfg.update_epsilon)).matrix();
    x += step;
    result.trace.push_back({iter, loss, grad_norm, step.norm()});

    if (iter + 1 >= opt_cfg.convergence_window) {
      const double then = losses[losses.size() - opt_cfg.convergence_window];
      const double rel = std::abs(loss - then) / std::max(std::abs(then), 1e-300);
      if (rel < opt_cfg.convergence_tol) {
        result.converged = true;
        result.stop_reason = "convergence_tol";
        return result;
      }
    }
  }

  // The loop leaves the last update unevaluated; score it so the best pose
  // reflects every parameter vector visited.
  const PoseParam last = PoseParam::unpack(x);
  const double loss = stereo_objective_cached(decode_pose(last).transform, model, link_meshes,
                                              q_set, targets, rig, render_cfg);
  if (loss < result.loss) {
    result.loss = loss;
    result.pose = last;
  }
  return result;
}

RefineResult sdr_refine(const PoseParam& init, const RobotModel& model,
                        const std::vector<TriangleMesh>& link_meshes,
                        const std::vector<Eigen::VectorXd>& q_set,
                        const std::vector<StereoObservation>& observations, const StereoRig& rig,
                        const RenderConfig& render_cfg, const LossConfig& loss_cfg,
                        const OptimConfig& opt_cfg) {
  if (observations.size() != q_set.size())
    throw std::runtime_error("sdr_refine: one observation pair per configuration required");
  if (q_set.empty()) throw std::runtime_error("sdr_refine: empty configuration set");
  check_visible_at_init(init, model, link_meshes, q_set, rig, render_cfg);
  return sdr_refine_cached(init, model, link_meshes, q_set,
                           make_stereo_targets(observations, loss_cfg), rig, render_cfg, opt_cfg);
}

RefineResult sdr_refine_staged(const PoseParam& init, const RobotModel& model,
                               const std::vector<TriangleMesh>& link_meshes,
                               const std::vector<Eigen::VectorXd>& q_set,
                               const std::vector<StereoObservation>& observations,
                               const StereoRig& rig, const LossConfig& loss_cfg,
                               const std::vector<RefineStage>& stages) {
  if (stages.empty()) throw std::runtime_error("staged refinement: at least one stage required");
  if (observations.size() != q_set.size())
    throw std::runtime_error("staged refinement: one observation pair per configuration required");

  RefineResult result;
  result.pose = init;
  PoseParam current = init;
  int iteration_base = 0;
  bool first = true;
  for (const RefineStage& stage : stages) {
    StereoRig stage_rig = rig;
    stage_rig.left = rig.left.scaled(stage.width, stage.height);
    stage_rig.right = rig.right.scaled(stage.width, stage.height);

    std::vector<StereoObservation> stage_obs;
    stage_obs.reserve(observations.size());
    for (const StereoObservation& obs : observations)
      stage_obs.push_back({downscale_mask(obs.left, stage.width, stage.height),
                           downscale_mask(obs.right, stage.width, stage.height)});

    RenderConfig render_cfg;
    render_cfg.width = stage.width;
    render_cfg.height = stage.height;
    render_cfg.tau = stage.tau;
    render_cfg.z_min = rig.z_min;
    render_cfg.z_max = rig.z_max;

    RefineResult stage_result;
    if (first) {
      stage_result = sdr_refine(current, model, link_meshes, q_set, stage_obs, stage_rig,
                                render_cfg, loss_cfg, stage.opt);
      first = false;
    } else {
      stage_result = sdr_refine_cached(current, model, link_meshes, q_set,
                                       make_stereo_targets(stage_obs, loss_cfg), stage_rig,
                                       render_cfg, stage.opt);
    }
    current = stage_result.pose;
    result.pose = stage_result.pose;
    result.loss = stage_result.loss;
    result.converged = stage_result.converged;
    result.stop_reason = stage_result.stop_reason;
    for (RefineTraceRow row : stage_result.trace) {
      row.iteration += iteration_base;
      result.trace.push_back(row);
    }
    iteration_base = result.trace.empty() ? 0 : result.trace.back().iteration + 1;
  }
  return result;
}

RefineResult sdr_refine_multi(const std::vector<PoseParam>& inits, const RobotModel& model,
                              const std::vector<TriangleMesh>& link_meshes,
                              const std::vector<Eigen::VectorXd>& q_set,
                              const std::vector<StereoObservation>& observations,
                              const StereoRig& rig, const RenderConfig& render_cfg,
                              const LossConfig& loss_cfg, const OptimConfig& opt_cfg) {
  if (inits.empty()) throw std::runtime_error("multi-start refinement: no initial poses");
  const std::vector<LossTarget> targets = make_stereo_targets(observations, loss_cfg);
  RefineResult best;
  best.loss = std::numeric_limits<double>::infinity();
  for (const PoseParam& init : inits) {
    RefineResult candidate =
        sdr_refine_cached(init, model, link_meshes, q_set, targets, rig, render_cfg, opt_cfg);
    if (candidate.loss < best.loss) best = std::move(candidate);
  }
  return best;
}

void save_refine_trace_csv(const std::vector<RefineTraceRow>& trace, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path + ": cannot write");
  out << "iteration,loss,grad_norm,step_norm\n";
  out.precision(17);
  for (const RefineTraceRow& row : trace)
    out << row.iteration << "," << row.loss << "," << row.grad_norm << "," << row.step_norm << "\n";
}

}  // namespace stereosil

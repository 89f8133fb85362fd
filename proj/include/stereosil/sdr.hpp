#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stereosil/objective.hpp"
#include "stereosil/pose.hpp"
#include "stereosil/render.hpp"
#include "stereosil/robot.hpp"

namespace stereosil {

/// First-order refinement settings. The update is adaptive per parameter
/// (momentum plus RMS scaling); translation parameters are metres, so the
/// default step doubles as a 1 cm-scale trust step there.
struct OptimConfig {
  int max_iters = 300;
  double step_size = 1e-2;
  /// Relative loss change across `convergence_window` iterations below which
  /// the refinement stops as converged.
  double convergence_tol = 1e-6;
  int convergence_window = 10;
  /// Gradient-norm stop. The default only fires on genuinely flat objectives.
  double grad_tol = 1e-10;
  double momentum_decay = 0.9;
  double rms_decay = 0.999;
  double update_epsilon = 1e-8;

  void validate() const;
};

struct RefineTraceRow {
  int iteration = 0;
  double loss = 0;
  double grad_norm = 0;
  double step_norm = 0;
};

struct RefineResult {
  PoseParam pose;     // best pose encountered, by objective value
  double loss = 0;    // objective at that pose
  bool converged = false;  // stopped by a tolerance rather than the iteration cap
  std::string stop_reason; // "convergence_tol" | "grad_tol" | "max_iters"
  std::vector<RefineTraceRow> trace;
};

/// Gradient refinement of the robot-base-in-left-camera pose against observed
/// stereo segmentations. Returns the best pose seen, so the final objective
/// never exceeds the initial one. Throws when the robot is invisible in every
/// view at the initial pose.
RefineResult sdr_refine(const PoseParam& init, const RobotModel& model,
                        const std::vector<TriangleMesh>& link_meshes,
                        const std::vector<Eigen::VectorXd>& q_set,
                        const std::vector<StereoObservation>& observations, const StereoRig& rig,
                        const RenderConfig& render_cfg, const LossConfig& loss_cfg,
                        const OptimConfig& opt_cfg = {});

/// Same refinement against precomputed targets (two per configuration, left
/// then right), skipping the visibility precheck; for hot loops that manage
/// their own staging.
RefineResult sdr_refine_cached(const PoseParam& init, const RobotModel& model,
                               const std::vector<TriangleMesh>& link_meshes,
                               const std::vector<Eigen::VectorXd>& q_set,
                               const std::vector<LossTarget>& targets, const StereoRig& rig,
                               const RenderConfig& render_cfg, const OptimConfig& opt_cfg = {});

/// One coarse-to-fine stage: observations are downscaled to width x height
/// (area average + threshold), intrinsics rescaled to match, and the render
/// band width set to tau.
struct RefineStage {
  int width = 0;
  int height = 0;
  double tau = 1.5;
  OptimConfig opt;
};

/// Chained refinement across stages, each starting from the previous result.
/// The returned trace concatenates all stages with continuous iteration
/// numbers; loss values are comparable only within a stage (resolution
/// changes the pixel count).
RefineResult sdr_refine_staged(const PoseParam& init, const RobotModel& model,
                               const std::vector<TriangleMesh>& link_meshes,
                               const std::vector<Eigen::VectorXd>& q_set,
                               const std::vector<StereoObservation>& observations,
                               const StereoRig& rig, const LossConfig& loss_cfg,
                               const std::vector<RefineStage>& stages);

/// Best-of-k refinement: refines every init and keeps the lowest final loss.
RefineResult sdr_refine_multi(const std::vector<PoseParam>& inits, const RobotModel& model,
                              const std::vector<TriangleMesh>& link_meshes,
                              const std::vector<Eigen::VectorXd>& q_set,
                              const std::vector<StereoObservation>& observations,
                              const StereoRig& rig, const RenderConfig& render_cfg,
                              const LossConfig& loss_cfg, const OptimConfig& opt_cfg = {});

/// CSV export: header "iteration,loss,grad_norm,step_norm".
void save_refine_trace_csv(const std::vector<RefineTraceRow>& trace, const std::string& path);

}  // namespace stereosil

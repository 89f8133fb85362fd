#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "stereosil/camera.hpp"
#include "stereosil/objective.hpp"
#include "stereosil/robot.hpp"
#include "stereosil/sdr.hpp"
#include "stereosil/segmentation.hpp"
#include "stereosil/swarm.hpp"

namespace stereosil {

/// Synthetic localisation scene: a posed robot observed by a stereo rig, with
/// exact hard-rendered ground-truth masks for every configuration.
struct SyntheticScene {
  Eigen::Isometry3d gt_pose = Eigen::Isometry3d::Identity();  // robot base in left camera
  StereoRig rig;
  RobotModel model;
  std::vector<TriangleMesh> link_meshes;
  std::vector<Eigen::VectorXd> q_set;
  std::vector<StereoObservation> masks;  // hard renders at gt_pose, aligned with q_set
  std::optional<DegradeParams> degradation;
  std::uint64_t seed = 0;
};

/// Uniform joint sampler over a centred fraction of each joint's limit range.
struct JointSampler {
  double limit_fraction = 0.7;
};

/// Samples pairwise-distinct configurations (joint-space distance > 0.1 rad)
/// until the robot is at least `min_visibility` visible in both views, then
/// renders the ground-truth masks. Deterministic under seed. Throws when a
/// configuration cannot reach visibility within 1000 sampler attempts.
SyntheticScene generate_scene(const RobotModel& model, const std::vector<TriangleMesh>& link_meshes,
                              const StereoRig& rig, const Eigen::Isometry3d& gt_pose, int n_configs,
                              const JointSampler& sampler, std::uint64_t seed,
                              double min_visibility = 0.3);

/// K-means in joint space (seeded k-means++ start, Lloyd iterations); returns
/// one pool index per cluster, the member nearest its centroid. Deterministic
/// under seed.
std::vector<int> select_diverse_configs(const std::vector<Eigen::VectorXd>& pool, int k,
                                        std::uint64_t seed);

enum class McvMethod { Sdr, SdrIcp };
enum class McvInit { PerturbedTruth, Cso };

struct McvProtocol {
  std::vector<int> configs_per_fit = {3, 6, 9, 12};
  int n_repeats = 5;
  std::uint64_t seed = 0;

  /// Every fit size must leave a nonempty held-out complement.
  void validate(int available_configs) const;
};

/// Per-method knobs shared across all trials of one run.
struct McvOptions {
  LossConfig loss;
  OptimConfig opt;
  /// Coarse-to-fine schedule; empty means a single full-resolution pass.
  std::vector<RefineStage> stages;
  IcpSchedule schedule;                 // SdrIcp only
  double init_translation_max = 0.05;   // PerturbedTruth: per-axis metres
  double init_rotation_deg = 5.0;       // PerturbedTruth: exact magnitude
  SwarmConfig swarm;                     // Cso only
};

struct McvTrial {
  int fit_size = 0;
  int repeat = 0;
  std::vector<int> fit_indices;  // logged so subset sharing across methods is auditable
  double tool_centre_error_mm = 0;      // mean over held-out configurations
  double reprojection_error_px = 0;     // mean over held-out configurations and views
  std::vector<double> chain_deviation_cm;  // per link L0..EE, mean over held-out configs
  bool converged = false;
};

struct ErrorReportRow {
  int fit_size = 0;
  double median_mm = 0, q1_mm = 0, q3_mm = 0;
  double median_px = 0, q1_px = 0, q3_px = 0;
};

struct ErrorReport {
  std::string method;
  std::vector<McvTrial> trials;
  std::vector<ErrorReportRow> summary;  // one row per fit size
};

/// Monte-Carlo cross-validation: for every (fit size, repeat) draw a fit
/// subset seeded only by (protocol seed, fit size, repeat) — so competing
/// methods see identical draws — fit the pose on it, and score tool-centre
/// deviation on the held-out complement. Non-convergence marks the trial
/// instead of aborting the run.
ErrorReport run_mcv(const SyntheticScene& scene, const McvProtocol& protocol, McvMethod method,
                    SegmentationSource& source, McvInit init, const McvOptions& options = {});

/// Per-link mean 3D distance between link origins under two base poses,
/// averaged over the configuration set; index 0 is the base link, the last
/// entry the end-effector.
std::vector<double> kinematic_chain_deviation(const Eigen::Isometry3d& pose_a,
                                              const Eigen::Isometry3d& pose_b,
                                              const RobotModel& model,
                                              const std::vector<Eigen::VectorXd>& q_set);

/// Quantile by linear interpolation of order statistics: h = (n-1)p,
/// result = x[floor(h)] + frac(h) * (x[floor(h)+1] - x[floor(h)]).
double quantile_linear(std::vector<double> values, double p);

/// Trial-level CSV; the header names the quantile method used by summaries.
void save_error_report_csv(const ErrorReport& report, const std::string& path);

/// JSON summary {method, quantiles, rows: [{fit_size, median_mm, q1_mm, q3_mm, ...}]}.
void save_error_report_json(const ErrorReport& report, const std::string& path);

}  // namespace stereosil

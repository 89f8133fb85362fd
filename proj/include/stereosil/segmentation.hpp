#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stereosil/objective.hpp"
#include "stereosil/pose.hpp"
#include "stereosil/robot.hpp"
#include "stereosil/sdr.hpp"

namespace stereosil {

/// Synthetic mask degradation emulating imperfect robot segmentation under
/// drapes and occlusion. All amounts are in pixels except dropout_rate.
struct DegradeParams {
  double dilation = 0;             // outward boundary growth, px
  double boundary_noise_amp = 0;   // wavy boundary displacement amplitude, px
  int occluder_count = 0;          // opaque rectangles removed from the mask
  double occluder_size_min = 0;    // occluder side range, px
  double occluder_size_max = 0;
  double blur_radius = 0;          // box blur then re-threshold, px
  double dropout_rate = 0;         // per-pixel removal probability
  std::optional<double> target_iou;  // calibrate degradation strength to this IoU
  std::uint64_t seed = 0;

  void validate() const;
};

struct DegradeReport {
  ImageF mask;
  double iou = 1.0;      // measured IoU(gt, mask)
  double strength = 1.0; // calibrated multiplier on the scalable parameters
};

/// Deterministic degradation under the seed. With target_iou set, a strength
/// multiplier over {dilation, boundary noise, blur, dropout} is bisected
/// until IoU lands within +-0.03 of the target; occluders stay fixed.
/// Throws when the target is unreachable (e.g. forced occluders cap the IoU).
DegradeReport degrade_mask_report(const ImageF& gt, const DegradeParams& params);
ImageF degrade_mask(const ImageF& gt, const DegradeParams& params);

/// Random pose deviation for prior sampling: translation components each
/// uniform in [0, translation_max] metres and an axis-angle rotation of
/// exactly rotation_magnitude_deg about a uniform axis.
struct PerturbSampler {
  double translation_max = 0.05;
  double rotation_magnitude_deg = 5.0;
  std::mt19937_64 rng;

  explicit PerturbSampler(std::uint64_t seed = 0) : rng(seed) {}
};

struct PosePerturbation {
  Eigen::Vector3d rotation = Eigen::Vector3d::Zero();  // axis-angle, radians
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
};

PosePerturbation sample_prior_perturbation(PerturbSampler& sampler);

/// Produces one mask per (configuration, view) request; `prior` carries a
/// silhouette render of the current pose estimate or nullptr when none
/// exists. view: 0 = left, 1 = right.
class SegmentationSource {
 public:
  virtual ~SegmentationSource() = default;
  virtual ImageF segment(int config_index, int view, const ImageF* prior) = 0;
};

/// Returns stored ground-truth masks untouched; the prior is ignored.
class GroundTruthSource final : public SegmentationSource {
 public:
  explicit GroundTruthSource(std::vector<StereoObservation> ground_truth);
  ImageF segment(int config_index, int view, const ImageF* prior) override;

 private:
  std::vector<StereoObservation> ground_truth_;
};

/// Degrades stored ground truth per call. A good prior improves the output:
/// when IoU(prior, ground truth) exceeds prior_gate_iou, the calibration
/// target rises by prior_iou_boost (clamped to 1). Per-call seeds mix the
/// base seed with (configuration, view, call count), so refreshes are
/// distinct yet bit-reproducible.
class OracleDegradedSource final : public SegmentationSource {
 public:
  OracleDegradedSource(std::vector<StereoObservation> ground_truth, DegradeParams base,
                       double prior_gate_iou = 0.8, double prior_iou_boost = 0.0);
  ImageF segment(int config_index, int view, const ImageF* prior) override;

 private:
  std::vector<StereoObservation> ground_truth_;
  DegradeParams base_;
  double prior_gate_iou_;
  double prior_iou_boost_;
  std::vector<std::uint32_t> call_counts_;
};

/// Reads masks from a directory of PNGs named {config_index}_{left|right}.png.
class ExternalMasksSource final : public SegmentationSource {
 public:
  explicit ExternalMasksSource(std::string directory);
  ImageF segment(int config_index, int view, const ImageF* prior) override;

 private:
  std::string directory_;
};

struct IcpSchedule {
  int total_iters = 200;
  int refresh_every = 50;

  void validate() const;
};

struct SdrIcpResult {
  PoseParam pose;   // best candidate under the final segmentation masks
  double loss = 0;  // stereo objective of that pose on the final masks
  bool converged = false;  // last refinement phase stopped by tolerance
  std::vector<RefineTraceRow> trace;  // all phases, continuous iteration numbers
  /// Masks requested at each refresh, one observation set per phase.
  std::vector<std::vector<StereoObservation>> refresh_masks;
};

/// Alternates segmentation and refinement: every refresh_every iterations the
/// source is asked for fresh masks with a hard render of the current best
/// pose as prior channel, then refinement resumes on the new masks. With
/// refresh_every == total_iters this is one segmentation pass plus a plain
/// refinement. Segmentation failures rethrow with the phase index attached.
SdrIcpResult sdr_icp(const PoseParam& init, const RobotModel& model,
                     const std::vector<TriangleMesh>& link_meshes,
                     const std::vector<Eigen::VectorXd>& q_set, const StereoRig& rig,
                     SegmentationSource& source, const IcpSchedule& schedule,
                     const RenderConfig& render_cfg, const LossConfig& loss_cfg,
                     const OptimConfig& opt_cfg = {});

}  // namespace stereosil

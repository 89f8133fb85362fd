#pragma once

#include <Eigen/Dense>
#include <vector>

#include "stereosil/camera.hpp"
#include "stereosil/image.hpp"
#include "stereosil/pose.hpp"
#include "stereosil/robot.hpp"

namespace stereosil {

struct RenderConfig;  // render.hpp

/// Interior distance field d(S): for pixels inside the binary mask S, the
/// exact centre-to-centre Euclidean distance to the nearest boundary pixel of
/// S; zero everywhere outside S. A mask pixel is boundary when any of its
/// 4-neighbours is background or it touches the image border.
ImageF distance_transform(const ImageF& mask);

/// Exact Euclidean distance from every pixel to the nearest mask pixel (zero
/// on the mask itself, everywhere finite for a nonempty mask). Utility for
/// morphological dilation/erosion with a true circular structuring element.
ImageF distance_to_set(const ImageF& mask);

struct LossConfig {
  enum class Kind { DtMse, SoftDice };
  Kind kind = Kind::SoftDice;
  double sigma = 2.0;    // exponential decay of the dice target field, pixels
  double epsilon = 1e-6; // dice denominator stabilizer
  /// Off by default: the mean-squared distance loss compares the render
  /// against raw pixel distances, exactly as formulated. The flag rescales
  /// d(S) by its maximum before comparison.
  bool normalize_dt = false;
};

/// Mean squared difference between the rendered mask and d(S).
double dt_mse_loss(const ImageF& render, const ImageF& segmentation, const LossConfig& cfg = {});

/// 1 - 2|M . E|_1 / (|M|^2 + |E|^2 + eps) with E = exp(-d(1-S)/sigma).
double soft_dice_loss(const ImageF& render, const ImageF& segmentation, const LossConfig& cfg = {});

/// Per-observation target data precomputed once per mask so repeated loss and
/// gradient evaluations against a fixed segmentation stay cheap.
struct LossTarget {
  LossConfig cfg;
  ImageF field;  // d(S) for dt_mse, E for soft_dice
};

LossTarget make_loss_target(const ImageF& segmentation, const LossConfig& cfg);

/// Loss value plus its gradient image dLoss/dM (for backprop through renders).
double loss_with_grad(const ImageF& render, const LossTarget& target, ImageF& grad_out);
double loss_value(const ImageF& render, const LossTarget& target);

/// |A and B| / |A or B|; 1 when both masks are empty.
double iou(const ImageF& a, const ImageF& b);

/// One observed stereo pair for a joint configuration.
struct StereoObservation {
  ImageF left;
  ImageF right;
};

/// Sum over configurations and both views of the loss between the silhouette
/// rendered under the pose hypothesis and the observed segmentation. The
/// right view renders under left_to_right * pose.
double stereo_objective(const Eigen::Isometry3d& pose, const RobotModel& model,
                        const std::vector<TriangleMesh>& link_meshes,
                        const std::vector<Eigen::VectorXd>& q_set,
                        const std::vector<StereoObservation>& observations, const StereoRig& rig,
                        const RenderConfig& render_cfg, const LossConfig& loss_cfg);

/// Same sum against precomputed targets (two per configuration, left then
/// right), for hot loops.
double stereo_objective_cached(const Eigen::Isometry3d& pose, const RobotModel& model,
                               const std::vector<TriangleMesh>& link_meshes,
                               const std::vector<Eigen::VectorXd>& q_set,
                               const std::vector<LossTarget>& targets, const StereoRig& rig,
                               const RenderConfig& render_cfg);

/// Objective plus its gradient with respect to the 12 pose parameters,
/// accumulated over configurations and both views.
double stereo_objective_with_grad(const PoseParam& pose, const RobotModel& model,
                                  const std::vector<TriangleMesh>& link_meshes,
                                  const std::vector<Eigen::VectorXd>& q_set,
                                  const std::vector<LossTarget>& targets, const StereoRig& rig,
                                  const RenderConfig& render_cfg,
                                  Eigen::Matrix<double, 12, 1>& grad_out);

/// Targets for every configuration of an observation set, left then right
/// per configuration.
std::vector<LossTarget> make_stereo_targets(const std::vector<StereoObservation>& observations,
                                            const LossConfig& cfg);

}  // namespace stereosil

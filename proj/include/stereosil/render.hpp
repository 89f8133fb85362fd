#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <vector>

#include "stereosil/camera.hpp"
#include "stereosil/image.hpp"
#include "stereosil/pose.hpp"
#include "stereosil/robot.hpp"

namespace stereosil {

struct RenderConfig {
  int width = 0;
  int height = 0;
  /// Softness in pixels: the occupancy falls smoothly from 1 at the
  /// silhouette edge to 0 at tau pixels outside it. 0 selects exact hard
  /// coverage (non-differentiable).
  double tau = 1.5;
  double z_min = 0.1;
  double z_max = 10.0;
};

/// Silhouette of the robot under joint vector q, posed by `pose`
/// (base-in-camera). Interior pixels are exactly 1, pixels farther than tau
/// outside every edge are exactly 0, and the outward band decays C1-smoothly.
ImageF render_silhouette(const RobotModel& model, const std::vector<TriangleMesh>& link_meshes,
                         const Eigen::VectorXd& q, const Eigen::Isometry3d& pose,
                         const CameraIntrinsics& k, const RenderConfig& cfg);

/// Hard binary render used as the in-context prior channel; all-zero when no
/// pose estimate exists.
ImageF render_prior_channel(const RobotModel& model, const std::vector<TriangleMesh>& link_meshes,
                            const Eigen::VectorXd& q, const Eigen::Isometry3d* pose_estimate,
                            const CameraIntrinsics& k, const RenderConfig& cfg);

/// Fraction of configured mesh vertices projecting inside the image in front
/// of the near plane; the scene generator's visibility gate.
double visible_vertex_fraction(const RobotModel& model,
                               const std::vector<TriangleMesh>& link_meshes,
                               const Eigen::VectorXd& q, const Eigen::Isometry3d& pose,
                               const CameraIntrinsics& k, const RenderConfig& cfg);

/// Differentiable render. Holds the mask plus the per-pixel records needed to
/// push any downstream scalar's mask-gradient back to the 12 pose parameters
/// (9 rotation + 3 translation). The camera transform applied to the decoded
/// pose is `view_pre` (identity for the left eye, left_to_right for the
/// right), and its contribution is part of the chain rule.
class RenderGradient {
 public:
  const ImageF& mask() const { return mask_; }

  /// dLoss/dPoseParam given dLoss/dMask.
  Eigen::Matrix<double, 12, 1> backward(const ImageF& dloss_dmask) const;

 private:
  friend RenderGradient render_silhouette_with_grad(const RobotModel&,
                                                    const std::vector<TriangleMesh>&,
                                                    const Eigen::VectorXd&, const PoseParam&,
                                                    const Eigen::Isometry3d&,
                                                    const CameraIntrinsics&, const RenderConfig&);
  struct Vertex {
    Eigen::Vector2d uv;
    Eigen::Matrix<double, 2, 12> jac;
  };
  ImageF mask_;
  std::vector<double> signed_distance_;
  std::vector<std::int32_t> winner_;
  std::vector<std::array<Vertex, 3>> triangles_;
  double tau_ = 0;
};

RenderGradient render_silhouette_with_grad(const RobotModel& model,
                                           const std::vector<TriangleMesh>& link_meshes,
                                           const Eigen::VectorXd& q, const PoseParam& pose,
                                           const Eigen::Isometry3d& view_pre,
                                           const CameraIntrinsics& k, const RenderConfig& cfg);

/// Instrumentation for performance contracts: how many renders ran and how
/// many triangles each submitted (post-clipping input triangles).
struct RenderCounters {
  std::uint64_t renders = 0;
  std::uint64_t triangles = 0;
  std::uint64_t max_triangles_per_render = 0;
};

RenderCounters render_counters();
void reset_render_counters();

}  // namespace stereosil

#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace stereosil {

/// Pinhole intrinsics for an image of size width x height. Pixel coordinates
/// follow image convention: u grows right, v grows down, origin at the
/// top-left pixel corner.
struct CameraIntrinsics {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;

  Eigen::Matrix3d matrix() const;
  /// Intrinsics after cropping a sub-window whose top-left corner sits at
  /// (offset_x, offset_y) in the original image: focal lengths are unchanged,
  /// the principal point shifts by the offset.
  CameraIntrinsics cropped(int offset_x, int offset_y, int crop_width, int crop_height) const;
  /// Intrinsics for the same field of view resampled to a new resolution
  /// (integer-grid pixel centres): f scales with the resolution ratio and the
  /// principal point maps through c' = (c + 0.5) * s - 0.5.
  CameraIntrinsics scaled(int new_width, int new_height) const;
  void validate() const;
};

/// Clip-space projection built from the intrinsics and a [near, far] camera-z
/// range. Camera frame: x right, y down, z forward (in front of the camera).
/// After perspective division, near maps to z_ndc = -1 and far to +1.
Eigen::Matrix4d perspective_matrix(const CameraIntrinsics& k, double z_near, double z_far);

/// NDC -> pixel map matching the projection above: u = (x_ndc+1)/2 * width,
/// v = (y_ndc+1)/2 * height.
Eigen::Vector2d ndc_to_pixel(const Eigen::Vector2d& ndc, int width, int height);

/// Project a camera-frame point directly to pixels (the composition the clip
/// pipeline must agree with). Throws for points at or behind the camera plane.
Eigen::Vector2d project_point(const CameraIntrinsics& k, const Eigen::Vector3d& p_cam);

/// Stereo rig: both intrinsics plus the fixed left-to-right extrinsic, so a
/// point p_right = left_to_right * p_left, and the depth range used for
/// rendering.
struct StereoRig {
  CameraIntrinsics left;
  CameraIntrinsics right;
  Eigen::Isometry3d left_to_right = Eigen::Isometry3d::Identity();
  double z_min = 0.1;
  double z_max = 10.0;

  double baseline() const { return left_to_right.translation().norm(); }
  void validate() const;
};

StereoRig load_stereo_rig(const std::string& path);
void save_stereo_rig(const StereoRig& rig, const std::string& path);

struct TriangulationResult {
  Eigen::Vector3d point_left = Eigen::Vector3d::Zero();  // in the left camera frame
  Eigen::Vector2d reprojection_left = Eigen::Vector2d::Zero();
  Eigen::Vector2d reprojection_right = Eigen::Vector2d::Zero();
  double reprojection_error_px = 0;  // mean of the two pixel residual norms
  double condition_number = 0;
};

/// Two-view midpoint-free linear triangulation from pixel correspondences.
/// Throws when the 4x3 system is ill conditioned (rays nearly parallel).
TriangulationResult triangulate(const StereoRig& rig, const Eigen::Vector2d& pixel_left,
                                const Eigen::Vector2d& pixel_right,
                                double condition_limit = 1e8);

}  // namespace stereosil

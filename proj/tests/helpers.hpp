#pragma once

#include <Eigen/Dense>
#include <random>
#include <vector>

#include "stereosil/camera.hpp"
#include "stereosil/image.hpp"
#include "stereosil/objective.hpp"
#include "stereosil/render.hpp"
#include "stereosil/rng.hpp"
#include "stereosil/robot.hpp"
#include "stereosil/synthetic.hpp"

namespace stereosil::testing {

/// Low-resolution stereo rig proportional to the desk rig, for fast renders.
inline StereoRig make_small_rig(int width = 320, int height = 180, double focal = 350.0) {
  StereoRig rig = make_desk_rig();
  rig.left.width = width;
  rig.left.height = height;
  rig.left.fx = rig.left.fy = focal;
  rig.left.cx = width / 2.0 - 0.5;
  rig.left.cy = height / 2.0 - 0.5;
  rig.right = rig.left;
  return rig;
}

inline RenderConfig hard_config(const StereoRig& rig) {
  RenderConfig cfg;
  cfg.width = rig.left.width;
  cfg.height = rig.left.height;
  cfg.tau = 0.0;
  cfg.z_min = rig.z_min;
  cfg.z_max = rig.z_max;
  return cfg;
}

inline std::vector<Eigen::VectorXd> jittered_q_set(const Eigen::VectorXd& home, int count,
                                                   std::uint64_t seed, double spread = 0.4) {
  std::mt19937_64 rng(seed);
  std::vector<Eigen::VectorXd> out;
  for (int i = 0; i < count; ++i) {
    Eigen::VectorXd q = home;
    for (int j = 0; j < q.size(); ++j) q[j] += uniform_range(rng, -spread, spread);
    out.push_back(q);
  }
  return out;
}

inline std::vector<StereoObservation> render_observations(
    const RobotModel& model, const std::vector<TriangleMesh>& meshes,
    const std::vector<Eigen::VectorXd>& q_set, const Eigen::Isometry3d& pose,
    const StereoRig& rig) {
  const RenderConfig cfg = hard_config(rig);
  std::vector<StereoObservation> obs;
  for (const Eigen::VectorXd& q : q_set) {
    StereoObservation o;
    o.left = render_silhouette(model, meshes, q, pose, rig.left, cfg);
    o.right = render_silhouette(model, meshes, q, rig.left_to_right * pose, rig.right, cfg);
    obs.push_back(std::move(o));
  }
  return obs;
}

inline Eigen::Matrix3d random_rotation(std::mt19937_64& rng) {
  const Eigen::Vector3d axis = uniform_unit_vector(rng);
  const double angle = uniform_range(rng, 0.0, 3.14159265358979323846);
  return Eigen::AngleAxisd(angle, axis).toRotationMatrix();
}

/// Random binary blob: a few filled discs on an otherwise empty mask.
inline ImageF random_blob(int width, int height, std::mt19937_64& rng, int discs = 3) {
  ImageF mask(width, height, 0.0);
  for (int d = 0; d < discs; ++d) {
    const double cx = uniform_range(rng, 4.0, width - 4.0);
    const double cy = uniform_range(rng, 4.0, height - 4.0);
    const double r = uniform_range(rng, 2.0, width / 4.0);
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x)
        if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r) mask.at(x, y) = 1.0;
  }
  return mask;
}

inline ImageF translate_mask(const ImageF& mask, int dx, int dy) {
  ImageF out(mask.width, mask.height, 0.0);
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x) {
      const int sx = x - dx, sy = y - dy;
      if (mask.in_bounds(sx, sy)) out.at(x, y) = mask.at(sx, sy);
    }
  return out;
}

inline bool images_equal(const ImageF& a, const ImageF& b) {
  return a.width == b.width && a.height == b.height && a.data == b.data;
}

/// Brute-force interior distance field: exact minimum over boundary pixels.
/// A mask pixel is boundary when any 4-neighbour is background or it touches
/// the image border. Zero outside the mask.
inline ImageF brute_force_distance_transform(const ImageF& mask) {
  std::vector<std::pair<int, int>> boundary;
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x) {
      if (mask.at(x, y) == 0.0) continue;
      const bool border = x == 0 || y == 0 || x == mask.width - 1 || y == mask.height - 1;
      const bool open = border || mask.at(x - 1, y) == 0.0 || mask.at(x + 1, y) == 0.0 ||
                        mask.at(x, y - 1) == 0.0 || mask.at(x, y + 1) == 0.0;
      if (open) boundary.emplace_back(x, y);
    }
  ImageF field(mask.width, mask.height, 0.0);
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x) {
      if (mask.at(x, y) == 0.0) continue;
      double best = std::numeric_limits<double>::infinity();
      for (const auto& [bx, by] : boundary) {
        const double dx = x - bx, dy = y - by;
        best = std::min(best, dx * dx + dy * dy);
      }
      field.at(x, y) = std::sqrt(best);
    }
  return field;
}

}  // namespace stereosil::testing

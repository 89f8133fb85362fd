#include "stereosil/render.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace stereosil {

namespace {

std::atomic<std::uint64_t> g_renders{0};
std::atomic<std::uint64_t> g_triangles{0};
std::atomic<std::uint64_t> g_max_triangles{0};

void note_render(std::uint64_t input_faces) {
  g_renders.fetch_add(1, std::memory_order_relaxed);
  g_triangles.fetch_add(input_faces, std::memory_order_relaxed);
  std::uint64_t cur = g_max_triangles.load(std::memory_order_relaxed);
  while (cur < input_faces &&
         !g_max_triangles.compare_exchange_weak(cur, input_faces, std::memory_order_relaxed)) {
  }
}

void validate_config(const RenderConfig& cfg) {
  if (cfg.width <= 0 || cfg.height <= 0)
    throw std::runtime_error("render: zero-resolution config");
  if (cfg.tau < 0) throw std::runtime_error("render: negative softness");
  if (!(cfg.z_min > 0) || !(cfg.z_max > cfg.z_min))
    throw std::runtime_error("render: require 0 < z_min < z_max");
}

/// Occupancy profile over u = signed_distance / tau: exactly 1 for interior
/// (u >= 0), exactly 0 beyond the band (u <= -1), C1 smootherstep between.
double soft_profile(double u) {
  if (u >= 0.0) return 1.0;
  if (u <= -1.0) return 0.0;
  const double y = 1.0 + u;
  return y * y * y * (y * (6.0 * y - 15.0) + 10.0);
}

double soft_profile_slope(double u) {
  if (u >= 0.0 || u <= -1.0) return 0.0;
  const double y = 1.0 + u;
  const double ym = y - 1.0;
  return 30.0 * y * y * ym * ym;
}

double cross2(const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  return a.x() * b.y() - a.y() * b.x();
}

double segment_foot(const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& p) {
  const Eigen::Vector2d e = b - a;
  const double len2 = e.squaredNorm();
  if (len2 <= 0.0) return 0.0;
  return std::clamp((p - a).dot(e) / len2, 0.0, 1.0);
}

struct RasterTriangle {
  Eigen::Vector2d v[3];
};

/// Per-pixel union of triangle signed distances (positive inside, negative
/// outside, exact outside the union). Pixels already interior are final: the
/// occupancy profile saturates at 1 there, so neither value nor winner can
/// matter downstream.
void rasterize_union(const std::vector<RasterTriangle>& triangles, int width, int height,
                     double tau, std::vector<double>& sd, std::vector<std::int32_t>* winner) {
  const bool hard = tau == 0.0;
  const double pad = hard ? 0.0 : tau + 1.0;
  for (std::size_t t = 0; t < triangles.size(); ++t) {
    const auto& tri = triangles[t];
    double min_u = tri.v[0].x(), max_u = tri.v[0].x();
    double min_v = tri.v[0].y(), max_v = tri.v[0].y();
    for (int k = 1; k < 3; ++k) {
      min_u = std::min(min_u, tri.v[k].x());
      max_u = std::max(max_u, tri.v[k].x());
      min_v = std::min(min_v, tri.v[k].y());
      max_v = std::max(max_v, tri.v[k].y());
    }
    const int x0 = std::max(0, static_cast<int>(std::floor(min_u - 0.5 - pad)));
    const int x1 = std::min(width - 1, static_cast<int>(std::ceil(max_u - 0.5 + pad)));
    const int y0 = std::max(0, static_cast<int>(std::floor(min_v - 0.5 - pad)));
    const int y1 = std::min(height - 1, static_cast<int>(std::ceil(max_v - 0.5 + pad)));
    if (x0 > x1 || y0 > y1) continue;

    const Eigen::Vector2d e01 = tri.v[1] - tri.v[0];
    const Eigen::Vector2d e12 = tri.v[2] - tri.v[1];
    const Eigen::Vector2d e20 = tri.v[0] - tri.v[2];
    for (int y = y0; y <= y1; ++y) {
      double* sd_row = sd.data() + static_cast<std::size_t>(y) * width;
      for (int x = x0; x <= x1; ++x) {
        if (sd_row[x] >= 0.0) continue;
        const Eigen::Vector2d p(x + 0.5, y + 0.5);
        const double c0 = cross2(e01, p - tri.v[0]);
        const double c1 = cross2(e12, p - tri.v[1]);
        const double c2 = cross2(e20, p - tri.v[2]);
        const bool inside = (c0 >= 0 && c1 >= 0 && c2 >= 0) || (c0 <= 0 && c1 <= 0 && c2 <= 0);
        if (hard) {
          if (inside) sd_row[x] = 1.0;
          continue;
        }
        double best2 = std::numeric_limits<double>::max();
        for (int k = 0; k < 3; ++k) {
          const Eigen::Vector2d& a = tri.v[k];
          const Eigen::Vector2d& b = tri.v[(k + 1) % 3];
          const double h = segment_foot(a, b, p);
          best2 = std::min(best2, (p - (a + h * (b - a))).squaredNorm());
        }
        const double dist = std::sqrt(best2);
        const double value = inside ? dist : -dist;
        if (value > sd_row[x]) {
          sd_row[x] = value;
          if (winner) (*winner)[static_cast<std::size_t>(y) * width + x] =
              static_cast<std::int32_t>(t);
        }
      }
    }
  }
}

ImageF mask_from_sd(const std::vector<double>& sd, int width, int height, double tau) {
  ImageF mask(width, height);
  if (tau == 0.0) {
    for (std::size_t i = 0; i < sd.size(); ++i) mask.data[i] = sd[i] >= 0.0 ? 1.0 : 0.0;
  } else {
    for (std::size_t i = 0; i < sd.size(); ++i) mask.data[i] = soft_profile(sd[i] / tau);
  }
  return mask;
}

// ---- forward-only pipeline (no jacobians) ----

void clip_axis_z(std::vector<Eigen::Vector3d>& poly, double z_plane, bool keep_above) {
  std::vector<Eigen::Vector3d> out;
  out.reserve(poly.size() + 2);
  const auto keep = [&](const Eigen::Vector3d& p) {
    return keep_above ? p.z() >= z_plane : p.z() <= z_plane;
  };
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Eigen::Vector3d& a = poly[i];
    const Eigen::Vector3d& b = poly[(i + 1) % poly.size()];
    const bool ka = keep(a), kb = keep(b);
    if (ka) out.push_back(a);
    if (ka != kb) {
      const double s = (z_plane - a.z()) / (b.z() - a.z());
      out.push_back(a + s * (b - a));
    }
  }
  poly = std::move(out);
}

std::uint64_t build_triangles(const RobotModel& model, const std::vector<TriangleMesh>& link_meshes,
                              const Eigen::VectorXd& q, const Eigen::Isometry3d& pose,
                              const CameraIntrinsics& k, const RenderConfig& cfg,
                              std::vector<RasterTriangle>& out) {
  if (link_meshes.size() != model.links.size())
    throw std::runtime_error("render: one mesh slot per link required");
  const auto link_poses = forward_kinematics(model, q);
  std::uint64_t faces = 0;
  std::vector<Eigen::Vector3d> poly;
  for (std::size_t l = 0; l < link_meshes.size(); ++l) {
    const TriangleMesh& mesh = link_meshes[l];
    if (mesh.empty()) continue;
    const Eigen::Isometry3d to_cam = pose * link_poses[l];
    for (const auto& face : mesh.faces) {
      ++faces;
      poly.clear();
      for (int c = 0; c < 3; ++c) poly.push_back(to_cam * mesh.vertices[face[c]]);
      clip_axis_z(poly, cfg.z_min, true);
      if (poly.size() < 3) continue;
      clip_axis_z(poly, cfg.z_max, false);
      if (poly.size() < 3) continue;
      std::vector<Eigen::Vector2d> uv(poly.size());
      for (std::size_t i = 0; i < poly.size(); ++i)
        uv[i] = Eigen::Vector2d(k.fx * poly[i].x() / poly[i].z() + k.cx,
                                k.fy * poly[i].y() / poly[i].z() + k.cy);
      for (std::size_t i = 1; i + 1 < poly.size(); ++i)
        out.push_back({{uv[0], uv[i], uv[i + 1]}});
    }
  }
  return faces;
}

}  // namespace

ImageF render_silhouette(const RobotModel& model, const std::vector<TriangleMesh>& link_meshes,
                         const Eigen::VectorXd& q, const Eigen::Isometry3d& pose,
                         const CameraIntrinsics& k, const RenderConfig& cfg) {
  validate_config(cfg);
  std::vector<RasterTriangle> triangles;
  const std::uint64_t faces = build_triangles(model, link_meshes, q, pose, k, cfg, triangles);
  note_render(faces);
  std::vector<double> sd(static_cast<std::size_t>(cfg.width) * cfg.height,
                         -std::numeric_limits<double>::infinity());
  rasterize_union(triangles, cfg.width, cfg.height, cfg.tau, sd, nullptr);
  return mask_from_sd(sd, cfg.width, cfg.height, cfg.tau);
}

ImageF render_prior_channel(const RobotModel& model, const std::vector<TriangleMesh>& link_meshes,
                            const Eigen::VectorXd& q, const Eigen::Isometry3d* pose_estimate,
                            const CameraIntrinsics& k, const RenderConfig& cfg) {
  validate_config(cfg);
  if (!pose_estimate) return ImageF(cfg.width, cfg.height, 0.0);
  RenderConfig hard = cfg;
  hard.tau = 0.0;
  return render_silhouette(model, link_meshes, q, *pose_estimate, k, hard);
}

double visible_vertex_fraction(const RobotModel& model,
                               const std::vector<TriangleMesh>& link_meshes,
                               const Eigen::VectorXd& q, const Eigen::Isometry3d& pose,
                               const CameraIntrinsics& k, const RenderConfig& cfg) {
  validate_config(cfg);
  const auto link_poses = forward_kinematics(model, q);
  std::size_t total = 0, visible = 0;
  for (std::size_t l = 0; l < link_meshes.size(); ++l) {
    if (link_meshes[l].empty()) continue;
    const Eigen::Isometry3d to_cam = pose * link_poses[l];
    for (const auto& v : link_meshes[l].vertices) {
      ++total;
      const Eigen::Vector3d p = to_cam * v;
      if (p.z() < cfg.z_min || p.z() > cfg.z_max) continue;
      const double u = k.fx * p.x() / p.z() + k.cx;
      const double w = k.fy * p.y() / p.z() + k.cy;
      if (u >= 0 && u < cfg.width && w >= 0 && w < cfg.height) ++visible;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(visible) / static_cast<double>(total);
}

// ---- differentiable pipeline ----

namespace {

struct CamVertex {
  Eigen::Vector3d p;
  Eigen::Matrix<double, 3, 12> jac;
};

void clip_axis_z_grad(std::vector<CamVertex>& poly, double z_plane, bool keep_above) {
  std::vector<CamVertex> out;
  out.reserve(poly.size() + 2);
  const auto keep = [&](const CamVertex& v) {
    return keep_above ? v.p.z() >= z_plane : v.p.z() <= z_plane;
  };
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const CamVertex& a = poly[i];
    const CamVertex& b = poly[(i + 1) % poly.size()];
    const bool ka = keep(a), kb = keep(b);
    if (ka) out.push_back(a);
    if (ka != kb) {
      const double dz = b.p.z() - a.p.z();
      const double s = (z_plane - a.p.z()) / dz;
      CamVertex c;
      c.p = a.p + s * (b.p - a.p);
      // d s / d theta: quotient rule over the z components.
      const Eigen::Matrix<double, 1, 12> dza = a.jac.row(2);
      const Eigen::Matrix<double, 1, 12> dzb = b.jac.row(2);
      const Eigen::Matrix<double, 1, 12> ds =
          (-dza * dz - (z_plane - a.p.z()) * (dzb - dza)) / (dz * dz);
      c.jac = (1.0 - s) * a.jac + s * b.jac + (b.p - a.p) * ds;
      out.push_back(std::move(c));
    }
  }
  poly = std::move(out);
}

}  // namespace

RenderGradient render_silhouette_with_grad(const RobotModel& model,
                                           const std::vector<TriangleMesh>& link_meshes,
                                           const Eigen::VectorXd& q, const PoseParam& pose,
                                           const Eigen::Isometry3d& view_pre,
                                           const CameraIntrinsics& k, const RenderConfig& cfg) {
  validate_config(cfg);
  if (cfg.tau == 0.0)
    throw std::runtime_error("render: gradients requested in hard (tau = 0) mode");
  if (link_meshes.size() != model.links.size())
    throw std::runtime_error("render: one mesh slot per link required");

  const RotationDecode rot = decode_rotation(pose.r, true);
  const Eigen::Matrix3d xr = view_pre.linear();
  Eigen::Isometry3d base_to_cam = Eigen::Isometry3d::Identity();
  base_to_cam.linear() = xr * rot.rotation;
  base_to_cam.translation() = xr * pose.t + view_pre.translation();

  const auto link_poses = forward_kinematics(model, q);

  RenderGradient out;
  out.tau_ = cfg.tau;
  std::vector<RasterTriangle> raster;
  std::uint64_t faces = 0;
  std::vector<CamVertex> poly;
  for (std::size_t l = 0; l < link_meshes.size(); ++l) {
    const TriangleMesh& mesh = link_meshes[l];
    if (mesh.empty()) continue;
    const Eigen::Isometry3d& link_pose = link_poses[l];
    for (const auto& face : mesh.faces) {
      ++faces;
      poly.clear();
      for (int c = 0; c < 3; ++c) {
        const Eigen::Vector3d w = link_pose * mesh.vertices[face[c]];
        CamVertex cv;
        cv.p = base_to_cam * w;
        // d p_cam / d r = Xr * d(R w)/d vec(R) * dvec(R)/dr, with
        // d(R w)/d col_j(R) = w_j * I.
        Eigen::Matrix<double, 3, 9> dRw;
        for (int j = 0; j < 3; ++j)
          dRw.block<3, 3>(0, 3 * j) = w[j] * Eigen::Matrix3d::Identity();
        cv.jac.leftCols<9>() = xr * (dRw * rot.jacobian);
        cv.jac.rightCols<3>() = xr;
        poly.push_back(std::move(cv));
      }
      clip_axis_z_grad(poly, cfg.z_min, true);
      if (poly.size() < 3) continue;
      clip_axis_z_grad(poly, cfg.z_max, false);
      if (poly.size() < 3) continue;

      std::vector<RenderGradient::Vertex> projected(poly.size());
      for (std::size_t i = 0; i < poly.size(); ++i) {
        const Eigen::Vector3d& p = poly[i].p;
        projected[i].uv = Eigen::Vector2d(k.fx * p.x() / p.z() + k.cx,
                                          k.fy * p.y() / p.z() + k.cy);
        Eigen::Matrix<double, 2, 3> duv;
        duv << k.fx / p.z(), 0, -k.fx * p.x() / (p.z() * p.z()),
               0, k.fy / p.z(), -k.fy * p.y() / (p.z() * p.z());
        projected[i].jac = duv * poly[i].jac;
      }
      for (std::size_t i = 1; i + 1 < poly.size(); ++i) {
        raster.push_back({{projected[0].uv, projected[i].uv, projected[i + 1].uv}});
        out.triangles_.push_back({projected[0], projected[i], projected[i + 1]});
      }
    }
  }
  note_render(faces);

  out.signed_distance_.assign(static_cast<std::size_t>(cfg.width) * cfg.height,
                              -std::numeric_limits<double>::infinity());
  out.winner_.assign(out.signed_distance_.size(), -1);
  rasterize_union(raster, cfg.width, cfg.height, cfg.tau, out.signed_distance_, &out.winner_);
  out.mask_ = mask_from_sd(out.signed_distance_, cfg.width, cfg.height, cfg.tau);
  return out;
}

Eigen::Matrix<double, 12, 1> RenderGradient::backward(const ImageF& dloss_dmask) const {
  if (dloss_dmask.width != mask_.width || dloss_dmask.height != mask_.height)
    throw std::runtime_error("render backward: gradient image size mismatch");
  Eigen::Matrix<double, 12, 1> grad = Eigen::Matrix<double, 12, 1>::Zero();
  for (int y = 0; y < mask_.height; ++y) {
    for (int x = 0; x < mask_.width; ++x) {
      const std::size_t idx = static_cast<std::size_t>(y) * mask_.width + x;
      const double g = dloss_dmask.data[idx];
      if (g == 0.0) continue;
      const double sd = signed_distance_[idx];
      const double slope = soft_profile_slope(sd / tau_);
      if (slope == 0.0) continue;
      const std::int32_t w = winner_[idx];
      if (w < 0) continue;

      // Band pixels sit outside their winner triangle; the distance varies
      // with the nearest edge's endpoints (envelope theorem: the foot
      // parameter h is stationary).
      const auto& tri = triangles_[w];
      const Eigen::Vector2d p(x + 0.5, y + 0.5);
      double best2 = std::numeric_limits<double>::max();
      int best_edge = 0;
      double best_h = 0;
      for (int k = 0; k < 3; ++k) {
        const Eigen::Vector2d& a = tri[k].uv;
        const Eigen::Vector2d& b = tri[(k + 1) % 3].uv;
        const double h = segment_foot(a, b, p);
        const double d2 = (p - (a + h * (b - a))).squaredNorm();
        if (d2 < best2) {
          best2 = d2;
          best_edge = k;
          best_h = h;
        }
      }
      const double dist = std::sqrt(best2);
      if (dist <= 1e-12) continue;
      const auto& va = tri[best_edge];
      const auto& vb = tri[(best_edge + 1) % 3];
      const Eigen::Vector2d closest = va.uv + best_h * (vb.uv - va.uv);
      const Eigen::Vector2d n = (p - closest) / dist;
      // sd = -dist here, and d dist = -n . ((1-h) dA + h dB).
      const Eigen::Matrix<double, 1, 12> dsd =
          n.transpose() * ((1.0 - best_h) * va.jac + best_h * vb.jac);
      grad += (g * slope / tau_) * dsd.transpose();
    }
  }
  return grad;
}

RenderCounters render_counters() {
  RenderCounters c;
  c.renders = g_renders.load(std::memory_order_relaxed);
  c.triangles = g_triangles.load(std::memory_order_relaxed);
  c.max_triangles_per_render = g_max_triangles.load(std::memory_order_relaxed);
  return c;
}

void reset_render_counters() {
  g_renders.store(0, std::memory_order_relaxed);
  g_triangles.store(0, std::memory_order_relaxed);
  g_max_triangles.store(0, std::memory_order_relaxed);
}

}  // namespace stereosil

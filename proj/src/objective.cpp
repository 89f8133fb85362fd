#include "stereosil/objective.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "stereosil/render.hpp"

namespace stereosil {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
// Seed sentinel kept finite so envelope intersections never form inf - inf.
constexpr double kFar = 1e30;

void require_binary(const ImageF& mask, const char* what) {
  for (double v : mask.data) {
    if (v != 0.0 && v != 1.0)
      throw std::runtime_error(std::string(what) + ": mask must be strictly binary");
  }
}

void require_same_size(const ImageF& a, const ImageF& b, const char* what) {
  if (a.width != b.width || a.height != b.height)
    throw std::runtime_error(std::string(what) + ": dimension mismatch");
}

/// 1D squared-distance lower envelope (the separable pass of the exact
/// Euclidean transform).
void dt_1d(const std::vector<double>& f, std::vector<double>& d, int n, std::vector<int>& v,
           std::vector<double>& z) {
  int k = 0;
  v[0] = 0;
  z[0] = -kInf;
  z[1] = kInf;
  for (int q = 1; q < n; ++q) {
    double s = ((f[q] + static_cast<double>(q) * q) - (f[v[k]] + static_cast<double>(v[k]) * v[k])) /
               (2.0 * q - 2.0 * v[k]);
    while (s <= z[k]) {
      --k;
      s = ((f[q] + static_cast<double>(q) * q) - (f[v[k]] + static_cast<double>(v[k]) * v[k])) /
          (2.0 * q - 2.0 * v[k]);
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kInf;
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    d[q] = (q - v[k]) * (double)(q - v[k]) + f[v[k]];
  }
}

bool is_boundary(const ImageF& mask, int x, int y) {
  if (mask.at(x, y) == 0.0) return false;
  if (x == 0 || y == 0 || x == mask.width - 1 || y == mask.height - 1) return true;
  return mask.at(x - 1, y) == 0.0 || mask.at(x + 1, y) == 0.0 || mask.at(x, y - 1) == 0.0 ||
         mask.at(x, y + 1) == 0.0;
}

}  // namespace

namespace {

/// Separable exact squared-distance transform from the zero-valued seeds
/// already written into `sq` (non-seeds hold kFar).
void squared_distance_passes(ImageF& sq) {
  const int w = sq.width, h = sq.height;
  std::vector<double> f(std::max(w, h)), d(std::max(w, h)), z(std::max(w, h) + 1);
  std::vector<int> v(std::max(w, h));
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) f[y] = sq.at(x, y);
    dt_1d(f, d, h, v, z);
    for (int y = 0; y < h; ++y) sq.at(x, y) = d[y];
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) f[x] = sq.at(x, y);
    dt_1d(f, d, w, v, z);
    for (int x = 0; x < w; ++x) sq.at(x, y) = d[x];
  }
}

}  // namespace

ImageF distance_transform(const ImageF& mask) {
  require_binary(mask, "distance_transform");
  const int w = mask.width, h = mask.height;
  ImageF sq(w, h, kFar);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (is_boundary(mask, x, y)) sq.at(x, y) = 0.0;
  squared_distance_passes(sq);

  ImageF out(w, h, 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (mask.at(x, y) == 1.0) out.at(x, y) = std::sqrt(sq.at(x, y));
  return out;
}

ImageF distance_to_set(const ImageF& mask) {
  require_binary(mask, "distance_to_set");
  ImageF sq(mask.width, mask.height, kFar);
  for (std::size_t i = 0; i < mask.data.size(); ++i)
    if (mask.data[i] == 1.0) sq.data[i] = 0.0;
  squared_distance_passes(sq);
  for (double& v : sq.data) v = std::sqrt(v);
  return sq;
}

double dt_mse_loss(const ImageF& render, const ImageF& segmentation, const LossConfig& cfg) {
  LossConfig c = cfg;
  c.kind = LossConfig::Kind::DtMse;
  return loss_value(render, make_loss_target(segmentation, c));
}

double soft_dice_loss(const ImageF& render, const ImageF& segmentation, const LossConfig& cfg) {
  LossConfig c = cfg;
  c.kind = LossConfig::Kind::SoftDice;
  return loss_value(render, make_loss_target(segmentation, c));
}

LossTarget make_loss_target(const ImageF& segmentation, const LossConfig& cfg) {
  if (!(cfg.sigma > 0) || !(cfg.epsilon > 0))
    throw std::runtime_error("loss config: sigma and epsilon must be positive");
  LossTarget target;
  target.cfg = cfg;
  if (cfg.kind == LossConfig::Kind::DtMse) {
    target.field = distance_transform(segmentation);
    if (cfg.normalize_dt) {
      double max = 0;
      for (double v : target.field.data) max = std::max(max, v);
      if (max > 0)
        for (double& v : target.field.data) v /= max;
    }
  } else {
    ImageF complement(segmentation.width, segmentation.height);
    require_binary(segmentation, "soft_dice_loss");
    for (std::size_t i = 0; i < segmentation.data.size(); ++i)
      complement.data[i] = 1.0 - segmentation.data[i];
    const ImageF d = distance_transform(complement);
    target.field = ImageF(segmentation.width, segmentation.height);
    for (std::size_t i = 0; i < d.data.size(); ++i)
      target.field.data[i] = std::exp(-d.data[i] / cfg.sigma);
  }
  return target;
}

double loss_value(const ImageF& render, const LossTarget& target) {
  require_same_size(render, target.field, "loss");
  const std::size_t n = render.data.size();
  if (target.cfg.kind == LossConfig::Kind::DtMse) {
    double sum = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = render.data[i] - target.field.data[i];
      sum += r * r;
    }
    return sum / static_cast<double>(n);
  }
  double dot = 0, m2 = 0, e2 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double m = render.data[i];
    const double e = target.field.data[i];
    dot += m * e;
    m2 += m * m;
    e2 += e * e;
  }
  return 1.0 - 2.0 * dot / (m2 + e2 + target.cfg.epsilon);
}

double loss_with_grad(const ImageF& render, const LossTarget& target, ImageF& grad_out) {
  require_same_size(render, target.field, "loss");
  const std::size_t n = render.data.size();
  grad_out = ImageF(render.width, render.height);
  if (target.cfg.kind == LossConfig::Kind::DtMse) {
    double sum = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = render.data[i] - target.field.data[i];
      sum += r * r;
      grad_out.data[i] = 2.0 * r / static_cast<double>(n);
    }
    return sum / static_cast<double>(n);
  }
  double dot = 0, m2 = 0, e2 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double m = render.data[i];
    const double e = target.field.data[i];
    dot += m * e;
    m2 += m * m;
    e2 += e * e;
  }
  const double b = m2 + e2 + target.cfg.epsilon;
  for (std::size_t i = 0; i < n; ++i) {
    grad_out.data[i] =
        (-2.0 * target.field.data[i] * b + 4.0 * dot * render.data[i]) / (b * b);
  }
  return 1.0 - 2.0 * dot / b;
}

double iou(const ImageF& a, const ImageF& b) {
  require_same_size(a, b, "iou");
  return intersection_over_union(a, b);
}

namespace {

RenderConfig config_for(const StereoRig& rig, const RenderConfig& base, bool left) {
  RenderConfig cfg = base;
  if (cfg.width == 0 || cfg.height == 0) {
    cfg.width = left ? rig.left.width : rig.right.width;
    cfg.height = left ? rig.left.height : rig.right.height;
  }
  return cfg;
}

}  // namespace

double stereo_objective(const Eigen::Isometry3d& pose, const RobotModel& model,
                        const std::vector<TriangleMesh>& link_meshes,
                        const std::vector<Eigen::VectorXd>& q_set,
                        const std::vector<StereoObservation>& observations, const StereoRig& rig,
                        const RenderConfig& render_cfg, const LossConfig& loss_cfg) {
  if (observations.size() != q_set.size())
    throw std::runtime_error("stereo_objective: one observation pair per configuration required");
  return stereo_objective_cached(pose, model, link_meshes, q_set,
                                 make_stereo_targets(observations, loss_cfg), rig, render_cfg);
}

std::vector<LossTarget> make_stereo_targets(const std::vector<StereoObservation>& observations,
                                            const LossConfig& cfg) {
  std::vector<LossTarget> targets;
  targets.reserve(2 * observations.size());
  for (std::size_t i = 0; i < observations.size(); ++i) {
    if (observations[i].left.pixel_count() == 0 || observations[i].right.pixel_count() == 0)
      throw std::runtime_error("stereo observations: missing view at configuration " +
                               std::to_string(i));
    targets.push_back(make_loss_target(observations[i].left, cfg));
    targets.push_back(make_loss_target(observations[i].right, cfg));
  }
  return targets;
}

double stereo_objective_cached(const Eigen::Isometry3d& pose, const RobotModel& model,
                               const std::vector<TriangleMesh>& link_meshes,
                               const std::vector<Eigen::VectorXd>& q_set,
                               const std::vector<LossTarget>& targets, const StereoRig& rig,
                               const RenderConfig& render_cfg) {
  if (targets.size() != 2 * q_set.size())
    throw std::runtime_error("stereo_objective: two targets per configuration required");
  // Per-configuration subtotals are summed in sorted order so the objective is
  // exactly invariant to the ordering of q_set.
  std::vector<double> per_config(q_set.size());
  for (std::size_t i = 0; i < q_set.size(); ++i) {
    const ImageF left = render_silhouette(model, link_meshes, q_set[i], pose, rig.left,
                                          config_for(rig, render_cfg, true));
    double s = loss_value(left, targets[2 * i]);
    const ImageF right = render_silhouette(model, link_meshes, q_set[i], rig.left_to_right * pose,
                                           rig.right, config_for(rig, render_cfg, false));
    s += loss_value(right, targets[2 * i + 1]);
    per_config[i] = s;
  }
  std::sort(per_config.begin(), per_config.end());
  double total = 0;
  for (double s : per_config) total += s;
  return total;
}

double stereo_objective_with_grad(const PoseParam& pose, const RobotModel& model,
                                  const std::vector<TriangleMesh>& link_meshes,
                                  const std::vector<Eigen::VectorXd>& q_set,
                                  const std::vector<LossTarget>& targets, const StereoRig& rig,
                                  const RenderConfig& render_cfg,
                                  Eigen::Matrix<double, 12, 1>& grad_out) {
  if (targets.size() != 2 * q_set.size())
    throw std::runtime_error("stereo_objective: two targets per configuration required");
  grad_out.setZero();
  ImageF pixel_grad;
  std::vector<double> per_config(q_set.size());
  for (std::size_t i = 0; i < q_set.size(); ++i) {
    const RenderGradient left =
        render_silhouette_with_grad(model, link_meshes, q_set[i], pose,
                                    Eigen::Isometry3d::Identity(), rig.left,
                                    config_for(rig, render_cfg, true));
    double s = loss_with_grad(left.mask(), targets[2 * i], pixel_grad);
    grad_out += left.backward(pixel_grad);
    const RenderGradient right =
        render_silhouette_with_grad(model, link_meshes, q_set[i], pose, rig.left_to_right,
                                    rig.right, config_for(rig, render_cfg, false));
    s += loss_with_grad(right.mask(), targets[2 * i + 1], pixel_grad);
    grad_out += right.backward(pixel_grad);
    per_config[i] = s;
  }
  std::sort(per_config.begin(), per_config.end());
  double total = 0;
  for (double s : per_config) total += s;
  return total;
}

}  // namespace stereosil

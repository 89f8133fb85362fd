#include "stereosil/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "stereosil/render.hpp"
#include "stereosil/rng.hpp"

namespace stereosil {

void DegradeParams::validate() const {
  if (dilation < 0 || boundary_noise_amp < 0 || occluder_count < 0 || occluder_size_min < 0 ||
      occluder_size_max < occluder_size_min || blur_radius < 0 || dropout_rate < 0 ||
      dropout_rate > 1)
    throw std::runtime_error("degrade params: amounts must be nonnegative and dropout_rate <= 1");
  if (target_iou && !(*target_iou > 0 && *target_iou <= 1))
    throw std::runtime_error("degrade params: target_iou must lie in (0, 1]");
}

namespace {

/// Smooth noise field in [-1, 1]: white noise on a coarse grid, bilinearly
/// interpolated, so thresholding displaces the boundary in waves rather than
/// per-pixel speckle.
ImageF smooth_noise_field(int width, int height, int cell, std::mt19937_64& rng) {
  const int gw = width / cell + 2, gh = height / cell + 2;
  std::vector<double> grid(static_cast<std::size_t>(gw) * gh);
  for (double& v : grid) v = 2.0 * uniform01(rng) - 1.0;
  ImageF field(width, height);
  for (int y = 0; y < height; ++y) {
    const double gy = static_cast<double>(y) / cell;
    const int y0 = static_cast<int>(gy);
    const double fy = gy - y0;
    for (int x = 0; x < width; ++x) {
      const double gx = static_cast<double>(x) / cell;
      const int x0 = static_cast<int>(gx);
      const double fx = gx - x0;
      const auto g = [&](int i, int j) { return grid[static_cast<std::size_t>(j) * gw + i]; };
      field.at(x, y) = (1 - fy) * ((1 - fx) * g(x0, y0) + fx * g(x0 + 1, y0)) +
                       fy * ((1 - fx) * g(x0, y0 + 1) + fx * g(x0 + 1, y0 + 1));
    }
  }
  return field;
}

ImageF box_blur_threshold(const ImageF& mask, int radius) {
  if (radius <= 0) return mask;
  const int w = mask.width, h = mask.height;
  ImageF tmp(w, h), out(w, h);
  for (int y = 0; y < h; ++y) {  // horizontal pass, clamped window
    for (int x = 0; x < w; ++x) {
      double sum = 0;
      int count = 0;
      for (int k = -radius; k <= radius; ++k) {
        const int xx = std::clamp(x + k, 0, w - 1);
        sum += mask.at(xx, y);
        ++count;
      }
      tmp.at(x, y) = sum / count;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double sum = 0;
      int count = 0;
      for (int k = -radius; k <= radius; ++k) {
        const int yy = std::clamp(y + k, 0, h - 1);
        sum += tmp.at(x, yy);
        ++count;
      }
      out.at(x, y) = sum / count >= 0.5 ? 1.0 : 0.0;
    }
  }
  return out;
}

struct Occluder {
  double cx, cy, half_a, half_b, angle;
};

/// One deterministic degradation pass at a given strength multiplier. The
/// occluders and noise field are fixed by the caller so strength is the only
/// variable during calibration.
ImageF apply_degradation(const ImageF& gt, const DegradeParams& p, double strength,
                         const std::vector<Occluder>& occluders, const ImageF& noise) {
  ImageF mask = gt;
  const int w = gt.width, h = gt.height;

  const double dilation = p.dilation * strength;
  const double noise_amp = p.boundary_noise_amp * strength;
  if (dilation > 0 || noise_amp > 0) {
    // Signed distance: positive inside the mask. Thresholding sd + shift
    // moves the boundary outward by `shift` pixels along the normal.
    ImageF complement(w, h);
    for (std::size_t i = 0; i < mask.data.size(); ++i) complement.data[i] = 1.0 - mask.data[i];
    const ImageF d_out = distance_to_set(mask);        // distance to mask, 0 inside
    const ImageF d_in = distance_to_set(complement);   // distance to background, 0 outside
    ImageF shifted(w, h);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double sd = mask.at(x, y) == 1.0 ? d_in.at(x, y) : -d_out.at(x, y);
        shifted.at(x, y) = sd + dilation + noise_amp * noise.at(x, y) > 0 ? 1.0 : 0.0;
      }
    }
    mask = shifted;
  }

  mask = box_blur_threshold(mask, static_cast<int>(std::lround(p.blur_radius * strength)));

  for (const Occluder& o : occluders) {
    const double ca = std::cos(o.angle), sa = std::sin(o.angle);
    const int x0 = std::max(0, static_cast<int>(o.cx - o.half_a - o.half_b) - 1);
    const int x1 = std::min(w - 1, static_cast<int>(o.cx + o.half_a + o.half_b) + 1);
    const int y0 = std::max(0, static_cast<int>(o.cy - o.half_a - o.half_b) - 1);
    const int y1 = std::min(h - 1, static_cast<int>(o.cy + o.half_a + o.half_b) + 1);
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double dx = x - o.cx, dy = y - o.cy;
        const double u = ca * dx + sa * dy, v = -sa * dx + ca * dy;
        if (std::abs(u) <= o.half_a && std::abs(v) <= o.half_b) mask.at(x, y) = 0.0;
      }
    }
  }

  if (p.dropout_rate > 0) {
    std::mt19937_64 rng(p.seed ^ 0x9e3779b97f4a7c15ULL);
    const double rate = std::min(1.0, p.dropout_rate * strength);
    for (double& v : mask.data) {
      const double u = uniform01(rng);  // one draw per pixel regardless of value
      if (v == 1.0 && u < rate) v = 0.0;
    }
  }
  return mask;
}

}  // namespace

DegradeReport degrade_mask_report(const ImageF& gt, const DegradeParams& params) {
  params.validate();
  for (double v : gt.data)
    if (v != 0.0 && v != 1.0) throw std::runtime_error("degrade_mask: ground truth must be binary");

  std::mt19937_64 rng(params.seed);
  const int cell = std::max(3, static_cast<int>(std::lround(2 * params.boundary_noise_amp)));
  const ImageF noise = smooth_noise_field(gt.width, gt.height, cell, rng);

  std::vector<int> mask_pixels;
  for (int i = 0; i < static_cast<int>(gt.data.size()); ++i)
    if (gt.data[static_cast<std::size_t>(i)] == 1.0) mask_pixels.push_back(i);

  std::vector<Occluder> occluders;
  if (params.occluder_count > 0 && !mask_pixels.empty()) {
    occluders.reserve(static_cast<std::size_t>(params.occluder_count));
    for (int i = 0; i < params.occluder_count; ++i) {
      const int pick = mask_pixels[static_cast<std::size_t>(
          uniform_int(rng, 0, static_cast<int>(mask_pixels.size()) - 1))];
      Occluder o;
      o.cx = pick % gt.width;
      o.cy = pick / gt.width;
      o.half_a = 0.5 * uniform_range(rng, params.occluder_size_min, params.occluder_size_max);
      o.half_b = 0.5 * uniform_range(rng, params.occluder_size_min, params.occluder_size_max);
      o.angle = uniform_range(rng, 0, M_PI);
      occluders.push_back(o);
    }
  }

  DegradeReport report;
  if (!params.target_iou) {
    report.strength = 1.0;
    report.mask = apply_degradation(gt, params, 1.0, occluders, noise);
    report.iou = intersection_over_union(gt, report.mask);
    return report;
  }

  const double target = *params.target_iou;
  const double tol = 0.03;
  const bool scalable = params.dilation > 0 || params.boundary_noise_amp > 0 ||
                        params.blur_radius > 0 || params.dropout_rate > 0;

  const auto measure = [&](double strength) {
    ImageF mask = apply_degradation(gt, params, strength, occluders, noise);
    return std::make_pair(intersection_over_union(gt, mask), std::move(mask));
  };

  auto [iou_lo, mask_lo] = measure(0.0);
  if (iou_lo < target - tol)
    throw std::runtime_error(
        "degrade_mask: calibration target IoU " + std::to_string(target) +
        " unreachable, fixed occluders already cap IoU at " + std::to_string(iou_lo));
  if (std::abs(iou_lo - target) <= tol && !scalable) {
    report.strength = 0.0;
    report.mask = std::move(mask_lo);
    report.iou = iou_lo;
    return report;
  }
  if (!scalable)
    throw std::runtime_error(
        "degrade_mask: calibration requires at least one scalable degradation (dilation, "
        "boundary noise, blur, or dropout)");

  double lo = 0.0, hi = 1.0;
  auto [iou_hi, mask_hi] = measure(hi);
  int expand = 0;
  while (iou_hi > target && expand < 12) {
    lo = hi;
    iou_lo = iou_hi;
    hi *= 2.0;
    std::tie(iou_hi, mask_hi) = measure(hi);
    ++expand;
  }
  if (iou_hi > target + tol)
    throw std::runtime_error("degrade_mask: calibration cannot push IoU down to " +
                             std::to_string(target) + " (floor " + std::to_string(iou_hi) + ")");

  double best_strength = hi;
  double best_iou = iou_hi;
  ImageF best_mask = std::move(mask_hi);
  for (int i = 0; i < 60 && std::abs(best_iou - target) > tol * 0.25; ++i) {
    const double mid = 0.5 * (lo + hi);
    auto [iou_mid, mask_mid] = measure(mid);
    if (std::abs(iou_mid - target) < std::abs(best_iou - target)) {
      best_iou = iou_mid;
      best_strength = mid;
      best_mask = std::move(mask_mid);
    }
    if (iou_mid > target)
      lo = mid;
    else
      hi = mid;
  }
  if (std::abs(best_iou - target) > tol)
    throw std::runtime_error("degrade_mask: calibration failed, closest IoU " +
                             std::to_string(best_iou) + " vs target " + std::to_string(target));
  report.strength = best_strength;
  report.iou = best_iou;
  report.mask = std::move(best_mask);
  return report;
}

ImageF degrade_mask(const ImageF& gt, const DegradeParams& params) {
  return degrade_mask_report(gt, params).mask;
}

PosePerturbation sample_prior_perturbation(PerturbSampler& sampler) {
  PosePerturbation p;
  const double magnitude = sampler.rotation_magnitude_deg * M_PI / 180.0;
  p.rotation = uniform_unit_vector(sampler.rng) * magnitude;
  for (int i = 0; i < 3; ++i) p.translation[i] = uniform_range(sampler.rng, 0.0, sampler.translation_max);
  return p;
}

GroundTruthSource::GroundTruthSource(std::vector<StereoObservation> ground_truth)
    : ground_truth_(std::move(ground_truth)) {}

ImageF GroundTruthSource::segment(int config_index, int view, const ImageF*) {
  if (config_index < 0 || config_index >= static_cast<int>(ground_truth_.size()))
    throw std::runtime_error("segmentation source: configuration index out of range");
  return view == 0 ? ground_truth_[static_cast<std::size_t>(config_index)].left
                   : ground_truth_[static_cast<std::size_t>(config_index)].right;
}

OracleDegradedSource::OracleDegradedSource(std::vector<StereoObservation> ground_truth,
                                           DegradeParams base, double prior_gate_iou,
                                           double prior_iou_boost)
    : ground_truth_(std::move(ground_truth)),
      base_(base),
      prior_gate_iou_(prior_gate_iou),
      prior_iou_boost_(prior_iou_boost),
      call_counts_(ground_truth_.size() * 2, 0) {}

ImageF OracleDegradedSource::segment(int config_index, int view, const ImageF* prior) {
  if (config_index < 0 || config_index >= static_cast<int>(ground_truth_.size()) ||
      (view != 0 && view != 1))
    throw std::runtime_error("segmentation source: request out of range");
  const std::size_t slot = static_cast<std::size_t>(config_index) * 2 + static_cast<std::size_t>(view);
  const std::uint32_t call = call_counts_[slot]++;

  const ImageF& gt = view == 0 ? ground_truth_[static_cast<std::size_t>(config_index)].left
                               : ground_truth_[static_cast<std::size_t>(config_index)].right;

  DegradeParams p = base_;
  // splitmix-style mix so every (config, view, call) stream is distinct
  std::uint64_t mix = base_.seed;
  for (std::uint64_t salt : {static_cast<std::uint64_t>(config_index) + 1,
                             static_cast<std::uint64_t>(view) + 101,
                             static_cast<std::uint64_t>(call) + 10007}) {
    mix += 0x9e3779b97f4a7c15ULL * salt;
    mix = (mix ^ (mix >> 30)) * 0xbf58476d1ce4e5b9ULL;
    mix = (mix ^ (mix >> 27)) * 0x94d049bb133111ebULL;
    mix ^= mix >> 31;
  }
  p.seed = mix;

  if (prior && p.target_iou && prior_iou_boost_ != 0.0) {
    ImageF prior_binary(prior->width, prior->height);
    for (std::size_t i = 0; i < prior->data.size(); ++i)
      prior_binary.data[i] = prior->data[i] >= 0.5 ? 1.0 : 0.0;
    if (intersection_over_union(prior_binary, gt) > prior_gate_iou_)
      p.target_iou = std::min(1.0, *p.target_iou + prior_iou_boost_);
  }
  return degrade_mask(gt, p);
}

ExternalMasksSource::ExternalMasksSource(std::string directory) : directory_(std::move(directory)) {}

ImageF ExternalMasksSource::segment(int config_index, int view, const ImageF*) {
  const std::string path = directory_ + "/" + std::to_string(config_index) + "_" +
                           (view == 0 ? "left" : "right") + ".png";
  return load_mask_png(path);
}

void IcpSchedule::validate() const {
  if (total_iters <= 0 || refresh_every <= 0)
    throw std::runtime_error("icp schedule: iteration counts must be positive");
  if (refresh_every > total_iters)
    throw std::runtime_error("icp schedule: refresh_every must not exceed total_iters");
}

SdrIcpResult sdr_icp(const PoseParam& init, const RobotModel& model,
                     const std::vector<TriangleMesh>& link_meshes,
                     const std::vector<Eigen::VectorXd>& q_set, const StereoRig& rig,
                     SegmentationSource& source, const IcpSchedule& schedule,
                     const RenderConfig& render_cfg, const LossConfig& loss_cfg,
                     const OptimConfig& opt_cfg) {
  schedule.validate();
  if (q_set.empty()) throw std::runtime_error("sdr_icp: empty configuration set");

  SdrIcpResult result;
  PoseParam current = init;
  std::vector<PoseParam> phase_bests;
  std::vector<LossTarget> targets;

  int done = 0, phase = 0, iteration_base = 0;
  while (done < schedule.total_iters) {
    const int phase_iters = std::min(schedule.refresh_every, schedule.total_iters - done);

    const Eigen::Isometry3d prior_pose = decode_pose(current).transform;
    std::vector<StereoObservation> masks(q_set.size());
    try {
      for (std::size_t i = 0; i < q_set.size(); ++i) {
        const ImageF prior_left = render_prior_channel(model, link_meshes, q_set[i], &prior_pose,
                                                       rig.left, render_cfg);
        const Eigen::Isometry3d right_pose = rig.left_to_right * prior_pose;
        const ImageF prior_right = render_prior_channel(model, link_meshes, q_set[i], &right_pose,
                                                        rig.right, render_cfg);
        masks[i].left = source.segment(static_cast<int>(i), 0, &prior_left);
        masks[i].right = source.segment(static_cast<int>(i), 1, &prior_right);
      }
    } catch (const std::exception& e) {
      throw std::runtime_error("sdr_icp: segmentation refresh at phase " + std::to_string(phase) +
                               " failed: " + e.what());
    }
    result.refresh_masks.push_back(masks);
    targets = make_stereo_targets(masks, loss_cfg);

    OptimConfig phase_cfg = opt_cfg;
    phase_cfg.max_iters = phase_iters;
    const RefineResult refined = sdr_refine_cached(current, model, link_meshes, q_set, targets,
                                                   rig, render_cfg, phase_cfg);
    current = refined.pose;
    phase_bests.push_back(refined.pose);
    result.converged = refined.converged;
    for (RefineTraceRow row : refined.trace) {
      row.iteration += iteration_base;
      result.trace.push_back(row);
    }
    iteration_base += phase_iters;
    done += phase_iters;
    ++phase;
  }

  // Rank every phase's best under the final masks; the alternation may have
  // wandered, so the best candidate is not necessarily the last.
  result.loss = std::numeric_limits<double>::infinity();
  for (const PoseParam& candidate : phase_bests) {
    const double loss = stereo_objective_cached(decode_pose(candidate).transform, model,
                                                link_meshes, q_set, targets, rig, render_cfg);
    if (loss < result.loss) {
      result.loss = loss;
      result.pose = candidate;
    }
  }
  return result;
}

}  // namespace stereosil

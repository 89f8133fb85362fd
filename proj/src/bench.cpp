#include "stereosil/bench.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "stereosil/pose.hpp"
#include "stereosil/render.hpp"
#include "stereosil/rng.hpp"

namespace stereosil {

namespace {

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

RenderConfig hard_render_config(const StereoRig& rig) {
  RenderConfig cfg;
  cfg.width = rig.left.width;
  cfg.height = rig.left.height;
  cfg.tau = 0.0;
  cfg.z_min = rig.z_min;
  cfg.z_max = rig.z_max;
  return cfg;
}

}  // namespace

SyntheticScene generate_scene(const RobotModel& model, const std::vector<TriangleMesh>& link_meshes,
                              const StereoRig& rig, const Eigen::Isometry3d& gt_pose, int n_configs,
                              const JointSampler& sampler, std::uint64_t seed,
                              double min_visibility) {
  if (n_configs < 2) throw std::invalid_argument("generate_scene: need at least 2 configurations");
  if (!(sampler.limit_fraction > 0.0) || sampler.limit_fraction > 1.0) {
    throw std::invalid_argument("generate_scene: limit fraction must be in (0, 1]");
  }
  rig.validate();
  if (link_meshes.size() != model.links.size()) {
    throw std::invalid_argument("generate_scene: one mesh per link required");
  }
  const int dof = model.dof();
  if (dof < 1) throw std::invalid_argument("generate_scene: robot has no actuated joints");

  SyntheticScene scene;
  scene.gt_pose = gt_pose;
  scene.rig = rig;
  scene.model = model;
  scene.link_meshes = link_meshes;
  scene.seed = seed;

  const RenderConfig cfg = hard_render_config(rig);
  const Eigen::Isometry3d right_pose_pre = rig.left_to_right;
  const std::vector<int> actuated = model.actuated_joints();
  std::mt19937_64 rng(seed);

  for (int i = 0; i < n_configs; ++i) {
    bool accepted = false;
    for (int attempt = 0; attempt < 1000 && !accepted; ++attempt) {
      Eigen::VectorXd q(dof);
      for (int j = 0; j < dof; ++j) {
        const RobotJoint& joint = model.joints[actuated[j]];
        double lo = joint.lower, hi = joint.upper;
        if (!(hi > lo)) {  // limits absent: treat as a full revolute turn
          lo = -3.14159265358979323846;
          hi = 3.14159265358979323846;
        }
        const double centre = 0.5 * (lo + hi);
        const double half = 0.5 * (hi - lo) * sampler.limit_fraction;
        q[j] = uniform_range(rng, centre - half, centre + half);
      }
      bool distinct = true;
      for (const Eigen::VectorXd& prev : scene.q_set) {
        if ((q - prev).norm() <= 0.1) {
          distinct = false;
          break;
        }
      }
      if (!distinct) continue;
      if (visible_vertex_fraction(model, link_meshes, q, gt_pose, rig.left, cfg) < min_visibility) {
        continue;
      }
      if (visible_vertex_fraction(model, link_meshes, q, right_pose_pre * gt_pose, rig.right, cfg) <
          min_visibility) {
        continue;
      }
      scene.q_set.push_back(q);
      accepted = true;
    }
    if (!accepted) {
      throw std::runtime_error(
          "generate_scene: visibility unreachable after 1000 sampler attempts (configuration " +
          std::to_string(i) + ")");
    }
  }

  for (const Eigen::VectorXd& q : scene.q_set) {
    StereoObservation obs;
    obs.left = render_silhouette(model, link_meshes, q, gt_pose, rig.left, cfg);
    obs.right = render_silhouette(model, link_meshes, q, right_pose_pre * gt_pose, rig.right, cfg);
    scene.masks.push_back(std::move(obs));
  }
  return scene;
}

std::vector<int> select_diverse_configs(const std::vector<Eigen::VectorXd>& pool, int k,
                                        std::uint64_t seed) {
  const int n = static_cast<int>(pool.size());
  if (k < 1) throw std::invalid_argument("select_diverse_configs: k must be positive");
  if (k > n) throw std::invalid_argument("select_diverse_configs: k exceeds pool size");
  const Eigen::Index dim = pool.front().size();
  for (const Eigen::VectorXd& p : pool) {
    if (p.size() != dim) throw std::invalid_argument("select_diverse_configs: mixed dimensions");
  }

  std::mt19937_64 rng(seed);
  std::vector<Eigen::VectorXd> centroids;
  centroids.push_back(pool[uniform_int(rng, 0, n - 1)]);
  std::vector<double> d2(n);
  while (static_cast<int>(centroids.size()) < k) {
    double total = 0;
    for (int i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const Eigen::VectorXd& c : centroids) best = std::min(best, (pool[i] - c).squaredNorm());
      d2[i] = best;
      total += best;
    }
    int pick;
    if (total > 0) {
      const double u = uniform01(rng) * total;
      double acc = 0;
      pick = n - 1;
      for (int i = 0; i < n; ++i) {
        acc += d2[i];
        if (u < acc) {
          pick = i;
          break;
        }
      }
    } else {
      pick = uniform_int(rng, 0, n - 1);  // all points coincide with a centroid
    }
    centroids.push_back(pool[pick]);
  }

  std::vector<int> assign(n, 0);
  for (int iter = 0; iter < 100; ++iter) {
    bool changed = false;
    for (int i = 0; i < n; ++i) {
      int best_c = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double d = (pool[i] - centroids[c]).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best_c = c;
        }
      }
      if (assign[i] != best_c) {
        assign[i] = best_c;
        changed = true;
      }
    }
    for (int c = 0; c < k; ++c) {
      Eigen::VectorXd sum = Eigen::VectorXd::Zero(dim);
      int count = 0;
      for (int i = 0; i < n; ++i) {
        if (assign[i] == c) {
          sum += pool[i];
          ++count;
        }
      }
      if (count > 0) centroids[c] = sum / count;  // empty clusters keep their centroid
    }
    if (!changed) break;
  }

  std::vector<int> reps;
  std::vector<char> used(n, 0);
  for (int c = 0; c < k; ++c) {
    int best_i = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) {
      if (assign[i] != c) continue;
      const double d = (pool[i] - centroids[c]).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best_i = i;
      }
    }
    if (best_i < 0) {  // empty cluster: hand it any unused point
      for (int i = 0; i < n; ++i) {
        if (!used[i]) {
          best_i = i;
          break;
        }
      }
    }
    if (best_i >= 0 && !used[best_i]) {
      used[best_i] = 1;
      reps.push_back(best_i);
    } else {  // representative already taken (coincident points): next unused
      for (int i = 0; i < n; ++i) {
        if (!used[i]) {
          used[i] = 1;
          reps.push_back(i);
          break;
        }
      }
    }
  }
  std::sort(reps.begin(), reps.end());
  return reps;
}

void McvProtocol::validate(int available_configs) const {
  if (n_repeats < 1) throw std::invalid_argument("mcv protocol needs at least one repeat");
  if (configs_per_fit.empty()) throw std::invalid_argument("mcv protocol needs at least one fit size");
  for (int size : configs_per_fit) {
    if (size < 1) throw std::invalid_argument("mcv protocol: fit sizes must be positive");
    if (size > available_configs - 1) {
      throw std::invalid_argument("mcv protocol: fit size " + std::to_string(size) +
                                  " leaves an empty held-out complement");
    }
  }
}

namespace {

/// Presents a subset of a scene's configurations to a segmentation source
/// that indexes by original configuration number.
class SubsetSource final : public SegmentationSource {
 public:
  SubsetSource(SegmentationSource& inner, std::vector<int> map)
      : inner_(inner), map_(std::move(map)) {}
  ImageF segment(int config_index, int view, const ImageF* prior) override {
    return inner_.segment(map_.at(config_index), view, prior);
  }

 private:
  SegmentationSource& inner_;
  std::vector<int> map_;
};

std::vector<int> draw_subset(std::mt19937_64& rng, int n, int k) {
  std::vector<int> indices(n);
  std::iota(indices.begin(), indices.end(), 0);
  for (int i = 0; i < k; ++i) {
    const int j = uniform_int(rng, i, n - 1);
    std::swap(indices[i], indices[j]);
  }
  indices.resize(k);
  std::sort(indices.begin(), indices.end());
  return indices;
}

}  // namespace

ErrorReport run_mcv(const SyntheticScene& scene, const McvProtocol& protocol, McvMethod method,
                    SegmentationSource& source, McvInit init, const McvOptions& options) {
  const int n = static_cast<int>(scene.q_set.size());
  protocol.validate(n);
  if (scene.masks.size() != scene.q_set.size()) {
    throw std::invalid_argument("run_mcv: scene masks misaligned with configurations");
  }

  ErrorReport report;
  report.method = method == McvMethod::Sdr ? "sdr" : "sdr_icp";

  RenderConfig full_cfg = hard_render_config(scene.rig);
  full_cfg.tau = 1.5;

  const int terminal = scene.model.terminal_link();
  std::vector<std::vector<Eigen::Isometry3d>> fk_cache;
  fk_cache.reserve(n);
  for (const Eigen::VectorXd& q : scene.q_set) {
    fk_cache.push_back(forward_kinematics(scene.model, q));
  }

  for (int fit_size : protocol.configs_per_fit) {
    std::vector<double> errors_mm, errors_px;
    for (int rep = 0; rep < protocol.n_repeats; ++rep) {
      const std::uint64_t trial_seed = mix_seed(mix_seed(protocol.seed, fit_size), rep);
      std::mt19937_64 subset_rng(trial_seed);
      McvTrial trial;
      trial.fit_size = fit_size;
      trial.repeat = rep;
      trial.fit_indices = draw_subset(subset_rng, n, fit_size);

      std::vector<Eigen::VectorXd> fit_qs;
      for (int idx : trial.fit_indices) fit_qs.push_back(scene.q_set[idx]);
      std::vector<int> holdout;
      for (int i = 0; i < n; ++i) {
        if (!std::binary_search(trial.fit_indices.begin(), trial.fit_indices.end(), i)) {
          holdout.push_back(i);
        }
      }

      // Initial hypothesis, seeded independently of the method so paired
      // comparisons start identically.
      Eigen::Isometry3d init_pose;
      std::vector<StereoObservation> fit_obs;
      const bool needs_plain_masks = method == McvMethod::Sdr || init == McvInit::Cso;
      if (needs_plain_masks) {
        for (int idx : trial.fit_indices) {
          StereoObservation obs;
          obs.left = source.segment(idx, 0, nullptr);
          obs.right = source.segment(idx, 1, nullptr);
          fit_obs.push_back(std::move(obs));
        }
      }
      if (init == McvInit::PerturbedTruth) {
        PerturbSampler sampler(mix_seed(trial_seed, 0xA11CEULL));
        sampler.translation_max = options.init_translation_max;
        sampler.rotation_magnitude_deg = options.init_rotation_deg;
        const PosePerturbation pert = sample_prior_perturbation(sampler);
        init_pose = perturb_pose(scene.gt_pose, pert.rotation, pert.translation);
      } else {
        const SwarmResult swarm = cso_initialize(scene.model, scene.link_meshes, fit_qs, fit_obs,
                                                 scene.rig, options.swarm,
                                                 mix_seed(trial_seed, 0xC50ULL));
        init_pose = decode_pose(swarm.candidates.front().pose).transform;
      }

      Eigen::Isometry3d est_pose = init_pose;
      trial.converged = false;
      try {
        if (method == McvMethod::Sdr) {
          RefineResult result;
          if (options.stages.empty()) {
            result = sdr_refine(encode_pose(init_pose), scene.model, scene.link_meshes, fit_qs,
                                fit_obs, scene.rig, full_cfg, options.loss, options.opt);
          } else {
            result = sdr_refine_staged(encode_pose(init_pose), scene.model, scene.link_meshes,
                                       fit_qs, fit_obs, scene.rig, options.loss, options.stages);
          }
          est_pose = decode_pose(result.pose).transform;
          trial.converged = result.converged;
        } else {
          SubsetSource subset_source(source, trial.fit_indices);
          const SdrIcpResult result =
              sdr_icp(encode_pose(init_pose), scene.model, scene.link_meshes, fit_qs, scene.rig,
                      subset_source, options.schedule, full_cfg, options.loss, options.opt);
          est_pose = decode_pose(result.pose).transform;
          trial.converged = result.converged;
        }
      } catch (const std::exception&) {
        // Method failure marks the trial and scores the unrefined hypothesis.
        trial.converged = false;
      }

      double sum_mm = 0, sum_px = 0;
      for (int idx : holdout) {
        const Eigen::Vector3d p_base = fk_cache[idx][terminal].translation();
        const Eigen::Vector3d p_gt = scene.gt_pose * p_base;
        const Eigen::Vector3d p_est = est_pose * p_base;
        sum_mm += (p_est - p_gt).norm() * 1e3;
        const Eigen::Vector2d l_gt = project_point(scene.rig.left, p_gt);
        const Eigen::Vector2d l_est = project_point(scene.rig.left, p_est);
        const Eigen::Vector2d r_gt = project_point(scene.rig.right, scene.rig.left_to_right * p_gt);
        const Eigen::Vector2d r_est =
            project_point(scene.rig.right, scene.rig.left_to_right * p_est);
        sum_px += 0.5 * ((l_est - l_gt).norm() + (r_est - r_gt).norm());
      }
      trial.tool_centre_error_mm = sum_mm / holdout.size();
      trial.reprojection_error_px = sum_px / holdout.size();

      std::vector<Eigen::VectorXd> holdout_qs;
      for (int idx : holdout) holdout_qs.push_back(scene.q_set[idx]);
      const std::vector<double> chain_m =
          kinematic_chain_deviation(est_pose, scene.gt_pose, scene.model, holdout_qs);
      trial.chain_deviation_cm.reserve(chain_m.size());
      for (double d : chain_m) trial.chain_deviation_cm.push_back(d * 100.0);

      errors_mm.push_back(trial.tool_centre_error_mm);
      errors_px.push_back(trial.reprojection_error_px);
      report.trials.push_back(std::move(trial));
    }
    ErrorReportRow row;
    row.fit_size = fit_size;
    row.median_mm = quantile_linear(errors_mm, 0.5);
    row.q1_mm = quantile_linear(errors_mm, 0.25);
    row.q3_mm = quantile_linear(errors_mm, 0.75);
    row.median_px = quantile_linear(errors_px, 0.5);
    row.q1_px = quantile_linear(errors_px, 0.25);
    row.q3_px = quantile_linear(errors_px, 0.75);
    report.summary.push_back(row);
  }
  return report;
}

std::vector<double> kinematic_chain_deviation(const Eigen::Isometry3d& pose_a,
                                              const Eigen::Isometry3d& pose_b,
                                              const RobotModel& model,
                                              const std::vector<Eigen::VectorXd>& q_set) {
  if (q_set.empty()) throw std::invalid_argument("kinematic_chain_deviation: empty configuration set");
  std::vector<double> out(model.links.size(), 0.0);
  for (const Eigen::VectorXd& q : q_set) {
    const std::vector<Eigen::Isometry3d> fk = forward_kinematics(model, q);
    for (std::size_t l = 0; l < fk.size(); ++l) {
      const Eigen::Vector3d p = fk[l].translation();
      out[l] += (pose_a * p - pose_b * p).norm();
    }
  }
  for (double& d : out) d /= q_set.size();
  return out;
}

double quantile_linear(std::vector<double> values, double p) {
  if (values.empty()) throw std::invalid_argument("quantile of an empty sample");
  p = std::clamp(p, 0.0, 1.0);
  std::sort(values.begin(), values.end());
  const double h = (values.size() - 1) * p;
  const std::size_t lo = static_cast<std::size_t>(h);
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - lo) * (values[hi] - values[lo]);
}

void save_error_report_csv(const ErrorReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.precision(17);
  out << "# summary quantiles: linear interpolation over sorted per-trial values\n";
  out << "method,fit_size,repeat,converged,tool_centre_error_mm,reprojection_error_px,"
         "chain_deviation_cm,fit_indices\n";
  for (const McvTrial& trial : report.trials) {
    out << report.method << ',' << trial.fit_size << ',' << trial.repeat << ','
        << (trial.converged ? 1 : 0) << ',' << trial.tool_centre_error_mm << ','
        << trial.reprojection_error_px << ',';
    for (std::size_t i = 0; i < trial.chain_deviation_cm.size(); ++i) {
      if (i) out << '|';
      out << trial.chain_deviation_cm[i];
    }
    out << ',';
    for (std::size_t i = 0; i < trial.fit_indices.size(); ++i) {
      if (i) out << ';';
      out << trial.fit_indices[i];
    }
    out << "\n";
  }
  if (!out) throw std::runtime_error("failed while writing " + path);
}

void save_error_report_json(const ErrorReport& report, const std::string& path) {
  nlohmann::json rows = nlohmann::json::array();
  for (const ErrorReportRow& row : report.summary) {
    rows.push_back({{"fit_size", row.fit_size},
                    {"median_mm", row.median_mm},
                    {"q1_mm", row.q1_mm},
                    {"q3_mm", row.q3_mm},
                    {"median_px", row.median_px},
                    {"q1_px", row.q1_px},
                    {"q3_px", row.q3_px}});
  }
  const nlohmann::json doc = {{"method", report.method},
                              {"quantile_method", "linear_interpolation"},
                              {"rows", rows}};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << doc.dump(2) << "\n";
  if (!out) throw std::runtime_error("failed while writing " + path);
}

}  // namespace stereosil

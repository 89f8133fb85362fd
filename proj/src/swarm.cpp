#include "stereosil/swarm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <utility>

#include "stereosil/mesh_simplify.hpp"
#include "stereosil/render.hpp"
#include "stereosil/rng.hpp"

namespace stereosil {

void SwarmConfig::validate() const {
  if (n_particles < 2) throw std::runtime_error("swarm config: at least 2 particles required");
  if (iterations < 0) throw std::runtime_error("swarm config: negative iteration count");
  if (!(shell_inner > 0) || !(shell_outer > shell_inner))
    throw std::runtime_error("swarm config: eye shell requires 0 < inner < outer");
  if (!(centre_sphere > 0)) throw std::runtime_error("swarm config: centre sphere radius must be positive");
  if (inertia < 0 || cognitive < 0 || social < 0)
    throw std::runtime_error("swarm config: PSO coefficients must be nonnegative");
  if (!(mesh_fraction > 0) || mesh_fraction > 1)
    throw std::runtime_error("swarm config: mesh_fraction must lie in (0, 1]");
  if (fitness_width <= 0 || fitness_height <= 0)
    throw std::runtime_error("swarm config: fitness resolution must be positive");
  if (top_k <= 0) throw std::runtime_error("swarm config: top_k must be positive");
}

std::vector<Particle> sample_particles(const SwarmConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  std::vector<Particle> particles(static_cast<std::size_t>(cfg.n_particles));
  for (Particle& p : particles) {
    p.eye = uniform_in_shell(rng, cfg.shell_inner, cfg.shell_outer);
    p.centre = uniform_in_ball(rng, cfg.centre_sphere);
    p.up_hint = Eigen::Vector3d::UnitZ();
    p.best_position << p.eye, p.centre;
    p.best_score = std::numeric_limits<double>::infinity();
  }
  return particles;
}

namespace {

Eigen::Vector3d fallback_perpendicular(const Eigen::Vector3d& v) {
  int smallest = 0;
  if (std::abs(v.y()) < std::abs(v[smallest])) smallest = 1;
  if (std::abs(v.z()) < std::abs(v[smallest])) smallest = 2;
  const Eigen::Vector3d axis = Eigen::Vector3d::Unit(smallest);
  return (axis - v * v.dot(axis)).normalized();
}

}  // namespace

PoseParam particle_to_pose(const Particle& p) {
  const Eigen::Vector3d forward_raw = p.centre - p.eye;
  const double dist = forward_raw.norm();
  if (dist < 1e-12) throw std::runtime_error("particle_to_pose: eye coincides with centre");
  const Eigen::Vector3d z_c = forward_raw / dist;

  Eigen::Vector3d up = p.up_hint.norm() > 1e-12 ? p.up_hint.normalized()
                                                : Eigen::Vector3d::UnitZ();
  Eigen::Vector3d x_c = (-up).cross(z_c);
  if (x_c.norm() < 1e-8) {
    up = fallback_perpendicular(z_c);
    x_c = (-up).cross(z_c);
  }
  x_c.normalize();
  const Eigen::Vector3d y_c = z_c.cross(x_c);

  Eigen::Isometry3d camera_in_world = Eigen::Isometry3d::Identity();
  camera_in_world.linear().col(0) = x_c;
  camera_in_world.linear().col(1) = y_c;
  camera_in_world.linear().col(2) = z_c;
  camera_in_world.translation() = p.eye;
  return encode_pose(camera_in_world.inverse());
}

SwarmResult cso_initialize(const RobotModel& model, const std::vector<TriangleMesh>& link_meshes,
                           const std::vector<Eigen::VectorXd>& q_set,
                           const std::vector<StereoObservation>& observations,
                           const StereoRig& rig, const SwarmConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (observations.empty() || q_set.empty())
    throw std::runtime_error("swarm initialisation: empty observation or configuration set");
  if (observations.size() != q_set.size())
    throw std::runtime_error("swarm initialisation: one observation pair per configuration required");

  bool any_pixel = false;
  for (const StereoObservation& obs : observations) {
    for (double v : obs.left.data) any_pixel = any_pixel || v != 0.0;
    for (double v : obs.right.data) any_pixel = any_pixel || v != 0.0;
  }
  if (!any_pixel)
    throw std::runtime_error("swarm initialisation failure: every observation mask is empty");

  std::vector<TriangleMesh> simplified;
  simplified.reserve(link_meshes.size());
  for (const TriangleMesh& mesh : link_meshes)
    simplified.push_back(mesh.empty() ? mesh : simplify_mesh(mesh, cfg.mesh_fraction).mesh);

  SwarmResult result;
  for (const TriangleMesh& mesh : link_meshes) result.original_mesh_faces += mesh.faces.size();
  for (const TriangleMesh& mesh : simplified) result.fitness_mesh_faces += mesh.faces.size();

  StereoRig fitness_rig = rig;
  fitness_rig.left = rig.left.scaled(cfg.fitness_width, cfg.fitness_height);
  fitness_rig.right = rig.right.scaled(cfg.fitness_width, cfg.fitness_height);

  std::vector<StereoObservation> fitness_obs;
  fitness_obs.reserve(observations.size());
  for (const StereoObservation& obs : observations)
    fitness_obs.push_back({downscale_mask(obs.left, cfg.fitness_width, cfg.fitness_height),
                           downscale_mask(obs.right, cfg.fitness_width, cfg.fitness_height)});

  LossConfig loss_cfg;  // soft dice: an empty render scores exactly 1 per term
  const std::vector<LossTarget> targets = make_stereo_targets(fitness_obs, loss_cfg);

  RenderConfig render_cfg;
  render_cfg.width = cfg.fitness_width;
  render_cfg.height = cfg.fitness_height;
  render_cfg.tau = 0.0;  // hard renders
  render_cfg.z_min = rig.z_min;
  render_cfg.z_max = rig.z_max;

  const auto evaluate = [&](const Particle& p) -> std::pair<double, PoseParam> {
    if ((p.centre - p.eye).norm() < 1e-12)
      return {std::numeric_limits<double>::infinity(), PoseParam{}};
    const PoseParam pose = particle_to_pose(p);
    result.fitness_evaluations += 1;
    const double score = stereo_objective_cached(decode_pose(pose).transform, model, simplified,
                                                 q_set, targets, fitness_rig, render_cfg);
    return {score, pose};
  };

  std::mt19937_64 rng(seed);
  std::vector<Particle> particles = sample_particles(cfg, rng());

  double global_best = std::numeric_limits<double>::infinity();
  Eigen::Matrix<double, 6, 1> global_best_position = Eigen::Matrix<double, 6, 1>::Zero();

  result.trace.reserve(static_cast<std::size_t>(cfg.iterations) + 1);

  for (Particle& p : particles) {
    const auto [score, pose] = evaluate(p);
    p.best_score = score;
    p.best_pose = pose;
    p.best_position << p.eye, p.centre;
    if (score < global_best) {
      global_best = score;
      global_best_position = p.best_position;
    }
  }
  result.trace.push_back({0, global_best});

  for (int iter = 1; iter <= cfg.iterations; ++iter) {
    for (Particle& p : particles) {
      Eigen::Matrix<double, 6, 1> position;
      position << p.eye, p.centre;
      Eigen::Matrix<double, 6, 1> r1, r2;
      for (int d = 0; d < 6; ++d) r1[d] = uniform01(rng);
      for (int d = 0; d < 6; ++d) r2[d] = uniform01(rng);
      p.velocity = cfg.inertia * p.velocity +
                   cfg.cognitive * r1.cwiseProduct(p.best_position - position) +
                   cfg.social * r2.cwiseProduct(global_best_position - position);
      position += p.velocity;
      p.eye = position.head<3>();
      p.centre = position.tail<3>();

      const auto [score, pose] = evaluate(p);
      if (score < p.best_score) {
        p.best_score = score;
        p.best_pose = pose;
        p.best_position = position;
      }
    }
    for (const Particle& p : particles) {
      if (p.best_score < global_best) {
        global_best = p.best_score;
        global_best_position = p.best_position;
      }
    }
    result.trace.push_back({iter, global_best});
  }

  // Soft dice against a nonempty target is exactly 1 per term only for an
  // empty render, so a global best at 2 * configurations means no particle
  // ever saw the robot.
  const double empty_score = 2.0 * static_cast<double>(q_set.size());
  if (!(global_best < empty_score * (1.0 - 1e-12)))
    throw std::runtime_error(
        "swarm initialisation failure: every particle rendered an empty silhouette");

  std::vector<int> order(particles.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[static_cast<std::size_t>(i)] = static_cast<int>(i);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return particles[static_cast<std::size_t>(a)].best_score <
           particles[static_cast<std::size_t>(b)].best_score;
  });
  const int k = std::min<int>(cfg.top_k, static_cast<int>(particles.size()));
  result.candidates.reserve(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    const Particle& p = particles[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
    result.candidates.push_back({p.best_pose, p.best_score, order[static_cast<std::size_t>(i)]});
  }
  return result;
}

void save_swarm_trace_csv(const std::vector<SwarmTraceRow>& trace, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path + ": cannot write");
  out << "iteration,best_fitness\n";
  out.precision(17);
  for (const SwarmTraceRow& row : trace) out << row.iteration << "," << row.best_fitness << "\n";
}

}  // namespace stereosil

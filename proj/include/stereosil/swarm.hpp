#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stereosil/objective.hpp"
#include "stereosil/pose.hpp"
#include "stereosil/robot.hpp"

namespace stereosil {

/// Swarm initialisation settings: virtual cameras are particles whose state
/// is an (eye, look-at centre) pair around the robot base.
struct SwarmConfig {
  int n_particles = 2000;
  int iterations = 60;
  double shell_inner = 0.5;   // metres, hollow eye shell about the base
  double shell_outer = 4.0;
  double centre_sphere = 0.5; // metres, look-at targets within this ball
  double inertia = 0.72;      // standard constriction coefficients
  double cognitive = 1.49;
  double social = 1.49;
  double mesh_fraction = 0.05;  // simplification ratio applied before any fitness render
  int fitness_width = 160;      // reduced-resolution hard renders keep the swarm in memory
  int fitness_height = 90;
  int top_k = 5;

  void validate() const;
};

struct Particle {
  Eigen::Vector3d eye = Eigen::Vector3d::Zero();
  Eigen::Vector3d centre = Eigen::Vector3d::Zero();
  Eigen::Vector3d up_hint = Eigen::Vector3d::UnitZ();
  Eigen::Matrix<double, 6, 1> velocity = Eigen::Matrix<double, 6, 1>::Zero();
  Eigen::Matrix<double, 6, 1> best_position = Eigen::Matrix<double, 6, 1>::Zero();
  PoseParam best_pose;
  double best_score = 0;
};

std::vector<Particle> sample_particles(const SwarmConfig& cfg, std::uint64_t seed);

/// Look-at construction: the camera sits at eye, its +z axis points at
/// centre, and roll is fixed so camera-down aligns with -up_hint. Returns the
/// robot-base-in-camera pose (inverse of the camera placement). Throws when
/// eye equals centre; a forward axis parallel to the up hint perturbs the
/// hint deterministically instead of failing.
PoseParam particle_to_pose(const Particle& p);

struct SwarmCandidate {
  PoseParam pose;
  double score = 0;
  int particle_index = -1;
};

struct SwarmTraceRow {
  int iteration = 0;
  double best_fitness = 0;
};

struct SwarmResult {
  std::vector<SwarmCandidate> candidates;  // top-k personal bests, ascending score
  std::vector<SwarmTraceRow> trace;        // global best per iteration (row 0 = after init)
  // Instrumentation backing the performance contract: every fitness render
  // uses the simplified meshes, never the originals.
  long fitness_evaluations = 0;
  std::size_t fitness_mesh_faces = 0;   // total faces across the meshes the loop rendered
  std::size_t original_mesh_faces = 0;  // total faces across the caller's meshes
};

/// Global pose initialisation: particle swarm over camera placements, scored
/// by the stereo objective (soft dice) on hard reduced-resolution renders of
/// meshes simplified to cfg.mesh_fraction. Throws when every observation
/// mask is empty, or when after the final iteration every particle still
/// scores the empty-render maximum (nothing ever became visible).
SwarmResult cso_initialize(const RobotModel& model, const std::vector<TriangleMesh>& link_meshes,
                           const std::vector<Eigen::VectorXd>& q_set,
                           const std::vector<StereoObservation>& observations,
                           const StereoRig& rig, const SwarmConfig& cfg, std::uint64_t seed);

/// CSV export: header "iteration,best_fitness".
void save_swarm_trace_csv(const std::vector<SwarmTraceRow>& trace, const std::string& path);

}  // namespace stereosil

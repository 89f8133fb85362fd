#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "stereosil/mesh.hpp"

namespace stereosil {

enum class JointType { Revolute, Fixed };

struct RobotJoint {
  std::string name;
  JointType type = JointType::Fixed;
  int parent_link = -1;
  int child_link = -1;
  Eigen::Isometry3d origin = Eigen::Isometry3d::Identity();  // parent frame -> joint frame at q = 0
  Eigen::Vector3d axis = Eigen::Vector3d::UnitZ();           // in the joint frame
  double lower = 0, upper = 0;                               // position limits, 0/0 when absent
  double velocity_limit = 0;                                 // 0 when absent
};

struct RobotLink {
  std::string name;
  std::string mesh_path;  // empty when the link has no visual mesh
  Eigen::Isometry3d mesh_origin = Eigen::Isometry3d::Identity();
  Eigen::Vector3d mesh_scale = Eigen::Vector3d::Ones();
};

/// Serial kinematic chain parsed from a URDF subset (revolute and fixed
/// joints only; branching chains are rejected). Joints are stored root to
/// tip, so forward kinematics is a single sweep.
struct RobotModel {
  std::string name;
  std::vector<RobotLink> links;
  std::vector<RobotJoint> joints;
  int root_link = -1;

  int link_index(const std::string& link_name) const;
  int joint_index(const std::string& joint_name) const;
  std::vector<int> actuated_joints() const;  // indices of revolute joints, chain order
  int dof() const { return static_cast<int>(actuated_joints().size()); }
  /// Joint index whose child is `link`, or -1 for the root.
  int parent_joint_of_link(int link) const;
  /// Terminal link of the chain (the localisation reference point's frame).
  int terminal_link() const;
};

/// Fixed-axis roll-pitch-yaw to rotation: R = Rz(yaw) * Ry(pitch) * Rx(roll).
Eigen::Matrix3d rotation_from_rpy(double roll, double pitch, double yaw);

RobotModel load_urdf(const std::string& path);

/// Meshes referenced by the links, loaded relative to `base_dir` and baked
/// with each link's visual origin and scale. Links without a mesh get an
/// empty entry.
std::vector<TriangleMesh> load_link_meshes(const RobotModel& robot, const std::string& base_dir);

/// Pose of every link in the root frame for the actuated joint vector q
/// (ordered as actuated_joints()).
std::vector<Eigen::Isometry3d> forward_kinematics(const RobotModel& robot, const Eigen::VectorXd& q);

Eigen::Isometry3d link_pose(const RobotModel& robot, const Eigen::VectorXd& q,
                            const std::string& link_name);

/// Geometric Jacobian of the origin of `link_name`, 6 x dof in the root
/// frame, linear velocity rows on top of angular.
Eigen::Matrix<double, 6, Eigen::Dynamic> geometric_jacobian(const RobotModel& robot,
                                                            const Eigen::VectorXd& q,
                                                            const std::string& link_name);

}  // namespace stereosil

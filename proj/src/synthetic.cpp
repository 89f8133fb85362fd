#include "stereosil/synthetic.hpp"

#include <cmath>

namespace stereosil {

namespace {

struct LinkSpec {
  double radius;
  double length;  // joint-to-joint offset along the link's z axis
};

// Body radii and joint offsets, base to wrist. The tool link is special-cased.
const LinkSpec kLinks[7] = {{0.065, 0.10}, {0.055, 0.12}, {0.050, 0.26}, {0.045, 0.10},
                            {0.040, 0.24}, {0.035, 0.08}, {0.030, 0.08}};

Eigen::Isometry3d lift_z(double z) {
  Eigen::Isometry3d t = Eigen::Isometry3d::Identity();
  t.translation() = Eigen::Vector3d(0, 0, z);
  return t;
}

// Cylinder body from z = 0 to z = length with a ball at the far joint.
TriangleMesh link_body(const LinkSpec& spec) {
  TriangleMesh body = transform_mesh(make_cylinder(spec.radius, spec.length, 48), lift_z(0.5 * spec.length));
  TriangleMesh ball = transform_mesh(make_icosphere(1.25 * spec.radius, 2), lift_z(spec.length));
  return merge_meshes({body, ball});
}

TriangleMesh tool_body() {
  TriangleMesh shaft = transform_mesh(make_cylinder(0.025, 0.10, 48), lift_z(0.05));
  TriangleMesh collar = transform_mesh(make_icosphere(0.018, 2), lift_z(0.10));
  TriangleMesh bit = transform_mesh(make_cylinder(0.006, 0.08, 48), lift_z(0.14));
  return merge_meshes({shaft, collar, bit});
}

}  // namespace

RobotModel make_arm7() {
  RobotModel model;
  model.name = "arm7";
  model.root_link = 0;
  for (int i = 0; i <= 7; ++i) {
    RobotLink link;
    link.name = "link" + std::to_string(i);
    model.links.push_back(link);
  }
  const double limits[7] = {2.9, 1.9, 2.9, 2.2, 2.9, 2.0, 2.9};
  for (int j = 0; j < 7; ++j) {
    RobotJoint joint;
    joint.name = "joint" + std::to_string(j + 1);
    joint.type = JointType::Revolute;
    joint.parent_link = j;
    joint.child_link = j + 1;
    joint.origin = lift_z(kLinks[j].length);
    joint.axis = (j % 2 == 0) ? Eigen::Vector3d::UnitZ() : Eigen::Vector3d::UnitY();
    joint.lower = -limits[j];
    joint.upper = limits[j];
    joint.velocity_limit = 2.0;
    model.joints.push_back(joint);
  }
  return model;
}

std::vector<TriangleMesh> arm7_link_meshes() {
  std::vector<TriangleMesh> meshes;
  for (int i = 0; i < 7; ++i) meshes.push_back(link_body(kLinks[i]));
  meshes.push_back(tool_body());
  return meshes;
}

Eigen::VectorXd arm7_home() {
  Eigen::VectorXd q(7);
  q << 0.0, 0.5, 0.0, 1.1, 0.0, 0.6, 0.0;
  return q;
}

Eigen::Isometry3d arm7_view_pose(double distance) {
  Eigen::Matrix3d r;
  // Base x -> image right, base z (up) -> image up, base y -> optical axis.
  r.col(0) = Eigen::Vector3d(1, 0, 0);
  r.col(1) = Eigen::Vector3d(0, 0, 1);
  r.col(2) = Eigen::Vector3d(0, -1, 0);
  Eigen::Isometry3d pose = Eigen::Isometry3d::Identity();
  pose.linear() = r;
  pose.translation() = Eigen::Vector3d(0, 0.35, distance);
  return pose;
}

namespace {

StereoRig make_rig(int width, int height, double focal) {
  StereoRig rig;
  rig.left.fx = rig.left.fy = focal;
  rig.left.cx = 0.5 * width - 0.5;
  rig.left.cy = 0.5 * height - 0.5;
  rig.left.width = width;
  rig.left.height = height;
  rig.right = rig.left;
  rig.left_to_right = Eigen::Isometry3d::Identity();
  rig.left_to_right.translation() = Eigen::Vector3d(-0.12, 0, 0);
  rig.z_min = 0.2;
  rig.z_max = 5.0;
  return rig;
}

}  // namespace

StereoRig make_desk_rig() { return make_rig(1280, 720, 1400.0); }

StereoRig make_long_focal_rig() { return make_rig(3840, 2160, 7000.0); }

}  // namespace stereosil

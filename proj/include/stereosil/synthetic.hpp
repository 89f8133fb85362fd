#pragma once

#include <Eigen/Dense>
#include <vector>

#include "stereosil/camera.hpp"
#include "stereosil/mesh.hpp"
#include "stereosil/robot.hpp"

namespace stereosil {

/// Procedural 7-DoF serial arm (S-R-S axis pattern z,y,z,y,z,y,z) with dense
/// link meshes, roughly one metre of reach. The terminal link's frame origin
/// is the tool-centre reference point.
RobotModel make_arm7();

/// Link meshes aligned with make_arm7().links, dense enough (roughly 1.5k
/// faces each) that aggressive simplification still leaves a usable shape.
std::vector<TriangleMesh> arm7_link_meshes();

/// Elbow-bent configuration that keeps the arm compact and self-visible.
Eigen::VectorXd arm7_home();

/// Robot-base-in-left-camera pose that centres the arm in view at the given
/// distance: base z (up) maps to image up, base sits `distance` metres ahead.
Eigen::Isometry3d arm7_view_pose(double distance);

/// Desk-scale stereo rig: 1280x720, f = 1400 px, 12 cm baseline.
StereoRig make_desk_rig();

/// Long-focal stereo rig for triangulation accuracy studies: 3840x2160,
/// f = 7000 px, 12 cm baseline.
StereoRig make_long_focal_rig();

}  // namespace stereosil

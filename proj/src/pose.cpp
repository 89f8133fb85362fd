#include "stereosil/pose.hpp"

#include <cmath>

namespace stereosil {

Eigen::Matrix<double, 12, 1> PoseParam::packed() const {
  Eigen::Matrix<double, 12, 1> v;
  v << r, t;
  return v;
}

PoseParam PoseParam::unpack(const Eigen::Matrix<double, 12, 1>& v) {
  PoseParam p;
  p.r = v.head<9>();
  p.t = v.tail<3>();
  return p;
}

namespace {

Eigen::Matrix3d cross_matrix(const Eigen::Vector3d& v) {
  Eigen::Matrix3d m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

// Deterministic unit vector far from alignment with d.
Eigen::Vector3d fallback_perpendicular(const Eigen::Vector3d& d) {
  int smallest = 0;
  for (int k = 1; k < 3; ++k)
    if (std::abs(d[k]) < std::abs(d[smallest])) smallest = k;
  Eigen::Vector3d axis = Eigen::Vector3d::Zero();
  axis[smallest] = 1.0;
  return (axis - d * d.dot(axis)).normalized();
}

}  // namespace

RotationDecode decode_rotation(const Eigen::Matrix<double, 9, 1>& r, bool with_jacobian) {
  RotationDecode out;
  const Eigen::Vector3d a = r.head<3>();
  const Eigen::Vector3d b = r.segment<3>(3);
  constexpr double kTiny = 1e-12;

  const double na = a.norm();
  if (na < kTiny) {
    out.degenerate = true;
    return out;  // identity rotation, zero jacobian
  }
  const Eigen::Vector3d e1 = a / na;

  const Eigen::Vector3d u = b - e1.dot(b) * e1;
  const double nu = u.norm();
  Eigen::Vector3d e2;
  bool e2_fallback = false;
  if (nu < kTiny) {
    e2 = fallback_perpendicular(e1);
    e2_fallback = true;
    out.degenerate = true;
  } else {
    e2 = u / nu;
  }
  const Eigen::Vector3d e3 = e1.cross(e2);

  out.rotation.col(0) = e1;
  out.rotation.col(1) = e2;
  out.rotation.col(2) = e3;

  if (with_jacobian && !e2_fallback) {
    const Eigen::Matrix3d de1_da = (Eigen::Matrix3d::Identity() - e1 * e1.transpose()) / na;
    const Eigen::Matrix3d du_de1 = -(e1 * b.transpose() + b.dot(e1) * Eigen::Matrix3d::Identity());
    const Eigen::Matrix3d du_db = Eigen::Matrix3d::Identity() - e1 * e1.transpose();
    const Eigen::Matrix3d de2_du = (Eigen::Matrix3d::Identity() - e2 * e2.transpose()) / nu;
    const Eigen::Matrix3d de2_da = de2_du * du_de1 * de1_da;
    const Eigen::Matrix3d de2_db = de2_du * du_db;
    const Eigen::Matrix3d de3_da = -cross_matrix(e2) * de1_da + cross_matrix(e1) * de2_da;
    const Eigen::Matrix3d de3_db = cross_matrix(e1) * de2_db;

    out.jacobian.block<3, 3>(0, 0) = de1_da;
    out.jacobian.block<3, 3>(3, 0) = de2_da;
    out.jacobian.block<3, 3>(3, 3) = de2_db;
    out.jacobian.block<3, 3>(6, 0) = de3_da;
    out.jacobian.block<3, 3>(6, 3) = de3_db;
  }
  return out;
}

DecodedPose decode_pose(const PoseParam& p) {
  const RotationDecode rot = decode_rotation(p.r);
  DecodedPose out;
  out.transform.linear() = rot.rotation;
  out.transform.translation() = p.t;
  out.degenerate = rot.degenerate;
  return out;
}

PoseParam encode_pose(const Eigen::Isometry3d& transform) {
  PoseParam p;
  const Eigen::Matrix3d r = transform.rotation();
  for (int c = 0; c < 3; ++c) p.r.segment<3>(3 * c) = r.col(c);
  p.t = transform.translation();
  return p;
}

Eigen::Isometry3d perturb_pose(const Eigen::Isometry3d& pose, const Eigen::Vector3d& rotation_vec,
                               const Eigen::Vector3d& translation) {
  Eigen::Isometry3d delta = Eigen::Isometry3d::Identity();
  const double angle = rotation_vec.norm();
  if (angle > 0) delta.linear() = Eigen::AngleAxisd(angle, rotation_vec / angle).toRotationMatrix();
  delta.translation() = translation;
  return pose * delta;
}

}  // namespace stereosil

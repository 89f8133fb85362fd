#pragma once

#include <Eigen/Dense>

namespace stereosil {

/// Continuous pose parametrization: 9 rotation values (three stored column
/// blocks; decoding orthonormalizes the first two and reconstructs the third
/// by cross product, so the representation is smooth and scale invariant)
/// plus a metric translation. The first 6 rotation values alone determine the
/// rotation, which is the 6D variant of the same scheme.
struct PoseParam {
  Eigen::Matrix<double, 9, 1> r = (Eigen::Matrix<double, 9, 1>() << 1, 0, 0, 0, 1, 0, 0, 0, 1).finished();
  Eigen::Vector3d t = Eigen::Vector3d::Zero();

  static constexpr int kDim = 12;
  Eigen::Matrix<double, 12, 1> packed() const;
  static PoseParam unpack(const Eigen::Matrix<double, 12, 1>& v);
};

struct RotationDecode {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  bool degenerate = false;
  /// d vec(R) / d r  with vec(R) stacking the columns e1, e2, e3.
  Eigen::Matrix<double, 9, 9> jacobian = Eigen::Matrix<double, 9, 9>::Zero();
};

/// Orthonormalize the first two stored 3-vectors (Gram-Schmidt) and rebuild
/// the third as their cross product, guaranteeing det = +1 for any finite
/// input. Near-zero or parallel inputs fall back deterministically and set
/// the degenerate flag. The Jacobian is exact away from the fallbacks; the
/// last three parameters never influence the rotation, so their columns are
/// zero.
RotationDecode decode_rotation(const Eigen::Matrix<double, 9, 1>& r, bool with_jacobian = false);

struct DecodedPose {
  Eigen::Isometry3d transform = Eigen::Isometry3d::Identity();
  bool degenerate = false;
};

DecodedPose decode_pose(const PoseParam& p);
PoseParam encode_pose(const Eigen::Isometry3d& transform);

/// Right-multiply a small perturbation onto a pose: rotation by an axis-angle
/// vector about the robot base origin, plus a base-frame translation, so the
/// perturbation magnitudes are felt at the robot rather than amplified by the
/// camera lever arm. Used by perturbed initialisation and prior sampling.
Eigen::Isometry3d perturb_pose(const Eigen::Isometry3d& pose, const Eigen::Vector3d& rotation_vec,
                               const Eigen::Vector3d& translation);

}  // namespace stereosil

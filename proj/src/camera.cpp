#include "stereosil/camera.hpp"

#include <yaml-cpp/yaml.h>

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace stereosil {

Eigen::Matrix3d CameraIntrinsics::matrix() const {
  Eigen::Matrix3d k = Eigen::Matrix3d::Identity();
  k(0, 0) = fx;
  k(1, 1) = fy;
  k(0, 2) = cx;
  k(1, 2) = cy;
  return k;
}

CameraIntrinsics CameraIntrinsics::cropped(int offset_x, int offset_y, int crop_width,
                                           int crop_height) const {
  if (offset_x < 0 || offset_y < 0 || crop_width <= 0 || crop_height <= 0 ||
      offset_x + crop_width > width || offset_y + crop_height > height)
    throw std::runtime_error("crop window outside the image");
  CameraIntrinsics out = *this;
  out.cx = cx - offset_x;
  out.cy = cy - offset_y;
  out.width = crop_width;
  out.height = crop_height;
  return out;
}

CameraIntrinsics CameraIntrinsics::scaled(int new_width, int new_height) const {
  if (new_width <= 0 || new_height <= 0)
    throw std::runtime_error("scaled intrinsics: resolution must be positive");
  const double sx = static_cast<double>(new_width) / width;
  const double sy = static_cast<double>(new_height) / height;
  CameraIntrinsics out = *this;
  out.fx = fx * sx;
  out.fy = fy * sy;
  out.cx = (cx + 0.5) * sx - 0.5;
  out.cy = (cy + 0.5) * sy - 0.5;
  out.width = new_width;
  out.height = new_height;
  return out;
}

void CameraIntrinsics::validate() const {
  if (!(fx > 0) || !(fy > 0)) throw std::runtime_error("intrinsics: focal lengths must be positive");
  if (width <= 0 || height <= 0) throw std::runtime_error("intrinsics: image size must be positive");
  if (!std::isfinite(cx) || !std::isfinite(cy))
    throw std::runtime_error("intrinsics: principal point must be finite");
}

Eigen::Matrix4d perspective_matrix(const CameraIntrinsics& k, double z_near, double z_far) {
  if (!(z_near > 0) || !(z_far > z_near))
    throw std::runtime_error("perspective: require 0 < z_near < z_far");
  const double w = k.width, h = k.height;
  Eigen::Matrix4d p = Eigen::Matrix4d::Zero();
  p(0, 0) = 2.0 * k.fx / w;
  p(0, 2) = 2.0 * k.cx / w - 1.0;
  p(1, 1) = 2.0 * k.fy / h;
  p(1, 2) = 2.0 * k.cy / h - 1.0;
  p(2, 2) = (z_far + z_near) / (z_far - z_near);
  p(2, 3) = 2.0 * z_far * z_near / (z_near - z_far);
  p(3, 2) = 1.0;
  return p;
}

Eigen::Vector2d ndc_to_pixel(const Eigen::Vector2d& ndc, int width, int height) {
  return {(ndc.x() + 1.0) * 0.5 * width, (ndc.y() + 1.0) * 0.5 * height};
}

Eigen::Vector2d project_point(const CameraIntrinsics& k, const Eigen::Vector3d& p_cam) {
  if (!(p_cam.z() > 0)) throw std::runtime_error("project_point: point not in front of the camera");
  return {k.fx * p_cam.x() / p_cam.z() + k.cx, k.fy * p_cam.y() / p_cam.z() + k.cy};
}

void StereoRig::validate() const {
  left.validate();
  right.validate();
  if (!left_to_right.matrix().allFinite())
    throw std::runtime_error("stereo rig: non-finite extrinsic");
  const Eigen::Matrix3d r = left_to_right.rotation();
  if ((r * r.transpose() - Eigen::Matrix3d::Identity()).norm() > 1e-6)
    throw std::runtime_error("stereo rig: extrinsic rotation is not orthonormal");
  if (baseline() <= 0) throw std::runtime_error("stereo rig: zero baseline");
  if (!(z_min > 0) || !(z_max > z_min))
    throw std::runtime_error("stereo rig: require 0 < z_min < z_max");
}

namespace {

CameraIntrinsics intrinsics_from_node(const YAML::Node& node) {
  CameraIntrinsics k;
  k.fx = node["fx"].as<double>();
  k.fy = node["fy"].as<double>();
  k.cx = node["cx"].as<double>();
  k.cy = node["cy"].as<double>();
  k.width = node["width"].as<int>();
  k.height = node["height"].as<int>();
  return k;
}

}  // namespace

StereoRig load_stereo_rig(const std::string& path) {
  YAML::Node root;
  try {
    root = YAML::LoadFile(path);
  } catch (const YAML::Exception& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
  if (!root["left"] || !root["right"] || !root["left_to_right"])
    throw std::runtime_error(path + ": calibration needs left, right, left_to_right");
  StereoRig rig;
  rig.left = intrinsics_from_node(root["left"]);
  rig.right = intrinsics_from_node(root["right"]);

  const YAML::Node ext = root["left_to_right"];
  if (!ext.IsSequence() || ext.size() != 16)
    throw std::runtime_error(path + ": left_to_right must be a 4x4 matrix, 16 values row-major");
  Eigen::Matrix4d m;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) m(i, j) = ext[4 * i + j].as<double>();
  if ((m.row(3) - Eigen::RowVector4d(0, 0, 0, 1)).norm() > 1e-9)
    throw std::runtime_error(path + ": left_to_right bottom row must be 0 0 0 1");
  rig.left_to_right.matrix() = m;
  if (root["z_min"]) rig.z_min = root["z_min"].as<double>();
  if (root["z_max"]) rig.z_max = root["z_max"].as<double>();
  rig.validate();
  return rig;
}

void save_stereo_rig(const StereoRig& rig, const std::string& path) {
  YAML::Emitter out;
  out.SetDoublePrecision(17);
  auto emit_intrinsics = [&](const CameraIntrinsics& k) {
    out << YAML::BeginMap;
    out << YAML::Key << "fx" << YAML::Value << k.fx;
    out << YAML::Key << "fy" << YAML::Value << k.fy;
    out << YAML::Key << "cx" << YAML::Value << k.cx;
    out << YAML::Key << "cy" << YAML::Value << k.cy;
    out << YAML::Key << "width" << YAML::Value << k.width;
    out << YAML::Key << "height" << YAML::Value << k.height;
    out << YAML::EndMap;
  };
  out << YAML::BeginMap;
  out << YAML::Key << "left" << YAML::Value;
  emit_intrinsics(rig.left);
  out << YAML::Key << "right" << YAML::Value;
  emit_intrinsics(rig.right);
  out << YAML::Key << "left_to_right" << YAML::Value << YAML::Flow << YAML::BeginSeq;
  const Eigen::Matrix4d m = rig.left_to_right.matrix();
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) out << m(i, j);
  out << YAML::EndSeq;
  out << YAML::Key << "z_min" << YAML::Value << rig.z_min;
  out << YAML::Key << "z_max" << YAML::Value << rig.z_max;
  out << YAML::EndMap;

  std::ofstream file(path);
  if (!file) throw std::runtime_error(path + ": cannot write");
  file << out.c_str() << "\n";
}

TriangulationResult triangulate(const StereoRig& rig, const Eigen::Vector2d& pixel_left,
                                const Eigen::Vector2d& pixel_right, double condition_limit) {
  // Normalised rays in each camera frame; z is fixed to 1 so each view gives
  // two linear equations in the left-frame point.
  const Eigen::Vector2d nl((pixel_left.x() - rig.left.cx) / rig.left.fx,
                           (pixel_left.y() - rig.left.cy) / rig.left.fy);
  const Eigen::Vector2d nr((pixel_right.x() - rig.right.cx) / rig.right.fx,
                           (pixel_right.y() - rig.right.cy) / rig.right.fy);

  const Eigen::Matrix3d r = rig.left_to_right.rotation();
  const Eigen::Vector3d t = rig.left_to_right.translation();

  Eigen::Matrix<double, 4, 3> a;
  Eigen::Vector4d b;
  // Left view: x = nl.x * z, y = nl.y * z.
  a.row(0) << 1, 0, -nl.x();
  a.row(1) << 0, 1, -nl.y();
  b(0) = 0;
  b(1) = 0;
  // Right view: rows of (r*p + t) with p_r.x = nr.x * p_r.z etc.
  a.row(2) = (r.row(0) - nr.x() * r.row(2));
  a.row(3) = (r.row(1) - nr.y() * r.row(2));
  b(2) = nr.x() * t.z() - t.x();
  b(3) = nr.y() * t.z() - t.y();

  Eigen::JacobiSVD<Eigen::Matrix<double, 4, 3>> svd(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  const double cond = s(2) > 0 ? s(0) / s(2) : std::numeric_limits<double>::infinity();
  if (!(cond < condition_limit))
    throw std::runtime_error("triangulate: degenerate geometry (condition " + std::to_string(cond) +
                             ")");

  TriangulationResult res;
  res.condition_number = cond;
  res.point_left = svd.solve(b);

  res.reprojection_left = project_point(rig.left, res.point_left);
  res.reprojection_right = project_point(rig.right, rig.left_to_right * res.point_left);
  res.reprojection_error_px = 0.5 * ((res.reprojection_left - pixel_left).norm() +
                                     (res.reprojection_right - pixel_right).norm());
  return res;
}

}  // namespace stereosil

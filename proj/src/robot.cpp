#include "stereosil/robot.hpp"

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <sstream>
#include <stdexcept>

namespace stereosil {

int RobotModel::link_index(const std::string& link_name) const {
  for (std::size_t i = 0; i < links.size(); ++i)
    if (links[i].name == link_name) return static_cast<int>(i);
  throw std::runtime_error("unknown link: " + link_name);
}

int RobotModel::joint_index(const std::string& joint_name) const {
  for (std::size_t i = 0; i < joints.size(); ++i)
    if (joints[i].name == joint_name) return static_cast<int>(i);
  throw std::runtime_error("unknown joint: " + joint_name);
}

std::vector<int> RobotModel::actuated_joints() const {
  std::vector<int> out;
  for (std::size_t i = 0; i < joints.size(); ++i)
    if (joints[i].type != JointType::Fixed) out.push_back(static_cast<int>(i));
  return out;
}

int RobotModel::parent_joint_of_link(int link) const {
  for (std::size_t i = 0; i < joints.size(); ++i)
    if (joints[i].child_link == link) return static_cast<int>(i);
  return -1;
}

int RobotModel::terminal_link() const {
  if (joints.empty()) return root_link;
  return joints.back().child_link;
}

Eigen::Matrix3d rotation_from_rpy(double roll, double pitch, double yaw) {
  return (Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()) *
          Eigen::AngleAxisd(pitch, Eigen::Vector3d::UnitY()) *
          Eigen::AngleAxisd(roll, Eigen::Vector3d::UnitX()))
      .toRotationMatrix();
}

namespace {

Eigen::Vector3d parse_triplet(const std::string& text, const std::string& what) {
  std::istringstream in(text);
  Eigen::Vector3d v;
  if (!(in >> v.x() >> v.y() >> v.z()))
    throw std::runtime_error("malformed " + what + ": '" + text + "'");
  return v;
}

Eigen::Isometry3d parse_origin(const boost::property_tree::ptree& node) {
  Eigen::Isometry3d t = Eigen::Isometry3d::Identity();
  if (auto origin = node.get_child_optional("origin")) {
    const std::string xyz = origin->get<std::string>("<xmlattr>.xyz", "0 0 0");
    const std::string rpy = origin->get<std::string>("<xmlattr>.rpy", "0 0 0");
    t.translation() = parse_triplet(xyz, "origin xyz");
    const Eigen::Vector3d r = parse_triplet(rpy, "origin rpy");
    t.linear() = rotation_from_rpy(r.x(), r.y(), r.z());
  }
  return t;
}

}  // namespace

RobotModel load_urdf(const std::string& path) {
  boost::property_tree::ptree doc;
  try {
    boost::property_tree::read_xml(path, doc);
  } catch (const boost::property_tree::xml_parser_error& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
  const auto robot_node = doc.get_child_optional("robot");
  if (!robot_node) throw std::runtime_error(path + ": no <robot> element");

  RobotModel model;
  model.name = robot_node->get<std::string>("<xmlattr>.name", "robot");

  std::map<std::string, int> link_ids;
  for (const auto& [tag, node] : *robot_node) {
    if (tag != "link") continue;
    RobotLink link;
    link.name = node.get<std::string>("<xmlattr>.name");
    if (link_ids.count(link.name)) throw std::runtime_error(path + ": duplicate link " + link.name);
    if (auto visual = node.get_child_optional("visual")) {
      link.mesh_origin = parse_origin(*visual);
      if (auto mesh = visual->get_child_optional("geometry.mesh")) {
        link.mesh_path = mesh->get<std::string>("<xmlattr>.filename", "");
        const std::string scale = mesh->get<std::string>("<xmlattr>.scale", "1 1 1");
        link.mesh_scale = parse_triplet(scale, "mesh scale");
      }
    }
    link_ids.emplace(link.name, static_cast<int>(model.links.size()));
    model.links.push_back(std::move(link));
  }
  if (model.links.empty()) throw std::runtime_error(path + ": no links");

  std::vector<RobotJoint> raw_joints;
  for (const auto& [tag, node] : *robot_node) {
    if (tag != "joint") continue;
    RobotJoint joint;
    joint.name = node.get<std::string>("<xmlattr>.name");
    const std::string type = node.get<std::string>("<xmlattr>.type");
    if (type == "revolute" || type == "continuous") {
      joint.type = JointType::Revolute;
    } else if (type == "fixed") {
      joint.type = JointType::Fixed;
    } else {
      throw std::runtime_error(path + ": unsupported joint type '" + type + "' on " + joint.name);
    }
    const std::string parent = node.get<std::string>("parent.<xmlattr>.link");
    const std::string child = node.get<std::string>("child.<xmlattr>.link");
    if (!link_ids.count(parent) || !link_ids.count(child))
      throw std::runtime_error(path + ": joint " + joint.name + " references unknown link");
    joint.parent_link = link_ids[parent];
    joint.child_link = link_ids[child];
    joint.origin = parse_origin(node);
    if (auto axis = node.get_child_optional("axis")) {
      joint.axis = parse_triplet(axis->get<std::string>("<xmlattr>.xyz", "0 0 1"), "joint axis");
      const double norm = joint.axis.norm();
      if (norm < 1e-12) throw std::runtime_error(path + ": zero axis on joint " + joint.name);
      joint.axis /= norm;
    }
    if (auto limit = node.get_child_optional("limit")) {
      joint.lower = limit->get<double>("<xmlattr>.lower", 0.0);
      joint.upper = limit->get<double>("<xmlattr>.upper", 0.0);
      joint.velocity_limit = limit->get<double>("<xmlattr>.velocity", 0.0);
    }
    raw_joints.push_back(std::move(joint));
  }

  // Serial chain checks: every link has at most one parent joint and at most
  // one child joint; exactly one link (the root) has no parent.
  std::vector<int> parent_count(model.links.size(), 0);
  std::vector<int> child_joint(model.links.size(), -1);
  for (std::size_t i = 0; i < raw_joints.size(); ++i) {
    const auto& j = raw_joints[i];
    if (++parent_count[j.child_link] > 1)
      throw std::runtime_error(path + ": link " + model.links[j.child_link].name +
                               " has two parent joints");
    if (child_joint[j.parent_link] != -1)
      throw std::runtime_error(path + ": non-serial chain at link " +
                               model.links[j.parent_link].name);
    child_joint[j.parent_link] = static_cast<int>(i);
  }
  model.root_link = -1;
  for (std::size_t i = 0; i < model.links.size(); ++i) {
    if (parent_count[i] == 0) {
      if (model.root_link != -1)
        throw std::runtime_error(path + ": disconnected chain (extra root " +
                                 model.links[i].name + ")");
      model.root_link = static_cast<int>(i);
    }
  }
  if (model.root_link == -1) throw std::runtime_error(path + ": no root link (cycle)");

  // Walk the chain root to tip.
  for (int link = model.root_link; child_joint[link] != -1;
       link = model.joints.back().child_link)
    model.joints.push_back(raw_joints[child_joint[link]]);
  if (model.joints.size() != raw_joints.size())
    throw std::runtime_error(path + ": disconnected links");

  for (const auto& joint : model.joints) {
    if (joint.type == JointType::Revolute && joint.lower >= joint.upper &&
        !(joint.lower == 0 && joint.upper == 0))
      throw std::runtime_error(path + ": joint " + joint.name + " has lower >= upper limit");
  }
  return model;
}

std::vector<TriangleMesh> load_link_meshes(const RobotModel& robot, const std::string& base_dir) {
  std::vector<TriangleMesh> meshes(robot.links.size());
  for (std::size_t i = 0; i < robot.links.size(); ++i) {
    const auto& link = robot.links[i];
    if (link.mesh_path.empty()) continue;
    std::string rel = link.mesh_path;
    // Strip a package://pkg/ prefix; the payload path is resolved locally.
    const std::string pkg = "package://";
    if (rel.rfind(pkg, 0) == 0) {
      const std::size_t slash = rel.find('/', pkg.size());
      rel = slash == std::string::npos ? "" : rel.substr(slash + 1);
    }
    const std::filesystem::path full = std::filesystem::path(base_dir) / rel;
    TriangleMesh mesh = load_mesh(full.string());
    for (auto& v : mesh.vertices) v = link.mesh_origin * v.cwiseProduct(link.mesh_scale);
    meshes[i] = std::move(mesh);
  }
  return meshes;
}

std::vector<Eigen::Isometry3d> forward_kinematics(const RobotModel& robot,
                                                  const Eigen::VectorXd& q) {
  const auto actuated = robot.actuated_joints();
  if (q.size() != static_cast<Eigen::Index>(actuated.size()))
    throw std::runtime_error("forward_kinematics: expected " + std::to_string(actuated.size()) +
                             " joint values, got " + std::to_string(q.size()));
  std::vector<int> dof_of_joint(robot.joints.size(), -1);
  for (std::size_t d = 0; d < actuated.size(); ++d) dof_of_joint[actuated[d]] = static_cast<int>(d);

  std::vector<Eigen::Isometry3d> pose(robot.links.size(), Eigen::Isometry3d::Identity());
  for (const auto& joint : robot.joints) {
    Eigen::Isometry3d motion = Eigen::Isometry3d::Identity();
    if (joint.type == JointType::Revolute) {
      const int d = dof_of_joint[&joint - robot.joints.data()];
      motion.linear() = Eigen::AngleAxisd(q[d], joint.axis).toRotationMatrix();
    }
    pose[joint.child_link] = pose[joint.parent_link] * joint.origin * motion;
  }
  return pose;
}

Eigen::Isometry3d link_pose(const RobotModel& robot, const Eigen::VectorXd& q,
                            const std::string& link_name) {
  return forward_kinematics(robot, q)[robot.link_index(link_name)];
}

Eigen::Matrix<double, 6, Eigen::Dynamic> geometric_jacobian(const RobotModel& robot,
                                                            const Eigen::VectorXd& q,
                                                            const std::string& link_name) {
  const auto actuated = robot.actuated_joints();
  const auto poses = forward_kinematics(robot, q);
  const int target = robot.link_index(link_name);
  const Eigen::Vector3d p = poses[target].translation();

  // Ancestor joints of the target link, found by walking to the root.
  std::vector<bool> on_chain(robot.joints.size(), false);
  for (int link = target; link != robot.root_link;) {
    const int j = robot.parent_joint_of_link(link);
    if (j < 0) throw std::runtime_error("geometric_jacobian: broken chain at link " +
                                        robot.links[link].name);
    on_chain[j] = true;
    link = robot.joints[j].parent_link;
  }

  Eigen::Matrix<double, 6, Eigen::Dynamic> jac =
      Eigen::Matrix<double, 6, Eigen::Dynamic>::Zero(6, static_cast<int>(actuated.size()));
  for (std::size_t d = 0; d < actuated.size(); ++d) {
    const auto& joint = robot.joints[actuated[d]];
    if (!on_chain[actuated[d]]) continue;
    // The joint frame before motion: rotation about / translation along its
    // axis leaves the frame origin and axis direction unchanged, so this is
    // also the post-motion axis anchor.
    const Eigen::Isometry3d frame = poses[joint.parent_link] * joint.origin;
    const Eigen::Vector3d axis = frame.rotation() * joint.axis;
    jac.block<3, 1>(0, static_cast<int>(d)) = axis.cross(p - frame.translation());
    jac.block<3, 1>(3, static_cast<int>(d)) = axis;
  }
  return jac;
}

}  // namespace stereosil

#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

namespace stereosil {

/// Indexed triangle mesh. Units are metres, coordinates live in whatever
/// frame the owner says they do.
struct TriangleMesh {
  std::vector<Eigen::Vector3d> vertices;
  std::vector<Eigen::Vector3i> faces;

  std::size_t vertex_count() const { return vertices.size(); }
  std::size_t face_count() const { return faces.size(); }
  bool empty() const { return faces.empty(); }
};

struct Aabb {
  Eigen::Vector3d min = Eigen::Vector3d::Constant(std::numeric_limits<double>::max());
  Eigen::Vector3d max = Eigen::Vector3d::Constant(std::numeric_limits<double>::lowest());

  void extend(const Eigen::Vector3d& p);
  Eigen::Vector3d extent() const { return max - min; }
  double diagonal() const { return extent().norm(); }
};

Aabb bounding_box(const TriangleMesh& mesh);

double face_area(const TriangleMesh& mesh, int face);

/// Throws std::runtime_error on out-of-range indices or non-finite vertices.
/// `name` is prefixed to error messages.
void validate_mesh(const TriangleMesh& mesh, const std::string& name);

/// Drops faces with repeated indices or area below `area_tol` (m^2).
TriangleMesh drop_degenerate_faces(const TriangleMesh& mesh, double area_tol = 1e-12);

/// Merges bit-identical vertex positions and remaps faces. STL files store
/// one vertex record per corner, so welding is what recovers connectivity.
TriangleMesh weld_vertices(const TriangleMesh& mesh);

TriangleMesh transform_mesh(const TriangleMesh& mesh, const Eigen::Isometry3d& t);

// File I/O. Format is picked by extension (.stl binary/ascii autodetected, .obj).
TriangleMesh load_mesh(const std::string& path);
void save_stl_binary(const TriangleMesh& mesh, const std::string& path);
void save_obj(const TriangleMesh& mesh, const std::string& path);

// Procedural primitives (used by fixtures and synthetic scenes).
TriangleMesh make_box(const Eigen::Vector3d& size, const Eigen::Vector3d& centre = Eigen::Vector3d::Zero());
TriangleMesh make_cylinder(double radius, double length, int segments = 16);
TriangleMesh make_icosphere(double radius, int subdivisions);

/// Concatenates meshes, offsetting face indices. No welding.
TriangleMesh merge_meshes(const std::vector<TriangleMesh>& parts);

}  // namespace stereosil

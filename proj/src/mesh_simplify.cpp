#include "stereosil/mesh_simplify.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <queue>
#include <stdexcept>
#include <vector>

namespace stereosil {

namespace {

Eigen::Matrix4d plane_quadric(const Eigen::Vector3d& unit_normal, const Eigen::Vector3d& point,
                              double weight) {
  Eigen::Vector4d p;
  p << unit_normal, -unit_normal.dot(point);
  return weight * p * p.transpose();
}

double quadric_cost(const Eigen::Matrix4d& q, const Eigen::Vector3d& v) {
  Eigen::Vector4d h;
  h << v, 1.0;
  return h.dot(q * h);
}

struct Candidate {
  double cost;
  int v1, v2;
  int stamp1, stamp2;
  Eigen::Vector3d position;
  bool operator>(const Candidate& o) const {
    if (cost != o.cost) return cost > o.cost;
    if (v1 != o.v1) return v1 > o.v1;
    return v2 > o.v2;
  }
};

class QuadricCollapser {
 public:
  QuadricCollapser(const TriangleMesh& mesh, int target_faces)
      : target_faces_(target_faces),
        positions_(mesh.vertices),
        faces_(mesh.faces),
        face_alive_(mesh.faces.size(), true),
        vertex_alive_(mesh.vertices.size(), true),
        quadrics_(mesh.vertices.size(), Eigen::Matrix4d::Zero()),
        stamps_(mesh.vertices.size(), 0),
        vertex_faces_(mesh.vertices.size()),
        alive_faces_(static_cast<int>(mesh.faces.size())) {
    const Aabb box = bounding_box(mesh);
    original_diagonal_ = box.diagonal();
    bbox_ = box;

    for (std::size_t f = 0; f < faces_.size(); ++f) {
      const auto& face = faces_[f];
      for (int k = 0; k < 3; ++k) vertex_faces_[face[k]].push_back(static_cast<int>(f));
      const Eigen::Vector3d a = positions_[face[0]];
      const Eigen::Vector3d n = (positions_[face[1]] - a).cross(positions_[face[2]] - a);
      const double area2 = n.norm();
      if (area2 <= 0) continue;
      const Eigen::Matrix4d k = plane_quadric(n / area2, a, 0.5 * area2);
      for (int c = 0; c < 3; ++c) quadrics_[face[c]] += k;
    }
    add_boundary_constraints();
    for (std::size_t f = 0; f < faces_.size(); ++f) {
      const auto& face = faces_[f];
      for (int k = 0; k < 3; ++k) push_candidate(face[k], face[(k + 1) % 3]);
    }
  }

  bool run() {
    while (alive_faces_ > target_faces_ && !heap_.empty()) {
      const Candidate c = heap_.top();
      heap_.pop();
      if (!vertex_alive_[c.v1] || !vertex_alive_[c.v2]) continue;
      if (stamps_[c.v1] != c.stamp1 || stamps_[c.v2] != c.stamp2) continue;
      if (!adjacent(c.v1, c.v2)) continue;
      if (!collapse_ok(c.v1, c.v2, c.position)) continue;
      apply_collapse(c.v1, c.v2, c.position);
    }
    return alive_faces_ <= target_faces_;
  }

  TriangleMesh extract() const {
    TriangleMesh out;
    std::vector<int> remap(positions_.size(), -1);
    for (std::size_t f = 0; f < faces_.size(); ++f) {
      if (!face_alive_[f]) continue;
      Eigen::Vector3i face;
      for (int k = 0; k < 3; ++k) {
        const int v = faces_[f][k];
        if (remap[v] == -1) {
          remap[v] = static_cast<int>(out.vertices.size());
          out.vertices.push_back(positions_[v]);
        }
        face[k] = remap[v];
      }
      out.faces.push_back(face);
    }
    return drop_degenerate_faces(out);
  }

 private:
  void add_boundary_constraints() {
    std::map<std::pair<int, int>, std::pair<int, int>> edge_faces;  // edge -> (count, face)
    for (std::size_t f = 0; f < faces_.size(); ++f) {
      for (int k = 0; k < 3; ++k) {
        const auto key = std::minmax(faces_[f][k], faces_[f][(k + 1) % 3]);
        auto& slot = edge_faces[key];
        ++slot.first;
        slot.second = static_cast<int>(f);
      }
    }
    for (const auto& [edge, slot] : edge_faces) {
      if (slot.first != 1) continue;
      const auto& face = faces_[slot.second];
      const Eigen::Vector3d a = positions_[edge.first];
      const Eigen::Vector3d b = positions_[edge.second];
      const Eigen::Vector3d fn = (positions_[face[1]] - positions_[face[0]])
                                     .cross(positions_[face[2]] - positions_[face[0]]);
      Eigen::Vector3d n = fn.cross(b - a);
      const double len = n.norm();
      if (len <= 0) continue;
      // Heavy off-edge penalty keeps open boundaries (mesh rims) in place.
      const Eigen::Matrix4d k = plane_quadric(n / len, a, 1000.0 * (b - a).squaredNorm());
      quadrics_[edge.first] += k;
      quadrics_[edge.second] += k;
    }
  }

  bool adjacent(int v1, int v2) const {
    for (int f : vertex_faces_[v1]) {
      if (!face_alive_[f]) continue;
      const auto& face = faces_[f];
      if (face[0] == v2 || face[1] == v2 || face[2] == v2) return true;
    }
    return false;
  }

  void push_candidate(int v1, int v2) {
    if (v1 > v2) std::swap(v1, v2);
    const Eigen::Matrix4d q = quadrics_[v1] + quadrics_[v2];
    Eigen::Vector3d best = 0.5 * (positions_[v1] + positions_[v2]);
    double best_cost = quadric_cost(q, best);
    for (const Eigen::Vector3d& p : {positions_[v1], positions_[v2]}) {
      const double cost = quadric_cost(q, p);
      if (cost < best_cost) {
        best_cost = cost;
        best = p;
      }
    }
    Eigen::Matrix3d a = q.topLeftCorner<3, 3>();
    Eigen::FullPivLU<Eigen::Matrix3d> lu(a);
    lu.setThreshold(1e-9);
    if (lu.isInvertible()) {
      const Eigen::Vector3d opt = lu.solve((-q.block<3, 1>(0, 3)).eval());
      const double cost = quadric_cost(q, opt);
      if (cost < best_cost && within_growth_budget(opt)) {
        best_cost = cost;
        best = opt;
      }
    }
    heap_.push({best_cost, v1, v2, stamps_[v1], stamps_[v2], best});
  }

  bool within_growth_budget(const Eigen::Vector3d& p) const {
    Aabb grown = bbox_;
    grown.extend(p);
    return grown.diagonal() <= original_diagonal_ * 1.015;
  }

  bool collapse_ok(int v1, int v2, const Eigen::Vector3d& pos) {
    if (!within_growth_budget(pos)) return false;
    // Reject collapses that fold any surviving incident face over.
    for (int moved : {v1, v2}) {
      for (int f : vertex_faces_[moved]) {
        if (!face_alive_[f]) continue;
        const auto& face = faces_[f];
        bool has1 = false, has2 = false;
        for (int k = 0; k < 3; ++k) {
          has1 |= face[k] == v1;
          has2 |= face[k] == v2;
        }
        if (has1 && has2) continue;  // this face disappears
        Eigen::Vector3d before[3], after[3];
        for (int k = 0; k < 3; ++k) {
          before[k] = positions_[face[k]];
          after[k] = (face[k] == moved) ? pos : positions_[face[k]];
        }
        const Eigen::Vector3d n0 = (before[1] - before[0]).cross(before[2] - before[0]);
        const Eigen::Vector3d n1 = (after[1] - after[0]).cross(after[2] - after[0]);
        if (n0.dot(n1) <= 0) return false;
      }
    }
    return true;
  }

  void apply_collapse(int v1, int v2, const Eigen::Vector3d& pos) {
    positions_[v1] = pos;
    quadrics_[v1] += quadrics_[v2];
    vertex_alive_[v2] = false;
    for (int f : vertex_faces_[v2]) {
      if (!face_alive_[f]) continue;
      auto& face = faces_[f];
      bool has1 = false;
      for (int k = 0; k < 3; ++k) has1 |= face[k] == v1;
      if (has1) {
        face_alive_[f] = false;
        --alive_faces_;
      } else {
        for (int k = 0; k < 3; ++k)
          if (face[k] == v2) face[k] = v1;
        vertex_faces_[v1].push_back(f);
      }
    }
    vertex_faces_[v2].clear();
    ++stamps_[v1];
    ++stamps_[v2];
    bbox_.extend(pos);

    std::vector<int> neighbours;
    for (int f : vertex_faces_[v1]) {
      if (!face_alive_[f]) continue;
      for (int k = 0; k < 3; ++k)
        if (faces_[f][k] != v1) neighbours.push_back(faces_[f][k]);
    }
    std::sort(neighbours.begin(), neighbours.end());
    neighbours.erase(std::unique(neighbours.begin(), neighbours.end()), neighbours.end());
    for (int n : neighbours) push_candidate(v1, n);
  }

  int target_faces_;
  std::vector<Eigen::Vector3d> positions_;
  std::vector<Eigen::Vector3i> faces_;
  std::vector<bool> face_alive_;
  std::vector<bool> vertex_alive_;
  std::vector<Eigen::Matrix4d> quadrics_;
  std::vector<int> stamps_;
  std::vector<std::vector<int>> vertex_faces_;
  int alive_faces_;
  double original_diagonal_ = 0;
  Aabb bbox_;
  std::priority_queue<Candidate, std::vector<Candidate>, std::greater<Candidate>> heap_;
};

TriangleMesh cluster_vertices(const TriangleMesh& mesh, int cells_long_axis) {
  const Aabb box = bounding_box(mesh);
  const Eigen::Vector3d extent = box.extent().cwiseMax(1e-12);
  const double cell = extent.maxCoeff() / cells_long_axis;
  auto cell_of = [&](const Eigen::Vector3d& p) {
    Eigen::Vector3i c;
    for (int k = 0; k < 3; ++k) {
      const int n = std::max(1, static_cast<int>(std::ceil(extent[k] / cell)));
      c[k] = std::min(n - 1, static_cast<int>((p[k] - box.min[k]) / cell));
    }
    return std::make_tuple(c.x(), c.y(), c.z());
  };

  std::map<std::tuple<int, int, int>, int> cell_ids;
  std::vector<int> remap(mesh.vertices.size());
  std::vector<Eigen::Vector3d> sums;
  std::vector<int> counts;
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    const auto key = cell_of(mesh.vertices[i]);
    auto it = cell_ids.find(key);
    if (it == cell_ids.end()) {
      it = cell_ids.emplace(key, static_cast<int>(sums.size())).first;
      sums.push_back(Eigen::Vector3d::Zero());
      counts.push_back(0);
    }
    remap[i] = it->second;
    sums[it->second] += mesh.vertices[i];
    ++counts[it->second];
  }

  TriangleMesh out;
  out.vertices.resize(sums.size());
  for (std::size_t i = 0; i < sums.size(); ++i) out.vertices[i] = sums[i] / counts[i];
  for (const auto& f : mesh.faces) out.faces.push_back({remap[f[0]], remap[f[1]], remap[f[2]]});
  return drop_degenerate_faces(out);
}

}  // namespace

SimplifyResult simplify_mesh(const TriangleMesh& mesh, double target_fraction) {
  if (!(target_fraction > 0.0) || target_fraction > 1.0)
    throw std::runtime_error("simplify_mesh: target_fraction must be in (0, 1]");
  if (mesh.faces.empty()) throw std::runtime_error("simplify_mesh: empty mesh");
  if (target_fraction == 1.0) return {mesh, false};

  const int target_faces =
      std::max<int>(1, static_cast<int>(std::ceil(target_fraction * mesh.faces.size())));
  if (target_faces >= static_cast<int>(mesh.faces.size())) return {mesh, false};

  const TriangleMesh welded = weld_vertices(mesh);
  QuadricCollapser collapser(welded, target_faces);
  if (collapser.run()) return {collapser.extract(), false};

  // Vertex-clustering fallback: the finest grid whose face count satisfies
  // the target.
  const TriangleMesh partial = collapser.extract();
  for (int cells : {64, 48, 32, 24, 16, 12, 8, 6, 5, 4, 3, 2, 1}) {
    TriangleMesh clustered = cluster_vertices(partial, cells);
    if (!clustered.faces.empty() && static_cast<int>(clustered.faces.size()) <= target_faces)
      return {std::move(clustered), true};
  }
  throw std::runtime_error("simplify_mesh: cannot reach target face count " +
                           std::to_string(target_faces));
}

}  // namespace stereosil

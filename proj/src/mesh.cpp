#include "stereosil/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace stereosil {

void Aabb::extend(const Eigen::Vector3d& p) {
  min = min.cwiseMin(p);
  max = max.cwiseMax(p);
}

Aabb bounding_box(const TriangleMesh& mesh) {
  Aabb box;
  for (const auto& v : mesh.vertices) box.extend(v);
  return box;
}

double face_area(const TriangleMesh& mesh, int face) {
  const auto& f = mesh.faces[face];
  const Eigen::Vector3d e1 = mesh.vertices[f[1]] - mesh.vertices[f[0]];
  const Eigen::Vector3d e2 = mesh.vertices[f[2]] - mesh.vertices[f[0]];
  return 0.5 * e1.cross(e2).norm();
}

void validate_mesh(const TriangleMesh& mesh, const std::string& name) {
  const int n = static_cast<int>(mesh.vertices.size());
  for (const auto& v : mesh.vertices) {
    if (!v.allFinite()) throw std::runtime_error(name + ": non-finite vertex coordinate");
  }
  for (const auto& f : mesh.faces) {
    for (int k = 0; k < 3; ++k) {
      if (f[k] < 0 || f[k] >= n)
        throw std::runtime_error(name + ": face index " + std::to_string(f[k]) + " out of range");
    }
  }
}

TriangleMesh drop_degenerate_faces(const TriangleMesh& mesh, double area_tol) {
  TriangleMesh out;
  out.vertices = mesh.vertices;
  out.faces.reserve(mesh.faces.size());
  for (std::size_t i = 0; i < mesh.faces.size(); ++i) {
    const auto& f = mesh.faces[i];
    if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2]) continue;
    if (face_area(mesh, static_cast<int>(i)) <= area_tol) continue;
    out.faces.push_back(f);
  }
  return out;
}

namespace {

struct VertexKey {
  std::uint64_t x, y, z;
  bool operator==(const VertexKey& o) const { return x == o.x && y == o.y && z == o.z; }
};

struct VertexKeyHash {
  std::size_t operator()(const VertexKey& k) const {
    std::size_t h = std::hash<std::uint64_t>()(k.x);
    h ^= std::hash<std::uint64_t>()(k.y) + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    h ^= std::hash<std::uint64_t>()(k.z) + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    return h;
  }
};

VertexKey key_of(const Eigen::Vector3d& v) {
  VertexKey k;
  std::memcpy(&k.x, &v.x(), 8);
  std::memcpy(&k.y, &v.y(), 8);
  std::memcpy(&k.z, &v.z(), 8);
  return k;
}

}  // namespace

TriangleMesh weld_vertices(const TriangleMesh& mesh) {
  TriangleMesh out;
  std::unordered_map<VertexKey, int, VertexKeyHash> index;
  std::vector<int> remap(mesh.vertices.size());
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    const VertexKey k = key_of(mesh.vertices[i]);
    auto it = index.find(k);
    if (it == index.end()) {
      const int id = static_cast<int>(out.vertices.size());
      out.vertices.push_back(mesh.vertices[i]);
      index.emplace(k, id);
      remap[i] = id;
    } else {
      remap[i] = it->second;
    }
  }
  out.faces.reserve(mesh.faces.size());
  for (const auto& f : mesh.faces)
    out.faces.push_back({remap[f[0]], remap[f[1]], remap[f[2]]});
  return out;
}

TriangleMesh transform_mesh(const TriangleMesh& mesh, const Eigen::Isometry3d& t) {
  TriangleMesh out = mesh;
  for (auto& v : out.vertices) v = t * v;
  return out;
}

namespace {

TriangleMesh load_stl_binary(std::ifstream& in, const std::string& path) {
  char header[80];
  in.read(header, 80);
  std::uint32_t count = 0;
  in.read(reinterpret_cast<char*>(&count), 4);
  if (!in) throw std::runtime_error(path + ": truncated STL header");
  TriangleMesh raw;
  raw.vertices.reserve(count * 3u);
  raw.faces.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    float rec[12];
    in.read(reinterpret_cast<char*>(rec), 48);
    std::uint16_t attr;
    in.read(reinterpret_cast<char*>(&attr), 2);
    if (!in) throw std::runtime_error(path + ": truncated STL facet " + std::to_string(i));
    const int base = static_cast<int>(raw.vertices.size());
    for (int k = 0; k < 3; ++k)
      raw.vertices.emplace_back(rec[3 + 3 * k], rec[4 + 3 * k], rec[5 + 3 * k]);
    raw.faces.push_back({base, base + 1, base + 2});
  }
  return raw;
}

TriangleMesh load_stl_ascii(const std::string& path) {
  std::ifstream in(path);
  TriangleMesh raw;
  std::string tok;
  while (in >> tok) {
    if (tok == "vertex") {
      double x, y, z;
      if (!(in >> x >> y >> z)) throw std::runtime_error(path + ": malformed STL vertex");
      raw.vertices.emplace_back(x, y, z);
    }
  }
  if (raw.vertices.size() % 3 != 0)
    throw std::runtime_error(path + ": ASCII STL vertex count not a multiple of 3");
  for (int i = 0; i < static_cast<int>(raw.vertices.size()); i += 3)
    raw.faces.push_back({i, i + 1, i + 2});
  return raw;
}

TriangleMesh load_obj(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path + ": cannot open");
  TriangleMesh mesh;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag)) continue;
    if (tag == "v") {
      double x, y, z;
      if (!(ls >> x >> y >> z))
        throw std::runtime_error(path + ":" + std::to_string(lineno) + ": malformed vertex");
      mesh.vertices.emplace_back(x, y, z);
    } else if (tag == "f") {
      std::vector<int> idx;
      std::string corner;
      while (ls >> corner) {
        const std::size_t slash = corner.find('/');
        const int v = std::stoi(corner.substr(0, slash));
        if (v <= 0)
          throw std::runtime_error(path + ":" + std::to_string(lineno) + ": unsupported face index");
        idx.push_back(v - 1);
      }
      if (idx.size() < 3)
        throw std::runtime_error(path + ":" + std::to_string(lineno) + ": face with <3 corners");
      for (std::size_t k = 2; k < idx.size(); ++k)
        mesh.faces.push_back({idx[0], static_cast<int>(idx[k - 1]), static_cast<int>(idx[k])});
    }
  }
  return mesh;
}

bool has_suffix(const std::string& s, const std::string& suf) {
  if (s.size() < suf.size()) return false;
  std::string tail = s.substr(s.size() - suf.size());
  std::transform(tail.begin(), tail.end(), tail.begin(), ::tolower);
  return tail == suf;
}

}  // namespace

TriangleMesh load_mesh(const std::string& path) {
  TriangleMesh raw;
  if (has_suffix(path, ".obj")) {
    raw = load_obj(path);
  } else if (has_suffix(path, ".stl")) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error(path + ": cannot open");
    char probe[6] = {0};
    in.read(probe, 5);
    in.seekg(0);
    // "solid" prefix alone is not conclusive; check that the record count is
    // consistent with the file size before trusting the binary layout.
    bool binary = std::strncmp(probe, "solid", 5) != 0;
    if (!binary) {
      in.seekg(0, std::ios::end);
      const std::streamoff size = in.tellg();
      in.seekg(80);
      std::uint32_t count = 0;
      in.read(reinterpret_cast<char*>(&count), 4);
      binary = in && (size == 84 + static_cast<std::streamoff>(count) * 50);
      in.seekg(0);
    }
    if (binary) {
      raw = load_stl_binary(in, path);
    } else {
      in.close();
      raw = load_stl_ascii(path);
    }
    raw = weld_vertices(raw);
  } else {
    throw std::runtime_error(path + ": unsupported mesh format");
  }
  validate_mesh(raw, path);
  TriangleMesh mesh = drop_degenerate_faces(raw);
  if (mesh.faces.empty() && !raw.faces.empty())
    throw std::runtime_error(path + ": all faces degenerate");
  return mesh;
}

void save_stl_binary(const TriangleMesh& mesh, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path + ": cannot write");
  char header[80] = {0};
  std::strncpy(header, "stereosil mesh", sizeof(header) - 1);
  out.write(header, 80);
  const std::uint32_t count = static_cast<std::uint32_t>(mesh.faces.size());
  out.write(reinterpret_cast<const char*>(&count), 4);
  for (const auto& f : mesh.faces) {
    const Eigen::Vector3d e1 = mesh.vertices[f[1]] - mesh.vertices[f[0]];
    const Eigen::Vector3d e2 = mesh.vertices[f[2]] - mesh.vertices[f[0]];
    Eigen::Vector3d n = e1.cross(e2);
    const double len = n.norm();
    if (len > 0) n /= len;
    float rec[12] = {static_cast<float>(n.x()), static_cast<float>(n.y()), static_cast<float>(n.z())};
    for (int k = 0; k < 3; ++k) {
      const auto& v = mesh.vertices[f[k]];
      rec[3 + 3 * k] = static_cast<float>(v.x());
      rec[4 + 3 * k] = static_cast<float>(v.y());
      rec[5 + 3 * k] = static_cast<float>(v.z());
    }
    out.write(reinterpret_cast<const char*>(rec), 48);
    const std::uint16_t attr = 0;
    out.write(reinterpret_cast<const char*>(&attr), 2);
  }
}

void save_obj(const TriangleMesh& mesh, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path + ": cannot write");
  out.precision(17);
  for (const auto& v : mesh.vertices) out << "v " << v.x() << " " << v.y() << " " << v.z() << "\n";
  for (const auto& f : mesh.faces) out << "f " << f[0] + 1 << " " << f[1] + 1 << " " << f[2] + 1 << "\n";
}

TriangleMesh make_box(const Eigen::Vector3d& size, const Eigen::Vector3d& centre) {
  const Eigen::Vector3d h = 0.5 * size;
  TriangleMesh m;
  for (int i = 0; i < 8; ++i) {
    m.vertices.emplace_back(centre.x() + ((i & 1) ? h.x() : -h.x()),
                            centre.y() + ((i & 2) ? h.y() : -h.y()),
                            centre.z() + ((i & 4) ? h.z() : -h.z()));
  }
  const int quads[6][4] = {{0, 2, 3, 1}, {4, 5, 7, 6}, {0, 1, 5, 4},
                           {2, 6, 7, 3}, {0, 4, 6, 2}, {1, 3, 7, 5}};
  for (const auto& q : quads) {
    m.faces.push_back({q[0], q[1], q[2]});
    m.faces.push_back({q[0], q[2], q[3]});
  }
  return m;
}

TriangleMesh make_cylinder(double radius, double length, int segments) {
  TriangleMesh m;
  const double half = 0.5 * length;
  for (int i = 0; i < segments; ++i) {
    const double a = 2.0 * M_PI * i / segments;
    m.vertices.emplace_back(radius * std::cos(a), radius * std::sin(a), -half);
    m.vertices.emplace_back(radius * std::cos(a), radius * std::sin(a), half);
  }
  const int bottom_centre = static_cast<int>(m.vertices.size());
  m.vertices.emplace_back(0, 0, -half);
  const int top_centre = bottom_centre + 1;
  m.vertices.emplace_back(0, 0, half);
  for (int i = 0; i < segments; ++i) {
    const int j = (i + 1) % segments;
    const int b0 = 2 * i, t0 = 2 * i + 1, b1 = 2 * j, t1 = 2 * j + 1;
    m.faces.push_back({b0, b1, t1});
    m.faces.push_back({b0, t1, t0});
    m.faces.push_back({bottom_centre, b1, b0});
    m.faces.push_back({top_centre, t0, t1});
  }
  return m;
}

TriangleMesh make_icosphere(double radius, int subdivisions) {
  const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
  TriangleMesh m;
  m.vertices = {{-1, phi, 0}, {1, phi, 0},  {-1, -phi, 0}, {1, -phi, 0},
                {0, -1, phi}, {0, 1, phi},  {0, -1, -phi}, {0, 1, -phi},
                {phi, 0, -1}, {phi, 0, 1},  {-phi, 0, -1}, {-phi, 0, 1}};
  m.faces = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
             {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
             {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
             {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  for (auto& v : m.vertices) v.normalize();
  for (int s = 0; s < subdivisions; ++s) {
    TriangleMesh next;
    next.vertices = m.vertices;
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      const int id = static_cast<int>(next.vertices.size());
      next.vertices.push_back((m.vertices[a] + m.vertices[b]).normalized());
      midpoint.emplace(key, id);
      return id;
    };
    for (const auto& f : m.faces) {
      const int ab = mid(f[0], f[1]), bc = mid(f[1], f[2]), ca = mid(f[2], f[0]);
      next.faces.push_back({f[0], ab, ca});
      next.faces.push_back({f[1], bc, ab});
      next.faces.push_back({f[2], ca, bc});
      next.faces.push_back({ab, bc, ca});
    }
    m = std::move(next);
  }
  for (auto& v : m.vertices) v *= radius;
  return m;
}

TriangleMesh merge_meshes(const std::vector<TriangleMesh>& parts) {
  TriangleMesh out;
  for (const TriangleMesh& part : parts) {
    const int offset = static_cast<int>(out.vertices.size());
    out.vertices.insert(out.vertices.end(), part.vertices.begin(), part.vertices.end());
    for (const auto& f : part.faces) {
      out.faces.push_back({f[0] + offset, f[1] + offset, f[2] + offset});
    }
  }
  return out;
}

}  // namespace stereosil

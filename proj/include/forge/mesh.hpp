#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <fmt/format.h>

#include "forge/error.hpp"
#include "forge/geometry.hpp"

namespace forge {

using Triangle = std::array<std::int32_t, 3>;

struct TriangleMesh {
  std::vector<Vec3> vertices;      // mm
  std::vector<Triangle> triangles;  // counter-clockwise seen from outside

  bool empty() const { return triangles.empty(); }

  void append(const TriangleMesh& other) {
    const auto base = static_cast<std::int32_t>(vertices.size());
    vertices.insert(vertices.end(), other.vertices.begin(), other.vertices.end());
    for (const auto& t : other.triangles) triangles.push_back({t[0] + base, t[1] + base, t[2] + base});
  }

  void transform(const RigidTransform& xf) {
    for (auto& v : vertices) v = xf.apply(v);
  }
};

struct AlignedBox {
  Vec3 min = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 max = Vec3::Constant(-std::numeric_limits<double>::infinity());

  void extend(const Vec3& p) {
    min = min.cwiseMin(p);
    max = max.cwiseMax(p);
  }
  bool valid() const { return (max.array() >= min.array()).all(); }
  Vec3 extent() const { return max - min; }
};

inline AlignedBox bounding_box(const TriangleMesh& mesh) {
  AlignedBox box;
  for (const auto& v : mesh.vertices) box.extend(v);
  return box;
}

namespace detail {
inline std::uint64_t edge_key(std::int32_t a, std::int32_t b) {
  const auto lo = static_cast<std::uint64_t>(std::min(a, b));
  const auto hi = static_cast<std::uint64_t>(std::max(a, b));
  return (lo << 32) | hi;
}
}  // namespace detail

/// Every undirected edge used by exactly two triangles, traversed once in each
/// direction (closed, consistently oriented 2-manifold).
inline bool is_watertight(const TriangleMesh& mesh) {
  std::map<std::uint64_t, std::pair<int, int>> uses;  // key -> (forward, backward)
  for (const auto& t : mesh.triangles) {
    for (int e = 0; e < 3; ++e) {
      const auto a = t[e];
      const auto b = t[(e + 1) % 3];
      if (a == b) return false;
      auto& u = uses[detail::edge_key(a, b)];
      (a < b ? u.first : u.second) += 1;
    }
  }
  return std::all_of(uses.begin(), uses.end(), [](const auto& kv) { return kv.second.first == 1 && kv.second.second == 1; });
}

/// V - E + F over referenced vertices.
inline long euler_characteristic(const TriangleMesh& mesh) {
  std::vector<char> used(mesh.vertices.size(), 0);
  std::map<std::uint64_t, int> edges;
  for (const auto& t : mesh.triangles) {
    for (int e = 0; e < 3; ++e) {
      used[t[e]] = 1;
      edges[detail::edge_key(t[e], t[(e + 1) % 3])] = 1;
    }
  }
  const long v = std::count(used.begin(), used.end(), 1);
  return v - static_cast<long>(edges.size()) + static_cast<long>(mesh.triangles.size());
}

/// Connected components by shared vertices (vertex index connectivity).
inline int connected_components(const TriangleMesh& mesh) {
  std::vector<std::int32_t> parent(mesh.vertices.size());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::int32_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  std::vector<char> used(mesh.vertices.size(), 0);
  for (const auto& t : mesh.triangles) {
    for (int e = 0; e < 3; ++e) {
      used[t[e]] = 1;
      const auto a = find(t[e]);
      const auto b = find(t[(e + 1) % 3]);
      if (a != b) parent[a] = b;
    }
  }
  int count = 0;
  for (std::size_t i = 0; i < parent.size(); ++i) {
    if (used[i] && find(static_cast<std::int32_t>(i)) == static_cast<std::int32_t>(i)) ++count;
  }
  return count;
}

/// Enclosed volume by the divergence theorem (positive for outward winding).
inline double signed_volume(const TriangleMesh& mesh) {
  double six_v = 0.0;
  for (const auto& t : mesh.triangles) {
    six_v += mesh.vertices[t[0]].dot(mesh.vertices[t[1]].cross(mesh.vertices[t[2]]));
  }
  return six_v / 6.0;
}

inline void write_ascii_stl(const TriangleMesh& mesh, const std::string& path, const std::string& name = "forge") {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::kIo, "cannot open " + path);
  out << "solid " << name << "\n";
  for (const auto& t : mesh.triangles) {
    const Vec3& a = mesh.vertices[t[0]];
    const Vec3& b = mesh.vertices[t[1]];
    const Vec3& c = mesh.vertices[t[2]];
    Vec3 n = (b - a).cross(c - a);
    if (n.norm() > 0) n.normalize();
    out << fmt::format("  facet normal {:.6e} {:.6e} {:.6e}\n    outer loop\n", n.x(), n.y(), n.z());
    for (const Vec3* v : {&a, &b, &c}) out << fmt::format("      vertex {:.6e} {:.6e} {:.6e}\n", v->x(), v->y(), v->z());
    out << "    endloop\n  endfacet\n";
  }
  out << "endsolid " << name << "\n";
}

// Primitive solids, mostly for tests and phantoms.

inline TriangleMesh make_box_mesh(const Vec3& lo, const Vec3& hi) {
  TriangleMesh m;
  for (int i = 0; i < 8; ++i) {
    m.vertices.emplace_back((i & 1) ? hi.x() : lo.x(), (i & 2) ? hi.y() : lo.y(), (i & 4) ? hi.z() : lo.z());
  }
  const std::array<std::array<std::int32_t, 4>, 6> faces = {{
      {0, 4, 6, 2},  // -x
      {1, 3, 7, 5},  // +x
      {0, 1, 5, 4},  // -y
      {2, 6, 7, 3},  // +y
      {0, 2, 3, 1},  // -z
      {4, 5, 7, 6},  // +z
  }};
  for (const auto& f : faces) {
    m.triangles.push_back({f[0], f[1], f[2]});
    m.triangles.push_back({f[0], f[2], f[3]});
  }
  return m;
}

/// Geodesic sphere by repeated subdivision of an icosahedron.
inline TriangleMesh make_icosphere(const Vec3& center, double radius, int subdivisions) {
  const double p = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> v = {{-1, p, 0}, {1, p, 0}, {-1, -p, 0}, {1, -p, 0}, {0, -1, p}, {0, 1, p},
                         {0, -1, -p}, {0, 1, -p}, {p, 0, -1}, {p, 0, 1}, {-p, 0, -1}, {-p, 0, 1}};
  for (auto& x : v) x.normalize();
  std::vector<Triangle> f = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
                             {11, 10, 2}, {10, 7, 6}, {7, 1, 8},   {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
                             {3, 8, 9},  {4, 9, 5},  {2, 4, 11},  {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::uint64_t, std::int32_t> mid;
    auto midpoint = [&](std::int32_t a, std::int32_t b) {
      const auto key = detail::edge_key(a, b);
      if (auto it = mid.find(key); it != mid.end()) return it->second;
      v.push_back((v[a] + v[b]).normalized());
      return mid[key] = static_cast<std::int32_t>(v.size() - 1);
    };
    std::vector<Triangle> next;
    next.reserve(f.size() * 4);
    for (const auto& t : f) {
      const auto ab = midpoint(t[0], t[1]);
      const auto bc = midpoint(t[1], t[2]);
      const auto ca = midpoint(t[2], t[0]);
      next.push_back({t[0], ab, ca});
      next.push_back({t[1], bc, ab});
      next.push_back({t[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    f = std::move(next);
  }
  TriangleMesh m;
  m.vertices.reserve(v.size());
  for (const auto& x : v) m.vertices.push_back(center + radius * x);
  m.triangles = std::move(f);
  return m;
}

}  // namespace forge

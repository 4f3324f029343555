#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <vector>

#include "forge/error.hpp"
#include "forge/geometry.hpp"
#include "forge/mesh.hpp"
#include "forge/parallel.hpp"
#include "forge/volume.hpp"

namespace forge {

inline constexpr double kAirHu = -1000.0;
inline constexpr double kDefaultMuWaterPerMm = 0.02;

namespace detail {

struct Point2 {
  double y;
  double z;
};

inline int sign_of(double v) { return (v > 0) - (v < 0); }

/// Orientation of p relative to the directed edge a->b in the (y, z) plane,
/// with p symbolically shifted by (+eps, +eps^2). Never returns zero for a
/// non-degenerate edge. The edge is evaluated in canonical vertex order, so two
/// triangles sharing an edge always get exactly opposite answers.
inline int perturbed_orient(Point2 a, Point2 b, Point2 p) {
  int flip = 1;
  if (b.y < a.y || (b.y == a.y && b.z < a.z)) {
    std::swap(a, b);
    flip = -1;
  }
  const double dy = b.y - a.y;
  const double dz = b.z - a.z;
  const double det = dy * (p.z - a.z) - dz * (p.y - a.y);
  if (det != 0.0) return flip * sign_of(det);
  if (dz != 0.0) return flip * -sign_of(dz);
  return flip * sign_of(dy);
}

inline int ceil_index(double v) { return static_cast<int>(std::ceil(v)); }
inline int floor_index(double v) { return static_cast<int>(std::floor(v)); }

}  // namespace detail

/// Grid that tightly bounds `box` plus padding, with voxel faces aligned to
/// box.min - padding.
inline VolumeGrid grid_around(const AlignedBox& box, double spacing_mm, double padding_mm) {
  require(box.valid(), ErrorKind::kInvalidArgument, "grid_around: empty bounding box");
  require(spacing_mm > 0 && padding_mm >= 0, ErrorKind::kInvalidArgument, "grid_around: spacing must be > 0, padding >= 0");
  VolumeGrid g;
  g.spacing_mm = Vec3::Constant(spacing_mm);
  const Vec3 lo = box.min - Vec3::Constant(padding_mm);
  g.origin_mm = lo + Vec3::Constant(0.5 * spacing_mm);
  for (int a = 0; a < 3; ++a) {
    const double n = (box.max[a] - box.min[a] + 2 * padding_mm) / spacing_mm;
    g.dims[a] = std::max(1, static_cast<int>(std::ceil(n - 1e-9)));
  }
  return g;
}

/// Inside/outside classification of voxel centers by crossing parity along +x.
/// Rows with an odd crossing count indicate a leaking surface; more than
/// `max_odd_row_fraction` of them is an integrity error.
inline OccupancyVolume voxelize_mesh_on_grid(const TriangleMesh& mesh, const VolumeGrid& grid, int threads = 1,
                                             double max_odd_row_fraction = 1e-4) {
  OccupancyVolume out(grid, VolumeKind::kOccupancy, 0);
  if (mesh.empty()) return out;
  const int ny = grid.dims[1];
  const int nz = grid.dims[2];
  const double s_y = grid.spacing_mm.y();
  const double s_z = grid.spacing_mm.z();

  // Bin triangles by the z rows their projection can touch.
  std::vector<std::vector<std::int32_t>> bins(nz);
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tri = mesh.triangles[t];
    double zmin = mesh.vertices[tri[0]].z(), zmax = zmin;
    for (int e = 1; e < 3; ++e) {
      zmin = std::min(zmin, mesh.vertices[tri[e]].z());
      zmax = std::max(zmax, mesh.vertices[tri[e]].z());
    }
    const int k0 = std::max(0, detail::ceil_index((zmin - grid.origin_mm.z()) / s_z) - 1);
    const int k1 = std::min(nz - 1, detail::floor_index((zmax - grid.origin_mm.z()) / s_z) + 1);
    for (int k = k0; k <= k1; ++k) bins[k].push_back(static_cast<std::int32_t>(t));
  }

  std::atomic<long> odd_rows{0};
  parallel_for(0, nz, threads, [&](long k) {
    const double zc = grid.origin_mm.z() + k * s_z;
    std::vector<std::vector<double>> rows(ny);
    for (const auto t : bins[k]) {
      const auto& tri = mesh.triangles[t];
      const Vec3& A = mesh.vertices[tri[0]];
      const Vec3& B = mesh.vertices[tri[1]];
      const Vec3& C = mesh.vertices[tri[2]];
      const Vec3 n = (B - A).cross(C - A);
      if (n.x() == 0.0) continue;  // parallel to the ray direction
      const detail::Point2 a{A.y(), A.z()}, b{B.y(), B.z()}, c{C.y(), C.z()};
      const double ymin = std::min({A.y(), B.y(), C.y()});
      const double ymax = std::max({A.y(), B.y(), C.y()});
      const int j0 = std::max(0, detail::ceil_index((ymin - grid.origin_mm.y()) / s_y) - 1);
      const int j1 = std::min(ny - 1, detail::floor_index((ymax - grid.origin_mm.y()) / s_y) + 1);
      for (int j = j0; j <= j1; ++j) {
        const detail::Point2 p{grid.origin_mm.y() + j * s_y, zc};
        const int s0 = detail::perturbed_orient(a, b, p);
        const int s1 = detail::perturbed_orient(b, c, p);
        const int s2 = detail::perturbed_orient(c, a, p);
        if (s0 != s1 || s1 != s2) continue;
        const double x = A.x() - (n.y() * (p.y - A.y()) + n.z() * (p.z - A.z())) / n.x();
        rows[j].push_back(x);
      }
    }
    for (int j = 0; j < ny; ++j) {
      auto& xs = rows[j];
      if (xs.empty()) continue;
      std::sort(xs.begin(), xs.end());
      if (xs.size() % 2 == 1) odd_rows.fetch_add(1);
      for (std::size_t q = 0; q + 1 < xs.size(); q += 2) {
        // Centers x_i with xs[q] < x_i <= xs[q+1] have odd parity.
        const double lo = (xs[q] - grid.origin_mm.x()) / grid.spacing_mm.x();
        const double hi = (xs[q + 1] - grid.origin_mm.x()) / grid.spacing_mm.x();
        int i0 = std::max(0, detail::floor_index(lo) + 1);
        int i1 = std::min(grid.dims[0] - 1, detail::floor_index(hi));
        for (int i = i0; i <= i1; ++i) out.at(i, j, static_cast<int>(k)) = 1;
      }
    }
  });

  const double rows_total = static_cast<double>(ny) * nz;
  if (odd_rows.load() > max_odd_row_fraction * rows_total) {
    fail(ErrorKind::kVoxelizationIntegrity, "mesh is not watertight: " + std::to_string(odd_rows.load()) + " of " +
                                                std::to_string(static_cast<long>(rows_total)) + " rows have odd parity");
  }
  return out;
}

inline OccupancyVolume voxelize_mesh(const TriangleMesh& mesh, double spacing_mm, double padding_mm, int threads = 1) {
  require(!mesh.empty(), ErrorKind::kInvalidArgument, "voxelize_mesh: empty mesh has no extent; use voxelize_mesh_on_grid");
  return voxelize_mesh_on_grid(mesh, grid_around(bounding_box(mesh), spacing_mm, padding_mm), threads);
}

/// Nearest-neighbour resampling of a source occupancy onto a target grid.
/// `pose` maps source-local millimeters into the target frame. A target voxel is
/// set if any of its k^3 sub-samples lands in an occupied source voxel.
inline OccupancyVolume resample_occupancy_to_grid(const OccupancyVolume& occ, const VolumeGrid& target,
                                                  const RigidTransform& pose, int supersample = 2, int threads = 1) {
  require(occ.kind == VolumeKind::kOccupancy, ErrorKind::kInvalidArgument, "resample: source must be an occupancy volume");
  require(supersample >= 1, ErrorKind::kInvalidArgument, "resample: supersample must be >= 1");
  OccupancyVolume out(target, VolumeKind::kOccupancy, 0);

  AlignedBox box;
  const Vec3 lo = occ.grid.lower_corner();
  const Vec3 hi = occ.grid.upper_corner();
  for (int c = 0; c < 8; ++c) {
    box.extend(pose.apply(Vec3((c & 1) ? hi.x() : lo.x(), (c & 2) ? hi.y() : lo.y(), (c & 4) ? hi.z() : lo.z())));
  }
  std::array<int, 3> i0{}, i1{};
  for (int a = 0; a < 3; ++a) {
    i0[a] = std::max(0, detail::floor_index((box.min[a] - target.origin_mm[a]) / target.spacing_mm[a]) - 1);
    i1[a] = std::min(target.dims[a] - 1, detail::ceil_index((box.max[a] - target.origin_mm[a]) / target.spacing_mm[a]) + 1);
    if (i1[a] < i0[a]) return out;
  }

  std::vector<Vec3> offsets;
  for (int a = 0; a < supersample; ++a)
    for (int b = 0; b < supersample; ++b)
      for (int c = 0; c < supersample; ++c)
        offsets.push_back(target.spacing_mm.cwiseProduct(
            Vec3((a + 0.5) / supersample - 0.5, (b + 0.5) / supersample - 0.5, (c + 0.5) / supersample - 0.5)));

  const RigidTransform inv = pose.inverse();
  parallel_for(i0[2], i1[2] + 1, threads, [&](long k) {
    for (int j = i0[1]; j <= i1[1]; ++j) {
      for (int i = i0[0]; i <= i1[0]; ++i) {
        const Vec3 center = target.center(i, j, static_cast<int>(k));
        for (const Vec3& off : offsets) {
          const Vec3 idx = occ.grid.to_index(inv.apply(center + off));
          const int si = static_cast<int>(std::lround(idx.x()));
          const int sj = static_cast<int>(std::lround(idx.y()));
          const int sk = static_cast<int>(std::lround(idx.z()));
          if (occ.grid.in_bounds(si, sj, sk) && occ.at(si, sj, sk)) {
            out.at(i, j, static_cast<int>(k)) = 1;
            break;
          }
        }
      }
    }
  });
  return out;
}

inline OccupancyVolume occupancy_union(const OccupancyVolume& a, const OccupancyVolume& b) {
  require(a.grid.same_as(b.grid), ErrorKind::kIncompatibleGrids, "occupancy_union: grids differ");
  OccupancyVolume out = a;
  for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] = a.values[i] | b.values[i];
  return out;
}

inline OccupancyVolume occupancy_intersection(const OccupancyVolume& a, const OccupancyVolume& b) {
  require(a.grid.same_as(b.grid), ErrorKind::kIncompatibleGrids, "occupancy_intersection: grids differ");
  OccupancyVolume out = a;
  for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] = a.values[i] & b.values[i];
  return out;
}

inline std::size_t occupied_count(const OccupancyVolume& occ) {
  return static_cast<std::size_t>(std::count(occ.values.begin(), occ.values.end(), std::uint8_t{1}));
}

/// Drilling: voxels covered by the tool become air. Input is left untouched.
inline ScalarVolume carve_drill(const ScalarVolume& ct, const OccupancyVolume& tool_occ, double air_hu = kAirHu) {
  require(ct.grid.same_as(tool_occ.grid), ErrorKind::kIncompatibleGrids, "carve_drill: CT and occupancy grids differ");
  ScalarVolume out = ct;
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    if (tool_occ.values[i]) out.values[i] = static_cast<float>(air_hu);
  }
  return out;
}

/// mu = mu_water * (1 + HU / 1000), clamped at zero.
inline ScalarVolume hu_to_attenuation(const ScalarVolume& ct, double mu_water_per_mm = kDefaultMuWaterPerMm) {
  require(ct.kind == VolumeKind::kHu, ErrorKind::kInvalidArgument, "hu_to_attenuation: input must be an HU volume");
  ScalarVolume out;
  out.grid = ct.grid;
  out.kind = VolumeKind::kAttenuation;
  out.values.resize(ct.values.size());
  for (std::size_t i = 0; i < ct.values.size(); ++i) {
    out.values[i] = static_cast<float>(std::max(0.0, mu_water_per_mm * (1.0 + ct.values[i] / 1000.0)));
  }
  return out;
}

/// Constant-material attenuation volume (metal parts bypass the HU model).
inline ScalarVolume occupancy_to_attenuation(const OccupancyVolume& occ, double mu_per_mm) {
  ScalarVolume out;
  out.grid = occ.grid;
  out.kind = VolumeKind::kAttenuation;
  out.values.resize(occ.values.size());
  for (std::size_t i = 0; i < occ.values.size(); ++i) out.values[i] = occ.values[i] ? static_cast<float>(mu_per_mm) : 0.0f;
  return out;
}

inline ScalarVolume occupancy_as_scalar(const OccupancyVolume& occ) {
  ScalarVolume out;
  out.grid = occ.grid;
  out.kind = VolumeKind::kOccupancy;
  out.values.assign(occ.values.begin(), occ.values.end());
  return out;
}

}  // namespace forge

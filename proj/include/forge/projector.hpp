#pragma once

// Line-integral DRR rendering, segmentation masks, landmark projection and
// belief-map synthesis.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "forge/cdm.hpp"
#include "forge/error.hpp"
#include "forge/geometry.hpp"
#include "forge/image.hpp"
#include "forge/parallel.hpp"
#include "forge/volume.hpp"

namespace forge {

/// A volume placed in the world: `pose` maps volume-local millimeters to world.
struct PlacedVolume {
  const ScalarVolume* volume = nullptr;
  RigidTransform pose;
};

struct RaycastOptions {
  /// Marching step in mm; <= 0 selects half of each volume's minimum spacing.
  double step_mm = 0.0;
  int threads = 1;
};

namespace detail {

/// Trilinear sample at a continuous voxel index; indices outside the lattice
/// are clamped to the border voxels.
inline double trilinear(const ScalarVolume& vol, const Vec3& idx) {
  const auto& d = vol.grid.dims;
  std::size_t i0[3], i1[3];
  double f[3];
  for (int a = 0; a < 3; ++a) {
    const double c = std::clamp(idx[a], 0.0, static_cast<double>(d[a] - 1));
    const int lo = std::min(static_cast<int>(c), d[a] - 1);
    i0[a] = static_cast<std::size_t>(lo);
    i1[a] = static_cast<std::size_t>(std::min(lo + 1, d[a] - 1));
    f[a] = c - lo;
  }
  const float* v = vol.values.data();
  const std::size_t sy = static_cast<std::size_t>(d[0]);
  const std::size_t sz = sy * static_cast<std::size_t>(d[1]);
  auto lerp = [](double a, double b, double t) { return a + (b - a) * t; };
  auto row = [&](std::size_t y, std::size_t z) {
    const float* r = v + z * sz + y * sy;
    return lerp(r[i0[0]], r[i1[0]], f[0]);
  };
  return lerp(lerp(row(i0[1], i0[2]), row(i1[1], i0[2]), f[1]), lerp(row(i0[1], i1[2]), row(i1[1], i1[2]), f[1]), f[2]);
}

/// Slab clipping of origin + t*dir against [lo, hi]; false when missed.
inline bool clip_ray(const Vec3& origin, const Vec3& dir, const Vec3& lo, const Vec3& hi, double& t0, double& t1) {
  t0 = 0.0;
  t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (dir[a] == 0.0) {
      if (origin[a] < lo[a] || origin[a] > hi[a]) return false;
      continue;
    }
    double ta = (lo[a] - origin[a]) / dir[a];
    double tb = (hi[a] - origin[a]) / dir[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  return t1 > t0;
}

/// Integral of the trilinear field along world ray (source, unit dir).
/// The clipped chord is split into equal steps no longer than `step`, each
/// sampled at its midpoint.
inline double integrate_volume(const PlacedVolume& pv, const RigidTransform& world_to_local, const Vec3& source,
                               const Vec3& dir, double step) {
  const ScalarVolume& vol = *pv.volume;
  const Vec3 o = world_to_local.apply(source);
  const Vec3 dl = world_to_local.apply_direction(dir);
  double t0 = 0, t1 = 0;
  if (!clip_ray(o, dl, vol.grid.lower_corner(), vol.grid.upper_corner(), t0, t1)) return 0.0;
  const double length = t1 - t0;
  const long n = std::max(1L, static_cast<long>(std::ceil(length / step - 1e-9)));
  const double h = length / n;
  const Vec3 idx0 = vol.grid.to_index(o + (t0 + 0.5 * h) * dl);
  const Vec3 didx = (h * dl).cwiseQuotient(vol.grid.spacing_mm);
  double sum = 0.0;
  for (long i = 0; i < n; ++i) sum += trilinear(vol, idx0 + static_cast<double>(i) * didx);
  return sum * h;
}

}  // namespace detail

/// Per-pixel line integrals p = sum over volumes of the integral of mu ds.
inline Image2D raycast_line_integrals(std::span<const PlacedVolume> vols, const CameraPose& cam,
                                      const ProjectionGeometry& g, const RaycastOptions& opts = {}) {
  g.validate();
  for (const auto& pv : vols) {
    require(pv.volume != nullptr, ErrorKind::kInvalidArgument, "raycast: null volume");
    pv.volume->grid.validate();
    require(pv.volume->values.size() == pv.volume->grid.voxel_count(), ErrorKind::kInvalidArgument,
            "raycast: volume array length mismatch");
  }
  std::vector<RigidTransform> to_local;
  std::vector<double> steps;
  for (const auto& pv : vols) {
    to_local.push_back(pv.pose.inverse());
    steps.push_back(opts.step_mm > 0 ? opts.step_mm : 0.5 * pv.volume->grid.min_spacing());
  }

  Image2D img(g.detector_cols, g.detector_rows, g.pixel_size_mm, ImageKind::kLineIntegral);
  parallel_for(0, g.detector_rows, opts.threads, [&](long v) {
    for (int u = 0; u < g.detector_cols; ++u) {
      const Vec3 dir = (cam.pixel_position(g, u, static_cast<double>(v)) - cam.source_position).normalized();
      double p = 0.0;
      for (std::size_t i = 0; i < vols.size(); ++i) p += detail::integrate_volume(vols[i], to_local[i], cam.source_position, dir, steps[i]);
      img.at(u, static_cast<int>(v)) = p;
    }
  });
  return img;
}

/// Binary silhouette: 1 where the ray accumulates any occupancy.
inline Image2D project_mask(const ScalarVolume& notch_occupancy, const RigidTransform& pose, const CameraPose& cam,
                            const ProjectionGeometry& g, const RaycastOptions& opts = {}) {
  const PlacedVolume pv{&notch_occupancy, pose};
  Image2D img = raycast_line_integrals(std::span<const PlacedVolume>(&pv, 1), cam, g, opts);
  img.kind = ImageKind::kMask;
  for (double& x : img.values) x = x > 0.0 ? 1.0 : 0.0;
  return img;
}

/// Proximal landmark first, distal second.
inline std::array<PixelCoord, 2> render_landmarks(const CdmPosedModel& model, const RigidTransform& pose,
                                                  const CameraPose& cam, const ProjectionGeometry& g) {
  return {project_point(cam, g, pose.apply(model.landmark_proximal)), project_point(cam, g, pose.apply(model.landmark_distal))};
}

struct BeliefMapParams {
  double sigma_px = 5.0;
  double amplitude = 1.0;

  void validate() const {
    require(sigma_px > 0 && std::isfinite(sigma_px), ErrorKind::kInvalidArgument, "belief map: sigma must be > 0");
  }
};

/// Unnormalized Gaussian bump, peak `amplitude` at the landmark.
inline Image2D belief_map(PixelCoord pt, const BeliefMapParams& params, int cols, int rows, double pixel_size_mm = 0.62) {
  params.validate();
  Image2D img(cols, rows, pixel_size_mm, ImageKind::kProbability);
  const double inv = 1.0 / (2.0 * params.sigma_px * params.sigma_px);
  std::vector<double> gx(cols), gy(rows);
  for (int x = 0; x < cols; ++x) gx[x] = std::exp(-(x - pt.u) * (x - pt.u) * inv);
  for (int y = 0; y < rows; ++y) gy[y] = std::exp(-(y - pt.v) * (y - pt.v) * inv);
  for (int y = 0; y < rows; ++y)
    for (int x = 0; x < cols; ++x) img.at(x, y) = params.amplitude * gx[x] * gy[y];
  return img;
}

struct NormalizedImage {
  Image2D image;
  double min = 0.0;
  double max = 0.0;
};

/// Per-image min-max map to [-1, 1]; constant input maps to zeros.
inline NormalizedImage normalize_line_integrals(const Image2D& img) {
  require(img.kind == ImageKind::kLineIntegral, ErrorKind::kInvalidArgument, "normalize: input must be line integrals");
  NormalizedImage out{img, img.min_value(), img.max_value()};
  out.image.kind = ImageKind::kNormalized;
  const double range = out.max - out.min;
  for (double& x : out.image.values) x = range > 0 ? 2.0 * (x - out.min) / range - 1.0 : 0.0;
  return out;
}

/// Quantum noise in the line-integral domain:
/// p' = -ln(max(Poisson(N0 exp(-p)), 1) / N0). Pixels are drawn in raster order.
inline Image2D add_poisson_noise(const Image2D& img, double photons_n0, std::uint64_t seed) {
  require(img.kind == ImageKind::kLineIntegral, ErrorKind::kInvalidArgument, "noise: input must be line integrals");
  require(photons_n0 > 0 && std::isfinite(photons_n0), ErrorKind::kInvalidArgument, "noise: photon count must be > 0");
  std::mt19937_64 rng(seed);
  Image2D out = img;
  for (double& p : out.values) {
    const double lambda = photons_n0 * std::exp(-p);
    long long k = 0;
    if (lambda > 0) {
      std::poisson_distribution<long long> dist(lambda);
      k = dist(rng);
    }
    p = -std::log(static_cast<double>(std::max(k, 1LL)) / photons_n0);
  }
  return out;
}

}  // namespace forge

#pragma once

// Continuum manipulator model: spline-parameterized joint angles, rigid-link
// forward kinematics and procedural notched-tube meshes.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include "forge/error.hpp"
#include "forge/geometry.hpp"
#include "forge/mesh.hpp"
#include "forge/spline.hpp"

namespace forge {

inline constexpr int kControlPointCount = 5;
inline constexpr int kNotchCount = 26;

struct CdmShape {
  std::array<double, kControlPointCount> control_angles_deg{};

  void validate() const {
    for (double a : control_angles_deg) {
      require(std::isfinite(a), ErrorKind::kInvalidArgument, "CdmShape: non-finite control angle");
    }
  }

  CdmShape mirrored() const {
    CdmShape out = *this;
    for (double& a : out.control_angles_deg) a = -a;
    return out;
  }
};

struct CdmGeometrySpec {
  double outer_diameter_mm = 6.0;
  double channel_diameter_mm = 4.0;
  int notch_count = kNotchCount;
  double notch_pitch_mm = 1.0;
  double base_length_mm = 3.0;
  double shaft_length_mm = 15.0;
  double distal_cap_mm = 1.0;
  double tool_diameter_mm = 3.5;
  /// Notch depth measured from the notched side, as a fraction of the outer diameter.
  double notch_depth_fraction = 0.75;
  double notch_width_mm = 0.5;
  int angular_segments = 64;
  /// Axial cells per pitch inside each bending zone.
  int bend_subdivisions = 4;

  double outer_radius() const { return 0.5 * outer_diameter_mm; }
  double channel_radius() const { return 0.5 * channel_diameter_mm; }
  double notched_length() const { return notch_count * notch_pitch_mm; }
  /// Height of the notch floor plane on the notched side (signed, local y).
  double notch_floor_offset() const { return outer_radius() - notch_depth_fraction * outer_diameter_mm; }

  void validate() const {
    require(notch_count == kNotchCount, ErrorKind::kInvalidArgument, "CdmGeometrySpec: notch_count must be 26");
    require(outer_diameter_mm > 0 && channel_diameter_mm > 0 && channel_diameter_mm < outer_diameter_mm,
            ErrorKind::kInvalidArgument, "CdmGeometrySpec: need 0 < channel_diameter < outer_diameter");
    require(notch_pitch_mm > 0 && base_length_mm > 0 && shaft_length_mm > 0 && distal_cap_mm > 0 &&
                tool_diameter_mm > 0 && notch_width_mm > 0,
            ErrorKind::kInvalidArgument, "CdmGeometrySpec: lengths must be positive");
    require(notch_width_mm < notch_pitch_mm, ErrorKind::kInvalidArgument, "CdmGeometrySpec: notch_width must be < pitch");
    require(tool_diameter_mm < channel_diameter_mm, ErrorKind::kInvalidArgument,
            "CdmGeometrySpec: tool must fit inside the channel");
    // The floor plane has to cut through the channel so that each notch end face
    // spans from the outer to the inner wall.
    const double h = notch_floor_offset();
    require(h > -channel_radius() && h < channel_radius(), ErrorKind::kInvalidArgument,
            "CdmGeometrySpec: notch_depth_fraction must place the notch floor inside the channel");
    require(angular_segments >= 8 && angular_segments % 4 == 0, ErrorKind::kInvalidArgument,
            "CdmGeometrySpec: angular_segments must be a multiple of 4 and >= 8");
    require(bend_subdivisions >= 1, ErrorKind::kInvalidArgument, "CdmGeometrySpec: bend_subdivisions must be >= 1");
  }
};

/// Normalized arc position of control point i.
inline double control_abscissa(int i) { return static_cast<double>(i) / (kControlPointCount - 1); }
/// Normalized arc position of notch j (1-based), at the segment midpoint.
inline double notch_abscissa(int j) { return (j - 0.5) / kNotchCount; }

inline std::array<double, kNotchCount> spline_joint_angles(const CdmShape& shape) {
  shape.validate();
  std::array<double, kControlPointCount> s{};
  for (int i = 0; i < kControlPointCount; ++i) s[i] = control_abscissa(i);
  const NaturalCubicSpline spline(s, shape.control_angles_deg);
  std::array<double, kNotchCount> out{};
  for (int j = 1; j <= kNotchCount; ++j) out[j - 1] = spline(notch_abscissa(j));
  return out;
}

struct CdmPosedModel {
  std::array<RigidTransform, kNotchCount + 1> notch_frames;
  std::array<Vec3, kNotchCount + 1> centerline;
  std::array<double, kNotchCount> joint_angles_deg{};
  Vec3 landmark_proximal = Vec3::Zero();
  Vec3 landmark_distal = Vec3::Zero();
  TriangleMesh body_mesh;
  TriangleMesh tool_mesh;
};

/// Single-plane chain: F_j = F_{j-1} * Trans(0,0,pitch) * Rot_x(phi_j).
inline CdmPosedModel forward_kinematics(const CdmShape& shape, const CdmGeometrySpec& spec) {
  spec.validate();
  CdmPosedModel model;
  model.joint_angles_deg = spline_joint_angles(shape);
  const RigidTransform step = RigidTransform::from_translation(Vec3(0, 0, spec.notch_pitch_mm));
  model.notch_frames[0] = RigidTransform::identity();
  for (int j = 1; j <= kNotchCount; ++j) {
    const RigidTransform joint{rot_x(model.joint_angles_deg[j - 1] * kDeg2Rad), Vec3::Zero()};
    model.notch_frames[j] = model.notch_frames[j - 1] * step * joint;
  }
  for (int k = 0; k <= kNotchCount; ++k) model.centerline[k] = model.notch_frames[k].translation;
  model.landmark_proximal = model.centerline.front();
  model.landmark_distal = model.centerline.back();
  return model;
}

/// Continuous deformation of the straight tool frame (local +z along the axis,
/// z=0 at the base/first-notch interface) onto the posed chain. Each joint's
/// rotation is blended linearly over one pitch centered at the joint, so the
/// chain frames are reproduced exactly at the joint centers.
class ChainWarp {
 public:
  ChainWarp(const CdmPosedModel& model, double pitch) : model_(&model), pitch_(pitch) {}

  Vec3 operator()(const Vec3& p) const {
    const double z = p.z();
    const double half = 0.5 * pitch_;
    if (z < pitch_ - half) return p;  // rigid with F_0
    const double last = kNotchCount * pitch_;
    if (z >= last + half) {
      return model_->notch_frames[kNotchCount].apply(Vec3(p.x(), p.y(), z - last));
    }
    int j = static_cast<int>(std::floor((z + half) / pitch_));
    j = std::clamp(j, 1, kNotchCount);
    const double s = std::clamp((z - (j * pitch_ - half)) / pitch_, 0.0, 1.0);
    const double phi = s * model_->joint_angles_deg[j - 1] * kDeg2Rad;
    const RigidTransform& prev = model_->notch_frames[j - 1];
    const Vec3 local = rot_x(phi) * Vec3(p.x(), p.y(), z - j * pitch_) + Vec3(0, 0, pitch_);
    return prev.apply(local);
  }

 private:
  const CdmPosedModel* model_;
  double pitch_;
};

namespace detail {

inline double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  a = std::fmod(a, two_pi);
  return a < 0 ? a + two_pi : a;
}

/// Circular distance between two angles in [0, 2pi).
inline double angle_distance(double a, double b) {
  const double d = std::abs(wrap_angle(a) - wrap_angle(b));
  return std::min(d, 2.0 * std::numbers::pi - d);
}

struct AngularLayout {
  std::vector<double> outer;  // sorted in [0, 2pi)
  std::vector<double> inner;  // matching inner-wall angles
  double notch_half_width = 0;
};

/// Angular vertex layout of the tube wall. Notch end faces lie on the notch
/// floor plane, so the inner-wall vertex of a cut index sits at a different
/// angle than its outer partner; all other inner angles follow a monotone
/// piecewise-linear map through those anchors.
inline AngularLayout angular_layout(const CdmGeometrySpec& spec) {
  constexpr double pi = std::numbers::pi;
  const double R = spec.outer_radius();
  const double r = spec.channel_radius();
  const double h = spec.notch_floor_offset();
  const double half_o = 0.5 * pi - std::asin(h / R);
  const double half_i = 0.5 * pi - std::asin(h / r);

  // (outer, inner) anchor pairs, including the split plane angles.
  std::vector<std::pair<double, double>> anchors = {
      {0.5 * pi, 0.5 * pi},
      {1.5 * pi, 1.5 * pi},
      {wrap_angle(0.5 * pi - half_o), wrap_angle(0.5 * pi - half_i)},
      {wrap_angle(0.5 * pi + half_o), wrap_angle(0.5 * pi + half_i)},
      {wrap_angle(1.5 * pi - half_o), wrap_angle(1.5 * pi - half_i)},
      {wrap_angle(1.5 * pi + half_o), wrap_angle(1.5 * pi + half_i)},
  };
  std::sort(anchors.begin(), anchors.end());
  anchors.erase(std::unique(anchors.begin(), anchors.end(),
                            [](const auto& a, const auto& b) { return std::abs(a.first - b.first) < 1e-12; }),
                anchors.end());

  const int m = spec.angular_segments;
  const double min_gap = 0.25 * (2.0 * pi / m);
  std::vector<double> outer;
  for (const auto& a : anchors) outer.push_back(a.first);
  for (int k = 0; k < m; ++k) {
    const double t = 2.0 * pi * k / m;
    const bool near_anchor = std::any_of(anchors.begin(), anchors.end(),
                                         [&](const auto& a) { return angle_distance(a.first, t) < min_gap; });
    if (!near_anchor) outer.push_back(t);
  }
  std::sort(outer.begin(), outer.end());

  auto map_inner = [&](double t) {
    // Find the enclosing anchor pair on the circle and interpolate.
    const std::size_t n = anchors.size();
    for (std::size_t i = 0; i < n; ++i) {
      const auto& a = anchors[i];
      const auto& b = anchors[(i + 1) % n];
      double span_o = b.first - a.first;
      double span_i = b.second - a.second;
      if (span_o <= 0) span_o += 2.0 * pi;
      if (span_i <= 0) span_i += 2.0 * pi;
      double off = t - a.first;
      if (off < 0) off += 2.0 * pi;
      if (off <= span_o + 1e-15) return wrap_angle(a.second + span_i * (off / span_o));
    }
    return t;
  };

  AngularLayout layout;
  layout.outer = outer;
  for (double t : outer) layout.inner.push_back(map_inner(t));
  layout.notch_half_width = half_o;
  return layout;
}

inline std::vector<double> axial_stations(const CdmGeometrySpec& spec, double z_lo, double z_hi) {
  const double p = spec.notch_pitch_mm;
  std::vector<double> z = {z_lo, z_hi};
  auto add = [&](double v) {
    if (v > z_lo && v < z_hi) z.push_back(v);
  };
  add(0.0);
  for (int j = 1; j <= kNotchCount; ++j) {
    add(j * p - spec.notch_width_mm);
    add(j * p);
    for (int s = 0; s <= spec.bend_subdivisions; ++s) add(j * p - 0.5 * p + s * p / spec.bend_subdivisions);
  }
  std::sort(z.begin(), z.end());
  std::vector<double> out;
  for (double v : z) {
    if (out.empty() || v - out.back() > 1e-9) out.push_back(v);
  }
  return out;
}

class QuadSink {
 public:
  explicit QuadSink(TriangleMesh& mesh) : mesh_(mesh) {}

  /// Adds the quad split in two triangles, wound so the normal points away from `interior`.
  void add(std::int32_t a, std::int32_t b, std::int32_t c, std::int32_t d, const Vec3& interior) {
    const auto& v = mesh_.vertices;
    const Vec3 n = (v[c] - v[a]).cross(v[d] - v[b]);
    const Vec3 center = 0.25 * (v[a] + v[b] + v[c] + v[d]);
    if (n.dot(center - interior) < 0) std::swap(b, d);
    mesh_.triangles.push_back({a, b, c});
    mesh_.triangles.push_back({a, c, d});
  }

  void add_triangle(std::int32_t a, std::int32_t b, std::int32_t c, const Vec3& interior) {
    const auto& v = mesh_.vertices;
    const Vec3 n = (v[b] - v[a]).cross(v[c] - v[a]);
    const Vec3 center = (v[a] + v[b] + v[c]) / 3.0;
    if (n.dot(center - interior) < 0) std::swap(b, c);
    mesh_.triangles.push_back({a, b, c});
  }

 private:
  TriangleMesh& mesh_;
};

/// Straight (unposed) notched tube between z_lo and z_hi, emitted as two
/// closed half-shells split along the bending plane x = 0.
inline TriangleMesh straight_notched_tube(const CdmGeometrySpec& spec, double z_lo, double z_hi) {
  constexpr double pi = std::numbers::pi;
  const AngularLayout layout = angular_layout(spec);
  const std::vector<double> zs = axial_stations(spec, z_lo, z_hi);
  const int nk = static_cast<int>(layout.outer.size());
  const int nz = static_cast<int>(zs.size());
  const double R = spec.outer_radius();
  const double r = spec.channel_radius();
  const double p = spec.notch_pitch_mm;

  auto mid_angle = [&](int k) {
    const double a = layout.outer[k];
    double b = layout.outer[(k + 1) % nk];
    if (b <= a) b += 2.0 * pi;
    return detail::wrap_angle(0.5 * (a + b));
  };
  std::vector<int> component(nk);
  for (int k = 0; k < nk; ++k) component[k] = std::cos(mid_angle(k)) > 0 ? 0 : 1;

  auto occupied = [&](int k, int m) {
    if (m < 0 || m >= nz - 1) return false;
    const double zc = 0.5 * (zs[m] + zs[m + 1]);
    const int j = static_cast<int>(std::ceil(zc / p));
    if (j >= 1 && j <= kNotchCount && zc > j * p - spec.notch_width_mm && zc < j * p) {
      const double side = (j % 2 == 1) ? 0.5 * pi : 1.5 * pi;
      if (angle_distance(mid_angle(k), side) < layout.notch_half_width) return false;
    }
    return true;
  };

  TriangleMesh mesh;
  std::vector<std::int32_t> ids(static_cast<std::size_t>(2) * 2 * nk * nz, -1);
  auto vertex = [&](int comp, int k, bool outer, int m) {
    k = (k + nk) % nk;
    auto& id = ids[((static_cast<std::size_t>(comp) * 2 + (outer ? 1 : 0)) * nk + k) * nz + m];
    if (id < 0) {
      const double rad = outer ? R : r;
      const double ang = outer ? layout.outer[k] : layout.inner[k];
      mesh.vertices.emplace_back(rad * std::cos(ang), rad * std::sin(ang), zs[m]);
      id = static_cast<std::int32_t>(mesh.vertices.size() - 1);
    }
    return id;
  };

  QuadSink sink(mesh);
  for (int m = 0; m < nz - 1; ++m) {
    for (int k = 0; k < nk; ++k) {
      if (!occupied(k, m)) continue;
      const int c = component[k];
      const int k1 = k + 1;
      const auto o00 = vertex(c, k, true, m), o10 = vertex(c, k1, true, m);
      const auto o01 = vertex(c, k, true, m + 1), o11 = vertex(c, k1, true, m + 1);
      const auto i00 = vertex(c, k, false, m), i10 = vertex(c, k1, false, m);
      const auto i01 = vertex(c, k, false, m + 1), i11 = vertex(c, k1, false, m + 1);
      const auto& v = mesh.vertices;
      const Vec3 interior = (v[o00] + v[o10] + v[o01] + v[o11] + v[i00] + v[i10] + v[i01] + v[i11]) / 8.0;

      sink.add(o00, o10, o11, o01, interior);
      sink.add(i00, i10, i11, i01, interior);
      const int kp = (k - 1 + nk) % nk;
      const int kn = (k + 1) % nk;
      if (!occupied(kp, m) || component[kp] != c) sink.add(o00, o01, i01, i00, interior);
      if (!occupied(kn, m) || component[kn] != c) sink.add(o10, o11, i11, i10, interior);
      if (!occupied(k, m - 1)) sink.add(o00, o10, i10, i00, interior);
      if (!occupied(k, m + 1)) sink.add(o01, o11, i11, i01, interior);
    }
  }
  return mesh;
}

/// Capped solid cylinder of the given radius along local z.
inline TriangleMesh straight_cylinder(const CdmGeometrySpec& spec, double radius, double z_lo, double z_hi) {
  const std::vector<double> zs = axial_stations(spec, z_lo, z_hi);
  const int nk = spec.angular_segments;
  TriangleMesh mesh;
  for (double z : zs) {
    for (int k = 0; k < nk; ++k) {
      const double a = 2.0 * std::numbers::pi * k / nk;
      mesh.vertices.emplace_back(radius * std::cos(a), radius * std::sin(a), z);
    }
  }
  const auto ring = [&](std::size_t m, int k) { return static_cast<std::int32_t>(m * nk + (k % nk)); };
  mesh.vertices.emplace_back(0, 0, zs.front());
  const auto bottom = static_cast<std::int32_t>(mesh.vertices.size() - 1);
  mesh.vertices.emplace_back(0, 0, zs.back());
  const auto top = static_cast<std::int32_t>(mesh.vertices.size() - 1);

  QuadSink sink(mesh);
  for (std::size_t m = 0; m + 1 < zs.size(); ++m) {
    const Vec3 interior(0, 0, 0.5 * (zs[m] + zs[m + 1]));
    for (int k = 0; k < nk; ++k) sink.add(ring(m, k), ring(m, k + 1), ring(m + 1, k + 1), ring(m + 1, k), interior);
  }
  const Vec3 interior(0, 0, 0.5 * (zs.front() + zs.back()));
  const std::size_t last = zs.size() - 1;
  for (int k = 0; k < nk; ++k) {
    sink.add_triangle(bottom, ring(0, k), ring(0, k + 1), interior);
    sink.add_triangle(top, ring(last, k), ring(last, k + 1), interior);
  }
  return mesh;
}

inline void check_bend_fold(const CdmPosedModel& model, const CdmGeometrySpec& spec) {
  // The blended rotation folds the outer wall when |phi| * R >= pitch.
  for (int j = 0; j < kNotchCount; ++j) {
    const double ratio = std::abs(model.joint_angles_deg[j] * kDeg2Rad) * spec.outer_radius() / spec.notch_pitch_mm;
    if (ratio >= 0.95) {
      fail(ErrorKind::kMeshDegeneracy, "swept tube self-intersects at notch " + std::to_string(j + 1) + " (joint angle " +
                                           std::to_string(model.joint_angles_deg[j]) + " deg)");
    }
  }
}

inline TriangleMesh warped(TriangleMesh mesh, const ChainWarp& warp) {
  for (auto& v : mesh.vertices) v = warp(v);
  return mesh;
}

}  // namespace detail

struct CdmMeshes {
  TriangleMesh body;          // notched tube + base + proximal shaft
  TriangleMesh tool;          // solid tool through the channel, tip at the distal landmark
  TriangleMesh notch_region;  // notched segment only (segmentation target)
};

inline CdmMeshes build_cdm_meshes(const CdmPosedModel& model, const CdmGeometrySpec& spec) {
  spec.validate();
  detail::check_bend_fold(model, spec);
  const ChainWarp warp(model, spec.notch_pitch_mm);
  const double z_start = -(spec.base_length_mm + spec.shaft_length_mm);
  const double z_tip = spec.notched_length();
  CdmMeshes out;
  out.body = detail::warped(detail::straight_notched_tube(spec, z_start, z_tip + spec.distal_cap_mm), warp);
  out.notch_region = detail::warped(detail::straight_notched_tube(spec, 0.0, z_tip), warp);
  out.tool = detail::warped(detail::straight_cylinder(spec, 0.5 * spec.tool_diameter_mm, z_start, z_tip), warp);
  return out;
}

inline CdmMeshes build_cdm_meshes(const CdmShape& shape, const CdmGeometrySpec& spec) {
  return build_cdm_meshes(forward_kinematics(shape, spec), spec);
}

/// Kinematics plus meshes in one call.
inline CdmPosedModel pose_cdm(const CdmShape& shape, const CdmGeometrySpec& spec) {
  CdmPosedModel model = forward_kinematics(shape, spec);
  CdmMeshes meshes = build_cdm_meshes(model, spec);
  model.body_mesh = std::move(meshes.body);
  model.tool_mesh = std::move(meshes.tool);
  return model;
}

}  // namespace forge

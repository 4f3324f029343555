#pragma once

#include <cmath>
#include <numbers>

#include <Eigen/Dense>

#include "forge/error.hpp"

namespace forge {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kDeg2Rad = std::numbers::pi / 180.0;
inline constexpr double kRad2Deg = 180.0 / std::numbers::pi;

/// Euler convention recorded in sample metadata.
inline constexpr const char* kEulerConvention = "extrinsic-xyz";

inline Mat3 rot_x(double rad) { return Eigen::AngleAxisd(rad, Vec3::UnitX()).toRotationMatrix(); }
inline Mat3 rot_y(double rad) { return Eigen::AngleAxisd(rad, Vec3::UnitY()).toRotationMatrix(); }
inline Mat3 rot_z(double rad) { return Eigen::AngleAxisd(rad, Vec3::UnitZ()).toRotationMatrix(); }

/// Proper rigid motion x -> R x + t (millimeters).
struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static RigidTransform identity() { return {}; }
  static RigidTransform from_translation(const Vec3& t) { return {Mat3::Identity(), t}; }

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  Vec3 apply_direction(const Vec3& d) const { return rotation * d; }

  RigidTransform inverse() const {
    const Mat3 rt = rotation.transpose();
    return {rt, -(rt * translation)};
  }

  /// (this * other)(p) == this(other(p))
  RigidTransform operator*(const RigidTransform& other) const {
    return {rotation * other.rotation, rotation * other.translation + translation};
  }

  bool is_proper(double tol = 1e-9) const {
    const double ortho = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
    return ortho <= tol && std::abs(rotation.determinant() - 1.0) <= tol;
  }
};

/// rotation = Rz(rz) * Ry(ry) * Rx(rx): fixed axes, X applied first.
inline RigidTransform rigid_from_euler(double rx_deg, double ry_deg, double rz_deg, const Vec3& t) {
  require(std::isfinite(rx_deg) && std::isfinite(ry_deg) && std::isfinite(rz_deg) && t.allFinite(),
          ErrorKind::kInvalidArgument, "rigid_from_euler: non-finite input");
  RigidTransform out;
  out.rotation = rot_z(rz_deg * kDeg2Rad) * rot_y(ry_deg * kDeg2Rad) * rot_x(rx_deg * kDeg2Rad);
  out.translation = t;
  return out;
}

/// C-arm acquisition parameters. Isocenter is the world origin; the patient
/// longitudinal axis is +z. cran_caud_deg == 90 is the untilted pose.
struct ProjectionGeometry {
  double source_to_detector_mm = 1200.0;
  double source_to_isocenter_mm = 450.0;
  double lao_rao_deg = 0.0;
  double cran_caud_deg = 90.0;
  int detector_cols = 512;
  int detector_rows = 512;
  double pixel_size_mm = 0.62;

  void validate() const {
    require(std::isfinite(source_to_detector_mm) && std::isfinite(source_to_isocenter_mm) &&
                std::isfinite(lao_rao_deg) && std::isfinite(cran_caud_deg) && std::isfinite(pixel_size_mm),
            ErrorKind::kInvalidArgument, "projection geometry: non-finite parameter");
    require(source_to_isocenter_mm > 0.0 && source_to_detector_mm > source_to_isocenter_mm,
            ErrorKind::kInvalidArgument, "projection geometry: need SDD > SID > 0");
    require(detector_cols > 0 && detector_rows > 0 && pixel_size_mm > 0.0, ErrorKind::kInvalidArgument,
            "projection geometry: detector size and pixel size must be positive");
  }

  /// Continuous pixel coordinate of the principal point.
  double center_u() const { return 0.5 * (detector_cols - 1); }
  double center_v() const { return 0.5 * (detector_rows - 1); }
};

struct CameraPose {
  Vec3 source_position = Vec3::Zero();
  Vec3 detector_center = Vec3::Zero();
  Vec3 detector_u_axis = Vec3::UnitX();
  Vec3 detector_v_axis = Vec3::UnitY();

  /// Unit vector from source toward detector center.
  Vec3 view_direction() const { return (detector_center - source_position).normalized(); }

  /// World position of the (continuous) pixel coordinate (u, v).
  Vec3 pixel_position(const ProjectionGeometry& g, double u, double v) const {
    return detector_center + (u - g.center_u()) * g.pixel_size_mm * detector_u_axis +
           (v - g.center_v()) * g.pixel_size_mm * detector_v_axis;
  }

  CameraPose transformed(const RigidTransform& t) const {
    return {t.apply(source_position), t.apply(detector_center), t.apply_direction(detector_u_axis),
            t.apply_direction(detector_v_axis)};
  }
};

/// Realizes orbit angles as a source/detector pose:
/// source = Rz(lao_rao) * Rx(cran_caud - 90) * (0, -SID, 0).
inline CameraPose camera_from_orbit(const ProjectionGeometry& g) {
  g.validate();
  const Mat3 orbit = rot_z(g.lao_rao_deg * kDeg2Rad) * rot_x((g.cran_caud_deg - 90.0) * kDeg2Rad);
  CameraPose cam;
  cam.source_position = orbit * Vec3(0.0, -g.source_to_isocenter_mm, 0.0);
  const Vec3 dir = (-cam.source_position).normalized();
  cam.detector_center = cam.source_position + g.source_to_detector_mm * dir;

  const Vec3 z_in_plane = Vec3::UnitZ() - Vec3::UnitZ().dot(dir) * dir;
  const double n = z_in_plane.norm();
  if (!(n > 1e-12)) {
    fail(ErrorKind::kDegenerateOrbit, "camera_from_orbit: view direction parallel to the patient axis (cran_caud_deg=" +
                                          std::to_string(g.cran_caud_deg) + ")");
  }
  cam.detector_v_axis = z_in_plane / n;
  cam.detector_u_axis = cam.detector_v_axis.cross(dir).normalized();
  return cam;
}

struct PixelCoord {
  double u = 0.0;
  double v = 0.0;
};

/// Perspective projection to continuous pixel coordinates (pixel centers at
/// integers, principal point at ((cols-1)/2, (rows-1)/2)).
inline PixelCoord project_point(const CameraPose& cam, const ProjectionGeometry& g, const Vec3& p_world) {
  const Vec3 axis = cam.detector_center - cam.source_position;
  const double sdd = axis.norm();
  const Vec3 dir = axis / sdd;
  const Vec3 rel = p_world - cam.source_position;
  const double depth = rel.dot(dir);
  if (!(depth > 0.0)) {
    fail(ErrorKind::kProjectionBehindSource, "project_point: point has non-positive depth " + std::to_string(depth));
  }
  const Vec3 on_detector = cam.source_position + rel * (sdd / depth);
  const Vec3 offset = on_detector - cam.detector_center;
  return {offset.dot(cam.detector_u_axis) / g.pixel_size_mm + g.center_u(),
          offset.dot(cam.detector_v_axis) / g.pixel_size_mm + g.center_v()};
}

}  // namespace forge

#pragma once

// Synthetic lower-limb CT: soft-tissue ellipsoid with two femoral bone tubes.

#include <array>
#include <cmath>

#include <nlohmann/json.hpp>

#include "forge/error.hpp"
#include "forge/geometry.hpp"
#include "forge/volume.hpp"
#include "forge/voxelizer.hpp"

namespace forge {

struct PhantomSpec {
  std::array<int, 3> dims{176, 144, 160};
  double spacing_mm = 1.25;
  Vec3 tissue_semi_axes_mm{95.0, 75.0, 160.0};
  /// Bone tube centers sit at x = +/- offset (left femur at +x), along z.
  double bone_offset_mm = 35.0;
  double bone_outer_radius_mm = 15.0;
  double cortical_wall_mm = 5.0;
  double air_hu = kAirHu;
  double tissue_hu = 40.0;
  double trabecular_hu = 200.0;
  double cortical_hu = 1200.0;

  void validate() const {
    require(dims[0] > 0 && dims[1] > 0 && dims[2] > 0 && spacing_mm > 0, ErrorKind::kInvalidArgument,
            "phantom: dims and spacing must be positive");
    require(bone_outer_radius_mm > cortical_wall_mm && cortical_wall_mm > 0, ErrorKind::kInvalidArgument,
            "phantom: bone radius must exceed the cortical wall");
    require(bone_offset_mm > bone_outer_radius_mm, ErrorKind::kInvalidArgument, "phantom: bone tubes would overlap");
  }

  /// Deterministic per-CT variation so phantom CTs differ.
  PhantomSpec variant(int index) const {
    PhantomSpec s = *this;
    s.bone_offset_mm += 2.0 * (index % 3);
    s.tissue_semi_axes_mm.x() += 3.0 * (index % 2);
    s.bone_outer_radius_mm += 0.5 * (index % 4);
    return s;
  }

  Vec3 bone_center(bool left) const { return Vec3(left ? bone_offset_mm : -bone_offset_mm, 0.0, 0.0); }
};

/// Volume centered on the origin of its own frame.
inline VolumeGrid phantom_grid(const PhantomSpec& spec) {
  VolumeGrid g;
  g.dims = spec.dims;
  g.spacing_mm = Vec3::Constant(spec.spacing_mm);
  g.origin_mm = -0.5 * spec.spacing_mm * Vec3(spec.dims[0] - 1, spec.dims[1] - 1, spec.dims[2] - 1);
  return g;
}

inline ScalarVolume make_phantom_ct(const PhantomSpec& spec) {
  spec.validate();
  ScalarVolume ct(phantom_grid(spec), VolumeKind::kHu, static_cast<float>(spec.air_hu));
  const double r_out = spec.bone_outer_radius_mm;
  const double r_in = r_out - spec.cortical_wall_mm;
  const Vec3& ax = spec.tissue_semi_axes_mm;
  for (int k = 0; k < spec.dims[2]; ++k)
    for (int j = 0; j < spec.dims[1]; ++j)
      for (int i = 0; i < spec.dims[0]; ++i) {
        const Vec3 p = ct.grid.center(i, j, k);
        const Vec3 q = p.cwiseQuotient(ax);
        if (q.squaredNorm() > 1.0) continue;
        double hu = spec.tissue_hu;
        for (bool left : {true, false}) {
          const Vec3 c = spec.bone_center(left);
          const double r = std::hypot(p.x() - c.x(), p.y() - c.y());
          if (r <= r_in) hu = spec.trabecular_hu;
          else if (r <= r_out) hu = spec.cortical_hu;
        }
        ct.at(i, j, k) = static_cast<float>(hu);
      }
  return ct;
}

/// Bone axes in the phantom frame, stored in the volume header attributes.
inline nlohmann::json phantom_attributes(const PhantomSpec& spec, int variant_index) {
  auto axis = [&](bool left) {
    const Vec3 c = spec.bone_center(left);
    return nlohmann::json{{"center_mm", {c.x(), c.y(), c.z()}}, {"direction", {0.0, 0.0, 1.0}}};
  };
  return {{"source", "forge-phantom"},
          {"variant", variant_index},
          {"femur_axes", {{"left", axis(true)}, {"right", axis(false)}}}};
}

}  // namespace forge

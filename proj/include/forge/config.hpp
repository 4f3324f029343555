#pragma once

// Pipeline configuration: one JSON document, mm and degrees throughout.
// Unknown keys are rejected at every level.

#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <map>
#include <string>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "forge/cdm.hpp"
#include "forge/error.hpp"
#include "forge/geometry.hpp"
#include "forge/metrics.hpp"
#include "forge/projector.hpp"
#include "forge/rng.hpp"
#include "forge/sampler.hpp"
#include "forge/voxelizer.hpp"

namespace forge {

inline constexpr const char* kPipelineVersion = "forge-0.1.0";

/// Aligned CDM pose relative to a femur, in the CT frame.
struct FemurAlignment {
  Vec3 rotation_deg = Vec3::Zero();
  Vec3 translation_mm = Vec3::Zero();

  RigidTransform transform() const {
    return rigid_from_euler(rotation_deg.x(), rotation_deg.y(), rotation_deg.z(), translation_mm);
  }
};

struct PipelineConfig {
  CdmGeometrySpec cdm;
  SamplingRanges ranges;
  int detector_cols = 512;
  int detector_rows = 512;
  double pixel_size_mm = 0.62;
  double mesh_voxel_spacing_mm = 0.1;
  double mesh_voxel_padding_mm = 0.3;
  int resample_supersample = 2;
  /// <= 0 selects half of each volume's minimum spacing.
  double raycast_step_mm = 0.0;
  double mu_water_per_mm = kDefaultMuWaterPerMm;
  double cdm_mu_per_mm = 0.68;
  double tool_mu_per_mm = 0.95;
  double carve_hu = kAirHu;
  bool noise_enabled = false;
  double noise_photons = 1e5;
  double belief_sigma_px = 5.0;
  int samples_per_femur = 1000;
  double max_failure_rate = 0.01;
  bool write_previews = false;
  int workers = 1;
  int threads_per_worker = 1;
  /// ct id -> side -> alignment. Missing entries fall back to the CT's
  /// `femur_axes` header attribute.
  std::map<std::string, std::map<std::string, FemurAlignment>> alignment;

  ProjectionGeometry base_geometry() const {
    ProjectionGeometry g;
    g.detector_cols = detector_cols;
    g.detector_rows = detector_rows;
    g.pixel_size_mm = pixel_size_mm;
    g.source_to_detector_mm = ranges.source_to_detector_mm;
    return g;
  }

  void validate() const {
    cdm.validate();
    ranges.validate();
    base_geometry().validate();
    auto positive = [](double x) { return std::isfinite(x) && x > 0; };
    require(positive(mesh_voxel_spacing_mm) && mesh_voxel_padding_mm >= 0, ErrorKind::kInvalidArgument,
            "config: mesh voxel spacing must be > 0 and padding >= 0");
    require(resample_supersample >= 1, ErrorKind::kInvalidArgument, "config: resample_supersample must be >= 1");
    require(std::isfinite(raycast_step_mm), ErrorKind::kInvalidArgument, "config: raycast_step_mm must be finite");
    require(positive(mu_water_per_mm) && positive(cdm_mu_per_mm) && positive(tool_mu_per_mm), ErrorKind::kInvalidArgument,
            "config: attenuation coefficients must be > 0");
    require(positive(noise_photons), ErrorKind::kInvalidArgument, "config: noise photons must be > 0");
    require(positive(belief_sigma_px), ErrorKind::kInvalidArgument, "config: belief sigma must be > 0");
    require(samples_per_femur >= 1, ErrorKind::kInvalidArgument, "config: samples_per_femur must be >= 1");
    require(max_failure_rate >= 0 && max_failure_rate <= 1, ErrorKind::kInvalidArgument,
            "config: max_failure_rate must lie in [0, 1]");
    require(workers >= 1 && threads_per_worker >= 1, ErrorKind::kInvalidArgument, "config: worker counts must be >= 1");
    for (const auto& [ct, sides] : alignment)
      for (const auto& [side, a] : sides) {
        femur_side_from_string(side);
        require(a.rotation_deg.allFinite() && a.translation_mm.allFinite(), ErrorKind::kInvalidArgument,
                "config: alignment for '" + ct + "' is not finite");
      }
  }
};

namespace detail {

inline void check_keys(const nlohmann::json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  require(j.is_object(), ErrorKind::kParse, "config: '" + where + "' must be an object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    require(ok, ErrorKind::kParse, "config: unknown key '" + (where.empty() ? key : where + "." + key) + "'");
  }
}

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    fail(ErrorKind::kParse, "config: field '" + (where.empty() ? std::string(key) : where + "." + key) + "' has the wrong type");
  }
}

inline void read_range(const nlohmann::json& j, const char* key, Range& out, const std::string& where) {
  if (!j.contains(key)) return;
  const auto& r = j.at(key);
  require(r.is_array() && r.size() == 2 && r[0].is_number() && r[1].is_number(), ErrorKind::kParse,
          "config: field '" + where + "." + key + "' must be [lo, hi]");
  out = {r[0].get<double>(), r[1].get<double>()};
}

}  // namespace detail

inline nlohmann::json to_json(const PipelineConfig& c) {
  nlohmann::json align = nlohmann::json::object();
  for (const auto& [ct, sides] : c.alignment)
    for (const auto& [side, a] : sides)
      align[ct][side] = {{"rotation_deg", to_json(a.rotation_deg)}, {"translation_mm", to_json(a.translation_mm)}};
  return {
      {"cdm",
       {{"outer_diameter_mm", c.cdm.outer_diameter_mm},
        {"channel_diameter_mm", c.cdm.channel_diameter_mm},
        {"notch_count", c.cdm.notch_count},
        {"notch_pitch_mm", c.cdm.notch_pitch_mm},
        {"base_length_mm", c.cdm.base_length_mm},
        {"shaft_length_mm", c.cdm.shaft_length_mm},
        {"distal_cap_mm", c.cdm.distal_cap_mm},
        {"tool_diameter_mm", c.cdm.tool_diameter_mm},
        {"notch_depth_fraction", c.cdm.notch_depth_fraction},
        {"notch_width_mm", c.cdm.notch_width_mm},
        {"angular_segments", c.cdm.angular_segments},
        {"bend_subdivisions", c.cdm.bend_subdivisions}}},
      {"ranges",
       {{"source_to_isocenter_mm", {c.ranges.source_to_isocenter_mm.lo, c.ranges.source_to_isocenter_mm.hi}},
        {"lao_rao_deg", {c.ranges.lao_rao_deg.lo, c.ranges.lao_rao_deg.hi}},
        {"cran_caud_deg", {c.ranges.cran_caud_deg.lo, c.ranges.cran_caud_deg.hi}},
        {"volume_translation_mm", c.ranges.volume_translation_mm},
        {"control_angle_deg", c.ranges.control_angle_deg},
        {"cdm_rotation_deg", c.ranges.cdm_rotation_deg},
        {"cdm_translation_mm", c.ranges.cdm_translation_mm},
        {"source_to_detector_mm", c.ranges.source_to_detector_mm}}},
      {"detector", {{"cols", c.detector_cols}, {"rows", c.detector_rows}, {"pixel_size_mm", c.pixel_size_mm}}},
      {"voxelizer",
       {{"spacing_mm", c.mesh_voxel_spacing_mm},
        {"padding_mm", c.mesh_voxel_padding_mm},
        {"resample_supersample", c.resample_supersample}}},
      {"raycast_step_mm", c.raycast_step_mm},
      {"materials",
       {{"mu_water_per_mm", c.mu_water_per_mm},
        {"cdm_mu_per_mm", c.cdm_mu_per_mm},
        {"tool_mu_per_mm", c.tool_mu_per_mm},
        {"carve_hu", c.carve_hu}}},
      {"noise", {{"enabled", c.noise_enabled}, {"photons", c.noise_photons}}},
      {"belief_sigma_px", c.belief_sigma_px},
      {"samples_per_femur", c.samples_per_femur},
      {"max_failure_rate", c.max_failure_rate},
      {"write_previews", c.write_previews},
      {"workers", c.workers},
      {"threads_per_worker", c.threads_per_worker},
      {"alignment", align},
  };
}

inline PipelineConfig pipeline_config_from_json(const nlohmann::json& j) {
  using detail::read_field;
  detail::check_keys(j, "",
                     {"cdm", "ranges", "detector", "voxelizer", "raycast_step_mm", "materials", "noise", "belief_sigma_px",
                      "samples_per_femur", "max_failure_rate", "write_previews", "workers", "threads_per_worker",
                      "alignment"});
  PipelineConfig c;
  if (j.contains("cdm")) {
    const auto& s = j.at("cdm");
    detail::check_keys(s, "cdm",
                       {"outer_diameter_mm", "channel_diameter_mm", "notch_count", "notch_pitch_mm", "base_length_mm",
                        "shaft_length_mm", "distal_cap_mm", "tool_diameter_mm", "notch_depth_fraction", "notch_width_mm",
                        "angular_segments", "bend_subdivisions"});
    read_field(s, "outer_diameter_mm", c.cdm.outer_diameter_mm, "cdm");
    read_field(s, "channel_diameter_mm", c.cdm.channel_diameter_mm, "cdm");
    read_field(s, "notch_count", c.cdm.notch_count, "cdm");
    read_field(s, "notch_pitch_mm", c.cdm.notch_pitch_mm, "cdm");
    read_field(s, "base_length_mm", c.cdm.base_length_mm, "cdm");
    read_field(s, "shaft_length_mm", c.cdm.shaft_length_mm, "cdm");
    read_field(s, "distal_cap_mm", c.cdm.distal_cap_mm, "cdm");
    read_field(s, "tool_diameter_mm", c.cdm.tool_diameter_mm, "cdm");
    read_field(s, "notch_depth_fraction", c.cdm.notch_depth_fraction, "cdm");
    read_field(s, "notch_width_mm", c.cdm.notch_width_mm, "cdm");
    read_field(s, "angular_segments", c.cdm.angular_segments, "cdm");
    read_field(s, "bend_subdivisions", c.cdm.bend_subdivisions, "cdm");
  }
  if (j.contains("ranges")) {
    const auto& r = j.at("ranges");
    detail::check_keys(r, "ranges",
                       {"source_to_isocenter_mm", "lao_rao_deg", "cran_caud_deg", "volume_translation_mm",
                        "control_angle_deg", "cdm_rotation_deg", "cdm_translation_mm", "source_to_detector_mm"});
    detail::read_range(r, "source_to_isocenter_mm", c.ranges.source_to_isocenter_mm, "ranges");
    detail::read_range(r, "lao_rao_deg", c.ranges.lao_rao_deg, "ranges");
    detail::read_range(r, "cran_caud_deg", c.ranges.cran_caud_deg, "ranges");
    read_field(r, "volume_translation_mm", c.ranges.volume_translation_mm, "ranges");
    read_field(r, "control_angle_deg", c.ranges.control_angle_deg, "ranges");
    read_field(r, "cdm_rotation_deg", c.ranges.cdm_rotation_deg, "ranges");
    read_field(r, "cdm_translation_mm", c.ranges.cdm_translation_mm, "ranges");
    read_field(r, "source_to_detector_mm", c.ranges.source_to_detector_mm, "ranges");
  }
  if (j.contains("detector")) {
    const auto& d = j.at("detector");
    detail::check_keys(d, "detector", {"cols", "rows", "pixel_size_mm"});
    read_field(d, "cols", c.detector_cols, "detector");
    read_field(d, "rows", c.detector_rows, "detector");
    read_field(d, "pixel_size_mm", c.pixel_size_mm, "detector");
  }
  if (j.contains("voxelizer")) {
    const auto& v = j.at("voxelizer");
    detail::check_keys(v, "voxelizer", {"spacing_mm", "padding_mm", "resample_supersample"});
    read_field(v, "spacing_mm", c.mesh_voxel_spacing_mm, "voxelizer");
    read_field(v, "padding_mm", c.mesh_voxel_padding_mm, "voxelizer");
    read_field(v, "resample_supersample", c.resample_supersample, "voxelizer");
  }
  read_field(j, "raycast_step_mm", c.raycast_step_mm, "");
  if (j.contains("materials")) {
    const auto& m = j.at("materials");
    detail::check_keys(m, "materials", {"mu_water_per_mm", "cdm_mu_per_mm", "tool_mu_per_mm", "carve_hu"});
    read_field(m, "mu_water_per_mm", c.mu_water_per_mm, "materials");
    read_field(m, "cdm_mu_per_mm", c.cdm_mu_per_mm, "materials");
    read_field(m, "tool_mu_per_mm", c.tool_mu_per_mm, "materials");
    read_field(m, "carve_hu", c.carve_hu, "materials");
  }
  if (j.contains("noise")) {
    const auto& n = j.at("noise");
    detail::check_keys(n, "noise", {"enabled", "photons"});
    read_field(n, "enabled", c.noise_enabled, "noise");
    read_field(n, "photons", c.noise_photons, "noise");
  }
  read_field(j, "belief_sigma_px", c.belief_sigma_px, "");
  read_field(j, "samples_per_femur", c.samples_per_femur, "");
  read_field(j, "max_failure_rate", c.max_failure_rate, "");
  read_field(j, "write_previews", c.write_previews, "");
  read_field(j, "workers", c.workers, "");
  read_field(j, "threads_per_worker", c.threads_per_worker, "");
  if (j.contains("alignment")) {
    const auto& a = j.at("alignment");
    require(a.is_object(), ErrorKind::kParse, "config: 'alignment' must be an object");
    for (const auto& [ct, sides] : a.items()) {
      const std::string where = "alignment." + ct;
      detail::check_keys(sides, where, {"left", "right"});
      for (const auto& [side, pose] : sides.items()) {
        detail::check_keys(pose, where + "." + side, {"rotation_deg", "translation_mm"});
        FemurAlignment fa;
        if (pose.contains("rotation_deg")) fa.rotation_deg = vec3_from_json(pose.at("rotation_deg"), where + "." + side + ".rotation_deg");
        if (pose.contains("translation_mm"))
          fa.translation_mm = vec3_from_json(pose.at("translation_mm"), where + "." + side + ".translation_mm");
        c.alignment[ct][side] = fa;
      }
    }
  }
  c.validate();
  return c;
}

inline PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(detail::read_text(path));
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::kParse, "config " + path.string() + ": " + e.what());
  }
  return pipeline_config_from_json(j);
}

/// Hash of everything that affects record content; worker counts and preview
/// output are excluded.
inline std::string config_hash(const PipelineConfig& c) {
  nlohmann::json j = to_json(c);
  j.erase("workers");
  j.erase("threads_per_worker");
  j.erase("write_previews");
  j.erase("samples_per_femur");
  j.erase("max_failure_rate");
  j["pipeline_version"] = kPipelineVersion;
  return fmt::format("{:016x}", fnv1a64(j.dump()));
}

}  // namespace forge

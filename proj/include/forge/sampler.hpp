#pragma once

// Counter-seeded parameter draws and the train/val/test manifest.

#include <algorithm>
#include <array>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "forge/cdm.hpp"
#include "forge/error.hpp"
#include "forge/geometry.hpp"
#include "forge/rng.hpp"

namespace forge {

enum class FemurSide { kLeft, kRight };

inline std::string to_string(FemurSide s) { return s == FemurSide::kLeft ? "left" : "right"; }

inline FemurSide femur_side_from_string(const std::string& s) {
  if (s == "left") return FemurSide::kLeft;
  if (s == "right") return FemurSide::kRight;
  fail(ErrorKind::kInvalidArgument, "unknown femur side '" + s + "'");
}

inline constexpr std::array<FemurSide, 2> kBothSides{FemurSide::kLeft, FemurSide::kRight};

/// Closed interval, except `lao_rao_deg` which is drawn half-open.
struct Range {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double x) const { return x >= lo && x <= hi; }
};

struct SamplingRanges {
  Range source_to_isocenter_mm{400.0, 500.0};
  Range lao_rao_deg{0.0, 360.0};
  Range cran_caud_deg{75.0, 105.0};
  double volume_translation_mm = 20.0;
  double control_angle_deg = 7.9;
  double cdm_rotation_deg = 5.0;
  double cdm_translation_mm = 2.0;
  double source_to_detector_mm = 1200.0;

  void validate() const {
    auto ordered = [](const Range& r) { return std::isfinite(r.lo) && std::isfinite(r.hi) && r.lo <= r.hi; };
    require(ordered(source_to_isocenter_mm) && ordered(lao_rao_deg) && ordered(cran_caud_deg),
            ErrorKind::kInvalidArgument, "sampling ranges: each range needs lo <= hi");
    require(source_to_isocenter_mm.lo > 0 && source_to_isocenter_mm.hi < source_to_detector_mm,
            ErrorKind::kInvalidArgument, "sampling ranges: SID must lie in (0, SDD)");
    for (double half : {volume_translation_mm, control_angle_deg, cdm_rotation_deg, cdm_translation_mm})
      require(half >= 0 && std::isfinite(half), ErrorKind::kInvalidArgument, "sampling ranges: half-widths must be >= 0");
  }
};

struct SampleKey {
  std::string ct_id;
  FemurSide side = FemurSide::kLeft;
  int index = 0;

  std::string id() const { return fmt::format("{}_{}_{:04d}", ct_id, to_string(side), index); }
  auto operator<=>(const SampleKey&) const = default;
};

/// Parses `<ct>_<side>_<index>`; the ct id may itself contain underscores.
inline SampleKey parse_sample_id(const std::string& id) {
  const auto p2 = id.rfind('_');
  require(p2 != std::string::npos && p2 > 0, ErrorKind::kParse, "sample id '" + id + "' has no index");
  const auto p1 = id.rfind('_', p2 - 1);
  require(p1 != std::string::npos && p1 > 0, ErrorKind::kParse, "sample id '" + id + "' has no side");
  SampleKey key;
  key.ct_id = id.substr(0, p1);
  key.side = femur_side_from_string(id.substr(p1 + 1, p2 - p1 - 1));
  try {
    std::size_t used = 0;
    key.index = std::stoi(id.substr(p2 + 1), &used);
    require(used == id.size() - p2 - 1, ErrorKind::kParse, "sample id '" + id + "': bad index");
  } catch (const std::logic_error&) {
    fail(ErrorKind::kParse, "sample id '" + id + "': bad index");
  }
  return key;
}

struct SampleConfig {
  std::string ct_id;
  FemurSide femur_side = FemurSide::kLeft;
  int sample_index = 0;
  std::uint64_t rng_seed = 0;
  /// CDM perturbation about the aligned pose: extrinsic x-y-z degrees, then mm.
  Vec3 cdm_rotation_deg = Vec3::Zero();
  Vec3 cdm_translation_mm = Vec3::Zero();
  Vec3 volume_translation_mm = Vec3::Zero();
  CdmShape shape;
  double source_to_detector_mm = 1200.0;
  double source_to_isocenter_mm = 450.0;
  double lao_rao_deg = 0.0;
  double cran_caud_deg = 90.0;

  SampleKey key() const { return {ct_id, femur_side, sample_index}; }

  RigidTransform cdm_perturbation() const {
    return rigid_from_euler(cdm_rotation_deg.x(), cdm_rotation_deg.y(), cdm_rotation_deg.z(), cdm_translation_mm);
  }

  /// Detector size is not sampled; it is taken from `base`.
  ProjectionGeometry geometry(const ProjectionGeometry& base = {}) const {
    ProjectionGeometry g = base;
    g.source_to_detector_mm = source_to_detector_mm;
    g.source_to_isocenter_mm = source_to_isocenter_mm;
    g.lao_rao_deg = lao_rao_deg;
    g.cran_caud_deg = cran_caud_deg;
    return g;
  }

  /// True when every drawn field respects `r`.
  bool within(const SamplingRanges& r) const {
    auto abs_le = [](const Vec3& v, double h) { return (v.array().abs() <= h).all(); };
    bool ok = source_to_detector_mm == r.source_to_detector_mm && r.source_to_isocenter_mm.contains(source_to_isocenter_mm) &&
              lao_rao_deg >= r.lao_rao_deg.lo && lao_rao_deg < r.lao_rao_deg.hi && r.cran_caud_deg.contains(cran_caud_deg) &&
              abs_le(volume_translation_mm, r.volume_translation_mm) && abs_le(cdm_rotation_deg, r.cdm_rotation_deg) &&
              abs_le(cdm_translation_mm, r.cdm_translation_mm);
    for (double a : shape.control_angles_deg) ok = ok && std::abs(a) <= r.control_angle_deg;
    return ok;
  }
};

inline std::uint64_t sample_seed(std::uint64_t master_seed, const std::string& ct_id, FemurSide side, int index) {
  return SeedHasher()
      .add(std::string_view("forge-sample"))
      .add(master_seed)
      .add(std::string_view(ct_id))
      .add(std::string_view(to_string(side)))
      .add(static_cast<std::int64_t>(index))
      .digest();
}

/// Draw order is fixed: SID, LAO/RAO, CRAN/CAUD, volume translation xyz,
/// CDM rotation xyz, CDM translation xyz, control angles.
inline SampleConfig sample_configuration(std::uint64_t master_seed, const std::string& ct_id, FemurSide side, int index,
                                         const SamplingRanges& ranges = {}) {
  ranges.validate();
  SampleConfig c;
  c.ct_id = ct_id;
  c.femur_side = side;
  c.sample_index = index;
  c.rng_seed = sample_seed(master_seed, ct_id, side, index);
  Rng rng(c.rng_seed);
  auto symmetric = [&](double half) { return rng.uniform(-half, half); };
  c.source_to_detector_mm = ranges.source_to_detector_mm;
  c.source_to_isocenter_mm = rng.uniform(ranges.source_to_isocenter_mm.lo, ranges.source_to_isocenter_mm.hi);
  c.lao_rao_deg = rng.uniform(ranges.lao_rao_deg.lo, ranges.lao_rao_deg.hi);
  c.cran_caud_deg = rng.uniform(ranges.cran_caud_deg.lo, ranges.cran_caud_deg.hi);
  for (int a = 0; a < 3; ++a) c.volume_translation_mm[a] = symmetric(ranges.volume_translation_mm);
  for (int a = 0; a < 3; ++a) c.cdm_rotation_deg[a] = symmetric(ranges.cdm_rotation_deg);
  for (int a = 0; a < 3; ++a) c.cdm_translation_mm[a] = symmetric(ranges.cdm_translation_mm);
  for (double& angle : c.shape.control_angles_deg) angle = symmetric(ranges.control_angle_deg);
  return c;
}

inline nlohmann::json to_json(const Vec3& v) { return nlohmann::json::array({v.x(), v.y(), v.z()}); }

inline Vec3 vec3_from_json(const nlohmann::json& j, const std::string& field) {
  require(j.is_array() && j.size() == 3, ErrorKind::kParse, "field '" + field + "' must be a 3-element array");
  Vec3 v;
  for (int a = 0; a < 3; ++a) {
    require(j[a].is_number(), ErrorKind::kParse, "field '" + field + "' must hold numbers");
    v[a] = j[a].get<double>();
  }
  return v;
}

inline nlohmann::json to_json(const SampleConfig& c) {
  return {
      {"ct_id", c.ct_id},
      {"femur_side", to_string(c.femur_side)},
      {"sample_index", c.sample_index},
      {"rng_seed", c.rng_seed},
      {"cdm_pose", {{"rotation_deg", to_json(c.cdm_rotation_deg)}, {"translation_mm", to_json(c.cdm_translation_mm)},
                    {"euler_convention", kEulerConvention}}},
      {"volume_translation_mm", to_json(c.volume_translation_mm)},
      {"control_angles_deg", c.shape.control_angles_deg},
      {"geometry", {{"source_to_detector_mm", c.source_to_detector_mm},
                    {"source_to_isocenter_mm", c.source_to_isocenter_mm},
                    {"lao_rao_deg", c.lao_rao_deg},
                    {"cran_caud_deg", c.cran_caud_deg}}},
  };
}

inline SampleConfig sample_config_from_json(const nlohmann::json& j) {
  try {
    SampleConfig c;
    c.ct_id = j.at("ct_id").get<std::string>();
    c.femur_side = femur_side_from_string(j.at("femur_side").get<std::string>());
    c.sample_index = j.at("sample_index").get<int>();
    c.rng_seed = j.value("rng_seed", std::uint64_t{0});
    const auto& pose = j.at("cdm_pose");
    c.cdm_rotation_deg = vec3_from_json(pose.at("rotation_deg"), "cdm_pose.rotation_deg");
    c.cdm_translation_mm = vec3_from_json(pose.at("translation_mm"), "cdm_pose.translation_mm");
    c.volume_translation_mm = vec3_from_json(j.at("volume_translation_mm"), "volume_translation_mm");
    const auto& angles = j.at("control_angles_deg");
    require(angles.is_array() && angles.size() == kControlPointCount, ErrorKind::kParse,
            "field 'control_angles_deg' must hold 5 numbers");
    for (int i = 0; i < kControlPointCount; ++i) c.shape.control_angles_deg[i] = angles[i].get<double>();
    const auto& g = j.at("geometry");
    c.source_to_detector_mm = g.at("source_to_detector_mm").get<double>();
    c.source_to_isocenter_mm = g.at("source_to_isocenter_mm").get<double>();
    c.lao_rao_deg = g.at("lao_rao_deg").get<double>();
    c.cran_caud_deg = g.at("cran_caud_deg").get<double>();
    return c;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kParse, std::string("sample config: ") + e.what());
  }
}

struct SplitManifest {
  std::uint64_t master_seed = 0;
  int samples_per_femur = 0;
  std::vector<std::string> train_cts;
  std::vector<std::string> test_cts;
  std::vector<SampleKey> train_samples;
  std::vector<SampleKey> val_samples;
  std::vector<SampleKey> test_samples;

  std::size_t total() const { return train_samples.size() + val_samples.size() + test_samples.size(); }
};

/// Train CT count is ceil(0.8 n), capped so at least one CT is held out.
/// Within the training pool val = floor(N / 11), the remainder is train.
inline SplitManifest make_split(const std::vector<std::string>& ct_ids, int samples_per_femur, std::uint64_t master_seed) {
  const std::size_t n = ct_ids.size();
  require(n >= 2, ErrorKind::kInvalidArgument, "make_split: need at least 2 CT ids");
  require(samples_per_femur >= 1, ErrorKind::kInvalidArgument, "make_split: samples per femur must be >= 1");
  std::set<std::string> seen;
  for (const auto& id : ct_ids) {
    require(!id.empty(), ErrorKind::kInvalidArgument, "make_split: empty CT id");
    require(seen.insert(id).second, ErrorKind::kInvalidArgument, "make_split: duplicate CT id '" + id + "'");
  }

  SplitManifest m;
  m.master_seed = master_seed;
  m.samples_per_femur = samples_per_femur;
  std::vector<std::string> order = ct_ids;
  Rng ct_rng(SeedHasher().add(std::string_view("forge-split-cts")).add(master_seed).digest());
  shuffle(order, ct_rng);
  const std::size_t n_train = std::min((4 * n + 4) / 5, n - 1);
  m.train_cts.assign(order.begin(), order.begin() + static_cast<long>(n_train));
  m.test_cts.assign(order.begin() + static_cast<long>(n_train), order.end());

  auto enumerate = [&](const std::vector<std::string>& cts) {
    std::vector<SampleKey> keys;
    for (const auto& ct : cts)
      for (FemurSide side : kBothSides)
        for (int i = 0; i < samples_per_femur; ++i) keys.push_back({ct, side, i});
    return keys;
  };
  std::vector<SampleKey> pool = enumerate(m.train_cts);
  Rng pool_rng(SeedHasher().add(std::string_view("forge-split-pool")).add(master_seed).digest());
  shuffle(pool, pool_rng);
  const std::size_t n_val = pool.size() / 11;
  m.val_samples.assign(pool.begin(), pool.begin() + static_cast<long>(n_val));
  m.train_samples.assign(pool.begin() + static_cast<long>(n_val), pool.end());
  m.test_samples = enumerate(m.test_cts);
  return m;
}

inline nlohmann::json to_json(const SplitManifest& m) {
  auto ids = [](const std::vector<SampleKey>& keys) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& k : keys) a.push_back(k.id());
    return a;
  };
  return {{"format", "forge-split"},
          {"version", 1},
          {"master_seed", m.master_seed},
          {"samples_per_femur", m.samples_per_femur},
          {"train_cts", m.train_cts},
          {"test_cts", m.test_cts},
          {"counts", {{"train", m.train_samples.size()}, {"val", m.val_samples.size()}, {"test", m.test_samples.size()}}},
          {"train", ids(m.train_samples)},
          {"val", ids(m.val_samples)},
          {"test", ids(m.test_samples)}};
}

inline SplitManifest split_manifest_from_json(const nlohmann::json& j) {
  try {
    require(j.at("format") == "forge-split", ErrorKind::kParse, "manifest: format must be 'forge-split'");
    SplitManifest m;
    m.master_seed = j.at("master_seed").get<std::uint64_t>();
    m.samples_per_femur = j.at("samples_per_femur").get<int>();
    m.train_cts = j.at("train_cts").get<std::vector<std::string>>();
    m.test_cts = j.at("test_cts").get<std::vector<std::string>>();
    auto keys = [&](const char* field) {
      std::vector<SampleKey> out;
      for (const auto& s : j.at(field)) out.push_back(parse_sample_id(s.get<std::string>()));
      return out;
    };
    m.train_samples = keys("train");
    m.val_samples = keys("val");
    m.test_samples = keys("test");
    return m;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kParse, std::string("manifest: ") + e.what());
  }
}

}  // namespace forge

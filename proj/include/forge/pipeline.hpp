#pragma once

// Per-sample rendering and whole-dataset generation.

#include <algorithm>
#include <atomic>
#include <fstream>
#include <filesystem>
#include <functional>
#include <mutex>
#include <numbers>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "forge/cdm.hpp"
#include "forge/config.hpp"
#include "forge/error.hpp"
#include "forge/geometry.hpp"
#include "forge/metrics.hpp"
#include "forge/parallel.hpp"
#include "forge/projector.hpp"
#include "forge/record.hpp"
#include "forge/rng.hpp"
#include "forge/sampler.hpp"
#include "forge/volume.hpp"
#include "forge/voxelizer.hpp"

namespace forge {

/// A CT in its own (volume-local) millimeter frame plus header attributes.
struct CtVolume {
  std::string id;
  ScalarVolume hu;
  nlohmann::json attributes = nlohmann::json::object();
};

inline CtVolume load_ct(const std::filesystem::path& path) {
  CtVolume ct;
  ct.id = path.stem().string();
  const VolumeHeader header = read_volume_header(path);
  ct.attributes = header.attributes;
  ct.hu = read_ct(path);
  return ct;
}

/// Maps CDM-local coordinates into the CT frame for the given femur. Config
/// entries win; otherwise the CT's `femur_axes` attribute is used, placing the
/// middle of the notched segment on the bone-axis center with local +z along
/// the axis. The right side is turned half a revolution about the axis.
inline RigidTransform femur_alignment(const PipelineConfig& cfg, const CtVolume& ct, FemurSide side) {
  const std::string side_name = to_string(side);
  if (auto it = cfg.alignment.find(ct.id); it != cfg.alignment.end()) {
    if (auto s = it->second.find(side_name); s != it->second.end()) return s->second.transform();
  }
  const auto axes = ct.attributes.find("femur_axes");
  require(axes != ct.attributes.end() && axes->contains(side_name), ErrorKind::kInvalidArgument,
          "no alignment for CT '" + ct.id + "' side '" + side_name + "' (config 'alignment' or header 'femur_axes')");
  const auto& axis = axes->at(side_name);
  const Vec3 center = vec3_from_json(axis.at("center_mm"), "femur_axes." + side_name + ".center_mm");
  Vec3 dir = vec3_from_json(axis.at("direction"), "femur_axes." + side_name + ".direction");
  require(dir.norm() > 0, ErrorKind::kInvalidArgument, "femur axis direction must be non-zero");
  dir.normalize();
  Mat3 rot = Eigen::Quaterniond::FromTwoVectors(Vec3::UnitZ(), dir).toRotationMatrix();
  if (side == FemurSide::kRight) rot = rot * rot_z(std::numbers::pi);
  RigidTransform t{rot, Vec3::Zero()};
  t.translation = center - rot * Vec3(0, 0, 0.5 * cfg.cdm.notched_length());
  return t;
}

/// Rigid placements of one sample in the world frame (isocenter at the origin).
struct SceneLayout {
  RigidTransform ct_to_world;
  RigidTransform cdm_to_ct;
  RigidTransform cdm_to_world;
};

/// The isocenter sits on the aligned notched-segment center, shifted by the
/// sampled volume translation.
inline SceneLayout scene_layout(const PipelineConfig& cfg, const CtVolume& ct, const SampleConfig& sc) {
  const RigidTransform align = femur_alignment(cfg, ct, sc.femur_side);
  SceneLayout s;
  s.cdm_to_ct = align * sc.cdm_perturbation();
  const Vec3 anchor = align.apply(Vec3(0, 0, 0.5 * cfg.cdm.notched_length()));
  s.ct_to_world = RigidTransform::from_translation(sc.volume_translation_mm - anchor);
  s.cdm_to_world = s.ct_to_world * s.cdm_to_ct;
  return s;
}

/// Intermediate products, exposed for inspection and tests.
struct RenderProducts {
  CdmPosedModel model;
  OccupancyVolume body_occupancy;
  OccupancyVolume tool_occupancy;
  OccupancyVolume notch_occupancy;
  Image2D line_integrals;
  SceneLayout layout;
};

inline SampleRecord render_sample(const PipelineConfig& cfg, const CtVolume& ct, const SampleConfig& sc,
                                  RenderProducts* products = nullptr) {
  cfg.validate();
  const ProjectionGeometry g = sc.geometry(cfg.base_geometry());
  const CameraPose cam = camera_from_orbit(g);
  const SceneLayout layout = scene_layout(cfg, ct, sc);
  const int threads = cfg.threads_per_worker;

  const CdmPosedModel model = forward_kinematics(sc.shape, cfg.cdm);
  const CdmMeshes meshes = build_cdm_meshes(model, cfg.cdm);
  const OccupancyVolume body = voxelize_mesh(meshes.body, cfg.mesh_voxel_spacing_mm, cfg.mesh_voxel_padding_mm, threads);
  const OccupancyVolume tool = voxelize_mesh(meshes.tool, cfg.mesh_voxel_spacing_mm, cfg.mesh_voxel_padding_mm, threads);
  const OccupancyVolume notch = occupancy_intersection(voxelize_mesh_on_grid(meshes.notch_region, body.grid, threads), body);

  const OccupancyVolume displaced =
      occupancy_union(resample_occupancy_to_grid(body, ct.hu.grid, layout.cdm_to_ct, cfg.resample_supersample, threads),
                      resample_occupancy_to_grid(tool, ct.hu.grid, layout.cdm_to_ct, cfg.resample_supersample, threads));
  const ScalarVolume ct_mu = hu_to_attenuation(carve_drill(ct.hu, displaced, cfg.carve_hu), cfg.mu_water_per_mm);
  const ScalarVolume body_mu = occupancy_to_attenuation(body, cfg.cdm_mu_per_mm);
  const ScalarVolume tool_mu = occupancy_to_attenuation(tool, cfg.tool_mu_per_mm);

  RaycastOptions ropts;
  ropts.step_mm = cfg.raycast_step_mm;
  ropts.threads = threads;
  const std::array<PlacedVolume, 3> scene{PlacedVolume{&ct_mu, layout.ct_to_world},
                                          PlacedVolume{&body_mu, layout.cdm_to_world},
                                          PlacedVolume{&tool_mu, layout.cdm_to_world}};
  Image2D p = raycast_line_integrals(scene, cam, g, ropts);

  SampleRecord rec;
  rec.config = sc;
  rec.camera = cam;
  rec.pipeline_version = kPipelineVersion;
  rec.config_hash = config_hash(cfg);
  rec.belief_sigma_px = cfg.belief_sigma_px;
  rec.noise_applied = cfg.noise_enabled;
  if (cfg.noise_enabled) p = add_poisson_noise(p, cfg.noise_photons, splitmix64(sc.rng_seed ^ 0x6e6f697365ULL));
  NormalizedImage n = normalize_line_integrals(p);
  rec.image = std::move(n.image);
  rec.normalization_min = n.min;
  rec.normalization_max = n.max;
  rec.mask = project_mask(occupancy_as_scalar(notch), layout.cdm_to_world, cam, g, ropts);
  rec.landmarks_px = render_landmarks(model, layout.cdm_to_world, cam, g);
  const BeliefMapParams bp{cfg.belief_sigma_px, 1.0};
  for (int k = 0; k < 2; ++k) rec.belief[k] = belief_map(rec.landmarks_px[k], bp, g.detector_cols, g.detector_rows, g.pixel_size_mm);

  if (products) {
    products->model = model;
    products->body_occupancy = body;
    products->tool_occupancy = tool;
    products->notch_occupancy = notch;
    products->line_integrals = std::move(p);
    products->layout = layout;
  }
  return rec;
}

struct SampleFailure {
  std::string sample_id;
  std::string message;
};

struct GenerateSummary {
  SplitManifest manifest;
  std::size_t rendered = 0;
  std::size_t reused = 0;
  std::vector<SampleFailure> failures;

  std::size_t total() const { return manifest.total(); }
  double failure_rate() const {
    return total() ? static_cast<double>(failures.size()) / static_cast<double>(total()) : 0.0;
  }
};

using LogFn = std::function<void(const std::string&)>;

/// Renders every manifest sample under `out`, one CT in memory at a time.
/// Existing records with a matching config hash are kept. Per-sample errors
/// are logged and skipped; the manifest is written after all samples finish.
inline GenerateSummary generate_dataset(const PipelineConfig& cfg, const std::vector<std::filesystem::path>& ct_paths,
                                        std::uint64_t master_seed, const std::filesystem::path& out,
                                        const LogFn& log = {}) {
  cfg.validate();
  std::vector<std::string> ids;
  for (const auto& p : ct_paths) ids.push_back(p.stem().string());
  GenerateSummary summary;
  summary.manifest = make_split(ids, cfg.samples_per_femur, master_seed);
  const std::string hash = config_hash(cfg);
  std::filesystem::create_directories(out);

  struct Job {
    SampleKey key;
    std::string split;
  };
  std::mutex mutex;
  auto note = [&](const std::string& msg) {
    if (!log) return;
    std::lock_guard lock(mutex);
    log(msg);
  };

  for (std::size_t c = 0; c < ct_paths.size(); ++c) {
    std::vector<Job> jobs;
    auto collect = [&](const std::vector<SampleKey>& keys, const char* split) {
      for (const auto& k : keys)
        if (k.ct_id == ids[c]) jobs.push_back({k, split});
    };
    collect(summary.manifest.train_samples, "train");
    collect(summary.manifest.val_samples, "val");
    collect(summary.manifest.test_samples, "test");

    std::vector<Job> pending;
    for (const auto& job : jobs) {
      if (record_is_current(record_dir(out, job.split, job.key), hash)) ++summary.reused;
      else pending.push_back(job);
    }
    if (pending.empty()) continue;

    CtVolume ct;
    try {
      ct = load_ct(ct_paths[c]);
    } catch (const Error& e) {
      for (const auto& job : pending) summary.failures.push_back({job.key.id(), e.what()});
      note(fmt::format("CT {} failed to load: {}", ids[c], e.what()));
      continue;
    }
    note(fmt::format("CT {}: rendering {} samples ({} reused)", ids[c], pending.size(), jobs.size() - pending.size()));

    std::atomic<std::size_t> done{0};
    parallel_for(0, static_cast<long>(pending.size()), cfg.workers, [&](long i) {
      const Job& job = pending[static_cast<std::size_t>(i)];
      try {
        const SampleConfig sc = sample_configuration(master_seed, job.key.ct_id, job.key.side, job.key.index, cfg.ranges);
        SampleRecord rec = render_sample(cfg, ct, sc);
        rec.split = job.split;
        write_record(record_dir(out, job.split, job.key), rec, cfg.write_previews);
        ++done;
      } catch (const std::exception& e) {
        std::lock_guard lock(mutex);
        summary.failures.push_back({job.key.id(), e.what()});
        if (log) log(fmt::format("sample {} skipped: {}", job.key.id(), e.what()));
      }
    });
    summary.rendered += done.load();
  }

  std::sort(summary.failures.begin(), summary.failures.end(),
            [](const SampleFailure& a, const SampleFailure& b) { return a.sample_id < b.sample_id; });
  nlohmann::json manifest = to_json(summary.manifest);
  manifest["config_hash"] = hash;
  manifest["pipeline_version"] = kPipelineVersion;
  nlohmann::json failed = nlohmann::json::array();
  for (const auto& f : summary.failures) failed.push_back({{"sample_id", f.sample_id}, {"error", f.message}});
  manifest["failures"] = failed;
  auto write_json = [](const std::filesystem::path& path, const nlohmann::json& j) {
    std::ofstream f(path);
    f << j.dump(2) << "\n";
    require(static_cast<bool>(f), ErrorKind::kIo, "write failed: " + path.string());
  };
  write_json(out / "manifest.json", manifest);
  write_json(out / "config.json", to_json(cfg));
  return summary;
}

}  // namespace forge

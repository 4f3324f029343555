#pragma once

#include <atomic>
#include <filesystem>
#include <random>
#include <string>

#include <unistd.h>

#include "forge/forge.hpp"

namespace fixture {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("forge_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Coarse phantom and small detector for fast pipeline tests.
inline forge::PhantomSpec small_phantom() {
  forge::PhantomSpec s;
  s.dims = {64, 52, 60};
  s.spacing_mm = 3.0;
  return s;
}

inline forge::PipelineConfig small_config() {
  forge::PipelineConfig c;
  c.detector_cols = 128;
  c.detector_rows = 128;
  c.pixel_size_mm = 2.48;
  c.mesh_voxel_spacing_mm = 0.2;
  c.mesh_voxel_padding_mm = 0.4;
  c.samples_per_femur = 3;
  return c;
}

inline forge::CtVolume small_ct(const std::string& id = "phantom0", int variant = 0) {
  const forge::PhantomSpec spec = small_phantom().variant(variant);
  return {id, forge::make_phantom_ct(spec), forge::phantom_attributes(spec, variant)};
}

/// Uniform cube of attenuation `mu` and side `side`, centered at the origin,
/// voxelized at `spacing` with `pad` empty voxels on every side.
inline forge::ScalarVolume uniform_cube(double mu, double side, double spacing, int pad = 0) {
  const int n = static_cast<int>(std::lround(side / spacing)) + 2 * pad;
  forge::VolumeGrid g;
  g.dims = {n, n, n};
  g.spacing_mm = forge::Vec3::Constant(spacing);
  g.origin_mm = forge::Vec3::Constant(-0.5 * spacing * (n - 1));
  forge::ScalarVolume v(g, forge::VolumeKind::kAttenuation, 0.0f);
  for (int k = pad; k < n - pad; ++k)
    for (int j = pad; j < n - pad; ++j)
      for (int i = pad; i < n - pad; ++i) v.at(i, j, k) = static_cast<float>(mu);
  return v;
}

}  // namespace fixture

#pragma once

// On-disk sample records:
//   <out>/<split>/<ct>_<side>_<index>/
//     image.f32raw    normalized image, float32 little-endian, row-major (u fastest)
//     mask.u8raw      0/1 bytes, same layout
//     belief_0.f32raw proximal landmark belief map
//     belief_1.f32raw distal landmark belief map
//     meta.json       everything else; written last, so its presence marks a complete record

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <png.h>
#include <nlohmann/json.hpp>

#include "forge/error.hpp"
#include "forge/geometry.hpp"
#include "forge/image.hpp"
#include "forge/sampler.hpp"
#include "forge/volume.hpp"

namespace forge {

inline constexpr const char* kRecordFormat = "forge-sample";
inline constexpr int kRecordVersion = 1;

struct SampleRecord {
  std::string split;
  Image2D image;
  Image2D mask;
  std::array<Image2D, 2> belief;
  std::array<PixelCoord, 2> landmarks_px{};
  SampleConfig config;
  double normalization_min = 0.0;
  double normalization_max = 0.0;
  double belief_sigma_px = 5.0;
  bool noise_applied = false;
  std::string pipeline_version;
  std::string config_hash;
  CameraPose camera;

  std::string sample_id() const { return config.key().id(); }

  void validate() const {
    require(image.kind == ImageKind::kNormalized, ErrorKind::kInvalidArgument, "record: image must be normalized");
    require(mask.kind == ImageKind::kMask, ErrorKind::kInvalidArgument, "record: mask kind");
    require(image.same_shape(mask) && image.same_shape(belief[0]) && image.same_shape(belief[1]),
            ErrorKind::kDimensionMismatch, "record: image, mask and belief maps must share dimensions");
    for (double m : mask.values)
      require(m == 0.0 || m == 1.0, ErrorKind::kInvalidArgument, "record: mask must be binary");
  }
};

namespace detail {

inline void write_bytes(const std::filesystem::path& path, const void* data, std::size_t n) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::kIo, "cannot open " + path.string());
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  require(static_cast<bool>(out), ErrorKind::kIo, "write failed: " + path.string());
}

inline void write_image_f32(const std::filesystem::path& path, const Image2D& img) {
  write_raw_f32(path, std::vector<float>(img.values.begin(), img.values.end()));
}

inline void write_image_u8(const std::filesystem::path& path, const Image2D& img) {
  std::vector<std::uint8_t> bytes(img.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = img.values[i] > 0.5 ? 1 : 0;
  write_bytes(path, bytes.data(), bytes.size());
}

inline std::string read_exact(const std::filesystem::path& path, std::size_t expected) {
  require(std::filesystem::exists(path), ErrorKind::kIo, "missing file " + path.string());
  std::string bytes = read_text(path);
  require(bytes.size() >= expected, ErrorKind::kTruncated,
          fmt::format("{}: expected {} bytes, found {}", path.string(), expected, bytes.size()));
  require(bytes.size() == expected, ErrorKind::kParse,
          fmt::format("{}: expected {} bytes, found {}", path.string(), expected, bytes.size()));
  return bytes;
}

inline Image2D read_image_f32(const std::filesystem::path& path, int cols, int rows, double px, ImageKind kind) {
  Image2D img(cols, rows, px, kind);
  const std::string bytes = read_exact(path, img.size() * 4);
  const std::vector<float> f = decode_raw(bytes, "float32", false, img.size());
  img.values.assign(f.begin(), f.end());
  return img;
}

inline Image2D read_image_u8(const std::filesystem::path& path, int cols, int rows, double px) {
  Image2D img(cols, rows, px, ImageKind::kMask);
  const std::string bytes = read_exact(path, img.size());
  for (std::size_t i = 0; i < img.size(); ++i) img.values[i] = static_cast<unsigned char>(bytes[i]) ? 1.0 : 0.0;
  return img;
}

inline nlohmann::json camera_json(const CameraPose& c) {
  return {{"source_position_mm", to_json(c.source_position)},
          {"detector_center_mm", to_json(c.detector_center)},
          {"detector_u_axis", to_json(c.detector_u_axis)},
          {"detector_v_axis", to_json(c.detector_v_axis)}};
}

/// 8-bit grayscale PNG; `lo`..`hi` maps to 0..255.
inline void write_png(const std::filesystem::path& path, const Image2D& img, double lo, double hi) {
  FILE* fp = std::fopen(path.string().c_str(), "wb");
  require(fp != nullptr, ErrorKind::kIo, "cannot open " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    fail(ErrorKind::kIo, "png encoding failed: " + path.string());
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.cols), static_cast<png_uint_32>(img.rows), 8, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_byte> row(static_cast<std::size_t>(img.cols));
  const double scale = hi > lo ? 255.0 / (hi - lo) : 0.0;
  for (int v = 0; v < img.rows; ++v) {
    for (int u = 0; u < img.cols; ++u)
      row[static_cast<std::size_t>(u)] = static_cast<png_byte>(std::clamp(std::lround((img.at(u, v) - lo) * scale), 0L, 255L));
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

}  // namespace detail

inline std::filesystem::path record_dir(const std::filesystem::path& out, const std::string& split, const SampleKey& key) {
  return out / split / key.id();
}

inline nlohmann::json record_meta(const SampleRecord& r) {
  auto point = [](PixelCoord p) { return nlohmann::json::array({p.u, p.v}); };
  return {
      {"format", kRecordFormat},
      {"version", kRecordVersion},
      {"sample_id", r.sample_id()},
      {"split", r.split},
      {"pipeline_version", r.pipeline_version},
      {"config_hash", r.config_hash},
      {"image",
       {{"cols", r.image.cols},
        {"rows", r.image.rows},
        {"pixel_size_mm", r.image.pixel_size_mm},
        {"layout", "row-major, u fastest"},
        {"byte_order", "little"}}},
      {"files",
       {{"image", {{"name", "image.f32raw"}, {"dtype", "float32"}, {"kind", "normalized"}}},
        {"mask", {{"name", "mask.u8raw"}, {"dtype", "uint8"}, {"kind", "mask"}}},
        {"belief", {{{"name", "belief_0.f32raw"}, {"dtype", "float32"}, {"landmark", "proximal"}},
                    {{"name", "belief_1.f32raw"}, {"dtype", "float32"}, {"landmark", "distal"}}}}}},
      {"normalization", {{"min", r.normalization_min}, {"max", r.normalization_max}, {"range", "[-1, 1]"}}},
      {"landmarks_px", {{"proximal", point(r.landmarks_px[0])}, {"distal", point(r.landmarks_px[1])}}},
      {"belief_sigma_px", r.belief_sigma_px},
      {"noise_applied", r.noise_applied},
      {"camera", detail::camera_json(r.camera)},
      {"sample", to_json(r.config)},
  };
}

inline void write_record(const std::filesystem::path& dir, const SampleRecord& r, bool previews = false) {
  r.validate();
  std::filesystem::create_directories(dir);
  std::filesystem::remove(dir / "meta.json");
  detail::write_image_f32(dir / "image.f32raw", r.image);
  detail::write_image_u8(dir / "mask.u8raw", r.mask);
  detail::write_image_f32(dir / "belief_0.f32raw", r.belief[0]);
  detail::write_image_f32(dir / "belief_1.f32raw", r.belief[1]);
  if (previews) {
    detail::write_png(dir / "image.png", r.image, -1.0, 1.0);
    detail::write_png(dir / "mask.png", r.mask, 0.0, 1.0);
  }
  const auto tmp = dir / "meta.json.tmp";
  {
    std::ofstream out(tmp);
    require(static_cast<bool>(out), ErrorKind::kIo, "cannot open " + tmp.string());
    out << record_meta(r).dump(2) << "\n";
    require(static_cast<bool>(out), ErrorKind::kIo, "write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, dir / "meta.json");
}

inline nlohmann::json read_record_meta(const std::filesystem::path& dir) {
  const auto path = dir / "meta.json";
  require(std::filesystem::exists(path), ErrorKind::kIo, "missing " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(detail::read_text(path));
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::kParse, path.string() + ": " + e.what());
  }
  require(j.value("format", "") == kRecordFormat, ErrorKind::kParse, path.string() + ": field 'format' is not forge-sample");
  require(j.value("version", 0) == kRecordVersion, ErrorKind::kUnsupported, path.string() + ": unsupported 'version'");
  return j;
}

/// Loads and re-validates a record. With a non-empty `expected_hash` the
/// stored config hash must match.
inline SampleRecord read_record(const std::filesystem::path& dir, const std::string& expected_hash = "") {
  const nlohmann::json j = read_record_meta(dir);
  try {
    SampleRecord r;
    r.split = j.at("split").get<std::string>();
    r.pipeline_version = j.at("pipeline_version").get<std::string>();
    r.config_hash = j.at("config_hash").get<std::string>();
    require(expected_hash.empty() || r.config_hash == expected_hash, ErrorKind::kParse,
            dir.string() + ": field 'config_hash' does not match the current configuration");
    const auto& im = j.at("image");
    const int cols = im.at("cols").get<int>();
    const int rows = im.at("rows").get<int>();
    const double px = im.at("pixel_size_mm").get<double>();
    r.image = detail::read_image_f32(dir / "image.f32raw", cols, rows, px, ImageKind::kNormalized);
    r.mask = detail::read_image_u8(dir / "mask.u8raw", cols, rows, px);
    r.belief[0] = detail::read_image_f32(dir / "belief_0.f32raw", cols, rows, px, ImageKind::kProbability);
    r.belief[1] = detail::read_image_f32(dir / "belief_1.f32raw", cols, rows, px, ImageKind::kProbability);
    const auto& lm = j.at("landmarks_px");
    for (int k = 0; k < 2; ++k) {
      const auto& p = lm.at(k == 0 ? "proximal" : "distal");
      r.landmarks_px[k] = {p.at(0).get<double>(), p.at(1).get<double>()};
    }
    r.normalization_min = j.at("normalization").at("min").get<double>();
    r.normalization_max = j.at("normalization").at("max").get<double>();
    r.belief_sigma_px = j.at("belief_sigma_px").get<double>();
    r.noise_applied = j.at("noise_applied").get<bool>();
    const auto& cam = j.at("camera");
    r.camera.source_position = vec3_from_json(cam.at("source_position_mm"), "camera.source_position_mm");
    r.camera.detector_center = vec3_from_json(cam.at("detector_center_mm"), "camera.detector_center_mm");
    r.camera.detector_u_axis = vec3_from_json(cam.at("detector_u_axis"), "camera.detector_u_axis");
    r.camera.detector_v_axis = vec3_from_json(cam.at("detector_v_axis"), "camera.detector_v_axis");
    r.config = sample_config_from_json(j.at("sample"));
    require(r.sample_id() == j.at("sample_id").get<std::string>(), ErrorKind::kParse,
            dir.string() + ": field 'sample_id' disagrees with the sample block");
    r.validate();
    return r;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kParse, dir.string() + "/meta.json: " + e.what());
  }
}

/// True when `dir` holds a complete record produced under `hash`.
inline bool record_is_current(const std::filesystem::path& dir, const std::string& hash) {
  if (!std::filesystem::exists(dir / "meta.json")) return false;
  try {
    read_record(dir, hash);
    return true;
  } catch (const Error&) {
    return false;
  }
}

}  // namespace forge

#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "forge/error.hpp"
#include "forge/geometry.hpp"

namespace forge {

enum class VolumeKind { kHu, kOccupancy, kAttenuation };

inline std::string to_string(VolumeKind k) {
  switch (k) {
    case VolumeKind::kHu: return "hu";
    case VolumeKind::kOccupancy: return "occupancy";
    case VolumeKind::kAttenuation: return "attenuation";
  }
  return "hu";
}

inline VolumeKind volume_kind_from_string(const std::string& s) {
  if (s == "hu") return VolumeKind::kHu;
  if (s == "occupancy") return VolumeKind::kOccupancy;
  if (s == "attenuation") return VolumeKind::kAttenuation;
  fail(ErrorKind::kParse, "unknown volume kind '" + s + "'");
}

/// Grid placement shared by every volume: voxel (0,0,0) center at origin_mm,
/// axis-aligned, x-fastest storage.
struct VolumeGrid {
  std::array<int, 3> dims{0, 0, 0};
  Vec3 spacing_mm = Vec3::Ones();
  Vec3 origin_mm = Vec3::Zero();

  std::size_t voxel_count() const {
    return static_cast<std::size_t>(dims[0]) * static_cast<std::size_t>(dims[1]) * static_cast<std::size_t>(dims[2]);
  }
  std::size_t index(int i, int j, int k) const {
    return (static_cast<std::size_t>(k) * dims[1] + j) * dims[0] + i;
  }
  Vec3 center(int i, int j, int k) const {
    return origin_mm + spacing_mm.cwiseProduct(Vec3(i, j, k));
  }
  /// Continuous voxel coordinate of a local-frame point.
  Vec3 to_index(const Vec3& p) const { return (p - origin_mm).cwiseQuotient(spacing_mm); }
  /// Outer box (voxel faces, not centers).
  Vec3 lower_corner() const { return origin_mm - 0.5 * spacing_mm; }
  Vec3 upper_corner() const {
    return origin_mm + spacing_mm.cwiseProduct(Vec3(dims[0] - 0.5, dims[1] - 0.5, dims[2] - 0.5));
  }
  Vec3 center_point() const {
    return origin_mm + 0.5 * spacing_mm.cwiseProduct(Vec3(dims[0] - 1, dims[1] - 1, dims[2] - 1));
  }
  double min_spacing() const { return spacing_mm.minCoeff(); }
  bool in_bounds(int i, int j, int k) const {
    return i >= 0 && j >= 0 && k >= 0 && i < dims[0] && j < dims[1] && k < dims[2];
  }

  void validate() const {
    require(dims[0] > 0 && dims[1] > 0 && dims[2] > 0, ErrorKind::kInvalidArgument, "volume dims must be positive");
    require((spacing_mm.array() > 0).all() && spacing_mm.allFinite(), ErrorKind::kInvalidArgument,
            "volume spacing must be positive");
    require(origin_mm.allFinite(), ErrorKind::kInvalidArgument, "volume origin must be finite");
  }

  bool same_as(const VolumeGrid& o, double tol = 1e-9) const {
    return dims == o.dims && (spacing_mm - o.spacing_mm).cwiseAbs().maxCoeff() <= tol &&
           (origin_mm - o.origin_mm).cwiseAbs().maxCoeff() <= tol;
  }
};

template <typename T>
struct VoxelVolume {
  VolumeGrid grid;
  VolumeKind kind = VolumeKind::kHu;
  std::vector<T> values;

  VoxelVolume() = default;
  VoxelVolume(const VolumeGrid& g, VolumeKind k, T fill = T{}) : grid(g), kind(k) {
    grid.validate();
    values.assign(grid.voxel_count(), fill);
  }

  T& at(int i, int j, int k) { return values[grid.index(i, j, k)]; }
  const T& at(int i, int j, int k) const { return values[grid.index(i, j, k)]; }

  void validate() const {
    grid.validate();
    require(values.size() == grid.voxel_count(), ErrorKind::kInvalidArgument, "volume array length mismatch");
    if (kind == VolumeKind::kOccupancy) {
      for (const T& v : values) {
        require(v == T{0} || v == T{1}, ErrorKind::kInvalidArgument, "occupancy volume must contain only 0/1");
      }
    }
  }
};

using ScalarVolume = VoxelVolume<float>;
using OccupancyVolume = VoxelVolume<std::uint8_t>;

// ---------------------------------------------------------------------------
// Disk formats.
//
// Native: `<name>.json` header + little-endian float32 raw, x fastest.
//   {"format": "forge-volume", "version": 1, "dims": [..], "spacing_mm": [..],
//    "origin_mm": [..], "kind": "hu", "dtype": "float32",
//    "byte_order": "little", "data_file": "<name>.raw", "attributes": {...}}
// MetaImage: `.mhd` header + raw (import of CT data).

struct VolumeHeader {
  VolumeGrid grid;
  VolumeKind kind = VolumeKind::kHu;
  std::string element_type = "float32";  // native dtype name
  bool big_endian = false;
  std::filesystem::path data_file;
  nlohmann::json attributes = nlohmann::json::object();
};

namespace detail {

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::kIo, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::size_t element_size(const std::string& type) {
  static const std::map<std::string, std::size_t> sizes = {
      {"int8", 1}, {"uint8", 1}, {"int16", 2}, {"uint16", 2}, {"int32", 4}, {"uint32", 4}, {"float32", 4}, {"float64", 8}};
  auto it = sizes.find(type);
  if (it == sizes.end()) fail(ErrorKind::kUnsupported, "unsupported element type '" + type + "'");
  return it->second;
}

template <typename Src>
float load_as_float(const char* p, bool swap) {
  Src v;
  std::memcpy(&v, p, sizeof(Src));
  if (swap && sizeof(Src) > 1) {
    char bytes[sizeof(Src)];
    std::memcpy(bytes, &v, sizeof(Src));
    std::reverse(bytes, bytes + sizeof(Src));
    std::memcpy(&v, bytes, sizeof(Src));
  }
  return static_cast<float>(v);
}

template <typename Src>
void decode_typed(const char* p, bool swap, std::vector<float>& out) {
  for (std::size_t i = 0; i < out.size(); ++i, p += sizeof(Src)) out[i] = load_as_float<Src>(p, swap);
}

inline std::vector<float> decode_raw(const std::string& bytes, const std::string& type, bool big_endian, std::size_t count) {
  element_size(type);
  const bool swap = big_endian != (std::endian::native == std::endian::big);
  std::vector<float> out(count);
  const char* p = bytes.data();
  if (type == "int8") decode_typed<std::int8_t>(p, swap, out);
  else if (type == "uint8") decode_typed<std::uint8_t>(p, swap, out);
  else if (type == "int16") decode_typed<std::int16_t>(p, swap, out);
  else if (type == "uint16") decode_typed<std::uint16_t>(p, swap, out);
  else if (type == "int32") decode_typed<std::int32_t>(p, swap, out);
  else if (type == "uint32") decode_typed<std::uint32_t>(p, swap, out);
  else if (type == "float32") decode_typed<float>(p, swap, out);
  else decode_typed<double>(p, swap, out);
  return out;
}

inline std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream ss(s);
  std::vector<std::string> out;
  for (std::string tok; ss >> tok;) out.push_back(tok);
  return out;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <int N>
std::array<double, N> parse_numbers(const std::string& field, const std::string& value) {
  const auto toks = split_ws(value);
  if (static_cast<int>(toks.size()) != N) {
    fail(ErrorKind::kParse, "field " + field + ": expected " + std::to_string(N) + " values, got '" + value + "'");
  }
  std::array<double, N> out{};
  for (int i = 0; i < N; ++i) {
    try {
      std::size_t used = 0;
      out[i] = std::stod(toks[i], &used);
      if (used != toks[i].size()) throw std::invalid_argument(toks[i]);
    } catch (const std::exception&) {
      fail(ErrorKind::kParse, "field " + field + ": not a number '" + toks[i] + "'");
    }
  }
  return out;
}

inline bool parse_bool(const std::string& field, const std::string& value) {
  if (value == "True" || value == "true" || value == "1") return true;
  if (value == "False" || value == "false" || value == "0") return false;
  fail(ErrorKind::kParse, "field " + field + ": expected True/False, got '" + value + "'");
}

inline VolumeHeader parse_metaimage_header(const std::filesystem::path& path) {
  std::map<std::string, std::string> fields;
  std::istringstream in(read_text(path));
  for (std::string line; std::getline(in, line);) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(ErrorKind::kParse, "MetaImage: malformed line '" + line + "'");
    fields[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  auto need = [&](const std::string& key) -> const std::string& {
    auto it = fields.find(key);
    if (it == fields.end()) fail(ErrorKind::kParse, "MetaImage: missing field " + key);
    return it->second;
  };

  VolumeHeader h;
  const auto ndims = parse_numbers<1>("NDims", need("NDims"))[0];
  if (ndims != 3) fail(ErrorKind::kUnsupported, "MetaImage: field NDims must be 3");
  const auto dims = parse_numbers<3>("DimSize", need("DimSize"));
  for (int a = 0; a < 3; ++a) {
    if (dims[a] < 1 || dims[a] != std::floor(dims[a])) fail(ErrorKind::kParse, "MetaImage: field DimSize must hold positive integers");
    h.grid.dims[a] = static_cast<int>(dims[a]);
  }
  if (fields.count("ElementSpacing")) {
    const auto s = parse_numbers<3>("ElementSpacing", fields["ElementSpacing"]);
    h.grid.spacing_mm = Vec3(s[0], s[1], s[2]);
  } else if (fields.count("ElementSize")) {
    const auto s = parse_numbers<3>("ElementSize", fields["ElementSize"]);
    h.grid.spacing_mm = Vec3(s[0], s[1], s[2]);
  }
  for (const char* key : {"Offset", "Origin", "Position"}) {
    if (fields.count(key)) {
      const auto o = parse_numbers<3>(key, fields[key]);
      h.grid.origin_mm = Vec3(o[0], o[1], o[2]);
      break;
    }
  }
  for (const char* key : {"TransformMatrix", "Rotation", "Orientation"}) {
    if (fields.count(key)) {
      const auto m = parse_numbers<9>(key, fields[key]);
      const std::array<double, 9> eye = {1, 0, 0, 0, 1, 0, 0, 0, 1};
      for (int i = 0; i < 9; ++i) {
        if (std::abs(m[i] - eye[i]) > 1e-6) fail(ErrorKind::kUnsupported, std::string("MetaImage: field ") + key + " must be identity");
      }
    }
  }
  if (fields.count("CompressedData") && parse_bool("CompressedData", fields["CompressedData"])) {
    fail(ErrorKind::kUnsupported, "MetaImage: field CompressedData=True is not supported");
  }
  for (const char* key : {"ElementNumberOfChannels"}) {
    if (fields.count(key) && parse_numbers<1>(key, fields[key])[0] != 1) {
      fail(ErrorKind::kUnsupported, "MetaImage: field ElementNumberOfChannels must be 1");
    }
  }
  for (const char* key : {"BinaryDataByteOrderMSB", "ElementByteOrderMSB"}) {
    if (fields.count(key)) h.big_endian = parse_bool(key, fields[key]);
  }
  static const std::map<std::string, std::string> types = {
      {"MET_CHAR", "int8"},   {"MET_UCHAR", "uint8"},  {"MET_SHORT", "int16"},   {"MET_USHORT", "uint16"},
      {"MET_INT", "int32"},   {"MET_UINT", "uint32"},  {"MET_FLOAT", "float32"}, {"MET_DOUBLE", "float64"}};
  const auto& et = need("ElementType");
  auto it = types.find(et);
  if (it == types.end()) fail(ErrorKind::kUnsupported, "MetaImage: field ElementType '" + et + "' is not supported");
  h.element_type = it->second;
  const auto& df = need("ElementDataFile");
  if (df == "LOCAL" || df == "LIST" || df.find('%') != std::string::npos) {
    fail(ErrorKind::kUnsupported, "MetaImage: field ElementDataFile='" + df + "' is not supported");
  }
  h.data_file = path.parent_path() / df;
  h.kind = VolumeKind::kHu;
  h.grid.validate();
  return h;
}

inline VolumeHeader parse_native_header(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::kParse, "volume header " + path.string() + ": " + e.what());
  }
  auto field = [&](const char* key) -> const nlohmann::json& {
    if (!j.contains(key)) fail(ErrorKind::kParse, std::string("volume header: missing field ") + key);
    return j.at(key);
  };
  VolumeHeader h;
  try {
    if (field("format").get<std::string>() != "forge-volume") fail(ErrorKind::kParse, "volume header: field format must be 'forge-volume'");
    const auto dims = field("dims").get<std::vector<int>>();
    const auto spacing = field("spacing_mm").get<std::vector<double>>();
    const auto origin = field("origin_mm").get<std::vector<double>>();
    if (dims.size() != 3) fail(ErrorKind::kParse, "volume header: field dims must have 3 entries");
    if (spacing.size() != 3) fail(ErrorKind::kParse, "volume header: field spacing_mm must have 3 entries");
    if (origin.size() != 3) fail(ErrorKind::kParse, "volume header: field origin_mm must have 3 entries");
    h.grid.dims = {dims[0], dims[1], dims[2]};
    h.grid.spacing_mm = Vec3(spacing[0], spacing[1], spacing[2]);
    h.grid.origin_mm = Vec3(origin[0], origin[1], origin[2]);
    h.kind = volume_kind_from_string(field("kind").get<std::string>());
    h.element_type = field("dtype").get<std::string>();
    element_size(h.element_type);
    const auto order = field("byte_order").get<std::string>();
    if (order != "little" && order != "big") fail(ErrorKind::kParse, "volume header: field byte_order must be little|big");
    h.big_endian = order == "big";
    h.data_file = path.parent_path() / field("data_file").get<std::string>();
    if (j.contains("attributes")) h.attributes = j.at("attributes");
  } catch (const nlohmann::json::type_error& e) {
    fail(ErrorKind::kParse, std::string("volume header: wrong field type: ") + e.what());
  }
  try {
    h.grid.validate();
  } catch (const Error& e) {
    fail(ErrorKind::kParse, std::string("volume header: ") + e.what());
  }
  return h;
}

}  // namespace detail

/// Header only (no voxel data is touched), for `.mhd` or native `.json`.
inline VolumeHeader read_volume_header(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".mhd" || ext == ".mha") {
    if (ext == ".mha") fail(ErrorKind::kUnsupported, "MetaImage: .mha (embedded data) is not supported");
    return detail::parse_metaimage_header(path);
  }
  return detail::parse_native_header(path);
}

inline ScalarVolume read_volume(const std::filesystem::path& path) {
  const VolumeHeader h = read_volume_header(path);
  const std::string bytes = detail::read_text(h.data_file);
  const std::size_t count = h.grid.voxel_count();
  const std::size_t expected = count * detail::element_size(h.element_type);
  if (bytes.size() < expected) {
    fail(ErrorKind::kTruncated, "raw file " + h.data_file.string() + " holds " + std::to_string(bytes.size()) +
                                    " bytes, header requires " + std::to_string(expected));
  }
  ScalarVolume vol;
  vol.grid = h.grid;
  vol.kind = h.kind;
  vol.values = detail::decode_raw(bytes, h.element_type, h.big_endian, count);
  return vol;
}

/// CT ingestion: HU passed through unmodified.
inline ScalarVolume read_ct(const std::filesystem::path& path) {
  ScalarVolume v = read_volume(path);
  v.kind = VolumeKind::kHu;
  return v;
}

inline void write_raw_f32(const std::filesystem::path& path, const std::vector<float>& values) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::kIo, "cannot open " + path.string());
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(float)));
  } else {
    for (float f : values) {
      auto u = std::bit_cast<std::uint32_t>(f);
      u = ((u & 0xFFu) << 24) | ((u & 0xFF00u) << 8) | ((u >> 8) & 0xFF00u) | (u >> 24);
      out.write(reinterpret_cast<const char*>(&u), 4);
    }
  }
  require(static_cast<bool>(out), ErrorKind::kIo, "write failed: " + path.string());
}

/// Writes `<stem>.json` + `<stem>.raw`; returns the header path.
template <typename T>
std::filesystem::path write_volume(const VoxelVolume<T>& vol, const std::filesystem::path& header_path,
                                   const nlohmann::json& attributes = nlohmann::json::object()) {
  vol.validate();
  auto raw_path = header_path;
  raw_path.replace_extension(".raw");
  std::vector<float> f(vol.values.begin(), vol.values.end());
  write_raw_f32(raw_path, f);
  nlohmann::json j;
  j["format"] = "forge-volume";
  j["version"] = 1;
  j["dims"] = vol.grid.dims;
  j["spacing_mm"] = {vol.grid.spacing_mm.x(), vol.grid.spacing_mm.y(), vol.grid.spacing_mm.z()};
  j["origin_mm"] = {vol.grid.origin_mm.x(), vol.grid.origin_mm.y(), vol.grid.origin_mm.z()};
  j["kind"] = to_string(vol.kind);
  j["dtype"] = "float32";
  j["byte_order"] = "little";
  j["data_file"] = raw_path.filename().string();
  j["attributes"] = attributes;
  std::ofstream out(header_path);
  require(static_cast<bool>(out), ErrorKind::kIo, "cannot open " + header_path.string());
  out << j.dump(2) << "\n";
  return header_path;
}

/// MetaImage export (float32), mainly for viewing in external tools.
inline void write_metaimage(const ScalarVolume& vol, const std::filesystem::path& mhd_path) {
  auto raw_path = mhd_path;
  raw_path.replace_extension(".raw");
  write_raw_f32(raw_path, vol.values);
  std::ofstream out(mhd_path);
  require(static_cast<bool>(out), ErrorKind::kIo, "cannot open " + mhd_path.string());
  const auto& g = vol.grid;
  out << "ObjectType = Image\nNDims = 3\nBinaryData = True\nBinaryDataByteOrderMSB = False\nCompressedData = False\n";
  out << "TransformMatrix = 1 0 0 0 1 0 0 0 1\n";
  out << fmt::format("Offset = {} {} {}\n", g.origin_mm.x(), g.origin_mm.y(), g.origin_mm.z());
  out << fmt::format("ElementSpacing = {} {} {}\n", g.spacing_mm.x(), g.spacing_mm.y(), g.spacing_mm.z());
  out << "DimSize = " << g.dims[0] << " " << g.dims[1] << " " << g.dims[2] << "\n";
  out << "ElementType = MET_FLOAT\nElementDataFile = " << raw_path.filename().string() << "\n";
}

}  // namespace forge

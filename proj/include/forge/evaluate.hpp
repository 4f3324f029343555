#pragma once

// Directory-level evaluation of predictions against generated records.
//
// A prediction directory mirrors the dataset layout. Each sample folder holds
// a meta.json with `sample_id` and `image.cols/rows`, a mask as either
// mask.u8raw (0/1) or mask.f32raw (probability), and landmarks either as
// `landmarks_px` in meta.json or as belief_0/1.f32raw maps.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "forge/error.hpp"
#include "forge/metrics.hpp"
#include "forge/record.hpp"

namespace forge {

struct Prediction {
  Image2D mask;
  std::array<PixelCoord, 2> landmarks_px{};
};

inline Prediction read_prediction(const std::filesystem::path& dir, const ExtractionParams& extraction = {}) {
  const auto meta_path = dir / "meta.json";
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(detail::read_text(meta_path));
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::kParse, meta_path.string() + ": " + e.what());
  }
  Prediction p;
  try {
    const int cols = j.at("image").at("cols").get<int>();
    const int rows = j.at("image").at("rows").get<int>();
    const double px = j.at("image").value("pixel_size_mm", 0.62);
    if (std::filesystem::exists(dir / "mask.u8raw")) {
      p.mask = detail::read_image_u8(dir / "mask.u8raw", cols, rows, px);
    } else {
      p.mask = detail::read_image_f32(dir / "mask.f32raw", cols, rows, px, ImageKind::kProbability);
    }
    if (j.contains("landmarks_px")) {
      const auto& lm = j.at("landmarks_px");
      for (int k = 0; k < 2; ++k) {
        const auto& q = lm.at(k == 0 ? "proximal" : "distal");
        p.landmarks_px[k] = {q.at(0).get<double>(), q.at(1).get<double>()};
      }
    } else {
      for (int k = 0; k < 2; ++k) {
        const Image2D b = detail::read_image_f32(dir / ("belief_" + std::to_string(k) + ".f32raw"), cols, rows, px,
                                                 ImageKind::kProbability);
        p.landmarks_px[k] = extract_landmark(b, extraction);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kParse, meta_path.string() + ": " + e.what());
  }
  return p;
}

/// sample_id -> folder, for every folder below `root` holding a meta.json.
inline std::map<std::string, std::filesystem::path> index_samples(const std::filesystem::path& root) {
  require(std::filesystem::is_directory(root), ErrorKind::kIo, "not a directory: " + root.string());
  std::map<std::string, std::filesystem::path> out;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(root)) {
    if (entry.path().filename() != "meta.json") continue;
    const auto dir = entry.path().parent_path();
    try {
      const auto j = nlohmann::json::parse(detail::read_text(entry.path()));
      out[j.value("sample_id", dir.filename().string())] = dir;
    } catch (const nlohmann::json::parse_error&) {
      out[dir.filename().string()] = dir;
    }
  }
  return out;
}

struct EvaluationResult {
  EvalReport report;
  std::vector<std::string> missing;  ///< ground-truth samples with no prediction
};

inline EvaluationResult evaluate_directories(const std::filesystem::path& pred_root, const std::filesystem::path& gt_root,
                                             double threshold = 0.5, const ExtractionParams& extraction = {}) {
  const auto gt = index_samples(gt_root);
  const auto pred = index_samples(pred_root);
  EvaluationResult result;
  for (const auto& [id, gt_dir] : gt) {
    const auto it = pred.find(id);
    if (it == pred.end()) {
      result.missing.push_back(id);
      continue;
    }
    const SampleRecord truth = read_record(gt_dir);
    const Prediction p = read_prediction(it->second, extraction);
    const double px = truth.image.pixel_size_mm;
    EvalRow row;
    row.sample_id = id;
    row.dice = dice(p.mask, truth.mask, threshold);
    for (int k = 0; k < 2; ++k) row.landmark_error_mm[k] = landmark_error_mm(p.landmarks_px[k], truth.landmarks_px[k], px);
    result.report.rows.push_back(row);
  }
  return result;
}

}  // namespace forge

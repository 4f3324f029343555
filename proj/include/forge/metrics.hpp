#pragma once

// Dice overlap, landmark distance, and sub-pixel landmark extraction.

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "forge/error.hpp"
#include "forge/geometry.hpp"
#include "forge/image.hpp"

namespace forge {

/// 2|A and B| / (|A| + |B|) after thresholding both at `threshold` (value >= t
/// is foreground). Two empty masks score 1.
inline double dice(const Image2D& pred, const Image2D& gt, double threshold = 0.5) {
  require(pred.same_shape(gt), ErrorKind::kDimensionMismatch,
          "dice: prediction is " + std::to_string(pred.cols) + "x" + std::to_string(pred.rows) + ", ground truth is " +
              std::to_string(gt.cols) + "x" + std::to_string(gt.rows));
  std::size_t a = 0, b = 0, both = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool pa = pred.values[i] >= threshold;
    const bool pb = gt.values[i] >= threshold;
    a += pa;
    b += pb;
    both += pa && pb;
  }
  if (a + b == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(a + b);
}

inline double landmark_error_mm(PixelCoord pred, PixelCoord gt, double pixel_size_mm = 0.62) {
  require(std::isfinite(pred.u) && std::isfinite(pred.v) && std::isfinite(gt.u) && std::isfinite(gt.v),
          ErrorKind::kInvalidArgument, "landmark_error_mm: non-finite coordinate");
  return std::hypot(pred.u - gt.u, pred.v - gt.v) * pixel_size_mm;
}

enum class LandmarkExtraction {
  kGaussianFit,  ///< weighted quadratic fit to log-intensity in the window
  kCentroid,     ///< intensity-weighted centroid in the window
  kArgmax,       ///< integer argmax
};

inline std::string to_string(LandmarkExtraction m) {
  switch (m) {
    case LandmarkExtraction::kGaussianFit: return "gaussian-fit";
    case LandmarkExtraction::kCentroid: return "centroid";
    case LandmarkExtraction::kArgmax: return "argmax";
  }
  return "gaussian-fit";
}

inline LandmarkExtraction landmark_extraction_from_string(const std::string& s) {
  if (s == "gaussian-fit") return LandmarkExtraction::kGaussianFit;
  if (s == "centroid") return LandmarkExtraction::kCentroid;
  if (s == "argmax") return LandmarkExtraction::kArgmax;
  fail(ErrorKind::kInvalidArgument, "unknown landmark extraction '" + s + "'");
}

struct ExtractionParams {
  LandmarkExtraction method = LandmarkExtraction::kGaussianFit;
  int half_window = 5;
};

namespace detail {

/// First maximum in raster order: lowest row, then lowest column.
inline std::pair<int, int> argmax(const Image2D& img) {
  int bu = 0, bv = 0;
  double best = img.at(0, 0);
  for (int v = 0; v < img.rows; ++v)
    for (int u = 0; u < img.cols; ++u)
      if (img.at(u, v) > best) {
        best = img.at(u, v);
        bu = u;
        bv = v;
      }
  return {bu, bv};
}

inline bool centroid(const Image2D& img, int cu, int cv, int half, PixelCoord& out) {
  double sw = 0, su = 0, sv = 0;
  for (int v = std::max(0, cv - half); v <= std::min(img.rows - 1, cv + half); ++v)
    for (int u = std::max(0, cu - half); u <= std::min(img.cols - 1, cu + half); ++u) {
      const double w = std::max(0.0, img.at(u, v));
      sw += w;
      su += w * u;
      sv += w * v;
    }
  if (!(sw > 0)) return false;
  out = {su / sw, sv / sw};
  return true;
}

/// Fits log f = c0 + c1 x + c2 y + c3 x^2 + c4 y^2 + c5 xy with weights f^2
/// (x, y relative to the argmax) and returns the stationary point.
inline bool gaussian_fit(const Image2D& img, int cu, int cv, int half, PixelCoord& out) {
  Eigen::Matrix<double, 6, 6> normal = Eigen::Matrix<double, 6, 6>::Zero();
  Eigen::Matrix<double, 6, 1> rhs = Eigen::Matrix<double, 6, 1>::Zero();
  const double floor = img.at(cu, cv) * 1e-12;
  int used = 0;
  for (int v = std::max(0, cv - half); v <= std::min(img.rows - 1, cv + half); ++v)
    for (int u = std::max(0, cu - half); u <= std::min(img.cols - 1, cu + half); ++u) {
      const double f = img.at(u, v);
      if (!(f > floor)) continue;
      const double x = u - cu, y = v - cv;
      Eigen::Matrix<double, 6, 1> row;
      row << 1.0, x, y, x * x, y * y, x * y;
      const double w = f * f;
      normal += w * row * row.transpose();
      rhs += w * std::log(f) * row;
      ++used;
    }
  if (used < 6) return false;
  const Eigen::Matrix<double, 6, 1> c = normal.ldlt().solve(rhs);
  Eigen::Matrix2d hessian;
  hessian << 2 * c[3], c[5], c[5], 2 * c[4];
  if (!(hessian.determinant() > 0 && hessian(0, 0) < 0)) return false;
  const Eigen::Vector2d peak = hessian.ldlt().solve(Eigen::Vector2d(-c[1], -c[2]));
  if (!peak.allFinite() || peak.cwiseAbs().maxCoeff() > half) return false;
  out = {cu + peak.x(), cv + peak.y()};
  return true;
}

}  // namespace detail

/// Sub-pixel landmark from a belief map. The fit falls back to the centroid
/// and the centroid to the argmax when the window is unusable.
inline PixelCoord extract_landmark(const Image2D& belief, const ExtractionParams& params = {}) {
  require(belief.size() > 0, ErrorKind::kInvalidArgument, "extract_landmark: empty image");
  require(params.half_window >= 1, ErrorKind::kInvalidArgument, "extract_landmark: half window must be >= 1");
  const auto [cu, cv] = detail::argmax(belief);
  require(belief.at(cu, cv) > 0.0, ErrorKind::kNoDetection, "extract_landmark: belief map has no positive response");
  PixelCoord out{static_cast<double>(cu), static_cast<double>(cv)};
  switch (params.method) {
    case LandmarkExtraction::kGaussianFit:
      if (detail::gaussian_fit(belief, cu, cv, params.half_window, out)) return out;
      [[fallthrough]];
    case LandmarkExtraction::kCentroid:
      if (detail::centroid(belief, cu, cv, params.half_window, out)) return out;
      [[fallthrough]];
    case LandmarkExtraction::kArgmax:
      return {static_cast<double>(cu), static_cast<double>(cv)};
  }
  return out;
}

struct SummaryStats {
  double mean = 0.0;
  double stddev = 0.0;  ///< sample standard deviation (n - 1); 0 for n < 2
  std::size_t count = 0;
};

inline SummaryStats summarize(const std::vector<double>& xs) {
  SummaryStats s;
  s.count = xs.size();
  if (xs.empty()) return s;
  double sum = 0;
  for (double x : xs) sum += x;
  s.mean = sum / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return s;
}

struct EvalRow {
  std::string sample_id;
  double dice = 0.0;
  std::array<double, 2> landmark_error_mm{};
};

struct EvalReport {
  std::vector<EvalRow> rows;

  SummaryStats dice_stats() const {
    std::vector<double> xs;
    for (const auto& r : rows) xs.push_back(r.dice);
    return summarize(xs);
  }
  /// landmark < 0 pools both landmarks.
  SummaryStats landmark_stats(int landmark = -1) const {
    std::vector<double> xs;
    for (const auto& r : rows)
      for (int k = 0; k < 2; ++k)
        if (landmark < 0 || landmark == k) xs.push_back(r.landmark_error_mm[k]);
    return summarize(xs);
  }
};

inline nlohmann::json to_json(const SummaryStats& s) {
  return {{"mean", s.mean}, {"std", s.stddev}, {"count", s.count}};
}

inline nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows)
    rows.push_back({{"sample_id", row.sample_id}, {"dice", row.dice}, {"landmark_error_mm", row.landmark_error_mm}});
  return {{"dice", to_json(r.dice_stats())},
          {"landmark_error_mm", to_json(r.landmark_stats())},
          {"landmark_error_mm_proximal", to_json(r.landmark_stats(0))},
          {"landmark_error_mm_distal", to_json(r.landmark_stats(1))},
          {"samples", rows}};
}

inline std::string to_csv(const EvalReport& r) {
  std::string out = "sample_id,dice,error_proximal_mm,error_distal_mm\n";
  for (const auto& row : r.rows) {
    out += fmt::format("{},{},{},{}\n", row.sample_id, row.dice, row.landmark_error_mm[0], row.landmark_error_mm[1]);
  }
  return out;
}

}  // namespace forge

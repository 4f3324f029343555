#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "forge/error.hpp"

namespace forge {

enum class ImageKind { kLineIntegral, kNormalized, kProbability, kMask };

inline std::string to_string(ImageKind k) {
  switch (k) {
    case ImageKind::kLineIntegral: return "line-integral";
    case ImageKind::kNormalized: return "normalized";
    case ImageKind::kProbability: return "probability";
    case ImageKind::kMask: return "mask";
  }
  return "line-integral";
}

/// Row-major detector image: value(u, v) at index v * cols + u.
struct Image2D {
  int cols = 0;
  int rows = 0;
  double pixel_size_mm = 0.62;
  ImageKind kind = ImageKind::kLineIntegral;
  std::vector<double> values;

  Image2D() = default;
  Image2D(int c, int r, double px, ImageKind k, double fill = 0.0)
      : cols(c), rows(r), pixel_size_mm(px), kind(k), values(static_cast<std::size_t>(c) * r, fill) {
    require(c > 0 && r > 0, ErrorKind::kInvalidArgument, "Image2D: dimensions must be positive");
  }

  double& at(int u, int v) { return values[static_cast<std::size_t>(v) * cols + u]; }
  double at(int u, int v) const { return values[static_cast<std::size_t>(v) * cols + u]; }
  std::size_t size() const { return values.size(); }

  bool same_shape(const Image2D& o) const { return cols == o.cols && rows == o.rows; }

  double min_value() const { return *std::min_element(values.begin(), values.end()); }
  double max_value() const { return *std::max_element(values.begin(), values.end()); }
};

}  // namespace forge

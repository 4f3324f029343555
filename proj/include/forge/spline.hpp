#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

#include "forge/error.hpp"

namespace forge {

/// Natural cubic spline (zero second derivative at both ends) through strictly
/// increasing knots. Second derivatives come from the standard tridiagonal
/// system, solved with the Thomas algorithm.
class NaturalCubicSpline {
 public:
  NaturalCubicSpline(std::span<const double> x, std::span<const double> y) : x_(x.begin(), x.end()), y_(y.begin(), y.end()) {
    require(x_.size() == y_.size() && x_.size() >= 2, ErrorKind::kInvalidArgument,
            "spline: need at least two knots with matching values");
    for (std::size_t i = 1; i < x_.size(); ++i) {
      require(x_[i] > x_[i - 1], ErrorKind::kInvalidArgument, "spline: knots must be strictly increasing");
    }
    solve_second_derivatives();
  }

  double operator()(double t) const {
    const std::size_t n = x_.size();
    // Segment index; values outside the knot span extrapolate the end cubics.
    std::size_t i = static_cast<std::size_t>(std::upper_bound(x_.begin(), x_.end(), t) - x_.begin());
    i = std::clamp<std::size_t>(i, 1, n - 1) - 1;
    const double h = x_[i + 1] - x_[i];
    const double a = (x_[i + 1] - t) / h;
    const double b = (t - x_[i]) / h;
    return a * y_[i] + b * y_[i + 1] + ((a * a * a - a) * m_[i] + (b * b * b - b) * m_[i + 1]) * (h * h) / 6.0;
  }

  std::span<const double> second_derivatives() const { return m_; }

 private:
  void solve_second_derivatives() {
    const std::size_t n = x_.size();
    m_.assign(n, 0.0);
    if (n < 3) return;
    const std::size_t k = n - 2;  // interior unknowns
    std::vector<double> diag(k), upper(k), rhs(k);
    for (std::size_t j = 0; j < k; ++j) {
      const std::size_t i = j + 1;
      const double h0 = x_[i] - x_[i - 1];
      const double h1 = x_[i + 1] - x_[i];
      diag[j] = 2.0 * (h0 + h1);
      upper[j] = h1;
      rhs[j] = 6.0 * ((y_[i + 1] - y_[i]) / h1 - (y_[i] - y_[i - 1]) / h0);
    }
    // Forward sweep; the sub-diagonal entry of row j is h0 of that row.
    for (std::size_t j = 1; j < k; ++j) {
      const double lower = x_[j + 1] - x_[j];
      const double w = lower / diag[j - 1];
      diag[j] -= w * upper[j - 1];
      rhs[j] -= w * rhs[j - 1];
    }
    m_[k] = rhs[k - 1] / diag[k - 1];
    for (std::size_t j = k - 1; j-- > 0;) {
      m_[j + 1] = (rhs[j] - upper[j] * m_[j + 2]) / diag[j];
    }
  }

  std::vector<double> x_;
  std::vector<double> y_;
  std::vector<double> m_;
};

}  // namespace forge

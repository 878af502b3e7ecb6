// Copyright 2026 The slidewarp Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <array>
#include <cmath>
#include <span>

#include <opencv2/core/types.hpp>

namespace slidewarp {

using Point = cv::Point2d;

/// 2x3 affine map acting on column vectors (x, y, 1).
///
/// Coefficients are stored row-major: [a, b, tx, c, d, ty] so that
/// x' = a*x + b*y + tx and y' = c*x + d*y + ty.
class AffineTransform2D {
 public:
  static constexpr double kMinDeterminant = 1e-9;

  /// Identity.
  AffineTransform2D() = default;

  /// Throws Error(kDegenerateFit) if |det| <= kMinDeterminant.
  explicit AffineTransform2D(const std::array<double, 6>& m);

  static AffineTransform2D translation(double tx, double ty);
  static AffineTransform2D scaling(double sx, double sy);
  /// Rotation by `radians` (counter-clockwise in a y-up frame) about `center`.
  static AffineTransform2D rotation(double radians, Point center = {0.0, 0.0});

  Point apply(Point p) const {
    return {m_[0] * p.x + m_[1] * p.y + m_[2], m_[3] * p.x + m_[4] * p.y + m_[5]};
  }
  Point operator()(Point p) const { return apply(p); }

  /// Applies only the linear part.
  Point apply_linear(Point v) const {
    return {m_[0] * v.x + m_[1] * v.y, m_[3] * v.x + m_[4] * v.y};
  }

  /// (this o other)(p) == this(other(p)).
  AffineTransform2D compose(const AffineTransform2D& other) const;
  AffineTransform2D inverse() const;

  double determinant() const { return m_[0] * m_[4] - m_[1] * m_[3]; }
  const std::array<double, 6>& coefficients() const { return m_; }
  double operator[](std::size_t i) const { return m_[i]; }

  /// Largest absolute coefficient difference.
  double max_abs_difference(const AffineTransform2D& other) const;

  bool operator==(const AffineTransform2D&) const = default;

 private:
  std::array<double, 6> m_{1.0, 0.0, 0.0, 0.0, 1.0, 0.0};
};

/// Ordinary least-squares affine minimising sum |A*src + t - dst|^2.
/// Throws Error(kDegenerateFit) with fewer than 3 pairs or collinear sources.
AffineTransform2D fit_affine_least_squares(std::span<const Point> src, std::span<const Point> dst);

inline double distance(Point a, Point b) { return std::hypot(a.x - b.x, a.y - b.y); }

}  // namespace slidewarp

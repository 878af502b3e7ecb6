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

#include "slidewarp/affine.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Dense>

#include "slidewarp/error.hpp"

namespace slidewarp {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kInsufficientFeatures: return "InsufficientFeatures";
    case ErrorCode::kAlignmentFailed: return "AlignmentFailed";
    case ErrorCode::kDegenerateHistogram: return "DegenerateHistogram";
    case ErrorCode::kNoTissue: return "NoTissue";
    case ErrorCode::kFlatPatch: return "FlatPatch";
    case ErrorCode::kTooFewLandmarks: return "TooFewLandmarks";
    case ErrorCode::kDegenerateFit: return "DegenerateFit";
    case ErrorCode::kNoEvaluablePoints: return "NoEvaluablePoints";
    case ErrorCode::kVersionError: return "VersionError";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kIoError: return "IoError";
  }
  return "Unknown";
}

AffineTransform2D::AffineTransform2D(const std::array<double, 6>& m) : m_(m) {
  const double det = determinant();
  if (!std::isfinite(det) || std::abs(det) <= kMinDeterminant) {
    std::ostringstream msg;
    msg << "affine linear part is singular (det=" << det << ")";
    throw Error(ErrorCode::kDegenerateFit, msg.str());
  }
}

AffineTransform2D AffineTransform2D::translation(double tx, double ty) {
  return AffineTransform2D({1.0, 0.0, tx, 0.0, 1.0, ty});
}

AffineTransform2D AffineTransform2D::scaling(double sx, double sy) {
  return AffineTransform2D({sx, 0.0, 0.0, 0.0, sy, 0.0});
}

AffineTransform2D AffineTransform2D::rotation(double radians, Point center) {
  const double c = std::cos(radians);
  const double s = std::sin(radians);
  // p' = R (p - center) + center
  return AffineTransform2D({c, -s, center.x - c * center.x + s * center.y,
                            s, c, center.y - s * center.x - c * center.y});
}

AffineTransform2D AffineTransform2D::compose(const AffineTransform2D& o) const {
  const auto& a = m_;
  const auto& b = o.m_;
  return AffineTransform2D({a[0] * b[0] + a[1] * b[3], a[0] * b[1] + a[1] * b[4],
                            a[0] * b[2] + a[1] * b[5] + a[2],
                            a[3] * b[0] + a[4] * b[3], a[3] * b[1] + a[4] * b[4],
                            a[3] * b[2] + a[4] * b[5] + a[5]});
}

AffineTransform2D AffineTransform2D::inverse() const {
  const double det = determinant();
  const double ia = m_[4] / det;
  const double ib = -m_[1] / det;
  const double ic = -m_[3] / det;
  const double id = m_[0] / det;
  return AffineTransform2D({ia, ib, -(ia * m_[2] + ib * m_[5]),
                            ic, id, -(ic * m_[2] + id * m_[5])});
}

double AffineTransform2D::max_abs_difference(const AffineTransform2D& other) const {
  double worst = 0.0;
  for (std::size_t i = 0; i < 6; ++i) {
    worst = std::max(worst, std::abs(m_[i] - other.m_[i]));
  }
  return worst;
}

AffineTransform2D fit_affine_least_squares(std::span<const Point> src, std::span<const Point> dst) {
  if (src.size() != dst.size()) {
    throw Error(ErrorCode::kInvalidArgument, "source/target point counts differ");
  }
  const auto n = static_cast<Eigen::Index>(src.size());
  if (n < 3) throw Error(ErrorCode::kDegenerateFit, "affine fit needs at least 3 pairs");

  // Work in centred coordinates for conditioning; the scatter matrix also
  // exposes collinear inputs.
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (const auto& p : src) mean += Eigen::Vector2d(p.x, p.y);
  mean /= static_cast<double>(n);

  Eigen::MatrixXd design(n, 3);
  Eigen::MatrixXd rhs(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    design(i, 0) = src[i].x - mean.x();
    design(i, 1) = src[i].y - mean.y();
    design(i, 2) = 1.0;
    rhs(i, 0) = dst[i].x;
    rhs(i, 1) = dst[i].y;
  }
  const Eigen::Matrix2d scatter = design.leftCols<2>().transpose() * design.leftCols<2>();
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(scatter);
  const double lo = eig.eigenvalues()(0);
  const double hi = eig.eigenvalues()(1);
  if (!(hi > 0.0) || lo <= 1e-12 * hi) {
    throw Error(ErrorCode::kDegenerateFit, "source points are collinear");
  }

  const Eigen::MatrixXd sol = design.colPivHouseholderQr().solve(rhs);
  // x' = a (x - mx) + b (y - my) + t
  const double a = sol(0, 0), b = sol(1, 0), tx = sol(2, 0);
  const double c = sol(0, 1), d = sol(1, 1), ty = sol(2, 1);
  return AffineTransform2D({a, b, tx - a * mean.x() - b * mean.y(),
                            c, d, ty - c * mean.x() - d * mean.y()});
}

}  // namespace slidewarp

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

#include "slidewarp/global_align.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <random>

#include <Eigen/Dense>
#include <opencv2/features2d.hpp>

#include "slidewarp/error.hpp"

namespace slidewarp {

namespace {

constexpr std::size_t kMinKeypoints = 8;

/// Affine through three exact correspondences, or nullopt when the source
/// triangle is (numerically) flat.
std::optional<AffineTransform2D> affine_from_three(const std::pair<Point, Point>& a,
                                                   const std::pair<Point, Point>& b,
                                                   const std::pair<Point, Point>& c) {
  const Point& p0 = a.first;
  const Point& p1 = b.first;
  const Point& p2 = c.first;
  const double det = (p1.x - p0.x) * (p2.y - p0.y) - (p2.x - p0.x) * (p1.y - p0.y);
  const double scale = std::max({std::abs(p1.x - p0.x), std::abs(p1.y - p0.y),
                                 std::abs(p2.x - p0.x), std::abs(p2.y - p0.y), 1e-12});
  if (std::abs(det) < 1e-6 * scale * scale) return std::nullopt;

  // Solve [dx1 dy1; dx2 dy2] * [a; b] = [du1; du2] per output coordinate.
  const double dx1 = p1.x - p0.x, dy1 = p1.y - p0.y;
  const double dx2 = p2.x - p0.x, dy2 = p2.y - p0.y;
  auto solve = [&](double q0, double q1, double q2, double& m0, double& m1, double& m2) {
    const double du1 = q1 - q0;
    const double du2 = q2 - q0;
    m0 = (du1 * dy2 - du2 * dy1) / det;
    m1 = (dx1 * du2 - dx2 * du1) / det;
    m2 = q0 - m0 * p0.x - m1 * p0.y;
  };
  std::array<double, 6> m{};
  solve(a.second.x, b.second.x, c.second.x, m[0], m[1], m[2]);
  solve(a.second.y, b.second.y, c.second.y, m[3], m[4], m[5]);
  if (std::abs(m[0] * m[4] - m[1] * m[3]) <= AffineTransform2D::kMinDeterminant) return std::nullopt;
  return AffineTransform2D(m);
}

int count_inliers(std::span<const std::pair<Point, Point>> pairs, const AffineTransform2D& model,
                  double threshold, std::vector<bool>* mask) {
  const double t2 = threshold * threshold;
  int count = 0;
  if (mask) mask->assign(pairs.size(), false);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const Point q = model.apply(pairs[i].first);
    const double dx = q.x - pairs[i].second.x;
    const double dy = q.y - pairs[i].second.y;
    if (dx * dx + dy * dy <= t2) {
      ++count;
      if (mask) (*mask)[i] = true;
    }
  }
  return count;
}

}  // namespace

std::vector<Keypoint> detect_keypoints(const cv::Mat& gray_thumbnail, const DetectorOptions& options) {
  if (gray_thumbnail.empty() || gray_thumbnail.type() != CV_8UC1) {
    throw Error(ErrorCode::kInvalidArgument, "keypoint detection needs an 8-bit grayscale image");
  }
  if (std::max(gray_thumbnail.cols, gray_thumbnail.rows) < 256) {
    throw Error(ErrorCode::kInvalidArgument, "thumbnail max dimension must be >= 256");
  }

  auto sift = cv::SIFT::create(options.max_features, 3, options.contrast_threshold,
                               options.edge_threshold, 1.6);
  std::vector<cv::KeyPoint> raw;
  cv::Mat descriptors;
  sift->detectAndCompute(gray_thumbnail, cv::noArray(), raw, descriptors);

  std::vector<Keypoint> out;
  out.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    Keypoint kp;
    kp.position = {raw[i].pt.x, raw[i].pt.y};
    kp.scale = raw[i].size;
    double angle = raw[i].angle * std::numbers::pi / 180.0;
    angle = std::fmod(angle + std::numbers::pi, 2.0 * std::numbers::pi);
    if (angle < 0.0) angle += 2.0 * std::numbers::pi;
    kp.orientation = angle - std::numbers::pi;
    if (kp.orientation >= std::numbers::pi) kp.orientation -= 2.0 * std::numbers::pi;

    const float* row = descriptors.ptr<float>(static_cast<int>(i));
    double norm = 0.0;
    for (int k = 0; k < 128; ++k) norm += static_cast<double>(row[k]) * row[k];
    norm = std::sqrt(norm);
    if (norm <= 0.0) continue;
    for (int k = 0; k < 128; ++k) kp.descriptor[k] = static_cast<float>(row[k] / norm);
    out.push_back(kp);
  }
  if (out.size() < kMinKeypoints) {
    throw Error(ErrorCode::kInsufficientFeatures,
                "only " + std::to_string(out.size()) + " keypoints detected");
  }
  return out;
}

std::vector<Match> match_descriptors(std::span<const Keypoint> src, std::span<const Keypoint> dst,
                                     double ratio) {
  if (src.empty() || dst.empty()) {
    throw Error(ErrorCode::kInsufficientFeatures, "cannot match an empty keypoint list");
  }
  using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, 128, Eigen::RowMajor>;
  RowMatrix a(static_cast<Eigen::Index>(src.size()), 128);
  RowMatrix b(static_cast<Eigen::Index>(dst.size()), 128);
  for (std::size_t i = 0; i < src.size(); ++i) {
    a.row(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::RowVectorXf>(src[i].descriptor.data(), 128);
  }
  for (std::size_t j = 0; j < dst.size(); ++j) {
    b.row(static_cast<Eigen::Index>(j)) = Eigen::Map<const Eigen::RowVectorXf>(dst[j].descriptor.data(), 128);
  }
  const Eigen::VectorXf a2 = a.rowwise().squaredNorm();
  const Eigen::VectorXf b2 = b.rowwise().squaredNorm();
  const Eigen::MatrixXf dots = a * b.transpose();

  auto exact_sq = [&](std::size_t i, std::size_t j) {
    double s = 0.0;
    for (int k = 0; k < 128; ++k) {
      const double d = static_cast<double>(src[i].descriptor[k]) - dst[j].descriptor[k];
      s += d * d;
    }
    return s;
  };

  const double ratio_sq = ratio * ratio;
  std::vector<Match> matches;
  for (std::size_t i = 0; i < src.size(); ++i) {
    // Candidate ranking in float, final decision on exact double distances.
    std::size_t best = 0, second = 0;
    float best_d = std::numeric_limits<float>::infinity();
    float second_d = std::numeric_limits<float>::infinity();
    for (std::size_t j = 0; j < dst.size(); ++j) {
      const float d = a2(static_cast<Eigen::Index>(i)) + b2(static_cast<Eigen::Index>(j)) -
                      2.0f * dots(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      if (d < best_d) {
        second_d = best_d;
        second = best;
        best_d = d;
        best = j;
      } else if (d < second_d) {
        second_d = d;
        second = j;
      }
    }
    if (dst.size() < 2) continue;  // a ratio test needs a runner-up
    double b_sq = exact_sq(i, best);
    double s_sq = exact_sq(i, second);
    if (s_sq < b_sq) std::swap(b_sq, s_sq), std::swap(best, second);
    if (b_sq < ratio_sq * s_sq) matches.emplace_back(i, best);
  }
  if (matches.empty()) throw Error(ErrorCode::kInsufficientFeatures, "no descriptor match passed the ratio test");
  return matches;
}

AffineTransform2D ThumbnailFrame::to_level0() const {
  return AffineTransform2D({scale_x, 0.0, 0.5 * scale_x - 0.5, 0.0, scale_y, 0.5 * scale_y - 0.5});
}

RansacResult estimate_affine_ransac(std::span<const std::pair<Point, Point>> pairs,
                                    const RansacOptions& options, ThumbnailFrame source_frame,
                                    ThumbnailFrame target_frame) {
  const std::size_t n = pairs.size();
  if (n < 3) throw Error(ErrorCode::kAlignmentFailed, "RANSAC needs at least 3 pairs");

  std::mt19937_64 rng(options.seed);
  std::optional<AffineTransform2D> best_model;
  int best_count = -1;
  for (int it = 0; it < options.iterations; ++it) {
    const std::size_t i = rng() % n;
    std::size_t j = rng() % n;
    std::size_t k = rng() % n;
    if (i == j || j == k || i == k) continue;
    const auto model = affine_from_three(pairs[i], pairs[j], pairs[k]);
    if (!model) continue;
    const int count = count_inliers(pairs, *model, options.inlier_threshold_px, nullptr);
    if (count > best_count) {
      best_count = count;
      best_model = model;
    }
  }
  if (!best_model) throw Error(ErrorCode::kAlignmentFailed, "every minimal sample was degenerate");
  if (best_count < options.min_inliers) {
    throw Error(ErrorCode::kAlignmentFailed,
                "best consensus has " + std::to_string(best_count) + " inliers");
  }

  RansacResult result;
  count_inliers(pairs, *best_model, options.inlier_threshold_px, &result.inliers);
  std::vector<Point> src, dst;
  for (std::size_t i = 0; i < n; ++i) {
    if (!result.inliers[i]) continue;
    src.push_back(pairs[i].first);
    dst.push_back(pairs[i].second);
  }
  try {
    result.thumbnail = fit_affine_least_squares(src, dst);
  } catch (const Error&) {
    throw Error(ErrorCode::kAlignmentFailed, "inlier set is degenerate");
  }
  result.inlier_count = count_inliers(pairs, result.thumbnail, options.inlier_threshold_px, &result.inliers);
  result.level0 = target_frame.to_level0().compose(result.thumbnail).compose(source_frame.to_level0().inverse());
  return result;
}

GlobalAlignResult initial_alignment(const PyramidalImage& source, const PyramidalImage& target,
                                    const GlobalAlignOptions& options) {
  const cv::Mat src_thumb = to_gray(thumbnail(source, options.thumbnail_max_dim));
  const cv::Mat dst_thumb = to_gray(thumbnail(target, options.thumbnail_max_dim));

  const auto src_kp = detect_keypoints(src_thumb, options.detector);
  const auto dst_kp = detect_keypoints(dst_thumb, options.detector);
  const auto matches = match_descriptors(src_kp, dst_kp, options.ratio);

  std::vector<std::pair<Point, Point>> pairs;
  pairs.reserve(matches.size());
  for (const auto& [i, j] : matches) pairs.emplace_back(src_kp[i].position, dst_kp[j].position);

  const ThumbnailFrame src_frame{static_cast<double>(source.width()) / src_thumb.cols,
                                 static_cast<double>(source.height()) / src_thumb.rows};
  const ThumbnailFrame dst_frame{static_cast<double>(target.width()) / dst_thumb.cols,
                                 static_cast<double>(target.height()) / dst_thumb.rows};
  const RansacResult fit = estimate_affine_ransac(pairs, options.ransac, src_frame, dst_frame);

  GlobalAlignResult out;
  out.affine = fit.level0;
  out.source_keypoints = static_cast<int>(src_kp.size());
  out.target_keypoints = static_cast<int>(dst_kp.size());
  out.matches = static_cast<int>(matches.size());
  out.inliers = fit.inlier_count;
  return out;
}

}  // namespace slidewarp

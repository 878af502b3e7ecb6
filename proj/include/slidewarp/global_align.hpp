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

/// @file global_align.hpp
/// @brief Low-resolution initial affine from keypoint matching.
///
/// Pipeline: grayscale thumbnails (1024 px max side) -> scale-space keypoints
/// with 128-d gradient-histogram descriptors -> nearest-neighbour matching
/// with a ratio test -> RANSAC affine + least-squares refit on the inliers ->
/// rescale to level-0 coordinates.

#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include <opencv2/core/mat.hpp>

#include "slidewarp/affine.hpp"
#include "slidewarp/pyramid.hpp"

namespace slidewarp {

struct Keypoint {
  Point position;     ///< thumbnail pixels
  double scale = 1.0;
  double orientation = 0.0;  ///< radians in [-pi, pi)
  std::array<float, 128> descriptor{};  ///< L2-normalised
};

struct DetectorOptions {
  int max_features = 4000;
  double contrast_threshold = 0.04;
  double edge_threshold = 10.0;
};

/// Throws Error(kInsufficientFeatures) when fewer than 8 keypoints survive.
std::vector<Keypoint> detect_keypoints(const cv::Mat& gray_thumbnail,
                                       const DetectorOptions& options = {});

using Match = std::pair<std::size_t, std::size_t>;

/// Nearest neighbour in descriptor space, kept when
/// best_distance < ratio * second_best_distance (strict).
/// Throws Error(kInsufficientFeatures) when no match survives.
std::vector<Match> match_descriptors(std::span<const Keypoint> src, std::span<const Keypoint> dst,
                                     double ratio = 0.75);

struct RansacOptions {
  double inlier_threshold_px = 3.0;
  int iterations = 2000;
  int min_inliers = 6;
  std::uint64_t seed = 0;
};

/// Pixel frame of a thumbnail: level0 = (thumb + 0.5) * scale - 0.5 per axis.
struct ThumbnailFrame {
  double scale_x = 1.0;
  double scale_y = 1.0;

  AffineTransform2D to_level0() const;
};

struct RansacResult {
  AffineTransform2D level0;     ///< source level-0 -> target level-0
  AffineTransform2D thumbnail;  ///< source thumbnail -> target thumbnail
  std::vector<bool> inliers;
  int inlier_count = 0;
};

/// Robust affine from point pairs given in thumbnail pixels.
/// Throws Error(kAlignmentFailed) when the best consensus has fewer than
/// `min_inliers` pairs or every minimal sample is degenerate.
RansacResult estimate_affine_ransac(std::span<const std::pair<Point, Point>> pairs,
                                    const RansacOptions& options = {},
                                    ThumbnailFrame source_frame = {},
                                    ThumbnailFrame target_frame = {});

struct GlobalAlignOptions {
  int thumbnail_max_dim = 1024;
  DetectorOptions detector;
  double ratio = 0.75;
  RansacOptions ransac;
};

struct GlobalAlignResult {
  AffineTransform2D affine;  ///< level-0 source -> level-0 target
  int source_keypoints = 0;
  int target_keypoints = 0;
  int matches = 0;
  int inliers = 0;
};

GlobalAlignResult initial_alignment(const PyramidalImage& source, const PyramidalImage& target,
                                    const GlobalAlignOptions& options = {});

}  // namespace slidewarp

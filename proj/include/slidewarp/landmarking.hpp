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

/// @file landmarking.hpp
/// @brief Otsu tissue masks and grid-stratified landmark sampling.

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include <opencv2/core/mat.hpp>

#include "slidewarp/affine.hpp"
#include "slidewarp/pyramid.hpp"

namespace slidewarp {

/// Binary tissue mask on a thumbnail grid. `mask` is CV_8UC1 with 255 on
/// tissue. `scale_x`/`scale_y` are level-0 pixels per mask pixel.
struct TissueMask {
  cv::Mat mask;
  double scale_x = 1.0;
  double scale_y = 1.0;
  int threshold = 0;

  Point to_level0(int x, int y) const {
    return {(x + 0.5) * scale_x - 0.5, (y + 0.5) * scale_y - 0.5};
  }
  std::size_t tissue_pixels() const;
};

struct OtsuResult {
  int threshold = 0;  ///< tissue is every value strictly below this
  cv::Mat mask;       ///< CV_8UC1, 255 on tissue
};

/// Threshold maximising the between-class variance of the classes
/// {v < t} and {v >= t}; the smallest maximiser wins.
/// Throws Error(kDegenerateHistogram) for a constant image.
OtsuResult otsu_threshold(const cv::Mat& gray);

/// Otsu mask of a `max_dim` thumbnail of `img`.
TissueMask tissue_mask(const PyramidalImage& img, int max_dim = 1024);

/// Level-0 bounding box of the tissue pixels (pixel extents included).
/// Throws Error(kNoTissue) for an empty mask.
cv::Rect2d tissue_bbox(const TissueMask& mask);

/// s * sqrt(produced / requested).
double adjust_grid_size(double s_current, std::size_t produced, std::size_t requested);

/// Number of grid cells of side `cell` that contain tissue.
std::size_t count_tissue_cells(const TissueMask& mask, double cell);

/// One uniformly drawn tissue pixel per tissue-containing cell of side
/// `cell`, mapped to level 0. Cells are visited in row-major order.
std::vector<Point> sample_grid(const TissueMask& mask, double cell, std::uint64_t seed);

struct LandmarkRequest {
  std::size_t requested_count = 30;
  std::uint64_t rng_seed = 0;
  double initial_grid = 50.0;
};

struct LandmarkSelection {
  std::vector<Point> points;  ///< level-0 source coordinates
  double grid_size = 0.0;     ///< cell side used for the final pass
  std::size_t first_pass = 0; ///< cell count at the initial grid size
};

/// Two-pass selection: count tissue cells at `initial_grid`, rescale the grid
/// once with adjust_grid_size and sample the final grid.
/// Throws Error(kNoTissue) for an empty mask and Error(kInvalidArgument) when
/// fewer than 1 landmark is requested.
LandmarkSelection select_landmarks(const TissueMask& mask, const LandmarkRequest& request);

/// `n` tissue pixels drawn uniformly without replacement (with replacement
/// once n exceeds the tissue pixel count), mapped to level 0.
/// Throws Error(kNoTissue) for an empty mask.
std::vector<Point> sample_tissue_pixels(const TissueMask& mask, std::size_t n, std::uint64_t seed);

}  // namespace slidewarp

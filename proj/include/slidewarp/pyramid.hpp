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

/// @file pyramid.hpp
/// @brief Multi-resolution slide model, region reads and the on-disk layout.
///
/// ## Coordinate convention
///
/// Pixel (i, j) of level 0 has its centre at the continuous coordinate
/// (i, j). A level with downsample factor f averages f x f level-0 pixels, so
/// level-L pixel u has its centre at level-0 coordinate (u + 0.5) * f - 0.5.
/// Every public API takes level-0 coordinates unless stated otherwise.
///
/// ## On-disk layout
///
/// A pyramid is a directory holding `manifest.json` plus one lossless PNG per
/// level:
///
///     { "mpp": 0.25,
///       "levels": [ { "file": "level_0.png", "downsample": 1.0,
///                     "width": 2048, "height": 2048 }, ... ] }

#pragma once

#include <filesystem>
#include <vector>

#include <opencv2/core/mat.hpp>

#include "slidewarp/affine.hpp"

namespace slidewarp {

/// Immutable multi-level RGB8 raster. Level 0 is the full resolution.
///
/// Rasters are stored as CV_8UC3 in RGB channel order; a CV_8UC1 luminance
/// copy of every level is kept alongside for registration work. Copies share
/// pixel buffers, which is safe because nothing mutates them after
/// construction.
class PyramidalImage {
 public:
  PyramidalImage() = default;

  /// Validates the level invariants; throws Error(kInvalidArgument).
  PyramidalImage(std::vector<cv::Mat> levels, std::vector<double> downsample_factors,
                 double microns_per_pixel);

  int level_count() const { return static_cast<int>(levels_.size()); }
  bool empty() const { return levels_.empty(); }

  const cv::Mat& level(int index) const { return levels_.at(index); }
  const cv::Mat& gray_level(int index) const { return gray_.at(index); }
  double downsample(int index) const { return downsample_.at(index); }
  const std::vector<double>& downsample_factors() const { return downsample_; }
  double microns_per_pixel() const { return mpp_; }

  int width() const { return levels_.front().cols; }
  int height() const { return levels_.front().rows; }

  /// Finest level whose downsample factor does not exceed `factor`.
  int level_for_downsample(double factor) const;

 private:
  std::vector<cv::Mat> levels_;
  std::vector<cv::Mat> gray_;
  std::vector<double> downsample_;
  double mpp_ = 1.0;
};

struct Region {
  Point center;     ///< level-0 coordinates
  cv::Size size;    ///< pixels at `level`
  int level = 0;
};

/// Level-0 coordinate -> continuous coordinate on a level with factor f.
inline Point to_level(Point p0, double factor) {
  return {(p0.x + 0.5) / factor - 0.5, (p0.y + 0.5) / factor - 0.5};
}
inline Point from_level(Point pl, double factor) {
  return {(pl.x + 0.5) * factor - 0.5, (pl.y + 0.5) * factor - 0.5};
}

/// Area-averaged pyramid with factor 2^L per level.
PyramidalImage build_pyramid(const cv::Mat& base_rgb, int level_count,
                             double microns_per_pixel = 0.25);

/// Integer crop of `region.size` pixels centred on `region.center`.
/// Out-of-bounds pixels are white.
cv::Mat read_region(const PyramidalImage& img, const Region& region);

/// Bilinear luminance sampler over a pyramid level.
///
/// Returns a CV_32FC1 patch where pixel (u, v) takes the value of `level` at
/// level coordinate `patch_to_level(u, v)`. Samples outside the raster read
/// white (255).
cv::Mat sample_gray_patch(const cv::Mat& gray_level, const AffineTransform2D& patch_to_level,
                          cv::Size size);

/// Same as sample_gray_patch but for RGB levels; returns CV_8UC3.
cv::Mat sample_rgb_patch(const cv::Mat& rgb_level, const AffineTransform2D& patch_to_level,
                         cv::Size size);

/// Thumbnail with max(width, height) == max_dim, aspect preserved.
///
/// Uses the coarsest level still at least max_dim wide (or tall), so the
/// resample is always a downsample unless the slide itself is smaller.
cv::Mat thumbnail(const PyramidalImage& img, int max_dim);

/// Converts an RGB raster to 8-bit luminance.
cv::Mat to_gray(const cv::Mat& rgb);

void save_pyramid(const PyramidalImage& img, const std::filesystem::path& dir);
PyramidalImage load_pyramid(const std::filesystem::path& dir);

/// RGB-order PNG helpers (OpenCV stores BGR).
cv::Mat read_png_rgb(const std::filesystem::path& file);
void write_png_rgb(const cv::Mat& rgb, const std::filesystem::path& file);

}  // namespace slidewarp

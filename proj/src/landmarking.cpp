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

#include "slidewarp/landmarking.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <opencv2/core.hpp>
#include <opencv2/imgproc.hpp>

#include "slidewarp/error.hpp"

namespace slidewarp {

namespace {

void require_mask(const TissueMask& mask) {
  if (mask.mask.empty() || mask.mask.type() != CV_8UC1) {
    throw Error(ErrorCode::kInvalidArgument, "tissue mask must be a non-empty CV_8UC1 raster");
  }
}

int cell_index(int pixel, double cell) { return static_cast<int>(std::floor(pixel / cell)); }

}  // namespace

std::size_t TissueMask::tissue_pixels() const {
  return mask.empty() ? 0 : static_cast<std::size_t>(cv::countNonZero(mask));
}

OtsuResult otsu_threshold(const cv::Mat& gray) {
  if (gray.empty() || gray.type() != CV_8UC1) {
    throw Error(ErrorCode::kInvalidArgument, "Otsu needs a non-empty 8-bit grayscale raster");
  }
  std::array<double, 256> hist{};
  for (int y = 0; y < gray.rows; ++y) {
    const auto* row = gray.ptr<std::uint8_t>(y);
    for (int x = 0; x < gray.cols; ++x) hist[row[x]] += 1.0;
  }
  const double total = static_cast<double>(gray.total());
  double total_sum = 0.0;
  for (int v = 0; v < 256; ++v) total_sum += v * hist[v];

  int best_t = -1;
  double best_var = -1.0;
  double w0 = 0.0;
  double s0 = 0.0;
  for (int t = 1; t < 256; ++t) {
    w0 += hist[t - 1];
    s0 += (t - 1) * hist[t - 1];
    const double w1 = total - w0;
    if (w0 == 0.0 || w1 == 0.0) continue;
    const double m0 = s0 / w0;
    const double m1 = (total_sum - s0) / w1;
    const double var = (w0 / total) * (w1 / total) * (m0 - m1) * (m0 - m1);
    if (var > best_var) {
      best_var = var;
      best_t = t;
    }
  }
  if (best_t < 0) throw Error(ErrorCode::kDegenerateHistogram, "image has a single gray value");

  OtsuResult out;
  out.threshold = best_t;
  cv::compare(gray, best_t, out.mask, cv::CMP_LT);
  return out;
}

TissueMask tissue_mask(const PyramidalImage& img, int max_dim) {
  const cv::Mat thumb = to_gray(thumbnail(img, max_dim));
  OtsuResult otsu = otsu_threshold(thumb);
  TissueMask out;
  out.mask = std::move(otsu.mask);
  out.threshold = otsu.threshold;
  out.scale_x = static_cast<double>(img.width()) / thumb.cols;
  out.scale_y = static_cast<double>(img.height()) / thumb.rows;
  return out;
}

cv::Rect2d tissue_bbox(const TissueMask& mask) {
  require_mask(mask);
  std::vector<cv::Point> nz;
  cv::findNonZero(mask.mask, nz);
  if (nz.empty()) throw Error(ErrorCode::kNoTissue, "tissue mask is empty");
  const cv::Rect r = cv::boundingRect(nz);
  return {r.x * mask.scale_x - 0.5, r.y * mask.scale_y - 0.5, r.width * mask.scale_x,
          r.height * mask.scale_y};
}

double adjust_grid_size(double s_current, std::size_t produced, std::size_t requested) {
  if (!(s_current > 0.0) || produced == 0 || requested == 0) {
    throw Error(ErrorCode::kInvalidArgument, "grid adjustment needs positive inputs");
  }
  return s_current * std::sqrt(static_cast<double>(produced) / static_cast<double>(requested));
}

std::size_t count_tissue_cells(const TissueMask& mask, double cell) {
  require_mask(mask);
  if (!(cell > 0.0)) throw Error(ErrorCode::kInvalidArgument, "grid cell must be positive");
  const int cols = cell_index(mask.mask.cols - 1, cell) + 1;
  const int rows = cell_index(mask.mask.rows - 1, cell) + 1;
  std::vector<bool> hit(static_cast<std::size_t>(cols) * rows, false);
  for (int y = 0; y < mask.mask.rows; ++y) {
    const auto* row = mask.mask.ptr<std::uint8_t>(y);
    const int cy = cell_index(y, cell);
    for (int x = 0; x < mask.mask.cols; ++x) {
      if (row[x]) hit[static_cast<std::size_t>(cy) * cols + cell_index(x, cell)] = true;
    }
  }
  return static_cast<std::size_t>(std::count(hit.begin(), hit.end(), true));
}

std::vector<Point> sample_grid(const TissueMask& mask, double cell, std::uint64_t seed) {
  require_mask(mask);
  if (!(cell > 0.0)) throw Error(ErrorCode::kInvalidArgument, "grid cell must be positive");
  const int cols = cell_index(mask.mask.cols - 1, cell) + 1;
  const int rows = cell_index(mask.mask.rows - 1, cell) + 1;

  // Tissue pixels bucketed per cell, each bucket in row-major pixel order.
  std::vector<std::vector<cv::Point>> buckets(static_cast<std::size_t>(cols) * rows);
  for (int y = 0; y < mask.mask.rows; ++y) {
    const auto* row = mask.mask.ptr<std::uint8_t>(y);
    const int cy = cell_index(y, cell);
    for (int x = 0; x < mask.mask.cols; ++x) {
      if (row[x]) buckets[static_cast<std::size_t>(cy) * cols + cell_index(x, cell)].emplace_back(x, y);
    }
  }

  std::mt19937_64 rng(seed);
  std::vector<Point> out;
  for (const auto& bucket : buckets) {
    if (bucket.empty()) continue;
    const cv::Point& px = bucket[rng() % bucket.size()];
    out.push_back(mask.to_level0(px.x, px.y));
  }
  return out;
}

LandmarkSelection select_landmarks(const TissueMask& mask, const LandmarkRequest& request) {
  require_mask(mask);
  if (request.requested_count == 0) {
    throw Error(ErrorCode::kInvalidArgument, "at least one landmark must be requested");
  }
  if (mask.tissue_pixels() == 0) throw Error(ErrorCode::kNoTissue, "tissue mask is empty");

  LandmarkSelection out;
  out.first_pass = count_tissue_cells(mask, request.initial_grid);
  out.grid_size = adjust_grid_size(request.initial_grid, out.first_pass, request.requested_count);
  out.points = sample_grid(mask, out.grid_size, request.rng_seed);
  return out;
}

std::vector<Point> sample_tissue_pixels(const TissueMask& mask, std::size_t n, std::uint64_t seed) {
  require_mask(mask);
  std::vector<cv::Point> tissue;
  cv::findNonZero(mask.mask, tissue);
  if (tissue.empty()) throw Error(ErrorCode::kNoTissue, "tissue mask is empty");

  std::mt19937_64 rng(seed);
  std::vector<Point> out;
  out.reserve(n);
  if (n <= tissue.size()) {
    // Partial Fisher-Yates.
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t j = i + rng() % (tissue.size() - i);
      std::swap(tissue[i], tissue[j]);
      out.push_back(mask.to_level0(tissue[i].x, tissue[i].y));
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      const cv::Point& px = tissue[rng() % tissue.size()];
      out.push_back(mask.to_level0(px.x, px.y));
    }
  }
  return out;
}

}  // namespace slidewarp

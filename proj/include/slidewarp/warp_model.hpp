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

/// @file warp_model.hpp
/// @brief Global affine plus interpolated landmark residuals.
///
/// A model maps level-0 source coordinates to level-0 target coordinates as
///
///     warp(p) = A(p) + r(p)
///
/// where A is the least-squares affine over the accepted landmarks and r
/// interpolates the landmark residuals target_pt - A(source_pt): zero in
/// None mode, the nearest landmark's residual in Nearest mode, and
/// barycentric over the Delaunay triangulation of the landmark sources in
/// Linear mode (Nearest outside the convex hull).

#pragma once

#include <array>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <opencv2/core/mat.hpp>

#include "slidewarp/affine.hpp"
#include "slidewarp/ipr.hpp"
#include "slidewarp/pyramid.hpp"

namespace slidewarp {

enum class CorrectionMode { kNone, kNearest, kLinear };

std::string_view to_string(CorrectionMode mode);
/// Accepts "none", "nearest" and "linear"; throws Error(kParseError).
CorrectionMode correction_mode_from_string(std::string_view name);

struct AffineFit {
  AffineTransform2D affine;
  std::vector<Point> residuals;  ///< target - affine(source), per pair
};

/// Least-squares affine over (source, target) pairs plus residuals.
/// Throws Error(kDegenerateFit) for fewer than 3 pairs or collinear sources.
AffineFit fit_affine_lsq(std::span<const std::pair<Point, Point>> pairs);

/// Delaunay triangulation with a bucket grid for point location.
class Triangulation {
 public:
  struct Location {
    std::array<int, 3> vertices{};
    std::array<double, 3> weights{};
  };

  Triangulation() = default;
  /// Duplicate points are ignored; collinear input yields no triangles.
  explicit Triangulation(std::span<const Point> points);

  /// Containing triangle and barycentric weights, or nullopt outside the hull.
  std::optional<Location> locate(Point p) const;

  const std::vector<std::array<int, 3>>& triangles() const { return triangles_; }

 private:
  std::vector<Point> points_;
  std::vector<std::array<int, 3>> triangles_;
  // Bucket grid over the hull bounding box; each cell lists overlapping triangles.
  double x0_ = 0.0, y0_ = 0.0, cell_ = 1.0;
  int cols_ = 0, rows_ = 0;
  std::vector<int> cell_start_;
  std::vector<int> cell_items_;
};

/// Immutable registration product. Copies share the triangulation.
class WarpModel {
 public:
  WarpModel() = default;

  /// `accepted` must carry residuals consistent with `affine`; use
  /// build_warp_model to derive them.
  WarpModel(AffineTransform2D affine, std::vector<Landmark> accepted, CorrectionMode mode,
            std::vector<Landmark> rejected = {});

  Point warp_point(Point p) const { return affine_.apply(p) + correction(p); }
  /// Residual correction at `p` under the model's mode.
  Point correction(Point p) const { return correction(p, mode_); }
  Point correction(Point p, CorrectionMode mode) const;

  /// Same landmarks and affine under another correction mode.
  WarpModel with_mode(CorrectionMode mode) const;

  const AffineTransform2D& affine() const { return affine_; }
  const std::vector<Landmark>& landmarks() const { return accepted_; }
  const std::vector<Landmark>& rejected() const { return rejected_; }
  CorrectionMode mode() const { return mode_; }
  const Triangulation& triangulation() const { return *triangulation_; }

  std::string source_id;
  std::string target_id;
  std::string created_at;  ///< ISO-8601 UTC, informational only

 private:
  std::size_t nearest(Point p) const;

  AffineTransform2D affine_;
  std::vector<Landmark> accepted_;
  std::vector<Landmark> rejected_;
  CorrectionMode mode_ = CorrectionMode::kLinear;
  std::shared_ptr<const Triangulation> triangulation_ = std::make_shared<Triangulation>();
  std::vector<Point> sources_;
};

/// Fits the affine over `accepted`, writes every residual and returns the
/// model. Throws Error(kDegenerateFit).
WarpModel build_warp_model(std::vector<Landmark> accepted, CorrectionMode mode,
                           std::vector<Landmark> rejected = {});

struct WarpedRegion {
  Region region;                ///< target region, same pixel size and level
  std::array<Point, 4> corners; ///< warped source corners (tl, tr, br, bl), level 0
};

/// Warps a source region of `size` pixels at `level` (downsample factor
/// `downsample`) centred on the level-0 point `center`.
WarpedRegion warp_region(const WarpModel& model, Point center, cv::Size size, int level = 0,
                         double downsample = 1.0);

void save_model(const WarpModel& model, const std::filesystem::path& path);
/// Throws Error(kParseError) for unreadable or malformed files and
/// Error(kVersionError) for any version other than 1.
WarpModel load_model(const std::filesystem::path& path);

std::string model_to_json(const WarpModel& model);
WarpModel model_from_json(std::string_view text);

/// Vector-colour rendering of the residual field on a `max_dim` thumbnail of
/// `source`: hue = direction, saturation = norm / p95 landmark norm (capped at
/// 1), value = thumbnail gray. Background pixels stay gray. Returns RGB8.
cv::Mat residual_map(const WarpModel& model, const PyramidalImage& source, int max_dim = 1024,
                     bool legend = false);

/// HSV (hue in degrees, s and v in [0, 1]) to RGB8.
cv::Vec3b hsv_to_rgb(double hue_deg, double saturation, double value);

}  // namespace slidewarp

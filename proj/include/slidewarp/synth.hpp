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

/// @file synth.hpp
/// @brief Synthetic tissue and slide pairs with exact ground-truth warps.
///
/// The forward map of a pair is
///
///     G(p) = tear( A( p + bumps(p) ) )
///
/// where `bumps` is a sum of Gaussian displacement bumps in source space, `A`
/// is the global affine and `tear` rigidly shifts horizontal bands of the
/// target along x. The target raster is rendered by pulling every target pixel
/// back through G^-1, which is exact for the tear and the affine and a
/// contracting fixed-point iteration for the bumps.

#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <nlohmann/json_fwd.hpp>
#include <opencv2/core/mat.hpp>

#include "slidewarp/affine.hpp"
#include "slidewarp/pyramid.hpp"

namespace slidewarp {

struct ColorJitter {
  std::array<double, 3> gain{1.0, 1.0, 1.0};
  std::array<double, 3> bias{0.0, 0.0, 0.0};
};

struct DeformationSpec {
  AffineTransform2D global_affine;
  int bump_count = 0;
  double bump_amplitude_px = 0.0;
  double bump_sigma_px = 200.0;
  int tear_count = 0;
  double tear_offset_px = 0.0;
  ColorJitter color_jitter;
  std::uint64_t seed = 0;
  int levels = 4;
  double source_mpp = 0.25;
  double target_mpp = 0.25;
};

void to_json(nlohmann::json& j, const DeformationSpec& spec);
void from_json(const nlohmann::json& j, DeformationSpec& spec);

struct GaussianBump {
  Point center;
  Point displacement;  ///< peak displacement vector, |displacement| == amplitude
  double sigma = 1.0;
};

/// Horizontal band [y_begin, y_end) of the target shifted by `offset` along x.
struct TearBand {
  double y_begin = 0.0;
  double y_end = 0.0;
  double offset = 0.0;
};

/// Exact source -> target map of a synthetic pair.
class GroundTruth {
 public:
  GroundTruth() = default;
  GroundTruth(AffineTransform2D affine, std::vector<GaussianBump> bumps, std::vector<TearBand> tears);

  Point operator()(Point source) const;

  /// Target -> source by exact tear/affine inversion and fixed-point bump
  /// inversion.
  Point inverse(Point target) const;

  /// Bump displacement in source space (before the affine).
  Point bump_displacement(Point source) const;

  const AffineTransform2D& affine() const { return affine_; }
  const std::vector<GaussianBump>& bumps() const { return bumps_; }
  const std::vector<TearBand>& tears() const { return tears_; }

 private:
  AffineTransform2D affine_;
  AffineTransform2D inverse_affine_;
  std::vector<GaussianBump> bumps_;
  std::vector<TearBand> tears_;
};

struct SyntheticPair {
  PyramidalImage source;
  PyramidalImage target;
  GroundTruth truth;
};

/// Builds source/target pyramids from `base_rgb` under `spec`.
/// Throws Error(kInvalidArgument) when |det(global_affine)| < 1e-6.
SyntheticPair synthesize_pair(const cv::Mat& base_rgb, const DeformationSpec& spec);

/// Draws the bump and tear layout of `spec` for a `size` canvas.
GroundTruth make_ground_truth(const DeformationSpec& spec, cv::Size size);

struct TissueOptions {
  double tissue_fraction = 0.32;  ///< rough share of the canvas covered
  double nuclei_per_kpx = 6.0;    ///< nuclei per 1000 tissue pixels at peak cellularity
  double extent = 0.40;           ///< tissue stays within this fraction of min(w,h) from the centre
};

/// H&E-like RGB texture: pink stroma, purple nuclei of varying density,
/// white lumens, all on a near-white background.
cv::Mat generate_tissue(cv::Size size, std::uint64_t seed, const TissueOptions& options = {});

/// Random corpus spec used by the sweep harness and the acceptance suite.
struct CorpusOptions {
  int size = 2048;
  int levels = 4;
  int bump_count = 6;
  double bump_amplitude_px = 8.0;
  double bump_sigma_min = 180.0;
  double bump_sigma_max = 320.0;
  double tear_probability = 0.25;
  double tear_offset_min = 5.0;
  double tear_offset_max = 8.0;
  double max_translation_px = 60.0;
  double rotation_deg = -1.0;  ///< < 0 draws a uniform rotation
  double scale_jitter = 0.03;
};

void to_json(nlohmann::json& j, const CorpusOptions& options);
void from_json(const nlohmann::json& j, CorpusOptions& options);

DeformationSpec random_deformation_spec(const CorpusOptions& options, std::uint64_t seed);

}  // namespace slidewarp

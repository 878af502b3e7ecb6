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

/// @file shift_analysis.hpp
/// @brief Scanner domain-shift study: aligned patch extraction across scans,
/// pluggable patch scorers and pairwise agreement tables.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <opencv2/core/mat.hpp>

#include "slidewarp/pyramid.hpp"
#include "slidewarp/warp_model.hpp"

namespace slidewarp {

/// Maps an RGB patch to a score in [0, 1]. Implementations must be safe to
/// call from several threads at once.
class PatchScorer {
 public:
  virtual ~PatchScorer() = default;
  /// Returns nullopt when the patch could not be scored.
  virtual std::optional<double> score(const cv::Mat& rgb) const = 0;
  virtual std::string name() const = 0;
  virtual bool deterministic() const = 0;
};

/// Share of Otsu-dark pixels in the patch. A single-valued patch has no
/// Otsu split; it counts as all tissue when darker than mid-gray.
double patch_density(const cv::Mat& rgb);

/// Scorer returning patch_density.
std::unique_ptr<PatchScorer> density_scorer();

/// patch_density plus zero-mean Gaussian noise of standard deviation
/// `sigma`, clamped to [0, 1]. The noise draw is seeded from `seed` and a
/// hash of the pixels, so identical patches always score identically.
std::unique_ptr<PatchScorer> seeded_noise_scorer(std::uint64_t seed, double sigma = 0.1);

/// Runs `command <png path>` per patch and parses one float from stdout.
/// A nonzero exit, unparsable output or a value outside [0, 1] yields
/// nullopt. Patches are written under `scratch_dir`.
std::unique_ptr<PatchScorer> command_scorer(std::string command, std::filesystem::path scratch_dir);

/// `n` uniform tissue points of the reference scan, level-0 coordinates.
/// Throws Error(kNoTissue).
std::vector<Point> sample_tissue_points(const PyramidalImage& reference, std::size_t n, std::uint64_t seed,
                                        int mask_max_dim = 1024);

/// RGB patch of `size` pixels on `image` level 0: centred on the model image
/// of `center` (warp_region) and laid out along the model's affine axes.
/// With an identity model and an integer top-left corner this is an exact
/// pixel copy. Off-slide pixels are white.
cv::Mat extract_warped_patch(const PyramidalImage& image, const WarpModel& model, Point center, cv::Size size);

struct Scan {
  const PyramidalImage* image = nullptr;
  const WarpModel* model = nullptr;  ///< reference -> this scan
};

/// patches[point][scan]; scan 0 is the reference, then `others` in order.
/// Every patch is size x size RGB at level 0. Reference patches are centred
/// on the point; the others are centred on warp_region's target point and
/// laid out along the model's affine axes. Off-slide pixels are white.
std::vector<std::vector<cv::Mat>> extract_aligned_patches(const PyramidalImage& reference,
                                                          const std::vector<Scan>& others,
                                                          const std::vector<Point>& points, int size = 512,
                                                          int threads = 1);

/// Scores of every patch on every scanner, grouped into slides.
struct ScoreMatrix {
  std::vector<std::string> scanners;
  std::vector<std::string> slides;
  std::vector<std::size_t> slide_of_patch;              ///< index into `slides`
  std::vector<std::vector<std::optional<double>>> scores;  ///< [patch][scanner]; nullopt = missing
  std::vector<double> tissue_density;                   ///< per patch, in [0, 1]
};

/// Scores `patches` (as returned by extract_aligned_patches) with `scorer`.
std::vector<std::vector<std::optional<double>>> score_patches(const std::vector<std::vector<cv::Mat>>& patches,
                                                              const PatchScorer& scorer, int threads = 1);

/// Share of reference-patch pixels darker than the slide's tissue threshold.
double tissue_fraction(const cv::Mat& rgb, int threshold);

struct PairAgreement {
  std::size_t a = 0;
  std::size_t b = 0;
  std::optional<double> pearson_r_patch;  ///< nullopt: undefined (zero variance or < 2 values)
  std::optional<double> pearson_r_slide;
  std::optional<double> mad_patch;        ///< nullopt: no complete pair
  std::optional<double> mad_slide;
  std::size_t n_patches = 0;
  std::size_t n_slides = 0;
};

struct ShiftReport {
  ScoreMatrix matrix;
  std::vector<std::vector<std::optional<double>>> slide_medians;  ///< [slide][scanner]
  std::vector<PairAgreement> pairs;                               ///< a < b, lexicographic
};

/// Patch-level and slide-level (median per slide) Pearson R and mean
/// absolute difference for every unordered scanner pair, over the patches
/// (slides) where both scanners have a value.
///
/// Throws Error(kInvalidArgument) for fewer than 2 scanners or 2 patches or
/// inconsistent matrix shapes.
ShiftReport agreement_tables(ScoreMatrix matrix);

/// Pearson R between the per-patch score range (max - min over scanners)
/// and tissue density, over complete patches. nullopt when undefined.
std::optional<double> discrepancy_density_correlation(const ShiftReport& report);

inline constexpr const char* kShiftCsvHeader =
    "scanner_a,scanner_b,pearson_r_patch,pearson_r_slide,mad_patch,mad_slide,n_patches,n_slides";

/// Pairwise table; undefined values are written as "undefined".
std::string shift_csv(const ShiftReport& report);

/// Full report including the score matrix and slide medians.
std::string shift_json(const ShiftReport& report);

}  // namespace slidewarp

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

/// @file ipr.hpp
/// @brief Per-landmark coarse-to-fine patch registration and NMI gating.
///
/// For every landmark a square patch of fixed pixel size is cut around the
/// source point at successively finer pyramid levels. The target patch is
/// resampled through the running local affine, so after each level the two
/// patches differ only by the residual local misalignment, which
/// register_patch estimates and folds back into the affine.

#pragma once

#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include <opencv2/core/mat.hpp>

#include "slidewarp/affine.hpp"
#include "slidewarp/pyramid.hpp"

namespace slidewarp {

enum class LandmarkStatus { kAccepted, kRejectedLowNmi, kFailed };

std::string_view to_string(LandmarkStatus status);
/// Throws Error(kParseError) on an unknown name.
LandmarkStatus landmark_status_from_string(std::string_view name);

struct Landmark {
  Point source_pt;
  Point target_pt;
  AffineTransform2D local_affine;  ///< level-0 source -> level-0 target
  double nmi = 0.0;
  LandmarkStatus status = LandmarkStatus::kFailed;
  Point residual;  ///< target_pt - global_affine(source_pt); set by the warp model
  /// Prediction of target_pt after the initial estimate and after each level.
  std::vector<Point> trace;
};

struct IprConfig {
  static constexpr int kAutoLevel = -1;

  int patch_size_px = 256;
  double nmi_threshold = 0.15;
  int nmi_bins = 32;
  int max_affine_iters = 30;
  int start_level = kAutoLevel;
  /// Width of the centre weighting in register_patch as a fraction of the
  /// patch size; 0 disables it.
  double weight_sigma_frac = 0.125;
};

/// Throws Error(kInvalidArgument) when a field is out of range.
void validate(const IprConfig& cfg);

struct PatchRegistration {
  AffineTransform2D correction;  ///< source-patch pixel -> target-patch pixel
  bool converged = false;
  int iterations = 0;
};

/// Phase-correlation translation followed by inverse-compositional
/// Gauss-Newton over a 6-parameter affine on Gaussian-prefiltered,
/// intensity-normalised patches.
///
/// `weight_sigma` > 0 weights the squared differences with a Gaussian of that
/// width (pixels) centred on the patch; 0 weights all pixels equally.
///
/// Throws Error(kFlatPatch) when either patch is constant. A singular normal
/// matrix or a diverging update yields the phase-correlation translation with
/// converged == false.
PatchRegistration register_patch(const cv::Mat& src_patch, const cv::Mat& tgt_patch, int max_iters = 30,
                                 double weight_sigma = 0.0);

/// Finest level whose patch footprint covers at least a quarter of the
/// tissue bounding-box area; the top level when none does.
int auto_start_level(const PyramidalImage& source, const cv::Rect2d& tissue_bbox, int patch_size_px);

/// NMI between the level-0 source patch at `source_pt` and the target patch
/// resampled through `source_to_target`.
double score_landmark(const PyramidalImage& source, const PyramidalImage& target, Point source_pt,
                      const AffineTransform2D& source_to_target, const IprConfig& cfg);

/// Runs the level schedule for one landmark and sets target_pt, nmi and the
/// status (Accepted / RejectedLowNmi / Failed).
///
/// `cfg.start_level` must be resolved or kAutoLevel; Auto computes the tissue
/// mask of `source`, so callers handling many landmarks should resolve it
/// once with auto_start_level.
Landmark iterative_patch_registration(const PyramidalImage& source, const PyramidalImage& target,
                                      Point source_pt, const AffineTransform2D& init,
                                      const IprConfig& cfg);

/// Splits landmarks by nmi >= threshold; Failed landmarks are always
/// rejected. Statuses are rewritten to match the split.
std::pair<std::vector<Landmark>, std::vector<Landmark>> partition_landmarks(std::vector<Landmark> landmarks,
                                                                            double threshold);

/// partition_landmarks that throws Error(kTooFewLandmarks) when fewer than
/// three landmarks are accepted.
std::pair<std::vector<Landmark>, std::vector<Landmark>> filter_landmarks(std::vector<Landmark> landmarks,
                                                                         double threshold);

struct NmiCalibration {
  double threshold = 0.0;
  double clean_acceptance = 0.0;     ///< share of clean scores >= threshold
  double corrupted_rejection = 0.0;  ///< share of corrupted scores < threshold
};

/// Threshold re-derivation from labelled scores: the nearest-rank
/// (1 - keep) percentile of the clean scores, i.e. the largest threshold
/// that still accepts at least `keep` of clean registrations. Rates are
/// reported on the inputs. Throws Error(kInvalidArgument) on empty clean
/// scores or keep outside (0, 1).
NmiCalibration calibrate_nmi_threshold(std::span<const double> clean, std::span<const double> corrupted,
                                       double keep = 0.99);

}  // namespace slidewarp

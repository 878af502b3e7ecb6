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

/// @file pipeline.hpp
/// @brief End-to-end slide registration: global affine, landmarks, IPR,
/// NMI gate and warp-model fit.

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "slidewarp/global_align.hpp"
#include "slidewarp/ipr.hpp"
#include "slidewarp/landmarking.hpp"
#include "slidewarp/pyramid.hpp"
#include "slidewarp/warp_model.hpp"

namespace slidewarp {

struct RegistrationOptions {
  std::size_t landmarks = 30;
  CorrectionMode mode = CorrectionMode::kLinear;
  IprConfig ipr;
  GlobalAlignOptions global;
  int mask_max_dim = 1024;
  std::uint64_t seed = 0;
  int threads = 1;
};

struct StageTimes {
  double global_s = 0.0;
  double landmarks_s = 0.0;
  double ipr_s = 0.0;
  double fit_s = 0.0;
  double total() const { return global_s + landmarks_s + ipr_s + fit_s; }
};

struct RegistrationResult {
  WarpModel model;
  GlobalAlignResult global;
  TissueMask mask;
  int start_level = 0;
  StageTimes times;
};

/// Runs the full registration of `source` onto `target`.
///
/// Throws Error(kInsufficientFeatures), Error(kAlignmentFailed),
/// Error(kNoTissue), Error(kTooFewLandmarks) or Error(kDegenerateFit).
RegistrationResult register_slides(const PyramidalImage& source, const PyramidalImage& target,
                                   const RegistrationOptions& options);

/// Evaluation points: a landmark grid drawn with a seed derived from
/// `seed`, minus any point that coincides with one of `exclude`.
std::vector<Point> evaluation_points(const TissueMask& mask, std::size_t count, std::uint64_t seed,
                                     const std::vector<Point>& exclude);

}  // namespace slidewarp

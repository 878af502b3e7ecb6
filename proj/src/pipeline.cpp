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

#include "slidewarp/pipeline.hpp"

#include <algorithm>
#include <chrono>

#include <spdlog/spdlog.h>

#include "slidewarp/error.hpp"
#include "slidewarp/parallel.hpp"

namespace slidewarp {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

constexpr std::uint64_t kEvaluationSeedSalt = 0x5DEECE66Dull;

}  // namespace

RegistrationResult register_slides(const PyramidalImage& source, const PyramidalImage& target,
                                   const RegistrationOptions& options) {
  validate(options.ipr);
  if (options.landmarks < 3) throw Error(ErrorCode::kInvalidArgument, "at least 3 landmarks are required");
  RegistrationResult result;

  auto t0 = Clock::now();
  GlobalAlignOptions global = options.global;
  global.ransac.seed = options.seed;
  result.global = initial_alignment(source, target, global);
  result.times.global_s = seconds_since(t0);
  spdlog::info("stage=global keypoints={}/{} matches={} inliers={} wall_s={:.3f}",
               result.global.source_keypoints, result.global.target_keypoints, result.global.matches,
               result.global.inliers, result.times.global_s);

  t0 = Clock::now();
  result.mask = tissue_mask(source, options.mask_max_dim);
  const LandmarkSelection selection =
      select_landmarks(result.mask, {options.landmarks, options.seed, 50.0});
  IprConfig ipr = options.ipr;
  if (ipr.start_level == IprConfig::kAutoLevel) {
    ipr.start_level = auto_start_level(source, tissue_bbox(result.mask), ipr.patch_size_px);
  }
  ipr.start_level = std::min(ipr.start_level, source.level_count() - 1);
  result.start_level = ipr.start_level;
  result.times.landmarks_s = seconds_since(t0);
  spdlog::info("stage=landmarks requested={} produced={} grid={:.2f} start_level={} wall_s={:.3f}",
               options.landmarks, selection.points.size(), selection.grid_size, ipr.start_level,
               result.times.landmarks_s);

  t0 = Clock::now();
  std::vector<Landmark> landmarks(selection.points.size());
  parallel_for(landmarks.size(), options.threads, [&](std::size_t i) {
    landmarks[i] = iterative_patch_registration(source, target, selection.points[i], result.global.affine, ipr);
  });
  result.times.ipr_s = seconds_since(t0);

  t0 = Clock::now();
  auto [accepted, rejected] = filter_landmarks(std::move(landmarks), ipr.nmi_threshold);
  spdlog::info("stage=ipr accepted={} rejected={} wall_s={:.3f}", accepted.size(), rejected.size(),
               result.times.ipr_s);
  result.model = build_warp_model(std::move(accepted), options.mode, std::move(rejected));
  result.times.fit_s = seconds_since(t0);
  spdlog::info("stage=fit wall_s={:.3f}", result.times.fit_s);
  return result;
}

std::vector<Point> evaluation_points(const TissueMask& mask, std::size_t count, std::uint64_t seed,
                                     const std::vector<Point>& exclude) {
  const LandmarkSelection selection = select_landmarks(mask, {count, seed ^ kEvaluationSeedSalt, 50.0});
  std::vector<Point> out;
  out.reserve(selection.points.size());
  for (const Point& p : selection.points) {
    const bool clash = std::any_of(exclude.begin(), exclude.end(),
                                   [&](const Point& q) { return distance(p, q) < 1e-9; });
    if (!clash) out.push_back(p);
  }
  return out;
}

}  // namespace slidewarp

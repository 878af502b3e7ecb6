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

/// @file evaluation.hpp
/// @brief Target registration error by phase correlation and the
/// mode x landmark-count x seed sweep harness.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "slidewarp/pipeline.hpp"
#include "slidewarp/pyramid.hpp"
#include "slidewarp/synth.hpp"
#include "slidewarp/warp_model.hpp"

namespace slidewarp {

struct TrePoint {
  Point source;
  Point predicted;
  cv::Point shift;          ///< phase-correlation offset, target patch vs source patch
  double tre_px = 0.0;      ///< |shift|
  std::optional<double> truth_error_px;  ///< |predicted - truth(source)| when a truth map is given
  bool flat = false;        ///< skipped: constant patch
};

struct Summary {
  double median_px = 0.0;
  double p95_px = 0.0;
  double mean_px = 0.0;
  std::size_t n = 0;
};

/// Nearest-rank summary. Throws Error(kInvalidArgument) on empty input.
Summary summarize(std::span<const double> values);

struct TreReport {
  std::vector<TrePoint> points;
  Summary tre;                     ///< over non-flat points
  std::optional<Summary> truth;    ///< over non-flat points, when a truth map is given
  std::size_t skipped = 0;
  double wall_time_s = 0.0;
};

struct TreOptions {
  int patch_px = 256;
  int threads = 1;
  /// Optional exact source -> target map for the ground-truth error.
  std::function<Point(Point)> truth;
};

/// Per point: level-0 source patch centred on p vs the target patch whose
/// pixels are the model images of the source patch pixels; TRE = |phase shift|.
/// Throws Error(kNoEvaluablePoints) when every point is flat or none given.
TreReport measure_tre(const PyramidalImage& source, const PyramidalImage& target, const WarpModel& model,
                      const std::vector<Point>& eval_points, const TreOptions& options = {});

struct SweepConfig {
  CorpusOptions corpus;
  std::vector<CorrectionMode> modes{CorrectionMode::kNone, CorrectionMode::kNearest, CorrectionMode::kLinear};
  std::vector<std::size_t> landmark_counts{30};
  std::vector<std::uint64_t> seeds;
  std::uint64_t tissue_seed = 7;   ///< base image of every pair
  std::size_t eval_points = 50;
  int patch_px = 256;
  IprConfig ipr;
  int threads = 1;
  /// When set, each finished (seed, n) group is stored here and reused on reruns.
  std::optional<std::filesystem::path> cell_dir;
};

struct SweepRow {
  std::string seed;   ///< seed value, or "all" for aggregate rows
  CorrectionMode mode = CorrectionMode::kLinear;
  std::size_t n_landmarks = 0;
  double median_px = 0.0;
  double p95_px = 0.0;
  double mean_px = 0.0;
  double time_s = 0.0;
  int failed = 0;
  /// Ground-truth error summary (not part of the CSV).
  double truth_median_px = 0.0;
  double truth_p95_px = 0.0;
  /// Per-point TRE values, kept for aggregation.
  std::vector<double> tre_values;
  std::vector<double> truth_values;
};

struct SweepModel {
  std::uint64_t seed = 0;
  std::size_t n_landmarks = 0;
  WarpModel model;  ///< linear mode
};

struct SweepResult {
  std::vector<SweepRow> cells;       ///< one per (seed, n, mode)
  std::vector<SweepRow> aggregates;  ///< one per (n, mode), pooled over seeds
  std::vector<SweepModel> models;    ///< every successful (seed, n)
};

/// Runs the sweep. Pipeline errors are recorded as failed cells.
SweepResult run_sweep(const SweepConfig& config);

inline constexpr const char* kSweepCsvHeader = "seed,mode,n_landmarks,median_px,p95_px,mean_px,time_s,failed";

/// CSV with the header above: per-cell rows followed by aggregate rows.
std::string sweep_csv(const SweepResult& result);

}  // namespace slidewarp

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

#pragma once

#include <optional>
#include <span>

namespace slidewarp {

/// Nearest-rank percentile: the ceil(q * n)-th smallest value (1-based),
/// with q in (0, 1]. Throws Error(kInvalidArgument) on empty input.
double percentile_nearest_rank(std::span<const double> values, double q);

/// Median as the nearest-rank 0.5 percentile.
double median(std::span<const double> values);

double mean(std::span<const double> values);

/// Pearson correlation from a single-pass (Welford) co-moment update.
/// Returns nullopt when either input has zero variance or fewer than two
/// values; throws Error(kInvalidArgument) on a length mismatch.
std::optional<double> pearson(std::span<const double> x, std::span<const double> y);

/// Mean absolute difference of paired values.
double mean_absolute_difference(std::span<const double> x, std::span<const double> y);

}  // namespace slidewarp

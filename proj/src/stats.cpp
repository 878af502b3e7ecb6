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

#include "slidewarp/stats.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "slidewarp/error.hpp"

namespace slidewarp {

double percentile_nearest_rank(std::span<const double> values, double q) {
  if (values.empty()) throw Error(ErrorCode::kInvalidArgument, "percentile of an empty sample");
  if (!(q > 0.0 && q <= 1.0)) throw Error(ErrorCode::kInvalidArgument, "percentile rank must lie in (0, 1]");
  const auto n = values.size();
  // The small slack keeps q * n from rounding up past an exact integer.
  auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(n) - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, n);
  std::vector<double> sorted(values.begin(), values.end());
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(rank - 1), sorted.end());
  return sorted[rank - 1];
}

double median(std::span<const double> values) { return percentile_nearest_rank(values, 0.5); }

double mean(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorCode::kInvalidArgument, "mean of an empty sample");
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error(ErrorCode::kInvalidArgument, "pearson inputs differ in length");
  if (x.size() < 2) return std::nullopt;
  double mx = 0.0, my = 0.0, sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double k = static_cast<double>(i + 1);
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    mx += dx / k;
    my += dy / k;
    sxx += dx * (x[i] - mx);
    syy += dy * (y[i] - my);
    sxy += dx * (y[i] - my);
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double mean_absolute_difference(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "MAD needs equal-length non-empty inputs");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) sum += std::abs(x[i] - y[i]);
  return sum / static_cast<double>(x.size());
}

}  // namespace slidewarp

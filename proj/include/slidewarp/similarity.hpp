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

#include <opencv2/core/mat.hpp>

namespace slidewarp {

/// Integer translation d with b(x) ~= a(x - d), from the peak of the
/// normalised cross-power spectrum. Components are unwrapped to
/// [-size/2, size/2); ties go to the first peak in row-major order.
///
/// Accepts any single-channel depth. Throws Error(kFlatPatch) if either input
/// is constant and Error(kInvalidArgument) on a size mismatch.
cv::Point phase_cross_correlation(const cv::Mat& a, const cv::Mat& b);

/// Normalised mutual information 2 I(A;B) / (H(A) + H(B)) over a bins x bins
/// joint histogram of equal-width gray bins on [0, 256).
///
/// Float inputs are clamped to [0, 255]. Returns 0 when either image is
/// constant. nmi(a, a) is exactly 1 for any non-constant a.
double nmi(const cv::Mat& a, const cv::Mat& b, int bins = 32);

}  // namespace slidewarp

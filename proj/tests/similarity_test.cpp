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

#include "slidewarp/similarity.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>
#include <opencv2/core.hpp>

#include "slidewarp/error.hpp"
#include "slidewarp/landmarking.hpp"
#include "slidewarp/pyramid.hpp"
#include "test_support.hpp"

namespace slidewarp {
namespace {

using testing::circular_shift;
using testing::noise_texture;

TEST(PhaseCorrelation, IdenticalIsZero) {
  const cv::Mat a = noise_texture({128, 96}, 1);
  EXPECT_EQ(phase_cross_correlation(a, a), cv::Point(0, 0));
}

TEST(PhaseCorrelation, CircularShiftExample) {
  const cv::Mat a = noise_texture({256, 256}, 2);
  EXPECT_EQ(phase_cross_correlation(a, circular_shift(a, 17, -9)), cv::Point(17, -9));
}

TEST(PhaseCorrelation, RandomCircularShiftsAreExactAndAntisymmetric) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    const int w = 64 + static_cast<int>(rng() % 3) * 32;
    const int h = 64 + static_cast<int>(rng() % 3) * 32;
    const cv::Mat a = noise_texture({w, h}, 1000 + trial, 1.0);
    // Stay inside the unambiguous range [-n/2, n/2).
    const int dx = static_cast<int>(rng() % w) - w / 2;
    const int dy = static_cast<int>(rng() % h) - h / 2;
    const cv::Mat b = circular_shift(a, dx, dy);
    EXPECT_EQ(phase_cross_correlation(a, b), cv::Point(dx, dy)) << "trial " << trial;
    if (dx != -w / 2 && dy != -h / 2) {
      EXPECT_EQ(phase_cross_correlation(b, a), cv::Point(-dx, -dy));
    }
  }
}

TEST(PhaseCorrelation, NoisyShiftMostlyRecovered) {
  int ok = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const cv::Mat big = noise_texture({300, 300}, 500 + trial);
    const cv::Mat a = big(cv::Rect(20, 20, 256, 256));
    cv::Mat b = big(cv::Rect(15, 15, 256, 256)).clone();  // content moves by (+5, +5)
    cv::Mat noise(b.size(), CV_32F);
    cv::randn(noise, 0, 10);
    cv::Mat bf;
    b.convertTo(bf, CV_32F);
    bf += noise;
    bf.convertTo(b, CV_8U);
    if (phase_cross_correlation(a, b) == cv::Point(5, 5)) ++ok;
  }
  EXPECT_GE(ok, 38);
}

TEST(PhaseCorrelation, FlatPatchAndShapeErrors) {
  const cv::Mat flat(32, 32, CV_8UC1, cv::Scalar(255));
  try {
    phase_cross_correlation(flat, noise_texture({32, 32}, 3));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kFlatPatch);
  }
  EXPECT_THROW(phase_cross_correlation(noise_texture({32, 32}, 3), noise_texture({16, 32}, 3)), Error);
}

TEST(Nmi, SelfIsExactlyOne) {
  const cv::Mat a = noise_texture({64, 64}, 4);
  EXPECT_EQ(nmi(a, a), 1.0);
  cv::Mat f;
  a.convertTo(f, CV_32F);
  EXPECT_EQ(nmi(f, f), 1.0);
}

TEST(Nmi, IndependentNoiseIsNearZero) {
  for (int seed = 0; seed < 5; ++seed) {
    cv::Mat a(256, 256, CV_8UC1), b(256, 256, CV_8UC1);
    cv::theRNG().state = 100 + seed;
    cv::randu(a, 0, 256);
    cv::randu(b, 0, 256);
    EXPECT_LT(nmi(a, b), 0.05);
  }
}

TEST(Nmi, Symmetric) {
  const cv::Mat a = noise_texture({100, 80}, 5);
  const cv::Mat b = noise_texture({100, 80}, 6);
  cv::Mat mix;
  cv::addWeighted(a, 0.6, b, 0.4, 0, mix);
  EXPECT_NEAR(nmi(a, mix), nmi(mix, a), 1e-12);
  EXPECT_NEAR(nmi(a, mix, 16), nmi(mix, a, 16), 1e-12);
}

TEST(Nmi, InvariantUnderBinPreservingRemap) {
  const cv::Mat a = noise_texture({100, 80}, 7);
  cv::Mat b;
  cv::addWeighted(a, 0.7, noise_texture({100, 80}, 8), 0.3, 0, b);
  // Reverse the order inside each 8-wide bin and permute the bins.
  std::vector<int> perm(32);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(9));
  cv::Mat lut(1, 256, CV_8U);
  for (int v = 0; v < 256; ++v) lut.at<std::uint8_t>(v) = static_cast<std::uint8_t>(perm[v >> 3] * 8 + (7 - (v & 7)));
  cv::Mat a2;
  cv::LUT(a, lut, a2);
  EXPECT_NEAR(nmi(a2, b), nmi(a, b), 1e-12);
}

TEST(Nmi, AlignedTissueAboveMisalignedBelow) {
  const PyramidalImage img = build_pyramid(testing::small_tissue(), 1);
  const cv::Mat& gray = img.gray_level(0);
  const TissueMask mask = tissue_mask(img, 1024);
  const auto points = sample_tissue_pixels(mask, 60, 3);
  const cv::Rect bounds(0, 0, gray.cols, gray.rows);
  std::mt19937_64 rng(4);
  int aligned_high = 0, misaligned_low = 0, n = 0;
  for (const auto& p : points) {
    const cv::Rect a(int(p.x) - 64, int(p.y) - 64, 128, 128);
    const double angle = std::uniform_real_distribution<double>(0, 2 * CV_PI)(rng);
    const cv::Rect b = a + cv::Point(int(40 * std::cos(angle)), int(40 * std::sin(angle)));
    if ((a & bounds) != a || (b & bounds) != b) continue;
    cv::Mat noisy;
    gray(a).convertTo(noisy, CV_32F);
    cv::Mat noise(noisy.size(), CV_32F);
    cv::randn(noise, 0, 6);
    noisy += noise;
    ++n;
    if (nmi(gray(a), noisy) > 0.20) ++aligned_high;
    if (nmi(gray(a), gray(b)) < 0.20) ++misaligned_low;
  }
  ASSERT_GE(n, 40);
  EXPECT_GE(aligned_high, 0.9 * n);
  EXPECT_GE(misaligned_low, 0.5 * n);
}

}  // namespace
}  // namespace slidewarp

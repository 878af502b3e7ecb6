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

#include "slidewarp/synth.hpp"

#include <cmath>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>
#include <opencv2/imgproc.hpp>

#include "slidewarp/pyramid.hpp"
#include "test_support.hpp"

namespace slidewarp {
namespace {

using testing::small_tissue;

TEST(SynthesizePair, IdentitySpecIsPixelIdentical) {
  DeformationSpec spec;
  spec.levels = 3;
  const SyntheticPair pair = synthesize_pair(small_tissue(), spec);
  for (int l = 0; l < 3; ++l) EXPECT_EQ(cv::norm(pair.source.level(l), pair.target.level(l), cv::NORM_INF), 0.0);
  for (double v : {0.0, 17.25, 1000.0}) EXPECT_EQ(pair.truth({v, v / 2}), Point(v, v / 2));
}

TEST(SynthesizePair, TranslationTruthIsConstantOffset) {
  DeformationSpec spec;
  spec.global_affine = AffineTransform2D::translation(40, -25);
  spec.levels = 2;
  const SyntheticPair pair = synthesize_pair(small_tissue(), spec);
  for (int y = 0; y < 1024; y += 97)
    for (int x = 0; x < 1024; x += 89) {
      const Point t = pair.truth({double(x), double(y)});
      EXPECT_EQ(t, Point(x + 40.0, y - 25.0));
    }
  // Target pixel (x + 40, y - 25) is source pixel (x, y).
  const cv::Mat& s = pair.source.level(0);
  const cv::Mat& t = pair.target.level(0);
  EXPECT_EQ(cv::norm(s(cv::Rect(0, 25, 900, 900)), t(cv::Rect(40, 0, 900, 900)), cv::NORM_INF), 0.0);
}

TEST(SynthesizePair, BumpFieldMatchesDirectEvaluation) {
  DeformationSpec spec;
  spec.global_affine = AffineTransform2D::rotation(0.1, {500, 500});
  spec.bump_count = 5;
  spec.bump_amplitude_px = 12;
  spec.bump_sigma_px = 150;
  spec.seed = 3;
  const GroundTruth truth = make_ground_truth(spec, {1024, 1024});
  ASSERT_EQ(truth.bumps().size(), 5u);
  double worst = 0.0;
  for (int y = 0; y < 1024; y += 16)
    for (int x = 0; x < 1024; x += 16) {
      const Point p{double(x), double(y)};
      Point d{0, 0};
      for (const auto& b : truth.bumps()) {
        const double r2 = (p - b.center).dot(p - b.center);
        d += b.displacement * std::exp(-r2 / (2 * b.sigma * b.sigma));
      }
      const Point expected = spec.global_affine.apply(p + d);
      const Point got = truth(p);
      EXPECT_NEAR(got.x, expected.x, 1e-9);
      EXPECT_NEAR(got.y, expected.y, 1e-9);
      // The affine is a rotation, so it preserves the displacement norm.
      worst = std::max(worst, distance(got, spec.global_affine.apply(p)));
    }
  EXPECT_LE(worst, 12.0 * 5);
  for (const auto& b : truth.bumps()) EXPECT_NEAR(std::hypot(b.displacement.x, b.displacement.y), 12.0, 1e-9);
}

TEST(SynthesizePair, LevelsMatchDownsampledCrops) {
  const SyntheticPair pair = synthesize_pair(small_tissue(), testing::small_spec(5));
  for (int l = 1; l < pair.target.level_count(); ++l) {
    const double f = pair.target.downsample(l);
    const Region region{{512.0 - 0.5, 512.0 - 0.5}, {64, 64}, l};
    const cv::Mat got = read_region(pair.target, region);
    // Level-0 crop covering the same area, area-downsampled.
    const Point c = to_level(region.center, f);
    const int x0 = static_cast<int>(std::floor(c.x - 31.5 + 0.5));
    const int y0 = static_cast<int>(std::floor(c.y - 31.5 + 0.5));
    const int s = static_cast<int>(f);
    cv::Mat crop = pair.target.level(0)(cv::Rect(x0 * s, y0 * s, 64 * s, 64 * s));
    cv::Mat expected;
    cv::resize(crop, expected, {64, 64}, 0, 0, cv::INTER_AREA);
    EXPECT_LE(cv::norm(got, expected, cv::NORM_INF), 2.0) << "level " << l;
  }
}

TEST(SynthesizePair, Deterministic) {
  DeformationSpec spec = testing::small_spec(9);
  spec.tear_count = 1;
  spec.tear_offset_px = 6;
  spec.color_jitter.gain = {1.05, 0.95, 1.0};
  const SyntheticPair a = synthesize_pair(small_tissue(), spec);
  const SyntheticPair b = synthesize_pair(small_tissue(), spec);
  EXPECT_EQ(cv::norm(a.target.level(0), b.target.level(0), cv::NORM_INF), 0.0);
}

TEST(GroundTruth, InverseRoundTrip) {
  DeformationSpec spec = testing::small_spec(2);
  spec.bump_amplitude_px = 8;
  spec.bump_sigma_px = 100;  // amplitude < sigma
  const GroundTruth truth = make_ground_truth(spec, {1024, 1024});
  for (int y = 100; y < 924; y += 23)
    for (int x = 100; x < 924; x += 29) {
      const Point p{double(x), double(y)};
      EXPECT_LT(distance(truth.inverse(truth(p)), p), 0.5);
    }
}

TEST(DeformationSpec, JsonRoundTrip) {
  const DeformationSpec spec = random_deformation_spec(CorpusOptions{}, 42);
  const nlohmann::json j = spec;
  const DeformationSpec back = j.get<DeformationSpec>();
  EXPECT_EQ(nlohmann::json(back), j);
  EXPECT_EQ(back.global_affine, spec.global_affine);
  EXPECT_EQ(back.seed, spec.seed);
}

TEST(RandomDeformationSpec, DeterministicAndBounded) {
  CorpusOptions options;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const DeformationSpec a = random_deformation_spec(options, seed);
    const DeformationSpec b = random_deformation_spec(options, seed);
    EXPECT_EQ(nlohmann::json(a), nlohmann::json(b));
    EXPECT_LE(a.bump_amplitude_px, options.bump_amplitude_px);
    EXPECT_GE(a.bump_sigma_px, options.bump_sigma_min);
    EXPECT_LE(a.bump_sigma_px, options.bump_sigma_max);
  }
}

TEST(GenerateTissue, HasTissueAndBackground) {
  const cv::Mat& t = small_tissue();
  cv::Mat gray = to_gray(t);
  const double dark = cv::countNonZero(gray < 200) / double(gray.total());
  EXPECT_GT(dark, 0.1);
  EXPECT_LT(dark, 0.7);
}

}  // namespace
}  // namespace slidewarp

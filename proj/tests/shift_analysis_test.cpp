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

#include "slidewarp/shift_analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include <gtest/gtest.h>
#include <opencv2/imgproc.hpp>

#include "oracles.hpp"
#include "slidewarp/error.hpp"
#include "slidewarp/landmarking.hpp"
#include "slidewarp/pyramid.hpp"
#include "slidewarp/similarity.hpp"
#include "slidewarp/synth.hpp"
#include "test_support.hpp"

namespace slidewarp {
namespace {

cv::Mat solid(cv::Size size, int v) { return cv::Mat(size, CV_8UC3, cv::Scalar(v, v, v)); }

// scores[i] = {a_i, b_i}; 5 slides of equal size.
ScoreMatrix two_scanner_matrix(const std::vector<double>& a, const std::vector<double>& b) {
  ScoreMatrix m;
  m.scanners = {"A", "B"};
  m.slides = {"s0", "s1", "s2", "s3", "s4"};
  for (std::size_t i = 0; i < a.size(); ++i) {
    m.scores.push_back({a[i], b[i]});
    m.slide_of_patch.push_back(i * 5 / a.size());
    m.tissue_density.push_back(0.5);
  }
  return m;
}

TEST(PatchDensity, Examples) {
  EXPECT_EQ(patch_density(solid({32, 32}, 255)), 0.0);
  EXPECT_EQ(patch_density(solid({32, 32}, 20)), 1.0);
  cv::Mat half = solid({32, 32}, 250);
  half(cv::Rect(0, 0, 16, 32)).setTo(cv::Scalar(60, 30, 90));
  EXPECT_DOUBLE_EQ(patch_density(half), 0.5);
  // Direct pixel count against the Otsu split of a textured patch.
  cv::Mat g = testing::noise_texture({64, 64}, 3);
  cv::Mat rgb;
  cv::cvtColor(g, rgb, cv::COLOR_GRAY2RGB);
  const int t = oracle::otsu_brute_force(to_gray(rgb));
  EXPECT_DOUBLE_EQ(patch_density(rgb), cv::countNonZero(to_gray(rgb) < t) / 4096.0);
}

TEST(Scorers, BuiltinsAreDeterministic) {
  cv::Mat g = testing::noise_texture({64, 64}, 4);
  cv::Mat rgb;
  cv::cvtColor(g, rgb, cv::COLOR_GRAY2RGB);
  const auto density = density_scorer();
  EXPECT_EQ(*density->score(rgb), patch_density(rgb));
  EXPECT_TRUE(density->deterministic());
  const auto noise = seeded_noise_scorer(5, 0.1);
  const double s = *noise->score(rgb);
  EXPECT_EQ(*noise->score(rgb.clone()), s);
  EXPECT_GE(s, 0.0);
  EXPECT_LE(s, 1.0);
  EXPECT_NE(*seeded_noise_scorer(6, 0.1)->score(rgb), s);
  EXPECT_EQ(*seeded_noise_scorer(5, 0.0)->score(rgb), patch_density(rgb));
}

TEST(Scorers, CommandProtocol) {
  testing::TempDir dir("scorer");
  auto script = [&](const std::string& name, const std::string& body) {
    const auto path = dir / name;
    std::ofstream(path) << "#!/bin/sh\n" << body << "\n";
    std::filesystem::permissions(path, std::filesystem::perms::owner_all);
    return path.string();
  };
  const cv::Mat patch = solid({16, 16}, 100);
  // The PNG must exist while the command runs.
  EXPECT_EQ(*command_scorer(script("ok.sh", "test -f \"$1\" && echo 0.5"), dir.path())->score(patch), 0.5);
  EXPECT_FALSE(command_scorer(script("fail.sh", "echo 0.5; exit 1"), dir.path())->score(patch));
  EXPECT_FALSE(command_scorer(script("range.sh", "echo 1.5"), dir.path())->score(patch));
  EXPECT_FALSE(command_scorer(script("junk.sh", "echo hello"), dir.path())->score(patch));
  std::size_t pngs = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir.path())) pngs += e.path().extension() == ".png";
  EXPECT_EQ(pngs, 0u);
}

TEST(SampleTissuePoints, OnMaskAndDeterministic) {
  const PyramidalImage img = build_pyramid(testing::small_tissue(), 3);
  const auto a = sample_tissue_points(img, 100, 3);
  ASSERT_EQ(a.size(), 100u);
  EXPECT_EQ(a, sample_tissue_points(img, 100, 3));
  const TissueMask mask = tissue_mask(img);
  for (const auto& p : a) {
    const int x = static_cast<int>(std::lround((p.x + 0.5) / mask.scale_x - 0.5));
    const int y = static_cast<int>(std::lround((p.y + 0.5) / mask.scale_y - 0.5));
    EXPECT_EQ(mask.mask.at<std::uint8_t>(y, x), 255);
  }
}

TEST(SampleTissuePoints, SingleTissuePixel) {
  cv::Mat base = solid({64, 64}, 250);
  base.at<cv::Vec3b>(20, 33) = {40, 40, 40};
  const auto pts = sample_tissue_points(build_pyramid(base, 1), 1, 0, 64);
  ASSERT_EQ(pts.size(), 1u);
  EXPECT_EQ(pts[0], Point(33, 20));
}

TEST(ExtractAlignedPatches, IdentityGivesIdenticalPatches) {
  const PyramidalImage img = build_pyramid(testing::small_tissue(), 3);
  const WarpModel identity(AffineTransform2D(), {}, CorrectionMode::kNone);
  const auto pts = sample_tissue_points(img, 12, 1);
  const auto patches = extract_aligned_patches(img, {{&img, &identity}, {&img, &identity}}, pts, 128, 2);
  ASSERT_EQ(patches.size(), 12u);
  for (const auto& row : patches) {
    ASSERT_EQ(row.size(), 3u);
    EXPECT_EQ(row[0].size(), cv::Size(128, 128));
    EXPECT_EQ(cv::norm(row[0], row[1], cv::NORM_INF), 0.0);
    EXPECT_EQ(cv::norm(row[0], row[2], cv::NORM_INF), 0.0);
  }
}

TEST(ExtractAlignedPatches, SyntheticPairIsAligned) {
  DeformationSpec spec = testing::small_spec(3, 10.0);
  spec.bump_count = 0;  // the affine-only model is then exact
  const SyntheticPair pair = synthesize_pair(testing::small_tissue(), spec);
  const WarpModel model(pair.truth.affine(), {}, CorrectionMode::kNone);
  const auto pts = sample_tissue_points(pair.source, 10, 2);
  const auto patches = extract_aligned_patches(pair.source, {{&pair.target, &model}}, pts, 256);
  for (const auto& row : patches) {
    const cv::Point shift = phase_cross_correlation(to_gray(row[0]), to_gray(row[1]));
    EXPECT_LE(std::hypot(shift.x, shift.y), 2.0);
  }
}

TEST(AgreementTables, IdenticalAndComplementaryScores) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<double> a(40);
  for (auto& v : a) v = u(rng);
  const ShiftReport same = agreement_tables(two_scanner_matrix(a, a));
  ASSERT_EQ(same.pairs.size(), 1u);
  EXPECT_NEAR(*same.pairs[0].pearson_r_patch, 1.0, 1e-12);
  EXPECT_EQ(*same.pairs[0].mad_patch, 0.0);
  EXPECT_EQ(*same.pairs[0].mad_slide, 0.0);
  std::vector<double> b(a.size());
  std::transform(a.begin(), a.end(), b.begin(), [](double v) { return 1.0 - v; });
  const ShiftReport opposite = agreement_tables(two_scanner_matrix(a, b));
  EXPECT_NEAR(*opposite.pairs[0].pearson_r_patch, -1.0, 1e-12);
}

TEST(AgreementTables, PermutationAndPairOrderInvariant) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g(0.5, 0.2);
  std::vector<double> a(50), b(50);
  for (int i = 0; i < 50; ++i) a[i] = g(rng), b[i] = a[i] + 0.3 * g(rng);
  const ScoreMatrix m = two_scanner_matrix(a, b);
  const ShiftReport base = agreement_tables(m);

  ScoreMatrix shuffled = m;
  std::vector<std::size_t> order(50);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t i = 0; i < 50; ++i) {
    shuffled.scores[i] = m.scores[order[i]];
    shuffled.slide_of_patch[i] = m.slide_of_patch[order[i]];
  }
  const ShiftReport p = agreement_tables(shuffled);
  EXPECT_NEAR(*p.pairs[0].pearson_r_patch, *base.pairs[0].pearson_r_patch, 1e-12);
  EXPECT_NEAR(*p.pairs[0].mad_patch, *base.pairs[0].mad_patch, 1e-12);
  EXPECT_NEAR(*p.pairs[0].mad_slide, *base.pairs[0].mad_slide, 1e-12);

  ScoreMatrix swapped = m;
  swapped.scanners = {"B", "A"};
  for (auto& row : swapped.scores) std::swap(row[0], row[1]);
  const ShiftReport s = agreement_tables(swapped);
  EXPECT_NEAR(*s.pairs[0].pearson_r_patch, *base.pairs[0].pearson_r_patch, 1e-12);
  EXPECT_NEAR(*s.pairs[0].pearson_r_slide, *base.pairs[0].pearson_r_slide, 1e-12);
  EXPECT_NEAR(*s.pairs[0].mad_slide, *base.pairs[0].mad_slide, 1e-12);
}

TEST(AgreementTables, PearsonMatchesOracle) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> a(100), b(100);
  for (int i = 0; i < 100; ++i) a[i] = g(rng), b[i] = 0.5 * a[i] + g(rng);
  const ShiftReport r = agreement_tables(two_scanner_matrix(a, b));
  EXPECT_NEAR(*r.pairs[0].pearson_r_patch, *oracle::pearson_two_pass(a, b), 1e-12);
}

TEST(AgreementTables, UndefinedAndMissing) {
  const std::vector<double> flat(20, 0.5);
  std::vector<double> other(20);
  for (int i = 0; i < 20; ++i) other[i] = i / 20.0;
  ScoreMatrix m = two_scanner_matrix(flat, other);
  m.scores[3][1].reset();
  const ShiftReport r = agreement_tables(m);
  EXPECT_FALSE(r.pairs[0].pearson_r_patch.has_value());
  EXPECT_EQ(r.pairs[0].n_patches, 19u);
  EXPECT_TRUE(r.pairs[0].mad_patch.has_value());
  const std::string csv = shift_csv(r);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), kShiftCsvHeader);
  EXPECT_NE(csv.find("undefined"), std::string::npos);
  EXPECT_THROW(agreement_tables(two_scanner_matrix({0.1}, {0.2})), Error);
}

TEST(AgreementTables, SlideLevelBeatsPatchLevelUnderNoise) {
  int wins = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.2, 0.8);
    std::normal_distribution<double> g(0.0, 0.1);
    std::vector<double> a(100), b(100);
    for (int i = 0; i < 100; ++i) {
      a[i] = u(rng);
      b[i] = a[i] + g(rng);
    }
    const ShiftReport r = agreement_tables(two_scanner_matrix(a, b));
    if (*r.pairs[0].mad_slide < *r.pairs[0].mad_patch) ++wins;
  }
  EXPECT_GE(wins, 95);
}

ShiftReport density_report(const std::vector<double>& density, const std::vector<std::array<double, 3>>& scores) {
  ScoreMatrix m;
  m.scanners = {"A", "B", "C"};
  m.slides = {"s"};
  for (std::size_t i = 0; i < density.size(); ++i) {
    m.scores.push_back({scores[i][0], scores[i][1], scores[i][2]});
    m.slide_of_patch.push_back(0);
  }
  m.tissue_density = density;
  return agreement_tables(m);
}

TEST(DiscrepancyDensity, UndefinedForFlatDensity) {
  const std::vector<double> density(10, 0.4);
  std::vector<std::array<double, 3>> scores;
  for (int i = 0; i < 10; ++i) scores.push_back({0.1 * i, 0.05 * i, 0.5});
  EXPECT_FALSE(discrepancy_density_correlation(density_report(density, scores)).has_value());
}

TEST(DiscrepancyDensity, CoupledNoiseCorrelatesIndependentDoesNot) {
  std::vector<double> coupled_r, independent_r;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0, 1);
    std::normal_distribution<double> g(0, 1);
    std::vector<double> density(500);
    std::vector<std::array<double, 3>> coupled, independent;
    for (auto& d : density) {
      d = u(rng);
      const double base = u(rng);
      // Scanner gains on dense tissue: -0.2, 0, +0.2.
      coupled.push_back({base - 0.2 * d + 0.01 * g(rng), base + 0.01 * g(rng), base + 0.2 * d + 0.01 * g(rng)});
      independent.push_back({base + 0.1 * g(rng), base + 0.1 * g(rng), base + 0.1 * g(rng)});
    }
    coupled_r.push_back(*discrepancy_density_correlation(density_report(density, coupled)));
    independent_r.push_back(*discrepancy_density_correlation(density_report(density, independent)));
  }
  for (double r : coupled_r) EXPECT_GT(r, 0.9);
  for (double r : independent_r) EXPECT_LT(std::abs(r), 0.2);
}

TEST(ShiftJson, HasTablesAndMatrix) {
  std::vector<double> a{0.1, 0.4, 0.6, 0.9, 0.3}, b{0.2, 0.4, 0.5, 0.8, 0.35};
  const std::string json = shift_json(agreement_tables(two_scanner_matrix(a, b)));
  for (const char* key : {"\"pairs\"", "\"patches\"", "\"slide_medians\"", "\"discrepancy_density_r\""}) {
    EXPECT_NE(json.find(key), std::string::npos) << key;
  }
}

}  // namespace
}  // namespace slidewarp

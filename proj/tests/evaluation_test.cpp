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

#include "slidewarp/evaluation.hpp"

#include <cmath>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "slidewarp/error.hpp"
#include "slidewarp/landmarking.hpp"
#include "slidewarp/pipeline.hpp"
#include "slidewarp/synth.hpp"
#include "test_support.hpp"

namespace slidewarp {
namespace {

class TrePairTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    DeformationSpec spec;
    spec.global_affine = AffineTransform2D::translation(23, -17);
    spec.levels = 3;
    pair_ = std::make_unique<SyntheticPair>(synthesize_pair(testing::small_tissue(), spec));
    points_ = evaluation_points(tissue_mask(pair_->source), 30, 1, {});
  }
  static void TearDownTestSuite() { pair_.reset(); }
  static std::unique_ptr<SyntheticPair> pair_;
  static std::vector<Point> points_;
};
std::unique_ptr<SyntheticPair> TrePairTest::pair_;
std::vector<Point> TrePairTest::points_;

TEST_F(TrePairTest, ExactModelHasZeroError) {
  const WarpModel model(pair_->truth.affine(), {}, CorrectionMode::kNone);
  TreOptions opt;
  opt.truth = [&](Point p) { return pair_->truth(p); };
  const TreReport r = measure_tre(pair_->source, pair_->target, model, points_, opt);
  EXPECT_EQ(r.tre.median_px, 0.0);
  EXPECT_EQ(r.tre.p95_px, 0.0);
  ASSERT_TRUE(r.truth.has_value());
  EXPECT_EQ(r.truth->p95_px, 0.0);
}

TEST_F(TrePairTest, ThreeFourOffsetGivesFive) {
  const WarpModel model(AffineTransform2D::translation(3, 4).compose(pair_->truth.affine()), {}, CorrectionMode::kNone);
  const TreReport r = measure_tre(pair_->source, pair_->target, model, points_);
  ASSERT_GT(r.tre.n, 0u);
  for (const auto& p : r.points) {
    if (p.flat) continue;
    EXPECT_EQ(p.tre_px, 5.0) << p.source;
  }
}

TEST_F(TrePairTest, IdentityOnIdenticalSlidesIsZeroEverywhere) {
  const WarpModel identity(AffineTransform2D(), {}, CorrectionMode::kNone);
  TreOptions opt;
  opt.threads = 2;
  const TreReport r = measure_tre(pair_->source, pair_->source, identity, points_, opt);
  for (const auto& p : r.points) {
    if (!p.flat) {
      EXPECT_EQ(p.tre_px, 0.0);
    }
  }
  EXPECT_EQ(r.tre.n + r.skipped, points_.size());
}

TEST_F(TrePairTest, OffSlidePointsAreFlat) {
  const WarpModel identity(AffineTransform2D(), {}, CorrectionMode::kNone);
  EXPECT_THROW(measure_tre(pair_->source, pair_->source, identity, {{-5000, -5000}}), Error);
}

TEST(Summarize, MatchesOracle) {
  std::vector<double> v;
  for (int i = 0; i < 37; ++i) v.push_back(std::fmod(i * 7.3, 11.0));
  const Summary s = summarize(v);
  EXPECT_EQ(s.median_px, oracle::percentile_permille(v, 500));
  EXPECT_EQ(s.p95_px, oracle::percentile_permille(v, 950));
  EXPECT_EQ(s.n, v.size());
}

SweepConfig tiny_sweep() {
  SweepConfig c;
  c.corpus.size = 1024;
  c.corpus.levels = 3;
  c.corpus.bump_sigma_min = 100;
  c.corpus.bump_sigma_max = 160;
  c.corpus.max_translation_px = 30;
  c.corpus.tear_probability = 0.0;
  c.landmark_counts = {12};
  c.seeds = {1};
  c.eval_points = 20;
  return c;
}

std::string strip_time(const std::string& csv) {
  std::istringstream in(csv);
  std::ostringstream out;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    f.erase(f.begin() + 6);
    for (std::size_t i = 0; i < f.size(); ++i) out << (i ? "," : "") << f[i];
    out << "\n";
  }
  return out.str();
}

TEST(Sweep, DeterministicAndResumable) {
  testing::TempDir dir("sweep");
  SweepConfig config = tiny_sweep();
  const SweepResult first = run_sweep(config);
  const std::string csv = sweep_csv(first);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), kSweepCsvHeader);
  EXPECT_EQ(first.cells.size(), 3u);
  EXPECT_EQ(first.aggregates.size(), 3u);
  ASSERT_EQ(first.models.size(), 1u);
  EXPECT_EQ(first.models[0].seed, 1u);
  EXPECT_EQ(first.models[0].n_landmarks, 12u);
  for (const auto& row : first.cells) EXPECT_EQ(row.failed, 0);

  EXPECT_EQ(strip_time(sweep_csv(run_sweep(config))), strip_time(csv));

  config.cell_dir = dir.path();
  const std::string stored = sweep_csv(run_sweep(config));
  EXPECT_TRUE(std::filesystem::exists(dir / "cell_s1_n12.json"));
  // A rerun reads the marker, so even the timings repeat.
  EXPECT_EQ(sweep_csv(run_sweep(config)), stored);
  EXPECT_EQ(strip_time(stored), strip_time(csv));
}

}  // namespace
}  // namespace slidewarp

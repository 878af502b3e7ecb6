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

#include "slidewarp/cli.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "slidewarp/pyramid.hpp"
#include "slidewarp/synth.hpp"
#include "slidewarp/warp_model.hpp"
#include "test_support.hpp"

namespace slidewarp {
namespace {

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), {"slidewarp", "--log-level", "warn"});
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string strip_created_at(std::string json) {
  auto j = nlohmann::json::parse(json);
  j.erase("created_at");
  return j.dump();
}

std::vector<std::vector<double>> read_csv(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);  // header
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    // Non-numeric cells (names, "undefined") read as NaN.
    while (std::getline(ss, cell, ',')) {
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      row.push_back(end != cell.c_str() && *end == '\0' ? v : NAN);
    }
    rows.push_back(row);
  }
  return rows;
}

// One synthetic pair and model shared by the whole suite.
class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = std::make_unique<testing::TempDir>("cli");
    write_png_rgb(testing::small_tissue(), *dir_ / "tissue.png");
    const nlohmann::json spec = testing::small_spec(8);
    std::ofstream(*dir_ / "spec.json") << spec.dump();
    ASSERT_EQ(cli({"synth", "--base", (*dir_ / "tissue.png").string(), "--spec", (*dir_ / "spec.json").string(),
                   "--out-src", (*dir_ / "src").string(), "--out-tgt", (*dir_ / "tgt").string(), "--out-truth",
                   (*dir_ / "truth.csv").string()}),
              0);
    ASSERT_EQ(cli({"--seed", "4", "register", "--source", (*dir_ / "src").string(), "--target",
                   (*dir_ / "tgt").string(), "--out", (*dir_ / "model.json").string()}),
              0);
  }
  static void TearDownTestSuite() { dir_.reset(); }
  static std::filesystem::path path(const std::string& name) { return *dir_ / name; }
  static std::unique_ptr<testing::TempDir> dir_;
};
std::unique_ptr<testing::TempDir> CliTest::dir_;

TEST(Cli, UsageErrors) {
  EXPECT_EQ(cli({}), kExitInput);
  EXPECT_EQ(cli({"frobnicate"}), kExitInput);
  EXPECT_EQ(cli({"register", "--source", "x"}), kExitInput);
  EXPECT_EQ(cli({"--help"}), kExitOk);
}

TEST(Cli, BuildPyramid) {
  testing::TempDir dir("cli_pyr");
  cv::Mat img(512, 1024, CV_8UC3);
  cv::randu(img, 0, 256);
  write_png_rgb(img, dir / "in.png");
  ASSERT_EQ(cli({"build-pyramid", "--input", (dir / "in.png").string(), "--levels", "3", "--out",
                 (dir / "pyr").string()}),
            0);
  const PyramidalImage back = load_pyramid(dir / "pyr");
  ASSERT_EQ(back.level_count(), 3);
  const PyramidalImage direct = build_pyramid(img, 3);
  for (int l = 0; l < 3; ++l) EXPECT_EQ(cv::norm(back.level(l), direct.level(l), cv::NORM_INF), 0.0);

  write_png_rgb(cv::Mat(64, 64, CV_8UC3, cv::Scalar(9, 9, 9)), dir / "small.png");
  EXPECT_EQ(cli({"build-pyramid", "--input", (dir / "small.png").string(), "--levels", "20", "--out",
                 (dir / "bad").string()}),
            kExitInput);
  EXPECT_EQ(cli({"build-pyramid", "--input", (dir / "missing.png").string(), "--out", (dir / "bad").string()}),
            kExitIo);
}

TEST_F(CliTest, SynthIdentityAndTranslation) {
  testing::TempDir dir("cli_synth");
  DeformationSpec spec;
  spec.levels = 2;
  std::ofstream(dir / "id.json") << nlohmann::json(spec).dump();
  ASSERT_EQ(cli({"synth", "--base", path("tissue.png").string(), "--spec", (dir / "id.json").string(), "--out-src",
                 (dir / "s").string(), "--out-tgt", (dir / "t").string()}),
            0);
  EXPECT_EQ(slurp(dir / "s" / "level_0.png"), slurp(dir / "t" / "level_0.png"));

  spec.global_affine = AffineTransform2D::translation(12, -7);
  std::ofstream(dir / "tr.json") << nlohmann::json(spec).dump();
  for (const char* run : {"a", "b"}) {
    ASSERT_EQ(cli({"synth", "--base", path("tissue.png").string(), "--spec", (dir / "tr.json").string(), "--out-src",
                   (dir / (std::string("s") + run)).string(), "--out-tgt", (dir / (std::string("t") + run)).string(),
                   "--out-truth", (dir / (std::string(run) + ".csv")).string()}),
              0);
  }
  EXPECT_EQ(slurp(dir / "ta" / "level_0.png"), slurp(dir / "tb" / "level_0.png"));
  EXPECT_EQ(slurp(dir / "a.csv"), slurp(dir / "b.csv"));
  const auto rows = read_csv(dir / "a.csv");
  ASSERT_EQ(rows.size(), 32u * 32u);
  for (const auto& r : rows) {
    EXPECT_EQ(r[2] - r[0], 12.0);
    EXPECT_EQ(r[3] - r[1], -7.0);
  }
}

TEST_F(CliTest, RegisterProducesQcPassingModel) {
  const WarpModel model = load_model(path("model.json"));
  EXPECT_GE(model.landmarks().size(), 27u);
  EXPECT_EQ(model.source_id, "src");
  EXPECT_EQ(model.target_id, "tgt");
  EXPECT_FALSE(model.created_at.empty());
}

TEST_F(CliTest, RegisterIsReproducible) {
  ASSERT_EQ(cli({"--seed", "4", "--threads", "2", "register", "--source", path("src").string(), "--target",
                 path("tgt").string(), "--out", path("model2.json").string()}),
            0);
  EXPECT_EQ(strip_created_at(slurp(path("model2.json"))), strip_created_at(slurp(path("model.json"))));
}

TEST_F(CliTest, RegisterErrors) {
  testing::TempDir dir("cli_reg");
  save_pyramid(build_pyramid(cv::Mat(1024, 1024, CV_8UC3, cv::Scalar(250, 250, 250)), 3), dir / "blank");
  EXPECT_EQ(cli({"register", "--source", path("src").string(), "--target", (dir / "blank").string(), "--out",
                 (dir / "m.json").string()}),
            kExitInsufficientFeatures);
  EXPECT_EQ(cli({"register", "--source", path("src").string(), "--target", path("tgt").string(), "--landmarks", "3",
                 "--out", (dir / "m3.json").string()}),
            0);
  EXPECT_GE(load_model(dir / "m3.json").landmarks().size(), 3u);
  EXPECT_EQ(cli({"register", "--source", path("src").string(), "--target", path("tgt").string(), "--nmi-threshold",
                 "0.99", "--out", (dir / "m4.json").string()}),
            kExitTooFewLandmarks);
}

TEST_F(CliTest, WarpPointsAndRegion) {
  const WarpModel model = load_model(path("model.json"));
  {
    std::ofstream out(path("pts.csv"));
    out << "x,y\n";
    for (const auto& lm : model.landmarks()) out << lm.source_pt.x << "," << lm.source_pt.y << "\n";
  }
  ASSERT_EQ(cli({"warp", "--model", path("model.json").string(), "--points", path("pts.csv").string(), "--out",
                 path("warped.csv").string()}),
            0);
  const auto rows = read_csv(path("warped.csv"));
  ASSERT_EQ(rows.size(), model.landmarks().size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    // Source points went through a decimal round trip, so allow for that.
    EXPECT_NEAR(rows[i][2], model.landmarks()[i].target_pt.x, 1e-6);
    EXPECT_NEAR(rows[i][3], model.landmarks()[i].target_pt.y, 1e-6);
  }

  save_model(WarpModel(AffineTransform2D(), {}, CorrectionMode::kNone), path("identity.json"));
  ASSERT_EQ(cli({"warp", "--model", path("identity.json").string(), "--region", "300,400,64,32", "--target",
                 path("src").string(), "--out", path("crop.png").string()}),
            0);
  const cv::Mat crop = read_png_rgb(path("crop.png"));
  const cv::Mat expected = load_pyramid(path("src")).level(0)(cv::Rect(300, 400, 64, 32));
  EXPECT_EQ(cv::norm(crop, expected, cv::NORM_INF), 0.0);
}

TEST_F(CliTest, EvalReportsBothMetrics) {
  ASSERT_EQ(cli({"eval", "--model", path("model.json").string(), "--source", path("src").string(), "--target",
                 path("tgt").string(), "--truth", path("truth.csv").string(), "--points", "30", "--out",
                 path("eval.json").string()}),
            0);
  const auto j = nlohmann::json::parse(slurp(path("eval.json")));
  const double tre = j["tre"]["median_px"];
  const double truth = j["truth_error"]["median_px"];
  EXPECT_LE(std::abs(tre - truth), 1.0);
  EXPECT_EQ(cli({"eval", "--model", path("nope.json").string(), "--source", path("src").string(), "--target",
                 path("tgt").string()}),
            kExitInput);
}

TEST_F(CliTest, EvalExactModelIsZero) {
  testing::TempDir dir("cli_eval");
  DeformationSpec spec;
  spec.global_affine = AffineTransform2D::translation(9, 14);
  spec.levels = 3;
  std::ofstream(dir / "spec.json") << nlohmann::json(spec).dump();
  ASSERT_EQ(cli({"synth", "--base", path("tissue.png").string(), "--spec", (dir / "spec.json").string(), "--out-src",
                 (dir / "s").string(), "--out-tgt", (dir / "t").string()}),
            0);
  save_model(WarpModel(spec.global_affine, {}, CorrectionMode::kNone), dir / "exact.json");
  ASSERT_EQ(cli({"eval", "--model", (dir / "exact.json").string(), "--source", (dir / "s").string(), "--target",
                 (dir / "t").string(), "--points", "20", "--out", (dir / "e.json").string()}),
            0);
  EXPECT_EQ(nlohmann::json::parse(slurp(dir / "e.json"))["tre"]["median_px"].get<double>(), 0.0);
}

TEST_F(CliTest, ShiftSelfComparison) {
  testing::TempDir dir("cli_shift");
  save_model(WarpModel(AffineTransform2D(), {}, CorrectionMode::kNone), dir / "id.json");
  ASSERT_EQ(cli({"shift", "--reference", path("src").string(), "--scans", path("src").string(), path("src").string(),
                 "--models", (dir / "id.json").string(), (dir / "id.json").string(), "--scorer", "builtin:density",
                 "--points", "30", "--size", "128", "--out", (dir / "self").string()}),
            0);
  const auto rows = read_csv(dir / "self.csv");
  ASSERT_EQ(rows.size(), 3u);
  for (const auto& r : rows) {
    EXPECT_DOUBLE_EQ(r[2], 1.0);
    EXPECT_EQ(r[4], 0.0);
    EXPECT_EQ(r[5], 0.0);
  }

  const auto script = dir / "half.sh";
  std::ofstream(script) << "#!/bin/sh\necho 0.5\n";
  std::filesystem::permissions(script, std::filesystem::perms::owner_all);
  ASSERT_EQ(cli({"shift", "--reference", path("src").string(), "--scans", path("tgt").string(), "--models",
                 path("model.json").string(), "--scorer", "cmd:" + script.string(), "--scratch-dir",
                 (dir / "scratch").string(), "--points", "10", "--size", "64", "--out", (dir / "const").string()}),
            0);
  const std::string csv = slurp(dir / "const.csv");
  EXPECT_NE(csv.find("undefined"), std::string::npos);
  const auto crow = read_csv(dir / "const.csv");
  ASSERT_EQ(crow.size(), 1u);
  EXPECT_TRUE(std::isnan(crow[0][2]));
  EXPECT_EQ(crow[0][4], 0.0);
}

TEST_F(CliTest, ResidualMapGrayForZeroResiduals) {
  save_model(WarpModel(AffineTransform2D(), {}, CorrectionMode::kNone), path("zero.json"));
  ASSERT_EQ(cli({"residual-map", "--model", path("zero.json").string(), "--source", path("src").string(), "--out",
                 path("zero.png").string(), "--max-dim", "256"}),
            0);
  const cv::Mat img = read_png_rgb(path("zero.png"));
  EXPECT_EQ(img.size(), cv::Size(256, 256));
  std::vector<cv::Mat> ch;
  cv::split(img, ch);
  EXPECT_EQ(cv::norm(ch[0], ch[1], cv::NORM_INF), 0.0);
  EXPECT_EQ(cv::norm(ch[1], ch[2], cv::NORM_INF), 0.0);
  ASSERT_EQ(cli({"residual-map", "--model", path("model.json").string(), "--source", path("src").string(), "--out",
                 path("res.png").string(), "--legend"}),
            0);
}

TEST(CliSweep, ResumableAndDeterministic) {
  testing::TempDir dir("cli_sweep");
  nlohmann::json corpus = CorpusOptions{};
  corpus["size"] = 1024;
  corpus["levels"] = 3;
  corpus["tear_probability"] = 0.0;
  std::ofstream(dir / "corpus.json") << corpus.dump();
  auto run = [&](const std::string& out, const std::string& cells) {
    return cli({"--seed", "2", "sweep", "--corpus", (dir / "corpus.json").string(), "--landmark-counts", "10",
                "--seeds", "1", "--eval-points", "15", "--cell-dir", (dir / cells).string(), "--out",
                (dir / out).string()});
  };
  ASSERT_EQ(run("a.csv", "cells"), 0);
  EXPECT_TRUE(std::filesystem::exists(dir / "cells" / "cell_s2_n10.json"));
  ASSERT_EQ(run("b.csv", "cells"), 0);
  EXPECT_EQ(slurp(dir / "a.csv"), slurp(dir / "b.csv"));
  const auto rows = read_csv(dir / "a.csv");
  EXPECT_EQ(rows.size(), 6u);  // 3 cells + 3 aggregates
}

}  // namespace
}  // namespace slidewarp

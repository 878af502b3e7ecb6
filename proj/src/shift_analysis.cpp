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

#include <sys/wait.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>
#include <opencv2/core.hpp>

#include "slidewarp/error.hpp"
#include "slidewarp/landmarking.hpp"
#include "slidewarp/parallel.hpp"
#include "slidewarp/stats.hpp"

namespace slidewarp {

namespace {

std::uint64_t fnv1a(const cv::Mat& m) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&](std::uint8_t b) {
    h ^= b;
    h *= 0x100000001b3ull;
  };
  for (int y = 0; y < m.rows; ++y) {
    const auto* row = m.ptr<std::uint8_t>(y);
    for (std::size_t i = 0; i < m.cols * m.elemSize(); ++i) mix(row[i]);
  }
  return h;
}

class DensityScorer final : public PatchScorer {
 public:
  std::optional<double> score(const cv::Mat& rgb) const override { return patch_density(rgb); }
  std::string name() const override { return "density"; }
  bool deterministic() const override { return true; }
};

class SeededNoiseScorer final : public PatchScorer {
 public:
  SeededNoiseScorer(std::uint64_t seed, double sigma) : seed_(seed), sigma_(sigma) {}

  std::optional<double> score(const cv::Mat& rgb) const override {
    std::mt19937_64 rng(seed_ ^ fnv1a(rgb));
    std::normal_distribution<double> noise(0.0, sigma_);
    return std::clamp(patch_density(rgb) + noise(rng), 0.0, 1.0);
  }
  std::string name() const override { return "noise"; }
  bool deterministic() const override { return true; }

 private:
  std::uint64_t seed_;
  double sigma_;
};

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) out += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return out + "'";
}

class CommandScorer final : public PatchScorer {
 public:
  CommandScorer(std::string command, std::filesystem::path dir) : command_(std::move(command)), dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
  }

  std::optional<double> score(const cv::Mat& rgb) const override {
    const auto file = dir_ / ("patch_" + std::to_string(counter_.fetch_add(1)) + ".png");
    write_png_rgb(rgb, file);
    const std::string cmd = command_ + " " + shell_quote(file.string());
    std::string output;
    int status = -1;
    if (FILE* pipe = popen(cmd.c_str(), "r")) {
      char buf[256];
      while (std::fgets(buf, sizeof(buf), pipe)) output += buf;
      status = pclose(pipe);
    }
    std::error_code ignored;
    std::filesystem::remove(file, ignored);
    if (status == -1 || !WIFEXITED(status) || WEXITSTATUS(status) != 0) return std::nullopt;
    std::istringstream in(output);
    double v = 0.0;
    std::string rest;
    if (!(in >> v) || (in >> rest) || !std::isfinite(v) || v < 0.0 || v > 1.0) return std::nullopt;
    return v;
  }
  std::string name() const override { return "cmd:" + command_; }
  bool deterministic() const override { return false; }

 private:
  std::string command_;
  std::filesystem::path dir_;
  mutable std::atomic<std::uint64_t> counter_{0};
};

nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json("undefined");
}

std::string optional_csv(const std::optional<double>& v) {
  if (!v) return "undefined";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", *v);
  return buf;
}

}  // namespace

double patch_density(const cv::Mat& rgb) {
  const cv::Mat gray = to_gray(rgb);
  if (gray.empty()) return 0.0;
  try {
    const OtsuResult otsu = otsu_threshold(gray);
    return static_cast<double>(cv::countNonZero(otsu.mask)) / static_cast<double>(gray.total());
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kDegenerateHistogram) throw;
    return gray.at<std::uint8_t>(0, 0) < 128 ? 1.0 : 0.0;
  }
}

std::unique_ptr<PatchScorer> density_scorer() { return std::make_unique<DensityScorer>(); }

std::unique_ptr<PatchScorer> seeded_noise_scorer(std::uint64_t seed, double sigma) {
  if (!(sigma >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "noise sigma must be >= 0");
  return std::make_unique<SeededNoiseScorer>(seed, sigma);
}

std::unique_ptr<PatchScorer> command_scorer(std::string command, std::filesystem::path scratch_dir) {
  if (command.empty()) throw Error(ErrorCode::kInvalidArgument, "empty scorer command");
  return std::make_unique<CommandScorer>(std::move(command), std::move(scratch_dir));
}

std::vector<Point> sample_tissue_points(const PyramidalImage& reference, std::size_t n, std::uint64_t seed,
                                        int mask_max_dim) {
  return sample_tissue_pixels(tissue_mask(reference, mask_max_dim), n, seed);
}

cv::Mat extract_warped_patch(const PyramidalImage& image, const WarpModel& model, Point center, cv::Size size) {
  const WarpedRegion w = warp_region(model, center, size);
  const auto& m = model.affine().coefficients();
  const Point q = w.region.center;
  const double cx = (size.width - 1) / 2.0;
  const double cy = (size.height - 1) / 2.0;
  const AffineTransform2D map({m[0], m[1], q.x - m[0] * cx - m[1] * cy, m[3], m[4], q.y - m[3] * cx - m[4] * cy});
  return sample_rgb_patch(image.level(0), map, size);
}

std::vector<std::vector<cv::Mat>> extract_aligned_patches(const PyramidalImage& reference,
                                                          const std::vector<Scan>& others,
                                                          const std::vector<Point>& points, int size,
                                                          int threads) {
  if (size < 1) throw Error(ErrorCode::kInvalidArgument, "patch size must be positive");
  for (const Scan& s : others) {
    if (!s.image || !s.model) throw Error(ErrorCode::kInvalidArgument, "scan without image or model");
  }
  const cv::Size dims(size, size);
  const double c = (size - 1) / 2.0;
  std::vector<std::vector<cv::Mat>> out(points.size());
  parallel_for(points.size(), threads, [&](std::size_t i) {
    const Point p = points[i];
    out[i].reserve(others.size() + 1);
    out[i].push_back(sample_rgb_patch(reference.level(0), AffineTransform2D({1, 0, p.x - c, 0, 1, p.y - c}), dims));
    for (const Scan& s : others) out[i].push_back(extract_warped_patch(*s.image, *s.model, p, dims));
  });
  return out;
}

std::vector<std::vector<std::optional<double>>> score_patches(const std::vector<std::vector<cv::Mat>>& patches,
                                                              const PatchScorer& scorer, int threads) {
  std::vector<std::vector<std::optional<double>>> scores(patches.size());
  parallel_for(patches.size(), threads, [&](std::size_t i) {
    scores[i].reserve(patches[i].size());
    for (const cv::Mat& patch : patches[i]) scores[i].push_back(scorer.score(patch));
  });
  return scores;
}

double tissue_fraction(const cv::Mat& rgb, int threshold) {
  const cv::Mat gray = to_gray(rgb);
  if (gray.empty()) return 0.0;
  std::size_t dark = 0;
  for (int y = 0; y < gray.rows; ++y) {
    const auto* row = gray.ptr<std::uint8_t>(y);
    for (int x = 0; x < gray.cols; ++x) dark += row[x] < threshold;
  }
  return static_cast<double>(dark) / static_cast<double>(gray.total());
}

ShiftReport agreement_tables(ScoreMatrix matrix) {
  const std::size_t n_scanners = matrix.scanners.size();
  const std::size_t n_patches = matrix.scores.size();
  if (n_scanners < 2) throw Error(ErrorCode::kInvalidArgument, "agreement tables need at least 2 scanners");
  if (n_patches < 2) throw Error(ErrorCode::kInvalidArgument, "agreement tables need at least 2 patches");
  if (matrix.slide_of_patch.size() != n_patches) {
    throw Error(ErrorCode::kInvalidArgument, "slide_of_patch length differs from the patch count");
  }
  if (matrix.tissue_density.empty()) matrix.tissue_density.assign(n_patches, 0.0);
  if (matrix.tissue_density.size() != n_patches) {
    throw Error(ErrorCode::kInvalidArgument, "tissue_density length differs from the patch count");
  }
  for (std::size_t i = 0; i < n_patches; ++i) {
    if (matrix.scores[i].size() != n_scanners) throw Error(ErrorCode::kInvalidArgument, "ragged score matrix");
    if (matrix.slide_of_patch[i] >= matrix.slides.size()) {
      throw Error(ErrorCode::kInvalidArgument, "slide index out of range");
    }
  }

  ShiftReport report;
  const std::size_t n_slides = matrix.slides.size();
  report.slide_medians.assign(n_slides, std::vector<std::optional<double>>(n_scanners));
  for (std::size_t s = 0; s < n_slides; ++s) {
    for (std::size_t k = 0; k < n_scanners; ++k) {
      std::vector<double> values;
      for (std::size_t i = 0; i < n_patches; ++i) {
        if (matrix.slide_of_patch[i] == s && matrix.scores[i][k]) values.push_back(*matrix.scores[i][k]);
      }
      if (!values.empty()) report.slide_medians[s][k] = median(values);
    }
  }

  for (std::size_t a = 0; a < n_scanners; ++a) {
    for (std::size_t b = a + 1; b < n_scanners; ++b) {
      PairAgreement pair;
      pair.a = a;
      pair.b = b;
      std::vector<double> xa, xb;
      for (std::size_t i = 0; i < n_patches; ++i) {
        if (matrix.scores[i][a] && matrix.scores[i][b]) {
          xa.push_back(*matrix.scores[i][a]);
          xb.push_back(*matrix.scores[i][b]);
        }
      }
      pair.n_patches = xa.size();
      if (!xa.empty()) {
        pair.pearson_r_patch = pearson(xa, xb);
        pair.mad_patch = mean_absolute_difference(xa, xb);
      }
      std::vector<double> sa, sb;
      for (std::size_t s = 0; s < n_slides; ++s) {
        if (report.slide_medians[s][a] && report.slide_medians[s][b]) {
          sa.push_back(*report.slide_medians[s][a]);
          sb.push_back(*report.slide_medians[s][b]);
        }
      }
      pair.n_slides = sa.size();
      if (!sa.empty()) {
        pair.pearson_r_slide = pearson(sa, sb);
        pair.mad_slide = mean_absolute_difference(sa, sb);
      }
      report.pairs.push_back(pair);
    }
  }
  report.matrix = std::move(matrix);
  return report;
}

std::optional<double> discrepancy_density_correlation(const ShiftReport& report) {
  std::vector<double> range, density;
  const auto& m = report.matrix;
  for (std::size_t i = 0; i < m.scores.size(); ++i) {
    const auto& row = m.scores[i];
    if (std::any_of(row.begin(), row.end(), [](const auto& v) { return !v.has_value(); })) continue;
    const auto [lo, hi] = std::minmax_element(row.begin(), row.end(),
                                              [](const auto& x, const auto& y) { return *x < *y; });
    range.push_back(**hi - **lo);
    density.push_back(m.tissue_density[i]);
  }
  return pearson(range, density);
}

std::string shift_csv(const ShiftReport& report) {
  std::ostringstream out;
  out << kShiftCsvHeader << "\n";
  for (const auto& p : report.pairs) {
    out << report.matrix.scanners[p.a] << ',' << report.matrix.scanners[p.b] << ','
        << optional_csv(p.pearson_r_patch) << ',' << optional_csv(p.pearson_r_slide) << ','
        << optional_csv(p.mad_patch) << ',' << optional_csv(p.mad_slide) << ',' << p.n_patches << ','
        << p.n_slides << "\n";
  }
  return out.str();
}

std::string shift_json(const ShiftReport& report) {
  using ordered_json = nlohmann::ordered_json;
  const auto& m = report.matrix;
  ordered_json j;
  j["scanners"] = m.scanners;
  j["slides"] = m.slides;
  ordered_json pairs = ordered_json::array();
  for (const auto& p : report.pairs) {
    ordered_json e;
    e["scanner_a"] = m.scanners[p.a];
    e["scanner_b"] = m.scanners[p.b];
    e["pearson_r_patch"] = optional_json(p.pearson_r_patch);
    e["pearson_r_slide"] = optional_json(p.pearson_r_slide);
    e["mad_patch"] = optional_json(p.mad_patch);
    e["mad_slide"] = optional_json(p.mad_slide);
    e["n_patches"] = p.n_patches;
    e["n_slides"] = p.n_slides;
    pairs.push_back(std::move(e));
  }
  j["pairs"] = std::move(pairs);
  ordered_json patches = ordered_json::array();
  for (std::size_t i = 0; i < m.scores.size(); ++i) {
    ordered_json e;
    e["slide"] = m.slides[m.slide_of_patch[i]];
    e["tissue_density"] = m.tissue_density[i];
    ordered_json scores = ordered_json::array();
    for (const auto& v : m.scores[i]) scores.push_back(v ? ordered_json(*v) : ordered_json("missing"));
    e["scores"] = std::move(scores);
    patches.push_back(std::move(e));
  }
  j["patches"] = std::move(patches);
  ordered_json medians = ordered_json::array();
  for (const auto& row : report.slide_medians) {
    ordered_json r = ordered_json::array();
    for (const auto& v : row) r.push_back(v ? ordered_json(*v) : ordered_json("missing"));
    medians.push_back(std::move(r));
  }
  j["slide_medians"] = std::move(medians);
  const auto ddc = discrepancy_density_correlation(report);
  j["discrepancy_density_r"] = ddc ? ordered_json(*ddc) : ordered_json("undefined");
  return j.dump(2);
}

}  // namespace slidewarp

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

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>
#include <opencv2/imgproc.hpp>
#include <spdlog/spdlog.h>

#include "slidewarp/error.hpp"
#include "slidewarp/parallel.hpp"
#include "slidewarp/similarity.hpp"
#include "slidewarp/stats.hpp"

namespace slidewarp {

namespace {

using Clock = std::chrono::steady_clock;

AffineTransform2D level_transform(double f) {
  return AffineTransform2D({1.0 / f, 0.0, 0.5 / f - 0.5, 0.0, 1.0 / f, 0.5 / f - 0.5});
}

std::string format_double(double v, int precision) {
  if (!std::isfinite(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", precision, v);
  return buf;
}

// Target patch as the model's image of the source patch: every pixel is
// mapped through warp_point, so smooth deformations the model captures do
// not show up as shift.
cv::Mat sample_through_model(const cv::Mat& level, const WarpModel& model, const AffineTransform2D& to_level,
                             const AffineTransform2D& src_map, cv::Size size) {
  cv::Mat map(size, CV_32FC2);
  float min_x = std::numeric_limits<float>::max(), min_y = min_x;
  float max_x = std::numeric_limits<float>::lowest(), max_y = max_x;
  for (int v = 0; v < size.height; ++v) {
    auto* row = map.ptr<cv::Vec2f>(v);
    for (int u = 0; u < size.width; ++u) {
      const Point q = to_level.apply(model.warp_point(src_map.apply({double(u), double(v)})));
      row[u] = {static_cast<float>(q.x), static_cast<float>(q.y)};
      min_x = std::min(min_x, row[u][0]);
      max_x = std::max(max_x, row[u][0]);
      min_y = std::min(min_y, row[u][1]);
      max_y = std::max(max_y, row[u][1]);
    }
  }
  const cv::Rect bounds(0, 0, level.cols, level.rows);
  const cv::Rect roi = cv::Rect(cv::Point(int(std::floor(min_x)) - 1, int(std::floor(min_y)) - 1),
                                cv::Point(int(std::ceil(max_x)) + 2, int(std::ceil(max_y)) + 2)) &
                       bounds;
  cv::Mat out;
  if (roi.empty()) return cv::Mat(size, CV_32FC1, cv::Scalar(255.0));
  cv::Mat crop;
  level(roi).convertTo(crop, CV_32F);
  map -= cv::Scalar(roi.x, roi.y);
  cv::remap(crop, out, map, cv::noArray(), cv::INTER_LINEAR, cv::BORDER_CONSTANT, cv::Scalar(255.0));
  return out;
}

nlohmann::json row_to_json(const SweepRow& row) {
  return {{"seed", row.seed},           {"mode", std::string(to_string(row.mode))},
          {"n", row.n_landmarks},       {"median", row.median_px},
          {"p95", row.p95_px},          {"mean", row.mean_px},
          {"time_s", row.time_s},       {"failed", row.failed},
          {"truth_median", row.truth_median_px}, {"truth_p95", row.truth_p95_px},
          {"tre", row.tre_values},      {"truth", row.truth_values}};
}

SweepRow row_from_json(const nlohmann::json& j) {
  SweepRow row;
  row.seed = j.at("seed").get<std::string>();
  row.mode = correction_mode_from_string(j.at("mode").get<std::string>());
  row.n_landmarks = j.at("n").get<std::size_t>();
  auto number = [&](const char* key) {
    return j.at(key).is_null() ? std::nan("") : j.at(key).get<double>();
  };
  row.median_px = number("median");
  row.p95_px = number("p95");
  row.mean_px = number("mean");
  row.time_s = j.at("time_s").get<double>();
  row.failed = j.at("failed").get<int>();
  row.truth_median_px = number("truth_median");
  row.truth_p95_px = number("truth_p95");
  row.tre_values = j.at("tre").get<std::vector<double>>();
  row.truth_values = j.at("truth").get<std::vector<double>>();
  return row;
}

struct CellGroup {
  std::vector<SweepRow> rows;
  std::optional<WarpModel> model;
};

CellGroup run_group(const cv::Mat& base, const SweepConfig& config, std::uint64_t seed, std::size_t n,
                    const SyntheticPair& pair) {
  CellGroup group;
  auto failed_rows = [&] {
    for (CorrectionMode mode : config.modes) {
      SweepRow row;
      row.seed = std::to_string(seed);
      row.mode = mode;
      row.n_landmarks = n;
      row.median_px = row.p95_px = row.mean_px = std::nan("");
      row.truth_median_px = row.truth_p95_px = std::nan("");
      row.failed = 1;
      group.rows.push_back(row);
    }
  };
  (void)base;
  try {
    RegistrationOptions options;
    options.landmarks = n;
    options.ipr = config.ipr;
    options.seed = seed;
    options.threads = config.threads;
    options.mode = CorrectionMode::kLinear;
    const RegistrationResult reg = register_slides(pair.source, pair.target, options);
    std::vector<Point> exclude;
    for (const auto& lm : reg.model.landmarks()) exclude.push_back(lm.source_pt);
    for (const auto& lm : reg.model.rejected()) exclude.push_back(lm.source_pt);
    const std::vector<Point> points = evaluation_points(reg.mask, config.eval_points, seed, exclude);

    for (CorrectionMode mode : config.modes) {
      const WarpModel model = reg.model.with_mode(mode);
      TreOptions tre_options;
      tre_options.patch_px = config.patch_px;
      tre_options.threads = config.threads;
      tre_options.truth = [&](Point p) { return pair.truth(p); };
      const TreReport report = measure_tre(pair.source, pair.target, model, points, tre_options);
      SweepRow row;
      row.seed = std::to_string(seed);
      row.mode = mode;
      row.n_landmarks = n;
      row.median_px = report.tre.median_px;
      row.p95_px = report.tre.p95_px;
      row.mean_px = report.tre.mean_px;
      row.time_s = reg.times.total() + report.wall_time_s;
      row.truth_median_px = report.truth->median_px;
      row.truth_p95_px = report.truth->p95_px;
      for (const auto& pt : report.points) {
        if (pt.flat) continue;
        row.tre_values.push_back(pt.tre_px);
        row.truth_values.push_back(*pt.truth_error_px);
      }
      group.rows.push_back(std::move(row));
    }
    group.model = reg.model;
  } catch (const Error& e) {
    spdlog::warn("sweep cell seed={} n={} failed: {} ({})", seed, n, e.what(), to_string(e.code()));
    group.rows.clear();
    failed_rows();
  }
  return group;
}

}  // namespace

Summary summarize(std::span<const double> values) {
  Summary s;
  s.median_px = median(values);
  s.p95_px = percentile_nearest_rank(values, 0.95);
  s.mean_px = mean(values);
  s.n = values.size();
  return s;
}

TreReport measure_tre(const PyramidalImage& source, const PyramidalImage& target, const WarpModel& model,
                      const std::vector<Point>& eval_points, const TreOptions& options) {
  if (options.patch_px < 16) throw Error(ErrorCode::kInvalidArgument, "TRE patch must be >= 16 px");
  const auto start = Clock::now();
  const cv::Size size(options.patch_px, options.patch_px);
  const double c = (options.patch_px - 1) / 2.0;
  const double scale = std::sqrt(std::abs(model.affine().determinant()));
  const int lt = target.level_for_downsample(scale * (1.0 + 1e-9));
  const AffineTransform2D to_target_level = level_transform(target.downsample(lt));

  TreReport report;
  report.points.resize(eval_points.size());
  parallel_for(eval_points.size(), options.threads, [&](std::size_t i) {
    TrePoint& pt = report.points[i];
    pt.source = eval_points[i];
    pt.predicted = model.warp_point(pt.source);
    if (options.truth) pt.truth_error_px = distance(pt.predicted, options.truth(pt.source));

    const AffineTransform2D src_map({1.0, 0.0, pt.source.x - c, 0.0, 1.0, pt.source.y - c});
    const cv::Mat src = sample_gray_patch(source.gray_level(0), src_map, size);
    const cv::Mat tgt = sample_through_model(target.gray_level(lt), model, to_target_level, src_map, size);
    try {
      pt.shift = phase_cross_correlation(src, tgt);
      pt.tre_px = std::hypot(pt.shift.x, pt.shift.y);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kFlatPatch) throw;
      pt.flat = true;
    }
  });

  std::vector<double> tre, truth;
  for (const auto& pt : report.points) {
    if (pt.flat) {
      ++report.skipped;
      continue;
    }
    tre.push_back(pt.tre_px);
    if (pt.truth_error_px) truth.push_back(*pt.truth_error_px);
  }
  if (tre.empty()) throw Error(ErrorCode::kNoEvaluablePoints, "no evaluation point had texture on both slides");
  report.tre = summarize(tre);
  if (!truth.empty()) report.truth = summarize(truth);
  report.wall_time_s = std::chrono::duration<double>(Clock::now() - start).count();
  return report;
}

SweepResult run_sweep(const SweepConfig& config) {
  if (config.seeds.empty() || config.modes.empty() || config.landmark_counts.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "sweep needs at least one seed, mode and landmark count");
  }
  if (config.cell_dir) std::filesystem::create_directories(*config.cell_dir);

  SweepResult result;
  cv::Mat base;
  for (std::uint64_t seed : config.seeds) {
    std::optional<SyntheticPair> pair;
    for (std::size_t n : config.landmark_counts) {
      std::optional<std::filesystem::path> marker;
      if (config.cell_dir) {
        marker = *config.cell_dir / ("cell_s" + std::to_string(seed) + "_n" + std::to_string(n) + ".json");
        if (std::filesystem::exists(*marker)) {
          std::ifstream in(*marker);
          const nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
          if (!j.is_discarded() && j.contains("rows")) {
            spdlog::info("sweep cell seed={} n={} reused from {}", seed, n, marker->string());
            for (const auto& r : j["rows"]) result.cells.push_back(row_from_json(r));
            if (j.contains("model") && j["model"].is_string()) {
              result.models.push_back({seed, n, model_from_json(j["model"].get<std::string>())});
            }
            continue;
          }
        }
      }
      if (base.empty()) base = generate_tissue({config.corpus.size, config.corpus.size}, config.tissue_seed);
      if (!pair) pair = synthesize_pair(base, random_deformation_spec(config.corpus, seed));

      CellGroup group = run_group(base, config, seed, n, *pair);
      if (marker) {
        nlohmann::json j;
        j["rows"] = nlohmann::json::array();
        for (const auto& r : group.rows) j["rows"].push_back(row_to_json(r));
        if (group.model) j["model"] = model_to_json(*group.model);
        const auto tmp = marker->string() + ".tmp";
        {
          std::ofstream out(tmp);
          out << j.dump();
        }
        std::filesystem::rename(tmp, *marker);
      }
      for (auto& r : group.rows) result.cells.push_back(std::move(r));
      if (group.model) result.models.push_back({seed, n, std::move(*group.model)});
    }
  }

  for (std::size_t n : config.landmark_counts) {
    for (CorrectionMode mode : config.modes) {
      SweepRow agg;
      agg.seed = "all";
      agg.mode = mode;
      agg.n_landmarks = n;
      for (const auto& row : result.cells) {
        if (row.n_landmarks != n || row.mode != mode) continue;
        agg.failed += row.failed;
        agg.time_s += row.time_s;
        agg.tre_values.insert(agg.tre_values.end(), row.tre_values.begin(), row.tre_values.end());
        agg.truth_values.insert(agg.truth_values.end(), row.truth_values.begin(), row.truth_values.end());
      }
      if (agg.tre_values.empty()) {
        agg.median_px = agg.p95_px = agg.mean_px = std::nan("");
        agg.truth_median_px = agg.truth_p95_px = std::nan("");
      } else {
        const Summary s = summarize(agg.tre_values);
        const Summary t = summarize(agg.truth_values);
        agg.median_px = s.median_px;
        agg.p95_px = s.p95_px;
        agg.mean_px = s.mean_px;
        agg.truth_median_px = t.median_px;
        agg.truth_p95_px = t.p95_px;
      }
      result.aggregates.push_back(std::move(agg));
    }
  }
  return result;
}

std::string sweep_csv(const SweepResult& result) {
  std::ostringstream out;
  out << kSweepCsvHeader << "\n";
  auto emit = [&](const SweepRow& r) {
    out << r.seed << ',' << to_string(r.mode) << ',' << r.n_landmarks << ',' << format_double(r.median_px, 4)
        << ',' << format_double(r.p95_px, 4) << ',' << format_double(r.mean_px, 4) << ','
        << format_double(r.time_s, 3) << ',' << r.failed << "\n";
  };
  for (const auto& r : result.cells) emit(r);
  for (const auto& r : result.aggregates) emit(r);
  return out.str();
}

}  // namespace slidewarp

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

#include <unistd.h>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "slidewarp/evaluation.hpp"
#include "slidewarp/landmarking.hpp"
#include "slidewarp/parallel.hpp"
#include "slidewarp/pipeline.hpp"
#include "slidewarp/pyramid.hpp"
#include "slidewarp/shift_analysis.hpp"
#include "slidewarp/synth.hpp"
#include "slidewarp/warp_model.hpp"

namespace slidewarp {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

struct GlobalFlags {
  std::uint64_t seed = 0;
  int threads = 0;
  std::string log_level = "info";
  bool json_logs = false;
};

void configure_logging(const GlobalFlags& g) {
  auto logger = spdlog::stderr_logger_mt("slidewarp");
  if (g.json_logs) {
    logger->set_pattern(R"({"ts":"%Y-%m-%dT%H:%M:%S.%fZ","level":"%l","msg":"%v"})", spdlog::pattern_time_type::utc);
  } else {
    logger->set_pattern("[%H:%M:%S.%e] [%l] %v");
  }
  logger->set_level(spdlog::level::from_str(g.log_level));
  spdlog::set_default_logger(logger);
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string read_text(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error(ErrorCode::kParseError, "cannot read " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& file, const std::string& text) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  out << text;
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + file.string());
}

json read_json(const fs::path& file) {
  const json j = json::parse(read_text(file), nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::kParseError, "malformed JSON in " + file.string());
  return j;
}

std::string fmt_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string fmt_fixed(double v, int precision) {
  if (!std::isfinite(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", precision, v);
  return buf;
}

std::vector<double> split_numbers(const std::string& line) {
  std::vector<double> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    if (b == std::string::npos) throw Error(ErrorCode::kParseError, "empty CSV cell");
    double v = 0.0;
    const char* first = cell.data() + b;
    const char* last = cell.data() + e + 1;
    const auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc() || res.ptr != last) throw Error(ErrorCode::kParseError, "not a number: " + cell);
    out.push_back(v);
  }
  return out;
}

bool looks_like_header(const std::string& line) {
  return std::any_of(line.begin(), line.end(), [](char c) { return std::isalpha(static_cast<unsigned char>(c)) &&
                                                                    c != 'e' && c != 'E'; });
}

// ---------------------------------------------------------------------------
// Ground-truth lattice written by `synth` and read back by `eval`.

constexpr int kTruthLattice = 32;

std::string truth_lattice_csv(const GroundTruth& truth, cv::Size size) {
  std::ostringstream out;
  out << "src_x,src_y,tgt_x,tgt_y\n";
  for (int j = 0; j < kTruthLattice; ++j) {
    for (int i = 0; i < kTruthLattice; ++i) {
      const Point p{i * (size.width - 1.0) / (kTruthLattice - 1), j * (size.height - 1.0) / (kTruthLattice - 1)};
      const Point q = truth(p);
      out << fmt_double(p.x) << ',' << fmt_double(p.y) << ',' << fmt_double(q.x) << ',' << fmt_double(q.y) << "\n";
    }
  }
  return out.str();
}

/// Bilinear interpolation of a regular source-space lattice of target points.
class TruthLattice {
 public:
  explicit TruthLattice(const fs::path& file) {
    std::istringstream in(read_text(file));
    std::string line;
    std::map<std::pair<double, double>, Point> nodes;
    std::set<double> xs, ys;
    while (std::getline(in, line)) {
      if (line.empty() || looks_like_header(line)) continue;
      const auto v = split_numbers(line);
      if (v.size() != 4) throw Error(ErrorCode::kParseError, "truth rows need 4 columns");
      nodes[{v[1], v[0]}] = {v[2], v[3]};
      xs.insert(v[0]);
      ys.insert(v[1]);
    }
    xs_.assign(xs.begin(), xs.end());
    ys_.assign(ys.begin(), ys.end());
    if (xs_.size() < 2 || ys_.size() < 2 || nodes.size() != xs_.size() * ys_.size()) {
      throw Error(ErrorCode::kParseError, "truth file is not a complete lattice");
    }
    for (double y : ys_) {
      for (double x : xs_) values_.push_back(nodes.at({y, x}));
    }
  }

  Point operator()(Point p) const {
    auto cell = [](const std::vector<double>& axis, double v, double& t) {
      auto it = std::upper_bound(axis.begin(), axis.end(), v);
      std::size_t i = it == axis.begin() ? 0 : static_cast<std::size_t>(it - axis.begin()) - 1;
      i = std::min(i, axis.size() - 2);
      t = (v - axis[i]) / (axis[i + 1] - axis[i]);
      return i;
    };
    double tx = 0.0, ty = 0.0;
    const std::size_t i = cell(xs_, p.x, tx);
    const std::size_t j = cell(ys_, p.y, ty);
    const std::size_t w = xs_.size();
    const Point a = values_[j * w + i], b = values_[j * w + i + 1];
    const Point c = values_[(j + 1) * w + i], d = values_[(j + 1) * w + i + 1];
    return a * ((1 - tx) * (1 - ty)) + b * (tx * (1 - ty)) + c * ((1 - tx) * ty) + d * (tx * ty);
  }

 private:
  std::vector<double> xs_, ys_;
  std::vector<Point> values_;
};

// ---------------------------------------------------------------------------
// Subcommands

struct PyramidArgs {
  std::string input, out;
  int levels = 4;
  double mpp = 0.25;
};

int cmd_build_pyramid(const PyramidArgs& a) {
  const PyramidalImage img = build_pyramid(read_png_rgb(a.input), a.levels, a.mpp);
  save_pyramid(img, a.out);
  std::cout << "pyramid " << a.out << ": " << img.width() << "x" << img.height() << ", " << img.level_count()
            << " levels\n";
  return kExitOk;
}

struct TissueArgs {
  int size = 2048;
  std::uint64_t seed = 7;
  std::string out;
};

int cmd_tissue(const TissueArgs& a) {
  write_png_rgb(generate_tissue({a.size, a.size}, a.seed), a.out);
  std::cout << "tissue " << a.out << ": " << a.size << "x" << a.size << "\n";
  return kExitOk;
}

struct SynthArgs {
  std::string base, spec, corpus, out_src, out_tgt, out_truth, out_spec;
  std::optional<std::uint64_t> random_spec;
};

int cmd_synth(const SynthArgs& a) {
  const cv::Mat base = read_png_rgb(a.base);
  DeformationSpec spec;
  if (!a.spec.empty()) {
    try {
      spec = read_json(a.spec).get<DeformationSpec>();
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kParseError, std::string("bad spec: ") + e.what());
    }
  } else if (a.random_spec) {
    CorpusOptions corpus;
    if (!a.corpus.empty()) {
      corpus = read_json(a.corpus).get<CorpusOptions>();
    } else {
      corpus.size = std::max(base.cols, base.rows);  // affine is drawn about the corpus centre
    }
    spec = random_deformation_spec(corpus, *a.random_spec);
  } else {
    throw Error(ErrorCode::kInvalidArgument, "either --spec or --random-spec is required");
  }
  const SyntheticPair pair = synthesize_pair(base, spec);
  save_pyramid(pair.source, a.out_src);
  save_pyramid(pair.target, a.out_tgt);
  if (!a.out_truth.empty()) write_text(a.out_truth, truth_lattice_csv(pair.truth, base.size()));
  if (!a.out_spec.empty()) write_text(a.out_spec, json(spec).dump(2) + "\n");
  std::cout << "synth: source " << a.out_src << ", target " << a.out_tgt << "\n";
  return kExitOk;
}

struct RegisterArgs {
  std::string source, target, out, mode = "linear";
  std::size_t landmarks = 30;
  double nmi_threshold = 0.15;
  int start_level = IprConfig::kAutoLevel;
  int patch = 256;
};

int cmd_register(const RegisterArgs& a, const GlobalFlags& g) {
  const PyramidalImage source = load_pyramid(a.source);
  const PyramidalImage target = load_pyramid(a.target);
  RegistrationOptions options;
  options.landmarks = a.landmarks;
  options.mode = correction_mode_from_string(a.mode);
  options.ipr.nmi_threshold = a.nmi_threshold;
  options.ipr.start_level = a.start_level;
  options.ipr.patch_size_px = a.patch;
  options.seed = g.seed;
  options.threads = resolve_threads(g.threads);
  RegistrationResult result = register_slides(source, target, options);
  result.model.source_id = fs::path(a.source).filename().string();
  result.model.target_id = fs::path(a.target).filename().string();
  result.model.created_at = utc_now();
  save_model(result.model, a.out);

  const auto& t = result.times;
  std::cout << "model " << a.out << "\n"
            << "  global: " << result.global.inliers << "/" << result.global.matches << " RANSAC inliers\n"
            << "  landmarks: " << result.model.landmarks().size() << " accepted, " << result.model.rejected().size()
            << " rejected (NMI threshold " << fmt_fixed(a.nmi_threshold, 3) << ")\n"
            << "  start level: " << result.start_level << "\n"
            << "  time: global " << fmt_fixed(t.global_s, 3) << " s, landmarks " << fmt_fixed(t.landmarks_s, 3)
            << " s, ipr " << fmt_fixed(t.ipr_s, 3) << " s, fit " << fmt_fixed(t.fit_s, 3) << " s\n";
  return kExitOk;
}

struct WarpArgs {
  std::string model, points, region, target, out;
};

int cmd_warp(const WarpArgs& a) {
  const WarpModel model = load_model(a.model);
  if (a.points.empty() == a.region.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "exactly one of --points or --region is required");
  }
  if (!a.points.empty()) {
    std::ifstream in(a.points);
    if (!in) throw Error(ErrorCode::kParseError, "cannot read " + a.points);
    std::ofstream file;
    if (!a.out.empty()) {
      file.open(a.out);
      if (!file) throw Error(ErrorCode::kIoError, "cannot write " + a.out);
    }
    std::ostream& out = a.out.empty() ? std::cout : file;
    std::string line, buffer;
    buffer.reserve(1 << 20);
    out << "x,y,target_x,target_y\n";
    while (std::getline(in, line)) {
      if (line.empty() || line == "\r" || looks_like_header(line)) continue;
      const auto v = split_numbers(line);
      if (v.size() != 2) throw Error(ErrorCode::kParseError, "point rows need 2 columns: " + line);
      const Point q = model.warp_point({v[0], v[1]});
      buffer += fmt_double(v[0]) + ',' + fmt_double(v[1]) + ',' + fmt_double(q.x) + ',' + fmt_double(q.y) + '\n';
      if (buffer.size() > (1 << 20)) {
        out << buffer;
        buffer.clear();
      }
    }
    out << buffer;
    return kExitOk;
  }
  const auto v = split_numbers(a.region);
  if (v.size() != 4 || v[2] < 1 || v[3] < 1) throw Error(ErrorCode::kInvalidArgument, "--region wants x,y,w,h");
  if (a.target.empty() || a.out.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "--region needs --target and --out");
  }
  const cv::Size size(static_cast<int>(v[2]), static_cast<int>(v[3]));
  const Point center{v[0] + (size.width - 1) / 2.0, v[1] + (size.height - 1) / 2.0};
  const PyramidalImage target = load_pyramid(a.target);
  write_png_rgb(extract_warped_patch(target, model, center, size), a.out);
  const WarpedRegion w = warp_region(model, center, size);
  std::cout << "region centre " << fmt_double(w.region.center.x) << "," << fmt_double(w.region.center.y) << " -> "
            << a.out << "\n";
  return kExitOk;
}

struct EvalArgs {
  std::string model, source, target, truth, out;
  std::size_t points = 50;
  int patch = 256;
};

int cmd_eval(const EvalArgs& a, const GlobalFlags& g) {
  const WarpModel model = load_model(a.model);
  const PyramidalImage source = load_pyramid(a.source);
  const PyramidalImage target = load_pyramid(a.target);
  std::vector<Point> exclude;
  for (const auto& lm : model.landmarks()) exclude.push_back(lm.source_pt);
  for (const auto& lm : model.rejected()) exclude.push_back(lm.source_pt);
  const std::vector<Point> points = evaluation_points(tissue_mask(source), a.points, g.seed, exclude);

  TreOptions options;
  options.patch_px = a.patch;
  options.threads = resolve_threads(g.threads);
  std::optional<TruthLattice> lattice;
  if (!a.truth.empty()) {
    lattice.emplace(a.truth);
    options.truth = [&](Point p) { return (*lattice)(p); };
  }
  const TreReport report = measure_tre(source, target, model, points, options);

  std::cout << "TRE over " << report.tre.n << " points (" << report.skipped << " flat skipped): median "
            << fmt_fixed(report.tre.median_px, 3) << " px, p95 " << fmt_fixed(report.tre.p95_px, 3) << " px, mean "
            << fmt_fixed(report.tre.mean_px, 3) << " px\n";
  if (report.truth) {
    std::cout << "truth error: median " << fmt_fixed(report.truth->median_px, 3) << " px, p95 "
              << fmt_fixed(report.truth->p95_px, 3) << " px\n";
  }
  if (a.out.empty()) return kExitOk;

  if (fs::path(a.out).extension() == ".json") {
    ordered_json j;
    auto summary = [](const Summary& s) {
      ordered_json e;
      e["median_px"] = s.median_px;
      e["p95_px"] = s.p95_px;
      e["mean_px"] = s.mean_px;
      e["n_points"] = s.n;
      return e;
    };
    j["tre"] = summary(report.tre);
    if (report.truth) j["truth_error"] = summary(*report.truth);
    j["skipped"] = report.skipped;
    ordered_json pts = ordered_json::array();
    for (const auto& p : report.points) {
      ordered_json e;
      e["source"] = {p.source.x, p.source.y};
      e["predicted"] = {p.predicted.x, p.predicted.y};
      e["flat"] = p.flat;
      if (!p.flat) {
        e["shift"] = {p.shift.x, p.shift.y};
        e["tre_px"] = p.tre_px;
      }
      if (p.truth_error_px) e["truth_error_px"] = *p.truth_error_px;
      pts.push_back(std::move(e));
    }
    j["points"] = std::move(pts);
    write_text(a.out, j.dump(2) + "\n");
  } else {
    std::ostringstream csv;
    csv << "x,y,pred_x,pred_y,shift_x,shift_y,tre_px,truth_error_px,flat\n";
    for (const auto& p : report.points) {
      csv << fmt_fixed(p.source.x, 3) << ',' << fmt_fixed(p.source.y, 3) << ',' << fmt_fixed(p.predicted.x, 3)
          << ',' << fmt_fixed(p.predicted.y, 3) << ',' << p.shift.x << ',' << p.shift.y << ','
          << (p.flat ? std::string("nan") : fmt_fixed(p.tre_px, 4)) << ','
          << (p.truth_error_px ? fmt_fixed(*p.truth_error_px, 4) : std::string("nan")) << ',' << p.flat << "\n";
    }
    write_text(a.out, csv.str());
  }
  return kExitOk;
}

struct SweepArgs {
  std::string corpus, out, cell_dir;
  std::vector<std::string> modes{"none", "nearest", "linear"};
  std::vector<std::size_t> counts{30};
  std::size_t seeds = 20;
  std::uint64_t tissue_seed = 7;
  std::size_t eval_points = 50;
  int patch = 256;
};

int cmd_sweep(const SweepArgs& a, const GlobalFlags& g) {
  SweepConfig config;
  if (!a.corpus.empty()) {
    try {
      config.corpus = read_json(a.corpus).get<CorpusOptions>();
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kParseError, std::string("bad corpus: ") + e.what());
    }
  }
  config.modes.clear();
  for (const auto& m : a.modes) config.modes.push_back(correction_mode_from_string(m));
  config.landmark_counts = a.counts;
  for (std::size_t i = 0; i < a.seeds; ++i) config.seeds.push_back(g.seed + i);
  config.tissue_seed = a.tissue_seed;
  config.eval_points = a.eval_points;
  config.patch_px = a.patch;
  config.threads = resolve_threads(g.threads);
  if (!a.cell_dir.empty()) config.cell_dir = fs::path(a.cell_dir);
  const SweepResult result = run_sweep(config);
  const std::string csv = sweep_csv(result);
  write_text(a.out, csv);
  for (const auto& row : result.aggregates) {
    std::cout << to_string(row.mode) << " n=" << row.n_landmarks << ": median " << fmt_fixed(row.median_px, 3)
              << " px, p95 " << fmt_fixed(row.p95_px, 3) << " px, failed " << row.failed << "\n";
  }
  return kExitOk;
}

struct ShiftArgs {
  std::string reference, manifest, scorer = "builtin:density", out, scratch;
  std::vector<std::string> scans, models;
  std::size_t points = 100;
  int size = 512;
};

std::unique_ptr<PatchScorer> make_scorer(const std::string& spec, const std::string& scratch, std::uint64_t seed) {
  if (spec == "builtin:density") return density_scorer();
  if (spec.rfind("builtin:noise", 0) == 0) {
    double sigma = 0.1;
    if (spec.size() > 13) {
      if (spec[13] != ':') throw Error(ErrorCode::kInvalidArgument, "scorer builtin:noise[:sigma]");
      sigma = split_numbers(spec.substr(14)).at(0);
    }
    return seeded_noise_scorer(seed, sigma);
  }
  if (spec.rfind("cmd:", 0) == 0) {
    const fs::path dir = scratch.empty()
                             ? fs::temp_directory_path() / ("slidewarp_scorer_" + std::to_string(::getpid()))
                             : fs::path(scratch);
    return command_scorer(spec.substr(4), dir);
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown scorer " + spec);
}

struct SlideJob {
  std::string name;
  fs::path reference;
  std::vector<fs::path> scans, models;
};

int cmd_shift(const ShiftArgs& a, const GlobalFlags& g) {
  std::vector<std::string> scanners;
  std::vector<SlideJob> jobs;
  if (!a.manifest.empty()) {
    const json m = read_json(a.manifest);
    try {
      scanners = m.at("scanners").get<std::vector<std::string>>();
      for (const auto& s : m.at("slides")) {
        SlideJob job;
        job.name = s.at("name").get<std::string>();
        job.reference = s.at("reference").get<std::string>();
        for (const auto& p : s.at("scans")) job.scans.emplace_back(p.get<std::string>());
        for (const auto& p : s.at("models")) job.models.emplace_back(p.get<std::string>());
        jobs.push_back(std::move(job));
      }
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kParseError, std::string("bad shift manifest: ") + e.what());
    }
  } else {
    if (a.reference.empty()) throw Error(ErrorCode::kInvalidArgument, "--reference or --manifest is required");
    SlideJob job;
    job.reference = a.reference;
    job.name = job.reference.filename().string();
    scanners.push_back(job.name);
    for (const auto& s : a.scans) {
      job.scans.emplace_back(s);
      scanners.push_back(fs::path(s).filename().string());
    }
    for (const auto& m : a.models) job.models.emplace_back(m);
    jobs.push_back(std::move(job));
  }
  for (const auto& job : jobs) {
    if (job.scans.empty() || job.scans.size() != job.models.size() || job.scans.size() + 1 != scanners.size()) {
      throw Error(ErrorCode::kInvalidArgument, "slide " + job.name + ": need one model per scan and one name per scan");
    }
  }
  for (std::size_t k = 0; k < scanners.size(); ++k) {
    for (std::size_t l = 0; l < k; ++l) {
      if (scanners[k] == scanners[l]) scanners[k] += "_" + std::to_string(k);
    }
  }

  const int threads = resolve_threads(g.threads);
  const auto scorer = make_scorer(a.scorer, a.scratch, g.seed);
  ScoreMatrix matrix;
  matrix.scanners = scanners;
  for (std::size_t s = 0; s < jobs.size(); ++s) {
    const SlideJob& job = jobs[s];
    matrix.slides.push_back(job.name);
    const PyramidalImage reference = load_pyramid(job.reference);
    std::vector<PyramidalImage> images;
    std::vector<WarpModel> models;
    for (std::size_t k = 0; k < job.scans.size(); ++k) {
      images.push_back(load_pyramid(job.scans[k]));
      models.push_back(load_model(job.models[k]));
    }
    std::vector<Scan> others;
    for (std::size_t k = 0; k < images.size(); ++k) others.push_back({&images[k], &models[k]});
    const TissueMask mask = tissue_mask(reference);
    const std::vector<Point> points = sample_tissue_pixels(mask, a.points, g.seed + s);
    const auto patches = extract_aligned_patches(reference, others, points, a.size, threads);
    auto scores = score_patches(patches, *scorer, threads);
    for (std::size_t i = 0; i < patches.size(); ++i) {
      matrix.scores.push_back(std::move(scores[i]));
      matrix.slide_of_patch.push_back(s);
      matrix.tissue_density.push_back(tissue_fraction(patches[i][0], mask.threshold));
    }
    spdlog::info("stage=shift slide={} patches={}", job.name, patches.size() * scanners.size());
  }
  const ShiftReport report = agreement_tables(std::move(matrix));
  fs::path out = a.out;
  fs::path csv_path = out, json_path = out;
  csv_path += ".csv";
  json_path += ".json";
  write_text(csv_path, shift_csv(report));
  write_text(json_path, shift_json(report) + "\n");
  std::cout << shift_csv(report);
  return kExitOk;
}

struct ResidualArgs {
  std::string model, source, out;
  bool legend = false;
  int max_dim = 1024;
};

int cmd_residual_map(const ResidualArgs& a) {
  const WarpModel model = load_model(a.model);
  const PyramidalImage source = load_pyramid(a.source);
  write_png_rgb(residual_map(model, source, a.max_dim, a.legend), a.out);
  std::cout << "residual map " << a.out << "\n";
  return kExitOk;
}

}  // namespace

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInsufficientFeatures: return kExitInsufficientFeatures;
    case ErrorCode::kTooFewLandmarks: return kExitTooFewLandmarks;
    case ErrorCode::kDegenerateFit: return kExitDegenerateFit;
    case ErrorCode::kIoError: return kExitIo;
    case ErrorCode::kAlignmentFailed: return kExitAlignmentFailed;
    default: return kExitInput;
  }
}

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"slidewarp: register multi-resolution slide scans and warp coordinates between them"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalFlags g;
  app.add_option("--seed", g.seed, "Seed for every random choice")->capture_default_str();
  app.add_option("--threads", g.threads, "Worker threads (0 = logical cores)")->capture_default_str();
  app.add_option("--log-level", g.log_level, "trace, debug, info, warn, error or off")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "critical", "off"}))
      ->capture_default_str();
  app.add_flag("--json-logs", g.json_logs, "One JSON object per log line on stderr");

  PyramidArgs pyr;
  auto* c_pyr = app.add_subcommand("build-pyramid", "Build a pyramid directory from an image");
  c_pyr->add_option("--input", pyr.input, "Input image (PNG)")->required();
  c_pyr->add_option("--levels", pyr.levels, "Number of levels")->capture_default_str();
  c_pyr->add_option("--mpp", pyr.mpp, "Microns per level-0 pixel")->capture_default_str();
  c_pyr->add_option("--out", pyr.out, "Output directory")->required();

  TissueArgs tis;
  auto* c_tis = app.add_subcommand("tissue", "Render a synthetic tissue image");
  c_tis->add_option("--size", tis.size, "Square size in pixels")->capture_default_str();
  c_tis->add_option("--tissue-seed", tis.seed, "Tissue seed")->capture_default_str();
  c_tis->add_option("--out", tis.out, "Output PNG")->required();

  SynthArgs syn;
  auto* c_syn = app.add_subcommand("synth", "Synthesize a deformed source/target pair");
  c_syn->add_option("--base", syn.base, "Base RGB image (PNG)")->required();
  c_syn->add_option("--spec", syn.spec, "Deformation spec JSON");
  c_syn->add_option("--random-spec", syn.random_spec, "Draw the spec from the corpus with this seed");
  c_syn->add_option("--corpus", syn.corpus, "Corpus options JSON for --random-spec");
  c_syn->add_option("--out-src", syn.out_src, "Source pyramid directory")->required();
  c_syn->add_option("--out-tgt", syn.out_tgt, "Target pyramid directory")->required();
  c_syn->add_option("--out-truth", syn.out_truth, "Ground-truth lattice CSV");
  c_syn->add_option("--out-spec", syn.out_spec, "Write the spec used as JSON");

  RegisterArgs reg;
  auto* c_reg = app.add_subcommand("register", "Register a source pyramid onto a target pyramid");
  c_reg->add_option("--source", reg.source, "Source pyramid directory")->required();
  c_reg->add_option("--target", reg.target, "Target pyramid directory")->required();
  c_reg->add_option("--landmarks", reg.landmarks, "Requested landmark count")->capture_default_str();
  c_reg->add_option("--nmi-threshold", reg.nmi_threshold, "NMI acceptance threshold")->capture_default_str();
  c_reg->add_option("--mode", reg.mode, "none, nearest or linear")
      ->check(CLI::IsMember({"none", "nearest", "linear"}))
      ->capture_default_str();
  c_reg->add_option("--start-level", reg.start_level, "IPR start level (-1 = automatic)")->capture_default_str();
  c_reg->add_option("--patch", reg.patch, "IPR patch size in pixels")->capture_default_str();
  c_reg->add_option("--out", reg.out, "Model JSON")->required();

  WarpArgs wrp;
  auto* c_wrp = app.add_subcommand("warp", "Warp points or extract a warped region");
  c_wrp->add_option("--model", wrp.model, "Model JSON")->required();
  c_wrp->add_option("--points", wrp.points, "CSV of x,y source points");
  c_wrp->add_option("--region", wrp.region, "Source region x,y,w,h (level 0, top-left)");
  c_wrp->add_option("--target", wrp.target, "Target pyramid (for --region)");
  c_wrp->add_option("--out", wrp.out, "Output CSV (points) or PNG (region)");

  EvalArgs ev;
  auto* c_ev = app.add_subcommand("eval", "Measure target registration error");
  c_ev->add_option("--model", ev.model, "Model JSON")->required();
  c_ev->add_option("--source", ev.source, "Source pyramid directory")->required();
  c_ev->add_option("--target", ev.target, "Target pyramid directory")->required();
  c_ev->add_option("--truth", ev.truth, "Ground-truth lattice CSV from synth");
  c_ev->add_option("--points", ev.points, "Evaluation point count")->capture_default_str();
  c_ev->add_option("--patch", ev.patch, "Phase-correlation patch size")->capture_default_str();
  c_ev->add_option("--out", ev.out, "Per-point report (.csv or .json)");

  SweepArgs sw;
  auto* c_sw = app.add_subcommand("sweep", "Mode x landmark-count sweep over a synthetic corpus");
  c_sw->add_option("--corpus", sw.corpus, "Corpus options JSON");
  c_sw->add_option("--modes", sw.modes, "Correction modes")->delimiter(',')->capture_default_str();
  c_sw->add_option("--landmark-counts", sw.counts, "Landmark counts")->delimiter(',')->capture_default_str();
  c_sw->add_option("--seeds", sw.seeds, "Number of seeds, starting at --seed")->capture_default_str();
  c_sw->add_option("--tissue-seed", sw.tissue_seed, "Base tissue seed")->capture_default_str();
  c_sw->add_option("--eval-points", sw.eval_points, "Evaluation points per pair")->capture_default_str();
  c_sw->add_option("--patch", sw.patch, "Phase-correlation patch size")->capture_default_str();
  c_sw->add_option("--cell-dir", sw.cell_dir, "Directory of finished-cell markers (resume)");
  c_sw->add_option("--out", sw.out, "Output CSV")->required();

  ShiftArgs sh;
  auto* c_sh = app.add_subcommand("shift", "Patch-level scanner agreement study");
  c_sh->add_option("--reference", sh.reference, "Reference pyramid directory");
  c_sh->add_option("--scans", sh.scans, "Other scans' pyramid directories");
  c_sh->add_option("--models", sh.models, "Reference -> scan model per scan");
  c_sh->add_option("--manifest", sh.manifest, "JSON listing several slides");
  c_sh->add_option("--scorer", sh.scorer, "builtin:density, builtin:noise[:sigma] or cmd:<command>")
      ->capture_default_str();
  c_sh->add_option("--scratch-dir", sh.scratch, "Directory for patches handed to cmd scorers");
  c_sh->add_option("--points", sh.points, "Tissue points per slide")->capture_default_str();
  c_sh->add_option("--size", sh.size, "Patch size")->capture_default_str();
  c_sh->add_option("--out", sh.out, "Report prefix (writes .csv and .json)")->required();

  ResidualArgs rm;
  auto* c_rm = app.add_subcommand("residual-map", "Render the residual vector field");
  c_rm->add_option("--model", rm.model, "Model JSON")->required();
  c_rm->add_option("--source", rm.source, "Source pyramid directory")->required();
  c_rm->add_option("--out", rm.out, "Output PNG")->required();
  c_rm->add_option("--max-dim", rm.max_dim, "Thumbnail size")->capture_default_str();
  c_rm->add_flag("--legend", rm.legend, "Draw a hue-wheel legend");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    configure_logging(g);
    int code = kExitOk;
    if (*c_pyr) code = cmd_build_pyramid(pyr);
    else if (*c_tis) code = cmd_tissue(tis);
    else if (*c_syn) code = cmd_synth(syn);
    else if (*c_reg) code = cmd_register(reg, g);
    else if (*c_wrp) code = cmd_warp(wrp);
    else if (*c_ev) code = cmd_eval(ev, g);
    else if (*c_sw) code = cmd_sweep(sw, g);
    else if (*c_sh) code = cmd_shift(sh, g);
    else if (*c_rm) code = cmd_residual_map(rm);
    spdlog::drop("slidewarp");
    return code;
  } catch (const Error& e) {
    std::cerr << "error: " << to_string(e.code()) << ": " << e.what() << "\n";
    spdlog::drop("slidewarp");
    return exit_code_for(e.code());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: io: " << e.what() << "\n";
    spdlog::drop("slidewarp");
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    spdlog::drop("slidewarp");
    return kExitInput;
  }
}

}  // namespace slidewarp

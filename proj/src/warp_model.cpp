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

#include "slidewarp/warp_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>
#include <opencv2/imgproc.hpp>

#include "slidewarp/error.hpp"
#include "slidewarp/landmarking.hpp"
#include "slidewarp/stats.hpp"

namespace slidewarp {

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr int kModelVersion = 1;

inline double cross(Point a, Point b) { return a.x * b.y - a.y * b.x; }

struct Circumcircle {
  double cx = 0.0, cy = 0.0, r2 = 0.0;
};

Circumcircle circumcircle(Point a, Point b, Point c) {
  const double d = 2.0 * (a.x * (b.y - c.y) + b.x * (c.y - a.y) + c.x * (a.y - b.y));
  const double a2 = a.x * a.x + a.y * a.y;
  const double b2 = b.x * b.x + b.y * b.y;
  const double c2 = c.x * c.x + c.y * c.y;
  Circumcircle out;
  out.cx = (a2 * (b.y - c.y) + b2 * (c.y - a.y) + c2 * (a.y - b.y)) / d;
  out.cy = (a2 * (c.x - b.x) + b2 * (a.x - c.x) + c2 * (b.x - a.x)) / d;
  out.r2 = (a.x - out.cx) * (a.x - out.cx) + (a.y - out.cy) * (a.y - out.cy);
  return out;
}

ordered_json point_json(Point p) { return ordered_json::array({p.x, p.y}); }

Point point_from_json(const ordered_json& j) {
  if (!j.is_array() || j.size() != 2) throw Error(ErrorCode::kParseError, "expected a [x, y] pair");
  return {j.at(0).get<double>(), j.at(1).get<double>()};
}

}  // namespace

std::string_view to_string(CorrectionMode mode) {
  switch (mode) {
    case CorrectionMode::kNone: return "none";
    case CorrectionMode::kNearest: return "nearest";
    case CorrectionMode::kLinear: return "linear";
  }
  return "none";
}

CorrectionMode correction_mode_from_string(std::string_view name) {
  if (name == "none") return CorrectionMode::kNone;
  if (name == "nearest") return CorrectionMode::kNearest;
  if (name == "linear") return CorrectionMode::kLinear;
  throw Error(ErrorCode::kParseError, "unknown correction mode '" + std::string(name) + "'");
}

AffineFit fit_affine_lsq(std::span<const std::pair<Point, Point>> pairs) {
  std::vector<Point> src, dst;
  src.reserve(pairs.size());
  dst.reserve(pairs.size());
  for (const auto& [s, t] : pairs) {
    src.push_back(s);
    dst.push_back(t);
  }
  AffineFit fit{fit_affine_least_squares(src, dst), {}};
  fit.residuals.reserve(pairs.size());
  for (const auto& [s, t] : pairs) fit.residuals.push_back(t - fit.affine.apply(s));
  return fit;
}

// ---------------------------------------------------------------------------
// Triangulation

Triangulation::Triangulation(std::span<const Point> points) : points_(points.begin(), points.end()) {
  // Unique vertices, first occurrence wins.
  std::vector<int> order;
  {
    std::map<std::pair<double, double>, int> seen;
    for (int i = 0; i < static_cast<int>(points_.size()); ++i) {
      if (seen.emplace(std::make_pair(points_[i].x, points_[i].y), i).second) order.push_back(i);
    }
  }
  if (order.size() < 3) return;

  double min_x = std::numeric_limits<double>::infinity(), min_y = min_x;
  double max_x = -min_x, max_y = -min_x;
  for (int i : order) {
    min_x = std::min(min_x, points_[i].x);
    max_x = std::max(max_x, points_[i].x);
    min_y = std::min(min_y, points_[i].y);
    max_y = std::max(max_y, points_[i].y);
  }
  const double span = std::max({max_x - min_x, max_y - min_y, 1e-9});
  const Point mid{(min_x + max_x) / 2.0, (min_y + max_y) / 2.0};

  // Bowyer-Watson on centred, unit-scaled coordinates; indices >= n are the
  // super-triangle corners.
  const int n = static_cast<int>(points_.size());
  std::vector<Point> v(points_.size());
  for (int i = 0; i < n; ++i) v[i] = (points_[i] - mid) * (1.0 / span);
  v.push_back({-20.0, -10.0});
  v.push_back({20.0, -10.0});
  v.push_back({0.0, 20.0});

  struct Tri {
    std::array<int, 3> idx;
    Circumcircle cc;
  };
  auto make_tri = [&](int a, int b, int c) {
    if (cross(v[b] - v[a], v[c] - v[a]) < 0.0) std::swap(b, c);
    return Tri{{a, b, c}, circumcircle(v[a], v[b], v[c])};
  };
  std::vector<Tri> tris{make_tri(n, n + 1, n + 2)};

  for (int p : order) {
    const Point q = v[p];
    std::vector<Tri> keep;
    std::vector<std::pair<int, int>> edges;
    keep.reserve(tris.size() + 2);
    for (const Tri& t : tris) {
      const double dx = q.x - t.cc.cx;
      const double dy = q.y - t.cc.cy;
      if (dx * dx + dy * dy < t.cc.r2 * (1.0 - 1e-12)) {
        for (int e = 0; e < 3; ++e) edges.emplace_back(t.idx[e], t.idx[(e + 1) % 3]);
      } else {
        keep.push_back(t);
      }
    }
    // Boundary edges of the cavity appear exactly once.
    for (std::size_t i = 0; i < edges.size(); ++i) {
      bool shared = false;
      for (std::size_t j = 0; j < edges.size() && !shared; ++j) {
        shared = i != j && edges[i].first == edges[j].second && edges[i].second == edges[j].first;
      }
      if (!shared) keep.push_back(make_tri(edges[i].first, edges[i].second, p));
    }
    tris = std::move(keep);
  }

  for (const Tri& t : tris) {
    if (t.idx[0] >= n || t.idx[1] >= n || t.idx[2] >= n) continue;
    const double area = cross(v[t.idx[1]] - v[t.idx[0]], v[t.idx[2]] - v[t.idx[0]]);
    if (std::abs(area) < 1e-12) continue;
    triangles_.push_back(t.idx);
  }
  std::sort(triangles_.begin(), triangles_.end());
  if (triangles_.empty()) return;

  // Bucket grid, roughly one triangle per cell.
  x0_ = min_x;
  y0_ = min_y;
  const double w = std::max(max_x - min_x, 1e-9);
  const double h = std::max(max_y - min_y, 1e-9);
  cell_ = std::sqrt(w * h / static_cast<double>(triangles_.size()));
  cell_ = std::max(cell_, std::max(w, h) / 1024.0);
  cols_ = static_cast<int>(std::floor(w / cell_)) + 1;
  rows_ = static_cast<int>(std::floor(h / cell_)) + 1;

  std::vector<std::vector<int>> cells(static_cast<std::size_t>(cols_) * rows_);
  for (int t = 0; t < static_cast<int>(triangles_.size()); ++t) {
    double tx0 = std::numeric_limits<double>::infinity(), ty0 = tx0, tx1 = -tx0, ty1 = -tx0;
    for (int k : triangles_[t]) {
      tx0 = std::min(tx0, points_[k].x);
      tx1 = std::max(tx1, points_[k].x);
      ty0 = std::min(ty0, points_[k].y);
      ty1 = std::max(ty1, points_[k].y);
    }
    const int c0 = std::clamp(static_cast<int>(std::floor((tx0 - x0_) / cell_)), 0, cols_ - 1);
    const int c1 = std::clamp(static_cast<int>(std::floor((tx1 - x0_) / cell_)), 0, cols_ - 1);
    const int r0 = std::clamp(static_cast<int>(std::floor((ty0 - y0_) / cell_)), 0, rows_ - 1);
    const int r1 = std::clamp(static_cast<int>(std::floor((ty1 - y0_) / cell_)), 0, rows_ - 1);
    for (int r = r0; r <= r1; ++r) {
      for (int c = c0; c <= c1; ++c) cells[static_cast<std::size_t>(r) * cols_ + c].push_back(t);
    }
  }
  cell_start_.assign(cells.size() + 1, 0);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    cell_start_[i + 1] = cell_start_[i] + static_cast<int>(cells[i].size());
    cell_items_.insert(cell_items_.end(), cells[i].begin(), cells[i].end());
  }
}

std::optional<Triangulation::Location> Triangulation::locate(Point p) const {
  if (triangles_.empty()) return std::nullopt;
  const double fx = (p.x - x0_) / cell_;
  const double fy = (p.y - y0_) / cell_;
  if (!(fx >= 0.0 && fy >= 0.0)) return std::nullopt;
  const int c = static_cast<int>(fx);
  const int r = static_cast<int>(fy);
  if (c >= cols_ || r >= rows_) return std::nullopt;
  const std::size_t cell = static_cast<std::size_t>(r) * cols_ + c;
  for (int k = cell_start_[cell]; k < cell_start_[cell + 1]; ++k) {
    const auto& t = triangles_[cell_items_[k]];
    const Point a = points_[t[0]], b = points_[t[1]], cpt = points_[t[2]];
    const double det = cross(b - a, cpt - a);
    const double wa = cross(b - p, cpt - p) / det;
    const double wb = cross(cpt - p, a - p) / det;
    const double wc = cross(a - p, b - p) / det;
    constexpr double kSlack = -1e-12;
    if (wa >= kSlack && wb >= kSlack && wc >= kSlack) return Location{t, {wa, wb, wc}};
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// WarpModel

WarpModel::WarpModel(AffineTransform2D affine, std::vector<Landmark> accepted, CorrectionMode mode,
                     std::vector<Landmark> rejected)
    : affine_(affine), accepted_(std::move(accepted)), rejected_(std::move(rejected)), mode_(mode) {
  sources_.reserve(accepted_.size());
  for (const auto& lm : accepted_) sources_.push_back(lm.source_pt);
  triangulation_ = std::make_shared<const Triangulation>(sources_);
}

std::size_t WarpModel::nearest(Point p) const {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < sources_.size(); ++i) {
    const double dx = sources_[i].x - p.x;
    const double dy = sources_[i].y - p.y;
    const double d = dx * dx + dy * dy;
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

Point WarpModel::correction(Point p, CorrectionMode mode) const {
  if (mode == CorrectionMode::kNone || accepted_.empty()) return {0.0, 0.0};
  if (mode == CorrectionMode::kLinear) {
    if (const auto loc = triangulation_->locate(p)) {
      Point r{0.0, 0.0};
      for (int k = 0; k < 3; ++k) r += accepted_[loc->vertices[k]].residual * loc->weights[k];
      return r;
    }
  }
  return accepted_[nearest(p)].residual;
}

WarpModel WarpModel::with_mode(CorrectionMode mode) const {
  WarpModel copy = *this;
  copy.mode_ = mode;
  return copy;
}

WarpModel build_warp_model(std::vector<Landmark> accepted, CorrectionMode mode, std::vector<Landmark> rejected) {
  std::vector<std::pair<Point, Point>> pairs;
  pairs.reserve(accepted.size());
  for (const auto& lm : accepted) pairs.emplace_back(lm.source_pt, lm.target_pt);
  const AffineFit fit = fit_affine_lsq(pairs);
  for (std::size_t i = 0; i < accepted.size(); ++i) accepted[i].residual = fit.residuals[i];
  for (auto& lm : rejected) lm.residual = lm.target_pt - fit.affine.apply(lm.source_pt);
  return WarpModel(fit.affine, std::move(accepted), mode, std::move(rejected));
}

WarpedRegion warp_region(const WarpModel& model, Point center, cv::Size size, int level, double downsample) {
  WarpedRegion out;
  out.region = {model.warp_point(center), size, level};
  const double hw = (size.width - 1) / 2.0 * downsample;
  const double hh = (size.height - 1) / 2.0 * downsample;
  const std::array<Point, 4> src{Point{center.x - hw, center.y - hh}, Point{center.x + hw, center.y - hh},
                                 Point{center.x + hw, center.y + hh}, Point{center.x - hw, center.y + hh}};
  for (int i = 0; i < 4; ++i) out.corners[i] = model.warp_point(src[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Serialisation

std::string model_to_json(const WarpModel& model) {
  const auto& m = model.affine().coefficients();
  ordered_json j;
  j["version"] = kModelVersion;
  j["source_id"] = model.source_id;
  j["target_id"] = model.target_id;
  j["affine"] = ordered_json::array({m[0], m[1], m[2], m[3], m[4], m[5]});
  j["mode"] = std::string(to_string(model.mode()));
  ordered_json landmarks = ordered_json::array();
  auto emit = [&](const Landmark& lm) {
    ordered_json e;
    e["src"] = point_json(lm.source_pt);
    e["tgt"] = point_json(lm.target_pt);
    e["nmi"] = lm.nmi;
    e["status"] = std::string(to_string(lm.status));
    e["residual"] = point_json(lm.residual);
    landmarks.push_back(std::move(e));
  };
  for (const auto& lm : model.landmarks()) emit(lm);
  for (const auto& lm : model.rejected()) emit(lm);
  j["landmarks"] = std::move(landmarks);
  j["created_at"] = model.created_at;
  return j.dump(2) + "\n";
}

WarpModel model_from_json(std::string_view text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("malformed model JSON: ") + e.what());
  }
  if (!j.is_object()) throw Error(ErrorCode::kParseError, "model JSON must be an object");
  if (!j.contains("version") || !j["version"].is_number_integer() || j["version"].get<int>() != kModelVersion) {
    throw Error(ErrorCode::kVersionError, "unsupported model version (expected " +
                                              std::to_string(kModelVersion) + ")");
  }
  try {
    const auto coeffs = j.at("affine").get<std::vector<double>>();
    if (coeffs.size() != 6) throw Error(ErrorCode::kParseError, "affine needs 6 coefficients");
    std::array<double, 6> m{};
    std::copy(coeffs.begin(), coeffs.end(), m.begin());
    AffineTransform2D affine;
    try {
      affine = AffineTransform2D(m);
    } catch (const Error&) {
      throw Error(ErrorCode::kParseError, "model affine is singular");
    }
    const CorrectionMode mode = correction_mode_from_string(j.at("mode").get<std::string>());

    std::vector<Landmark> accepted, rejected;
    for (const auto& e : j.at("landmarks")) {
      Landmark lm;
      lm.source_pt = point_from_json(e.at("src"));
      lm.target_pt = point_from_json(e.at("tgt"));
      lm.nmi = e.at("nmi").get<double>();
      lm.status = landmark_status_from_string(e.at("status").get<std::string>());
      lm.residual = point_from_json(e.at("residual"));
      (lm.status == LandmarkStatus::kAccepted ? accepted : rejected).push_back(std::move(lm));
    }
    WarpModel model(affine, std::move(accepted), mode, std::move(rejected));
    model.source_id = j.value("source_id", "");
    model.target_id = j.value("target_id", "");
    model.created_at = j.value("created_at", "");
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("invalid model JSON: ") + e.what());
  }
}

void save_model(const WarpModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  out << model_to_json(model);
  if (!out) throw Error(ErrorCode::kIoError, "failed writing " + path.string());
}

WarpModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kParseError, "cannot read model file " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return model_from_json(buffer.str());
}

// ---------------------------------------------------------------------------
// Residual map

cv::Vec3b hsv_to_rgb(double hue_deg, double saturation, double value) {
  const double h = std::fmod(std::fmod(hue_deg, 360.0) + 360.0, 360.0) / 60.0;
  const double c = value * saturation;
  const double x = c * (1.0 - std::abs(std::fmod(h, 2.0) - 1.0));
  double r = 0.0, g = 0.0, b = 0.0;
  switch (static_cast<int>(h)) {
    case 0: r = c; g = x; break;
    case 1: r = x; g = c; break;
    case 2: g = c; b = x; break;
    case 3: g = x; b = c; break;
    case 4: r = x; b = c; break;
    default: r = c; b = x; break;
  }
  const double m = value - c;
  auto to_byte = [](double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v * 255.0), 0L, 255L)); };
  return {to_byte(r + m), to_byte(g + m), to_byte(b + m)};
}

cv::Mat residual_map(const WarpModel& model, const PyramidalImage& source, int max_dim, bool legend) {
  // Below this the residual field is round-off and the map stays gray.
  constexpr double kNegligibleResidualPx = 1e-6;
  const cv::Mat gray = to_gray(thumbnail(source, max_dim));
  const double sx = static_cast<double>(source.width()) / gray.cols;
  const double sy = static_cast<double>(source.height()) / gray.rows;
  cv::Mat tissue;
  try {
    tissue = otsu_threshold(gray).mask;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kDegenerateHistogram) throw;
    tissue = cv::Mat::zeros(gray.size(), CV_8UC1);
  }

  double norm_ref = 0.0;
  if (!model.landmarks().empty()) {
    std::vector<double> norms;
    for (const auto& lm : model.landmarks()) norms.push_back(std::hypot(lm.residual.x, lm.residual.y));
    norm_ref = percentile_nearest_rank(norms, 0.95);
  }

  cv::Mat out(gray.size(), CV_8UC3);
  for (int y = 0; y < gray.rows; ++y) {
    const auto* g = gray.ptr<std::uint8_t>(y);
    const auto* t = tissue.ptr<std::uint8_t>(y);
    auto* o = out.ptr<cv::Vec3b>(y);
    for (int x = 0; x < gray.cols; ++x) {
      const double value = g[x] / 255.0;
      if (!t[x] || norm_ref <= kNegligibleResidualPx) {
        o[x] = hsv_to_rgb(0.0, 0.0, value);
        continue;
      }
      const Point p{(x + 0.5) * sx - 0.5, (y + 0.5) * sy - 0.5};
      const Point r = model.correction(p, CorrectionMode::kLinear);
      double hue = std::atan2(r.y, r.x) * 180.0 / std::numbers::pi;
      if (hue < 0.0) hue += 360.0;
      const double sat = std::min(std::hypot(r.x, r.y) / norm_ref, 1.0);
      o[x] = hsv_to_rgb(hue, sat, value);
    }
  }

  if (legend) {
    // Hue wheel in the bottom-right corner, same angle convention as the map.
    const int radius = std::max(8, std::min(out.cols, out.rows) / 10);
    const int cx = out.cols - radius - 4;
    const int cy = out.rows - radius - 4;
    for (int y = std::max(0, cy - radius); y <= std::min(out.rows - 1, cy + radius); ++y) {
      for (int x = std::max(0, cx - radius); x <= std::min(out.cols - 1, cx + radius); ++x) {
        const double dx = x - cx;
        const double dy = y - cy;
        const double rr = std::hypot(dx, dy);
        if (rr > radius) continue;
        double hue = std::atan2(dy, dx) * 180.0 / std::numbers::pi;
        if (hue < 0.0) hue += 360.0;
        out.at<cv::Vec3b>(y, x) = hsv_to_rgb(hue, rr / radius, 1.0);
      }
    }
  }
  return out;
}

}  // namespace slidewarp

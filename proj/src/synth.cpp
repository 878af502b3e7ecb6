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

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <nlohmann/json.hpp>
#include <opencv2/imgproc.hpp>

#include "slidewarp/error.hpp"

namespace slidewarp {

namespace {

// Bumps are truncated beyond this many sigmas; exp(-32) is far below 1e-9 px.
constexpr double kBumpCutoffSigmas = 8.0;
constexpr int kInverseIterations = 50;
constexpr double kInverseTolerance = 1e-7;

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

/// Smooth random field in [0, 1]: a coarse random lattice upsampled bicubically.
cv::Mat value_noise(cv::Size size, double cell, std::mt19937_64& rng) {
  const int gw = std::max(2, static_cast<int>(std::ceil(size.width / cell)) + 1);
  const int gh = std::max(2, static_cast<int>(std::ceil(size.height / cell)) + 1);
  cv::Mat grid(gh, gw, CV_32FC1);
  for (int y = 0; y < gh; ++y) {
    for (int x = 0; x < gw; ++x) grid.at<float>(y, x) = static_cast<float>(uniform(rng, 0.0, 1.0));
  }
  cv::Mat up;
  cv::resize(grid, up, size, 0, 0, cv::INTER_CUBIC);
  cv::min(cv::max(up, 0.0), 1.0, up);
  return up;
}

}  // namespace

GroundTruth::GroundTruth(AffineTransform2D affine, std::vector<GaussianBump> bumps,
                         std::vector<TearBand> tears)
    : affine_(affine),
      inverse_affine_(affine.inverse()),
      bumps_(std::move(bumps)),
      tears_(std::move(tears)) {}

Point GroundTruth::bump_displacement(Point p) const {
  Point d{0.0, 0.0};
  for (const auto& b : bumps_) {
    const double dx = p.x - b.center.x;
    const double dy = p.y - b.center.y;
    const double r2 = dx * dx + dy * dy;
    const double cutoff = kBumpCutoffSigmas * b.sigma;
    if (r2 > cutoff * cutoff) continue;
    const double w = std::exp(-r2 / (2.0 * b.sigma * b.sigma));
    d.x += w * b.displacement.x;
    d.y += w * b.displacement.y;
  }
  return d;
}

Point GroundTruth::operator()(Point source) const {
  const Point d = bump_displacement(source);
  Point q = affine_.apply({source.x + d.x, source.y + d.y});
  for (const auto& band : tears_) {
    if (q.y >= band.y_begin && q.y < band.y_end) {
      q.x += band.offset;
      break;
    }
  }
  return q;
}

Point GroundTruth::inverse(Point target) const {
  Point q = target;
  for (const auto& band : tears_) {
    if (q.y >= band.y_begin && q.y < band.y_end) {
      q.x -= band.offset;
      break;
    }
  }
  const Point u = inverse_affine_.apply(q);
  if (bumps_.empty()) return u;
  Point p = u;
  for (int it = 0; it < kInverseIterations; ++it) {
    const Point d = bump_displacement(p);
    const Point next{u.x - d.x, u.y - d.y};
    const double step = std::abs(next.x - p.x) + std::abs(next.y - p.y);
    p = next;
    if (step < kInverseTolerance) break;
  }
  return p;
}

GroundTruth make_ground_truth(const DeformationSpec& spec, cv::Size size) {
  std::mt19937_64 rng(spec.seed);
  const Point center{(size.width - 1) / 2.0, (size.height - 1) / 2.0};
  const double extent = 0.40 * std::min(size.width, size.height);

  std::vector<GaussianBump> bumps;
  for (int i = 0; i < spec.bump_count; ++i) {
    const double r = extent * std::sqrt(uniform(rng, 0.0, 1.0));
    const double phi = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    const double dir = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    bumps.push_back({{center.x + r * std::cos(phi), center.y + r * std::sin(phi)},
                     {spec.bump_amplitude_px * std::cos(dir), spec.bump_amplitude_px * std::sin(dir)},
                     spec.bump_sigma_px});
  }

  // Bands are laid out top to bottom in disjoint slots so they never overlap.
  std::vector<TearBand> tears;
  if (spec.tear_count > 0) {
    const double span = 0.7 * size.height;
    const double slot = span / spec.tear_count;
    const double top = center.y - span / 2.0;
    for (int i = 0; i < spec.tear_count; ++i) {
      const double height = slot * uniform(rng, 0.35, 0.6);
      const double start = top + i * slot + uniform(rng, 0.0, slot - height);
      tears.push_back({start, start + height, spec.tear_offset_px});
    }
  }
  return GroundTruth(spec.global_affine, std::move(bumps), std::move(tears));
}

SyntheticPair synthesize_pair(const cv::Mat& base_rgb, const DeformationSpec& spec) {
  if (base_rgb.empty() || base_rgb.type() != CV_8UC3) {
    throw Error(ErrorCode::kInvalidArgument, "base raster must be a non-empty RGB8 image");
  }
  if (std::abs(spec.global_affine.determinant()) < 1e-6) {
    throw Error(ErrorCode::kInvalidArgument, "degenerate global affine");
  }
  if (spec.bump_count < 0 || spec.tear_count < 0 || spec.bump_amplitude_px < 0.0 ||
      !(spec.bump_sigma_px > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "invalid bump/tear parameters");
  }

  GroundTruth truth = make_ground_truth(spec, base_rgb.size());

  std::array<std::array<std::uint8_t, 256>, 3> lut{};
  for (int c = 0; c < 3; ++c) {
    for (int v = 0; v < 256; ++v) {
      lut[c][v] = cv::saturate_cast<std::uint8_t>(
          std::lround(spec.color_jitter.gain[c] * v + spec.color_jitter.bias[c]));
    }
  }

  const int w = base_rgb.cols;
  const int h = base_rgb.rows;
  cv::Mat target(base_rgb.size(), CV_8UC3);
  for (int y = 0; y < h; ++y) {
    auto* row = target.ptr<std::uint8_t>(y);
    for (int x = 0; x < w; ++x) {
      const Point p = truth.inverse({static_cast<double>(x), static_cast<double>(y)});
      const double fx = std::floor(p.x);
      const double fy = std::floor(p.y);
      const int x0 = static_cast<int>(fx);
      const int y0 = static_cast<int>(fy);
      const double ax = p.x - fx;
      const double ay = p.y - fy;
      for (int c = 0; c < 3; ++c) {
        auto at = [&](int xx, int yy) -> double {
          if (xx < 0 || yy < 0 || xx >= w || yy >= h) return 255.0;
          return base_rgb.ptr<std::uint8_t>(yy)[xx * 3 + c];
        };
        double v = at(x0, y0);
        if (ax != 0.0 || ay != 0.0) {
          const double top = v + ax * (at(x0 + 1, y0) - v);
          const double bottom = at(x0, y0 + 1) + ax * (at(x0 + 1, y0 + 1) - at(x0, y0 + 1));
          v = top + ay * (bottom - top);
        }
        row[x * 3 + c] = lut[c][cv::saturate_cast<std::uint8_t>(std::lround(v))];
      }
    }
  }

  return {build_pyramid(base_rgb, spec.levels, spec.source_mpp),
          build_pyramid(target, spec.levels, spec.target_mpp), std::move(truth)};
}

cv::Mat generate_tissue(cv::Size size, std::uint64_t seed, const TissueOptions& options) {
  if (size.width < 16 || size.height < 16) {
    throw Error(ErrorCode::kInvalidArgument, "tissue canvas must be at least 16x16");
  }
  std::mt19937_64 rng(seed);
  const double dim = std::min(size.width, size.height);
  const Point center{(size.width - 1) / 2.0, (size.height - 1) / 2.0};
  const double extent = options.extent * dim;

  // Tissue support: blobs + low-frequency noise, cut off outside `extent`.
  cv::Mat field(size, CV_32FC1, cv::Scalar(0));
  const int blob_count = 5 + static_cast<int>(rng() % 4);
  std::vector<std::array<double, 3>> blobs;
  for (int i = 0; i < blob_count; ++i) {
    const double r = 0.55 * extent * std::sqrt(uniform(rng, 0.0, 1.0));
    const double phi = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    blobs.push_back({center.x + r * std::cos(phi), center.y + r * std::sin(phi),
                     uniform(rng, 0.12, 0.22) * dim});
  }
  const cv::Mat wobble = value_noise(size, dim / 7.0, rng);
  for (int y = 0; y < size.height; ++y) {
    auto* f = field.ptr<float>(y);
    const auto* n = wobble.ptr<float>(y);
    for (int x = 0; x < size.width; ++x) {
      double v = 0.0;
      for (const auto& b : blobs) {
        const double dx = x - b[0];
        const double dy = y - b[1];
        v += std::exp(-(dx * dx + dy * dy) / (2.0 * b[2] * b[2]));
      }
      v += 0.6 * (n[x] - 0.5);
      const double r = std::hypot(x - center.x, y - center.y);
      if (r > extent) {
        v = 0.0;
      } else if (r > 0.85 * extent) {
        v *= (extent - r) / (0.15 * extent);
      }
      f[x] = static_cast<float>(v);
    }
  }
  cv::Mat sorted = field.reshape(1, 1).clone();
  cv::sort(sorted, sorted, cv::SORT_EVERY_ROW | cv::SORT_ASCENDING);
  const int cut = std::clamp(static_cast<int>((1.0 - options.tissue_fraction) * sorted.cols), 0,
                             sorted.cols - 1);
  const float threshold = std::max(sorted.at<float>(0, cut), 1e-3f);
  cv::Mat mask = field > threshold;

  // Stroma layer.
  const cv::Mat tone = value_noise(size, 48.0, rng);
  const cv::Mat fiber = value_noise(size, 5.0, rng);
  const cv::Mat cellularity = value_noise(size, dim / 5.0, rng);
  cv::Mat layer(size, CV_8UC3);
  for (int y = 0; y < size.height; ++y) {
    auto* px = layer.ptr<std::uint8_t>(y);
    const auto* t = tone.ptr<float>(y);
    const auto* fb = fiber.ptr<float>(y);
    for (int x = 0; x < size.width; ++x) {
      const double shade = 0.80 + 0.30 * t[x] + 0.12 * (fb[x] - 0.5);
      px[3 * x + 0] = cv::saturate_cast<std::uint8_t>(232.0 * shade);
      px[3 * x + 1] = cv::saturate_cast<std::uint8_t>(150.0 * shade);
      px[3 * x + 2] = cv::saturate_cast<std::uint8_t>(196.0 * shade);
    }
  }

  // Lumens: white holes with a pale rim.
  const int lumen_count = 4 + static_cast<int>(rng() % 7);
  for (int i = 0; i < lumen_count; ++i) {
    const double r = 0.8 * extent * std::sqrt(uniform(rng, 0.0, 1.0));
    const double phi = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    const cv::Point c(static_cast<int>(center.x + r * std::cos(phi)),
                      static_cast<int>(center.y + r * std::sin(phi)));
    const cv::Size axes(static_cast<int>(uniform(rng, 0.006, 0.03) * dim),
                        static_cast<int>(uniform(rng, 0.006, 0.03) * dim));
    const double angle = uniform(rng, 0.0, 180.0);
    cv::ellipse(layer, c, axes + cv::Size(4, 4), angle, 0, 360, cv::Scalar(240, 200, 225), -1,
                cv::LINE_AA);
    cv::ellipse(layer, c, axes, angle, 0, 360, cv::Scalar(250, 248, 250), -1, cv::LINE_AA);
  }

  // Nuclei, denser where cellularity is high.
  const double tissue_px = cv::countNonZero(mask);
  const int nuclei_target = static_cast<int>(options.nuclei_per_kpx * tissue_px / 1000.0);
  int placed = 0;
  for (int attempt = 0; placed < nuclei_target && attempt < 20 * nuclei_target + 100; ++attempt) {
    const int x = static_cast<int>(rng() % static_cast<std::uint64_t>(size.width));
    const int y = static_cast<int>(rng() % static_cast<std::uint64_t>(size.height));
    const double accept = 0.15 + 0.85 * cellularity.at<float>(y, x);
    if (!mask.at<std::uint8_t>(y, x) || uniform(rng, 0.0, 1.0) > accept) continue;
    const double radius = uniform(rng, 2.0, 4.5);
    const cv::Size axes(std::max(1, static_cast<int>(std::lround(radius))),
                        std::max(1, static_cast<int>(std::lround(radius * uniform(rng, 0.6, 1.0)))));
    const double darkness = uniform(rng, 0.0, 1.0);
    const cv::Scalar color(70 + 50 * darkness, 35 + 35 * darkness, 120 + 40 * darkness);
    cv::ellipse(layer, {x, y}, axes, uniform(rng, 0.0, 180.0), 0, 360, color, -1, cv::LINE_AA);
    ++placed;
  }

  // Composite onto a white background with a soft tissue edge.
  cv::Mat alpha;
  mask.convertTo(alpha, CV_32FC1, 1.0 / 255.0);
  cv::GaussianBlur(alpha, alpha, {0, 0}, 1.5);
  cv::Mat out(size, CV_8UC3);
  std::normal_distribution<double> grain(0.0, 2.5);
  for (int y = 0; y < size.height; ++y) {
    const auto* a = alpha.ptr<float>(y);
    const auto* l = layer.ptr<std::uint8_t>(y);
    auto* o = out.ptr<std::uint8_t>(y);
    for (int x = 0; x < size.width; ++x) {
      const double g = grain(rng);
      for (int c = 0; c < 3; ++c) {
        const double background = 246.0;
        const double v = a[x] * l[3 * x + c] + (1.0 - a[x]) * background + g;
        o[3 * x + c] = cv::saturate_cast<std::uint8_t>(std::lround(v));
      }
    }
  }
  return out;
}

DeformationSpec random_deformation_spec(const CorpusOptions& options, std::uint64_t seed) {
  std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ull + 17);
  DeformationSpec spec;
  spec.seed = seed;
  spec.levels = options.levels;

  const double c = (options.size - 1) / 2.0;
  const double degrees =
      options.rotation_deg < 0.0 ? uniform(rng, 0.0, 360.0) : options.rotation_deg;
  const double sx = 1.0 + uniform(rng, -options.scale_jitter, options.scale_jitter);
  const double sy = 1.0 + uniform(rng, -options.scale_jitter, options.scale_jitter);
  const double shear = uniform(rng, -0.01, 0.01);
  const double tx = uniform(rng, -options.max_translation_px, options.max_translation_px);
  const double ty = uniform(rng, -options.max_translation_px, options.max_translation_px);
  const AffineTransform2D linear({sx, shear, 0.0, 0.0, sy, 0.0});
  const AffineTransform2D to_origin = AffineTransform2D::translation(-c, -c);
  const AffineTransform2D back = AffineTransform2D::translation(c + tx, c + ty);
  spec.global_affine = back.compose(AffineTransform2D::rotation(degrees * std::numbers::pi / 180.0))
                           .compose(linear)
                           .compose(to_origin);

  spec.bump_count = options.bump_count;
  // Even seeds use the full amplitude so every corpus has a fixed-amplitude subset.
  spec.bump_amplitude_px = seed % 2 == 0
                               ? options.bump_amplitude_px
                               : uniform(rng, 0.5 * options.bump_amplitude_px, options.bump_amplitude_px);
  spec.bump_sigma_px = uniform(rng, options.bump_sigma_min, options.bump_sigma_max);
  if (uniform(rng, 0.0, 1.0) < options.tear_probability) {
    spec.tear_count = 1;
    const double magnitude = uniform(rng, options.tear_offset_min, options.tear_offset_max);
    spec.tear_offset_px = rng() % 2 == 0 ? magnitude : -magnitude;
  }
  for (int ch = 0; ch < 3; ++ch) {
    spec.color_jitter.gain[ch] = uniform(rng, 0.92, 1.08);
    spec.color_jitter.bias[ch] = uniform(rng, -8.0, 8.0);
  }
  return spec;
}

void to_json(nlohmann::json& j, const DeformationSpec& spec) {
  const auto& m = spec.global_affine.coefficients();
  j = nlohmann::json{{"affine", std::vector<double>(m.begin(), m.end())},
                     {"bump_count", spec.bump_count},
                     {"bump_amplitude_px", spec.bump_amplitude_px},
                     {"bump_sigma_px", spec.bump_sigma_px},
                     {"tear_count", spec.tear_count},
                     {"tear_offset_px", spec.tear_offset_px},
                     {"color_gain", spec.color_jitter.gain},
                     {"color_bias", spec.color_jitter.bias},
                     {"seed", spec.seed},
                     {"levels", spec.levels},
                     {"source_mpp", spec.source_mpp},
                     {"target_mpp", spec.target_mpp}};
}

void from_json(const nlohmann::json& j, DeformationSpec& spec) {
  DeformationSpec out;
  if (j.contains("affine")) {
    const auto m = j.at("affine").get<std::vector<double>>();
    if (m.size() != 6) throw Error(ErrorCode::kParseError, "affine needs 6 coefficients");
    std::array<double, 6> a{};
    std::copy(m.begin(), m.end(), a.begin());
    if (std::abs(a[0] * a[4] - a[1] * a[3]) < 1e-6) {
      throw Error(ErrorCode::kInvalidArgument, "degenerate global affine");
    }
    out.global_affine = AffineTransform2D(a);
  }
  out.bump_count = j.value("bump_count", 0);
  out.bump_amplitude_px = j.value("bump_amplitude_px", 0.0);
  out.bump_sigma_px = j.value("bump_sigma_px", 200.0);
  out.tear_count = j.value("tear_count", 0);
  out.tear_offset_px = j.value("tear_offset_px", 0.0);
  out.color_jitter.gain = j.value("color_gain", out.color_jitter.gain);
  out.color_jitter.bias = j.value("color_bias", out.color_jitter.bias);
  out.seed = j.value("seed", std::uint64_t{0});
  out.levels = j.value("levels", 4);
  out.source_mpp = j.value("source_mpp", 0.25);
  out.target_mpp = j.value("target_mpp", 0.25);
  spec = out;
}

void to_json(nlohmann::json& j, const CorpusOptions& o) {
  j = nlohmann::json{{"size", o.size},
                     {"levels", o.levels},
                     {"bump_count", o.bump_count},
                     {"bump_amplitude_px", o.bump_amplitude_px},
                     {"bump_sigma_min", o.bump_sigma_min},
                     {"bump_sigma_max", o.bump_sigma_max},
                     {"tear_probability", o.tear_probability},
                     {"tear_offset_min", o.tear_offset_min},
                     {"tear_offset_max", o.tear_offset_max},
                     {"max_translation_px", o.max_translation_px},
                     {"rotation_deg", o.rotation_deg},
                     {"scale_jitter", o.scale_jitter}};
}

void from_json(const nlohmann::json& j, CorpusOptions& o) {
  CorpusOptions d;
  o.size = j.value("size", d.size);
  o.levels = j.value("levels", d.levels);
  o.bump_count = j.value("bump_count", d.bump_count);
  o.bump_amplitude_px = j.value("bump_amplitude_px", d.bump_amplitude_px);
  o.bump_sigma_min = j.value("bump_sigma_min", d.bump_sigma_min);
  o.bump_sigma_max = j.value("bump_sigma_max", d.bump_sigma_max);
  o.tear_probability = j.value("tear_probability", d.tear_probability);
  o.tear_offset_min = j.value("tear_offset_min", d.tear_offset_min);
  o.tear_offset_max = j.value("tear_offset_max", d.tear_offset_max);
  o.max_translation_px = j.value("max_translation_px", d.max_translation_px);
  o.rotation_deg = j.value("rotation_deg", d.rotation_deg);
  o.scale_jitter = j.value("scale_jitter", d.scale_jitter);
}

}  // namespace slidewarp

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

#include "slidewarp/pyramid.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "slidewarp/error.hpp"

namespace slidewarp {

namespace {

constexpr std::string_view kManifestName = "manifest.json";

cv::Size level_size(cv::Size base, double factor) {
  return {static_cast<int>(std::lround(base.width / factor)),
          static_cast<int>(std::lround(base.height / factor))};
}

template <typename Pixel, int Channels>
void sample_bilinear(const cv::Mat& src, const AffineTransform2D& to_src, cv::Mat& out) {
  const int w = src.cols;
  const int h = src.rows;
  const Point origin = to_src.apply({0.0, 0.0});
  const Point du = to_src.apply_linear({1.0, 0.0});
  const Point dv = to_src.apply_linear({0.0, 1.0});

  auto fetch = [&](int x, int y, int c) -> float {
    if (x < 0 || y < 0 || x >= w || y >= h) return 255.0f;
    return static_cast<float>(src.ptr<Pixel>(y)[x * Channels + c]);
  };

  for (int v = 0; v < out.rows; ++v) {
    auto* row = out.ptr<std::conditional_t<Channels == 1, float, std::uint8_t>>(v);
    Point p{origin.x + v * dv.x, origin.y + v * dv.y};
    for (int u = 0; u < out.cols; ++u, p.x += du.x, p.y += du.y) {
      const double fx = std::floor(p.x);
      const double fy = std::floor(p.y);
      const int x0 = static_cast<int>(fx);
      const int y0 = static_cast<int>(fy);
      const float ax = static_cast<float>(p.x - fx);
      const float ay = static_cast<float>(p.y - fy);
      const bool inside = x0 >= 0 && y0 >= 0 && x0 + 1 < w && y0 + 1 < h;
      for (int c = 0; c < Channels; ++c) {
        float v00, v10, v01, v11;
        if (inside) {
          const Pixel* r0 = src.ptr<Pixel>(y0) + x0 * Channels + c;
          const Pixel* r1 = src.ptr<Pixel>(y0 + 1) + x0 * Channels + c;
          v00 = r0[0];
          v10 = r0[Channels];
          v01 = r1[0];
          v11 = r1[Channels];
        } else {
          v00 = fetch(x0, y0, c);
          v10 = fetch(x0 + 1, y0, c);
          v01 = fetch(x0, y0 + 1, c);
          v11 = fetch(x0 + 1, y0 + 1, c);
        }
        // Exact when the weights vanish so integer-aligned reads copy pixels.
        float top = ax == 0.0f ? v00 : v00 + ax * (v10 - v00);
        float bottom = ax == 0.0f ? v01 : v01 + ax * (v11 - v01);
        float value = ay == 0.0f ? top : top + ay * (bottom - top);
        if constexpr (Channels == 1) {
          row[u] = value;
        } else {
          row[u * Channels + c] = cv::saturate_cast<std::uint8_t>(value);
        }
      }
    }
  }
}

}  // namespace

PyramidalImage::PyramidalImage(std::vector<cv::Mat> levels, std::vector<double> downsample_factors,
                               double microns_per_pixel)
    : levels_(std::move(levels)), downsample_(std::move(downsample_factors)), mpp_(microns_per_pixel) {
  if (levels_.empty() || levels_.size() != downsample_.size()) {
    throw Error(ErrorCode::kInvalidArgument, "pyramid needs one downsample factor per level");
  }
  if (!(mpp_ > 0.0)) throw Error(ErrorCode::kInvalidArgument, "microns_per_pixel must be positive");
  if (downsample_.front() != 1.0) {
    throw Error(ErrorCode::kInvalidArgument, "level 0 downsample factor must be 1.0");
  }
  const cv::Size base = levels_.front().size();
  for (std::size_t i = 0; i < levels_.size(); ++i) {
    const cv::Mat& lvl = levels_[i];
    if (lvl.empty() || lvl.type() != CV_8UC3) {
      throw Error(ErrorCode::kInvalidArgument, "pyramid levels must be non-empty RGB8 rasters");
    }
    if (i > 0 && !(downsample_[i] > downsample_[i - 1])) {
      throw Error(ErrorCode::kInvalidArgument, "downsample factors must be strictly increasing");
    }
    if (lvl.size() != level_size(base, downsample_[i])) {
      throw Error(ErrorCode::kInvalidArgument,
                  "level " + std::to_string(i) + " dimensions do not match its downsample factor");
    }
    gray_.push_back(to_gray(lvl));
  }
}

int PyramidalImage::level_for_downsample(double factor) const {
  int best = 0;
  for (int i = 0; i < level_count(); ++i) {
    if (downsample_[i] <= factor * (1.0 + 1e-9)) best = i;
  }
  return best;
}

cv::Mat to_gray(const cv::Mat& rgb) {
  if (rgb.type() == CV_8UC1) return rgb;
  cv::Mat gray;
  cv::cvtColor(rgb, gray, cv::COLOR_RGB2GRAY);
  return gray;
}

PyramidalImage build_pyramid(const cv::Mat& base_rgb, int level_count, double microns_per_pixel) {
  if (level_count < 1) throw Error(ErrorCode::kInvalidArgument, "level_count must be >= 1");
  if (base_rgb.empty()) throw Error(ErrorCode::kInvalidArgument, "base raster is empty");
  if (base_rgb.type() != CV_8UC3) throw Error(ErrorCode::kInvalidArgument, "base raster must be RGB8");

  std::vector<cv::Mat> levels;
  std::vector<double> factors;
  for (int level = 0; level < level_count; ++level) {
    const double factor = std::ldexp(1.0, level);
    const cv::Size size = level_size(base_rgb.size(), factor);
    if (size.width < 1 || size.height < 1) {
      throw Error(ErrorCode::kInvalidArgument,
                  "level " + std::to_string(level) + " would be smaller than 1x1");
    }
    cv::Mat lvl;
    if (level == 0) {
      lvl = base_rgb.clone();
    } else {
      cv::resize(base_rgb, lvl, size, 0, 0, cv::INTER_AREA);
    }
    levels.push_back(std::move(lvl));
    factors.push_back(factor);
  }
  return PyramidalImage(std::move(levels), std::move(factors), microns_per_pixel);
}

cv::Mat read_region(const PyramidalImage& img, const Region& region) {
  if (region.level < 0 || region.level >= img.level_count()) {
    throw Error(ErrorCode::kInvalidArgument, "region level out of range");
  }
  if (region.size.width < 1 || region.size.height < 1) {
    throw Error(ErrorCode::kInvalidArgument, "region size must be positive");
  }
  const cv::Mat& src = img.level(region.level);
  const Point c = to_level(region.center, img.downsample(region.level));
  const int x0 = static_cast<int>(std::floor(c.x - (region.size.width - 1) / 2.0 + 0.5));
  const int y0 = static_cast<int>(std::floor(c.y - (region.size.height - 1) / 2.0 + 0.5));

  cv::Mat out(region.size, CV_8UC3, cv::Scalar(255, 255, 255));
  const cv::Rect wanted(x0, y0, region.size.width, region.size.height);
  const cv::Rect valid = wanted & cv::Rect(0, 0, src.cols, src.rows);
  if (valid.area() > 0) {
    src(valid).copyTo(out(cv::Rect(valid.x - x0, valid.y - y0, valid.width, valid.height)));
  }
  return out;
}

cv::Mat sample_gray_patch(const cv::Mat& gray_level, const AffineTransform2D& patch_to_level,
                          cv::Size size) {
  CV_Assert(gray_level.type() == CV_8UC1);
  cv::Mat out(size, CV_32FC1);
  sample_bilinear<std::uint8_t, 1>(gray_level, patch_to_level, out);
  return out;
}

cv::Mat sample_rgb_patch(const cv::Mat& rgb_level, const AffineTransform2D& patch_to_level,
                         cv::Size size) {
  CV_Assert(rgb_level.type() == CV_8UC3);
  cv::Mat out(size, CV_8UC3);
  sample_bilinear<std::uint8_t, 3>(rgb_level, patch_to_level, out);
  return out;
}

cv::Mat thumbnail(const PyramidalImage& img, int max_dim) {
  if (max_dim < 16) throw Error(ErrorCode::kInvalidArgument, "thumbnail max_dim must be >= 16");
  int chosen = 0;
  for (int i = 0; i < img.level_count(); ++i) {
    const cv::Mat& lvl = img.level(i);
    if (std::max(lvl.cols, lvl.rows) >= max_dim) chosen = i;
  }
  const cv::Mat& src = img.level(chosen);
  const double scale = static_cast<double>(max_dim) / std::max(src.cols, src.rows);
  cv::Size size;
  if (src.cols >= src.rows) {
    size = {max_dim, std::max(1, static_cast<int>(std::lround(src.rows * scale)))};
  } else {
    size = {std::max(1, static_cast<int>(std::lround(src.cols * scale))), max_dim};
  }
  if (size == src.size()) return src.clone();
  cv::Mat out;
  cv::resize(src, out, size, 0, 0, scale < 1.0 ? cv::INTER_AREA : cv::INTER_LINEAR);
  return out;
}

cv::Mat read_png_rgb(const std::filesystem::path& file) {
  cv::Mat bgr = cv::imread(file.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw Error(ErrorCode::kIoError, "cannot read image " + file.string());
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  return rgb;
}

void write_png_rgb(const cv::Mat& rgb, const std::filesystem::path& file) {
  cv::Mat bgr;
  if (rgb.channels() == 3) {
    cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  } else {
    bgr = rgb;
  }
  if (!cv::imwrite(file.string(), bgr, {cv::IMWRITE_PNG_COMPRESSION, 3})) {
    throw Error(ErrorCode::kIoError, "cannot write image " + file.string());
  }
}

void save_pyramid(const PyramidalImage& img, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIoError, "cannot create " + dir.string() + ": " + ec.message());

  nlohmann::json manifest;
  manifest["mpp"] = img.microns_per_pixel();
  manifest["levels"] = nlohmann::json::array();
  for (int i = 0; i < img.level_count(); ++i) {
    const std::string name = "level_" + std::to_string(i) + ".png";
    write_png_rgb(img.level(i), dir / name);
    manifest["levels"].push_back({{"file", name},
                                  {"downsample", img.downsample(i)},
                                  {"width", img.level(i).cols},
                                  {"height", img.level(i).rows}});
  }
  std::ofstream out(dir / kManifestName);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write manifest in " + dir.string());
  out << manifest.dump(2) << '\n';
}

PyramidalImage load_pyramid(const std::filesystem::path& dir) {
  std::ifstream in(dir / kManifestName);
  if (!in) throw Error(ErrorCode::kIoError, "no manifest.json in " + dir.string());

  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("manifest: ") + e.what());
  }

  std::vector<cv::Mat> levels;
  std::vector<double> factors;
  double mpp = 0.0;
  try {
    mpp = manifest.at("mpp").get<double>();
    for (const auto& entry : manifest.at("levels")) {
      cv::Mat lvl = read_png_rgb(dir / entry.at("file").get<std::string>());
      if (lvl.cols != entry.at("width").get<int>() || lvl.rows != entry.at("height").get<int>()) {
        throw Error(ErrorCode::kParseError, "level dimensions disagree with manifest");
      }
      levels.push_back(std::move(lvl));
      factors.push_back(entry.at("downsample").get<double>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("manifest: ") + e.what());
  }
  return PyramidalImage(std::move(levels), std::move(factors), mpp);
}

}  // namespace slidewarp

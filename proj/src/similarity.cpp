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

#include "slidewarp/similarity.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <vector>

#include <opencv2/core.hpp>

#include "slidewarp/error.hpp"

namespace slidewarp {

namespace {

bool is_constant(const cv::Mat& m) {
  double lo = 0.0, hi = 0.0;
  cv::minMaxLoc(m, &lo, &hi);
  return lo == hi;
}

int unwrap(int index, int n) { return index >= (n + 1) / 2 ? index - n : index; }

/// Bin index per pixel, row-major.
std::vector<int> bin_indices(const cv::Mat& img, int bins) {
  cv::Mat f;
  img.convertTo(f, CV_64F);
  std::vector<int> out;
  out.reserve(f.total());
  for (int y = 0; y < f.rows; ++y) {
    const double* row = f.ptr<double>(y);
    for (int x = 0; x < f.cols; ++x) {
      const double v = std::clamp(row[x], 0.0, 255.0);
      out.push_back(std::min(bins - 1, static_cast<int>(v * bins / 256.0)));
    }
  }
  return out;
}

double entropy(const std::vector<double>& counts, double total) {
  double h = 0.0;
  for (double c : counts) {
    if (c <= 0.0) continue;
    const double p = c / total;
    h -= p * std::log(p);
  }
  return h;
}

}  // namespace

cv::Point phase_cross_correlation(const cv::Mat& a, const cv::Mat& b) {
  if (a.empty() || a.size() != b.size() || a.channels() != 1 || b.channels() != 1) {
    throw Error(ErrorCode::kInvalidArgument, "phase correlation needs equal-size single-channel inputs");
  }
  if (is_constant(a) || is_constant(b)) throw Error(ErrorCode::kFlatPatch, "constant patch");

  cv::Mat fa, fb;
  a.convertTo(fa, CV_64F);
  b.convertTo(fb, CV_64F);
  cv::dft(fa, fa, cv::DFT_COMPLEX_OUTPUT);
  cv::dft(fb, fb, cv::DFT_COMPLEX_OUTPUT);

  // R = Fb * conj(Fa) / |Fb * conj(Fa)|
  cv::Mat r(fa.size(), CV_64FC2);
  for (int y = 0; y < r.rows; ++y) {
    const auto* pa = fa.ptr<std::complex<double>>(y);
    const auto* pb = fb.ptr<std::complex<double>>(y);
    auto* pr = r.ptr<std::complex<double>>(y);
    for (int x = 0; x < r.cols; ++x) {
      const std::complex<double> v = pb[x] * std::conj(pa[x]);
      pr[x] = v / std::max(std::abs(v), 1e-12);
    }
  }
  cv::dft(r, r, cv::DFT_INVERSE | cv::DFT_SCALE | cv::DFT_COMPLEX_OUTPUT);

  int best_x = 0, best_y = 0;
  double best = -std::numeric_limits<double>::infinity();
  for (int y = 0; y < r.rows; ++y) {
    const auto* pr = r.ptr<std::complex<double>>(y);
    for (int x = 0; x < r.cols; ++x) {
      if (pr[x].real() > best) {
        best = pr[x].real();
        best_x = x;
        best_y = y;
      }
    }
  }
  return {unwrap(best_x, r.cols), unwrap(best_y, r.rows)};
}

double nmi(const cv::Mat& a, const cv::Mat& b, int bins) {
  if (a.empty() || a.size() != b.size() || a.channels() != 1 || b.channels() != 1) {
    throw Error(ErrorCode::kInvalidArgument, "NMI needs equal-size single-channel inputs");
  }
  if (bins < 2) throw Error(ErrorCode::kInvalidArgument, "NMI needs at least 2 bins");

  const std::vector<int> ia = bin_indices(a, bins);
  const std::vector<int> ib = bin_indices(b, bins);
  std::vector<double> ha(bins, 0.0), hb(bins, 0.0), hab(static_cast<std::size_t>(bins) * bins, 0.0);
  for (std::size_t i = 0; i < ia.size(); ++i) {
    ha[ia[i]] += 1.0;
    hb[ib[i]] += 1.0;
    hab[static_cast<std::size_t>(ia[i]) * bins + ib[i]] += 1.0;
  }
  const double n = static_cast<double>(ia.size());
  const double ea = entropy(ha, n);
  const double eb = entropy(hb, n);
  if (ea <= 0.0 || eb <= 0.0) return 0.0;
  const double eab = entropy(hab, n);
  const double mi = ea + eb - eab;
  return std::clamp(2.0 * mi / (ea + eb), 0.0, 1.0);
}

}  // namespace slidewarp

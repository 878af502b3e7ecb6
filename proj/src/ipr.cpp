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

#include "slidewarp/ipr.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <opencv2/imgproc.hpp>

#include "slidewarp/error.hpp"
#include "slidewarp/landmarking.hpp"
#include "slidewarp/similarity.hpp"
#include "slidewarp/stats.hpp"

namespace slidewarp {

namespace {

using Vector6 = Eigen::Matrix<double, 6, 1>;
using Matrix6 = Eigen::Matrix<double, 6, 6>;

/// Level-0 coordinate -> coordinate on a level with downsample factor f.
AffineTransform2D to_level_transform(double f) {
  return AffineTransform2D({1.0 / f, 0.0, 0.5 / f - 0.5, 0.0, 1.0 / f, 0.5 / f - 0.5});
}

/// Patch pixel -> level-0 coordinate for a patch of `size` centred on `p`
/// whose pixels are `f` level-0 pixels apart.
AffineTransform2D patch_to_level0(Point p, double f, cv::Size size) {
  const double cx = (size.width - 1) / 2.0;
  const double cy = (size.height - 1) / 2.0;
  return AffineTransform2D({f, 0.0, p.x - f * cx, 0.0, f, p.y - f * cy});
}

/// Gaussian sigma=1 prefilter followed by zero-mean unit-variance scaling.
cv::Mat prepare(const cv::Mat& patch) {
  cv::Mat f;
  patch.convertTo(f, CV_32F);
  cv::GaussianBlur(f, f, cv::Size(0, 0), 1.0, 1.0, cv::BORDER_REFLECT);
  cv::Scalar mean, stddev;
  cv::meanStdDev(f, mean, stddev);
  const double sd = stddev[0] > 1e-9 ? stddev[0] : 1.0;
  f.convertTo(f, CV_32F, 1.0 / sd, -mean[0] / sd);
  return f;
}

inline float bilinear(const cv::Mat& img, double x, double y) {
  const int x0 = std::min(static_cast<int>(x), img.cols - 2);
  const int y0 = std::min(static_cast<int>(y), img.rows - 2);
  const float fx = static_cast<float>(x - x0);
  const float fy = static_cast<float>(y - y0);
  const float* r0 = img.ptr<float>(y0);
  const float* r1 = img.ptr<float>(y0 + 1);
  const float top = r0[x0] + fx * (r0[x0 + 1] - r0[x0]);
  const float bottom = r1[x0] + fx * (r1[x0 + 1] - r1[x0]);
  return top + fy * (bottom - top);
}

enum class GnOutcome { kConverged, kMaxIterations, kSingular, kDiverged };

/// Inverse-compositional Gauss-Newton on prepared patches of equal size.
///
/// `warp` maps centred template coordinates to centred image coordinates and
/// is refined in place. The update W(dp) has linear part I + [dp0 dp1; dp2 dp3]
/// / s and translation (dp4, dp5), with s the half patch size so that all six
/// parameters are in pixels at the patch border.
GnOutcome gauss_newton(const cv::Mat& tmpl, const cv::Mat& image, AffineTransform2D& warp,
                       int max_iters, double tolerance, double weight_sigma, int& iterations) {
  const int w = tmpl.cols;
  const int h = tmpl.rows;
  const double cx = (w - 1) / 2.0;
  const double cy = (h - 1) / 2.0;
  const double s = std::max(w, h) / 2.0;

  cv::Mat gx, gy;
  cv::Sobel(tmpl, gx, CV_32F, 1, 0, 1, 0.5);
  cv::Sobel(tmpl, gy, CV_32F, 0, 1, 1, 0.5);

  // Optional Gaussian emphasis on the patch centre.
  std::vector<double> wx(w, 1.0), wy(h, 1.0);
  if (weight_sigma > 0.0) {
    for (int x = 0; x < w; ++x) wx[x] = std::exp(-0.5 * (x - cx) * (x - cx) / (weight_sigma * weight_sigma));
    for (int y = 0; y < h; ++y) wy[y] = std::exp(-0.5 * (y - cy) * (y - cy) / (weight_sigma * weight_sigma));
  }

  const std::size_t interior = static_cast<std::size_t>(w - 2) * (h - 2);
  for (int it = 0; it < max_iters; ++it) {
    iterations = it + 1;
    Matrix6 hessian = Matrix6::Zero();
    Vector6 rhs = Vector6::Zero();
    std::size_t used = 0;
    const auto& m = warp.coefficients();

    for (int y = 1; y < h - 1; ++y) {
      const float* trow = tmpl.ptr<float>(y);
      const float* gxrow = gx.ptr<float>(y);
      const float* gyrow = gy.ptr<float>(y);
      const double yc = y - cy;
      for (int x = 1; x < w - 1; ++x) {
        const double xc = x - cx;
        const double qx = m[0] * xc + m[1] * yc + m[2] + cx;
        const double qy = m[3] * xc + m[4] * yc + m[5] + cy;
        if (qx < 0.0 || qy < 0.0 || qx > w - 1 || qy > h - 1) continue;
        const double err = bilinear(image, qx, qy) - trow[x];
        const double xn = xc / s;
        const double yn = yc / s;
        Vector6 sd;
        sd << gxrow[x] * xn, gxrow[x] * yn, gyrow[x] * xn, gyrow[x] * yn, gxrow[x], gyrow[x];
        const double weight = wx[x] * wy[y];
        hessian.selfadjointView<Eigen::Lower>().rankUpdate(sd, weight);
        rhs += sd * (weight * err);
        ++used;
      }
    }
    if (used < interior / 4) return GnOutcome::kDiverged;

    hessian = hessian.selfadjointView<Eigen::Lower>();
    const Eigen::SelfAdjointEigenSolver<Matrix6> eig(hessian, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues()(0);
    const double hi = eig.eigenvalues()(5);
    if (!(hi > 0.0) || lo <= 1e-10 * hi) return GnOutcome::kSingular;
    const Vector6 dp = hessian.ldlt().solve(rhs);
    if (!dp.allFinite()) return GnOutcome::kSingular;

    AffineTransform2D delta;
    try {
      delta = AffineTransform2D({1.0 + dp(0) / s, dp(1) / s, dp(4), dp(2) / s, 1.0 + dp(3) / s, dp(5)});
      warp = warp.compose(delta.inverse());
    } catch (const Error&) {
      return GnOutcome::kSingular;
    }

    double shift = 0.0;
    for (const Point& corner : {Point{-cx, -cy}, Point{cx, -cy}, Point{-cx, cy}, Point{cx, cy}}) {
      shift = std::max(shift, distance(delta.apply(corner), corner));
    }
    if (shift < tolerance) return GnOutcome::kConverged;
  }
  return GnOutcome::kMaxIterations;
}

bool drifted(const AffineTransform2D& warp, const AffineTransform2D& start, double max_shift) {
  const auto& m = warp.coefficients();
  const auto& s = start.coefficients();
  if (std::hypot(m[2] - s[2], m[5] - s[5]) > max_shift) return true;
  return std::abs(m[0] - 1.0) > 0.5 || std::abs(m[1]) > 0.5 || std::abs(m[3]) > 0.5 ||
         std::abs(m[4] - 1.0) > 0.5;
}

}  // namespace

std::string_view to_string(LandmarkStatus status) {
  switch (status) {
    case LandmarkStatus::kAccepted: return "accepted";
    case LandmarkStatus::kRejectedLowNmi: return "rejected_low_nmi";
    case LandmarkStatus::kFailed: return "failed";
  }
  return "failed";
}

LandmarkStatus landmark_status_from_string(std::string_view name) {
  if (name == "accepted") return LandmarkStatus::kAccepted;
  if (name == "rejected_low_nmi") return LandmarkStatus::kRejectedLowNmi;
  if (name == "failed") return LandmarkStatus::kFailed;
  throw Error(ErrorCode::kParseError, "unknown landmark status '" + std::string(name) + "'");
}

void validate(const IprConfig& cfg) {
  if (cfg.patch_size_px < 64) throw Error(ErrorCode::kInvalidArgument, "patch_size_px must be >= 64");
  if (!(cfg.nmi_threshold > 0.0 && cfg.nmi_threshold < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "nmi_threshold must lie in (0, 1)");
  }
  if (cfg.nmi_bins < 2) throw Error(ErrorCode::kInvalidArgument, "nmi_bins must be >= 2");
  if (cfg.max_affine_iters < 1) throw Error(ErrorCode::kInvalidArgument, "max_affine_iters must be >= 1");
  if (cfg.start_level < IprConfig::kAutoLevel) throw Error(ErrorCode::kInvalidArgument, "invalid start_level");
}

PatchRegistration register_patch(const cv::Mat& src_patch, const cv::Mat& tgt_patch, int max_iters,
                                 double weight_sigma) {
  if (src_patch.empty() || src_patch.size() != tgt_patch.size() || src_patch.channels() != 1 ||
      tgt_patch.channels() != 1) {
    throw Error(ErrorCode::kInvalidArgument, "patches must be non-empty, single-channel and equal-sized");
  }
  if (src_patch.cols < 16 || src_patch.rows < 16) {
    throw Error(ErrorCode::kInvalidArgument, "patches must be at least 16x16");
  }

  // Stage 1: windowed phase correlation for the integer translation.
  cv::Mat a, b, window;
  src_patch.convertTo(a, CV_64F);
  tgt_patch.convertTo(b, CV_64F);
  cv::createHanningWindow(window, a.size(), CV_64F);
  a = (a - cv::mean(a)[0]).mul(window);
  b = (b - cv::mean(b)[0]).mul(window);
  const cv::Point shift = phase_cross_correlation(a, b);  // throws kFlatPatch

  const AffineTransform2D initial = AffineTransform2D::translation(shift.x, shift.y);
  const double cx = (src_patch.cols - 1) / 2.0;
  const double cy = (src_patch.rows - 1) / 2.0;
  const AffineTransform2D to_centred = AffineTransform2D::translation(-cx, -cy);
  const AffineTransform2D from_centred = AffineTransform2D::translation(cx, cy);

  PatchRegistration out;
  out.correction = initial;

  // Stage 2: Gauss-Newton, half resolution first when the patch allows it.
  const cv::Mat tmpl_full = prepare(src_patch);
  const cv::Mat image_full = prepare(tgt_patch);
  const double max_shift = std::max(src_patch.cols, src_patch.rows) / 4.0;
  AffineTransform2D warp = initial;  // centred coordinates; a translation is frame-independent
  int total_iters = 0;

  if (std::min(src_patch.cols, src_patch.rows) >= 128) {
    cv::Mat half_src, half_tgt;
    cv::resize(src_patch, half_src, cv::Size(src_patch.cols / 2, src_patch.rows / 2), 0, 0, cv::INTER_AREA);
    cv::resize(tgt_patch, half_tgt, half_src.size(), 0, 0, cv::INTER_AREA);
    // Centred half-resolution coordinates are exactly half the full ones
    // when the patch size is even.
    const auto& m = warp.coefficients();
    AffineTransform2D half({m[0], m[1], m[2] / 2.0, m[3], m[4], m[5] / 2.0});
    int iters = 0;
    const GnOutcome outcome = gauss_newton(prepare(half_src), prepare(half_tgt), half,
                                           max_iters, 0.005, weight_sigma / 2.0, iters);
    total_iters += iters;
    const auto& hm = half.coefficients();
    const AffineTransform2D candidate({hm[0], hm[1], 2.0 * hm[2], hm[3], hm[4], 2.0 * hm[5]});
    if ((outcome == GnOutcome::kConverged || outcome == GnOutcome::kMaxIterations) &&
        !drifted(candidate, initial, max_shift)) {
      warp = candidate;
    }
  }

  int iters = 0;
  const GnOutcome outcome = gauss_newton(tmpl_full, image_full, warp, max_iters, 0.01, weight_sigma, iters);
  total_iters += iters;
  out.iterations = total_iters;
  if (outcome == GnOutcome::kSingular || outcome == GnOutcome::kDiverged || drifted(warp, initial, max_shift)) {
    out.converged = false;
    return out;
  }
  out.converged = outcome == GnOutcome::kConverged;
  out.correction = from_centred.compose(warp).compose(to_centred);
  return out;
}

int auto_start_level(const PyramidalImage& source, const cv::Rect2d& tissue_bbox, int patch_size_px) {
  const double quarter = tissue_bbox.area() / 4.0;
  for (int level = 0; level < source.level_count(); ++level) {
    const double side = patch_size_px * source.downsample(level);
    if (side * side >= quarter) return level;
  }
  return source.level_count() - 1;
}

double score_landmark(const PyramidalImage& source, const PyramidalImage& target, Point source_pt,
                      const AffineTransform2D& source_to_target, const IprConfig& cfg) {
  const cv::Size size(cfg.patch_size_px, cfg.patch_size_px);
  const AffineTransform2D p0 = patch_to_level0(source_pt, 1.0, size);
  const cv::Mat src = sample_gray_patch(source.gray_level(0), p0, size);
  const double scale = std::sqrt(std::abs(source_to_target.determinant()));
  const int lt = target.level_for_downsample(scale * (1.0 + 1e-9));
  const AffineTransform2D q = to_level_transform(target.downsample(lt)).compose(source_to_target).compose(p0);
  const cv::Mat tgt = sample_gray_patch(target.gray_level(lt), q, size);
  return nmi(src, tgt, cfg.nmi_bins);
}

Landmark iterative_patch_registration(const PyramidalImage& source, const PyramidalImage& target,
                                      Point source_pt, const AffineTransform2D& init,
                                      const IprConfig& cfg) {
  validate(cfg);
  int start = cfg.start_level;
  if (start == IprConfig::kAutoLevel) {
    start = auto_start_level(source, tissue_bbox(tissue_mask(source)), cfg.patch_size_px);
  }
  if (start >= source.level_count()) {
    throw Error(ErrorCode::kInvalidArgument, "start level " + std::to_string(start) + " does not exist");
  }

  const cv::Size size(cfg.patch_size_px, cfg.patch_size_px);
  Landmark lm;
  lm.source_pt = source_pt;
  AffineTransform2D current = init;
  lm.trace.push_back(current.apply(source_pt));

  for (int level = start; level >= 0; --level) {
    const double fs = source.downsample(level);
    const AffineTransform2D p0 = patch_to_level0(source_pt, fs, size);
    const cv::Mat src = sample_gray_patch(source.gray_level(level), to_level_transform(fs).compose(p0), size);

    const double scale = std::sqrt(std::abs(current.determinant()));
    const int lt = target.level_for_downsample(fs * scale * (1.0 + 1e-9));
    const AffineTransform2D q = to_level_transform(target.downsample(lt)).compose(current).compose(p0);
    const cv::Mat tgt = sample_gray_patch(target.gray_level(lt), q, size);

    PatchRegistration reg;
    try {
      reg = register_patch(src, tgt, cfg.max_affine_iters, cfg.weight_sigma_frac * cfg.patch_size_px);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kFlatPatch) throw;
      if (level == start) {
        lm.local_affine = current;
        lm.target_pt = current.apply(source_pt);
        lm.nmi = 0.0;
        lm.status = LandmarkStatus::kFailed;
        return lm;
      }
      break;
    }
    current = current.compose(p0).compose(reg.correction).compose(p0.inverse());
    lm.trace.push_back(current.apply(source_pt));
  }

  lm.local_affine = current;
  lm.target_pt = current.apply(source_pt);
  lm.nmi = score_landmark(source, target, source_pt, current, cfg);
  lm.status = lm.nmi >= cfg.nmi_threshold ? LandmarkStatus::kAccepted : LandmarkStatus::kRejectedLowNmi;
  return lm;
}

std::pair<std::vector<Landmark>, std::vector<Landmark>> partition_landmarks(std::vector<Landmark> landmarks,
                                                                            double threshold) {
  std::vector<Landmark> accepted, rejected;
  for (auto& lm : landmarks) {
    if (lm.status != LandmarkStatus::kFailed && lm.nmi >= threshold) {
      lm.status = LandmarkStatus::kAccepted;
      accepted.push_back(std::move(lm));
    } else {
      if (lm.status != LandmarkStatus::kFailed) lm.status = LandmarkStatus::kRejectedLowNmi;
      rejected.push_back(std::move(lm));
    }
  }
  return {std::move(accepted), std::move(rejected)};
}

std::pair<std::vector<Landmark>, std::vector<Landmark>> filter_landmarks(std::vector<Landmark> landmarks,
                                                                         double threshold) {
  auto split = partition_landmarks(std::move(landmarks), threshold);
  if (split.first.size() < 3) {
    throw Error(ErrorCode::kTooFewLandmarks,
                "only " + std::to_string(split.first.size()) + " landmarks passed the NMI gate");
  }
  return split;
}

NmiCalibration calibrate_nmi_threshold(std::span<const double> clean, std::span<const double> corrupted,
                                       double keep) {
  if (clean.empty()) throw Error(ErrorCode::kInvalidArgument, "calibration needs clean scores");
  if (!(keep > 0.0 && keep < 1.0)) throw Error(ErrorCode::kInvalidArgument, "keep must lie in (0, 1)");
  NmiCalibration out;
  out.threshold = percentile_nearest_rank(clean, 1.0 - keep);
  const auto accepted = std::count_if(clean.begin(), clean.end(), [&](double v) { return v >= out.threshold; });
  out.clean_acceptance = static_cast<double>(accepted) / static_cast<double>(clean.size());
  if (!corrupted.empty()) {
    const auto rejected =
        std::count_if(corrupted.begin(), corrupted.end(), [&](double v) { return v < out.threshold; });
    out.corrupted_rejection = static_cast<double>(rejected) / static_cast<double>(corrupted.size());
  }
  return out;
}

}  // namespace slidewarp

#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "image.hpp"

namespace hazeforge {

/// PSNR reported for identical images.
inline constexpr double kPsnrInfinite = std::numeric_limits<double>::infinity();

inline void require_same_image_shape(const Image& a, const Image& b, const char* op) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(op) + ": image shapes differ");
  }
}

/// 10*log10(1/MSE) over all channels, computed on [0,1] floats (no 8-bit rounding).
inline double psnr(const Image& a, const Image& b) {
  require_same_image_shape(a, b, "psnr");
  double sse = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a.data()[i]) - static_cast<double>(b.data()[i]);
    sse += d * d;
  }
  if (sse == 0.0) {
    return kPsnrInfinite;
  }
  return 10.0 * std::log10(static_cast<double>(a.size()) / sse);
}

/// Luma 0.299 R + 0.587 G + 0.114 B for RGB; gray images pass through.
inline std::vector<double> luma(const Image& img) {
  const std::size_t n = img.pixels();
  std::vector<double> out(n);
  if (img.channels() == 1) {
    for (std::size_t i = 0; i < n; ++i) {
      out[i] = img.data()[i];
    }
    return out;
  }
  const float* r = img.plane(0);
  const float* g = img.plane(1);
  const float* b = img.plane(2);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = 0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i];
  }
  return out;
}

struct SsimParams {
  static constexpr int kWindow = 11;
  static constexpr double kSigma = 1.5;
  static constexpr double kK1 = 0.01;
  static constexpr double kK2 = 0.03;
  static constexpr double kRange = 1.0;
};

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
inline std::array<double, SsimParams::kWindow> ssim_taps() {
  std::array<double, SsimParams::kWindow> taps{};
  const int r = SsimParams::kWindow / 2;
  double total = 0.0;
  for (int i = 0; i < SsimParams::kWindow; ++i) {
    const double x = i - r;
    taps[static_cast<std::size_t>(i)] = std::exp(-x * x / (2.0 * SsimParams::kSigma * SsimParams::kSigma));
    total += taps[static_cast<std::size_t>(i)];
  }
  for (double& t : taps) {
    t /= total;
  }
  return taps;
}

namespace detail {

// Valid-mode separable Gaussian filter: (h, w) -> (h - 10, w - 10).
inline std::vector<double> gaussian_valid(const std::vector<double>& src, std::size_t h, std::size_t w) {
  const auto taps = ssim_taps();
  const std::size_t k = taps.size();
  const std::size_t ow = w - k + 1;
  const std::size_t oh = h - k + 1;
  std::vector<double> rows(h * ow);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      double s = 0.0;
      for (std::size_t i = 0; i < k; ++i) {
        s += taps[i] * src[y * w + x + i];
      }
      rows[y * ow + x] = s;
    }
  }
  std::vector<double> out(oh * ow);
  for (std::size_t y = 0; y < oh; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      double s = 0.0;
      for (std::size_t i = 0; i < k; ++i) {
        s += taps[i] * rows[(y + i) * ow + x];
      }
      out[y * ow + x] = s;
    }
  }
  return out;
}

}  // namespace detail

/**
 * @brief Mean SSIM over all valid 11x11 windows (Gaussian, sigma 1.5,
 * K1 0.01, K2 0.03, dynamic range 1). RGB inputs are compared on luma.
 */
inline double ssim(const Image& a, const Image& b) {
  require_same_image_shape(a, b, "ssim");
  const std::size_t h = a.height();
  const std::size_t w = a.width();
  if (h < static_cast<std::size_t>(SsimParams::kWindow) || w < static_cast<std::size_t>(SsimParams::kWindow)) {
    throw std::invalid_argument("ssim: image smaller than the 11x11 window");
  }
  const auto x = luma(a);
  const auto y = luma(b);
  std::vector<double> xx(x.size());
  std::vector<double> yy(x.size());
  std::vector<double> xy(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto mx = detail::gaussian_valid(x, h, w);
  const auto my = detail::gaussian_valid(y, h, w);
  const auto sxx = detail::gaussian_valid(xx, h, w);
  const auto syy = detail::gaussian_valid(yy, h, w);
  const auto sxy = detail::gaussian_valid(xy, h, w);
  const double c1 = (SsimParams::kK1 * SsimParams::kRange) * (SsimParams::kK1 * SsimParams::kRange);
  const double c2 = (SsimParams::kK2 * SsimParams::kRange) * (SsimParams::kK2 * SsimParams::kRange);
  double total = 0.0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = sxx[i] - mx[i] * mx[i];
    const double vy = syy[i] - my[i] * my[i];
    const double cov = sxy[i] - mx[i] * my[i];
    total += ((2.0 * mx[i] * my[i] + c1) * (2.0 * cov + c2)) /
             ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
  }
  return total / static_cast<double>(mx.size());
}

/// Per-image scores plus their arithmetic means.
struct MetricReport {
  std::vector<std::string> names;
  std::vector<double> psnr;
  std::vector<double> ssim;

  void add(std::string name, double p, double s) {
    names.push_back(std::move(name));
    psnr.push_back(p);
    ssim.push_back(s);
  }
  std::size_t size() const { return names.size(); }
  double mean_psnr() const { return mean_of(psnr); }
  double mean_ssim() const { return mean_of(ssim); }

private:
  static double mean_of(const std::vector<double>& v) {
    if (v.empty()) {
      throw std::logic_error("MetricReport: no images");
    }
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  }
};

inline MetricReport evaluate_pairs(const std::vector<std::string>& names, const std::vector<Image>& outputs,
                                   const std::vector<Image>& references) {
  if (names.size() != outputs.size() || outputs.size() != references.size()) {
    throw std::invalid_argument("evaluate_pairs: list lengths differ");
  }
  MetricReport report;
  for (std::size_t i = 0; i < names.size(); ++i) {
    report.add(names[i], psnr(outputs[i], references[i]), ssim(outputs[i], references[i]));
  }
  return report;
}

}  // namespace hazeforge

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

#include "image.hpp"

namespace hazeforge {

/// Upper bound on any transmission value produced by this library.
inline constexpr float kMaxTransmission = 0.99f;

/// Single-channel transmission map; every value lies in [0, kMaxTransmission].
class TransmissionMap {
public:
  TransmissionMap() = default;

  /// Clamps `img` into [0, 0.99]; `img` must be single-channel.
  explicit TransmissionMap(const Image& img) {
    if (img.channels() != 1) {
      throw std::invalid_argument("TransmissionMap: single-channel image required");
    }
    std::vector<float> data = img.data();
    for (float& v : data) {
      v = std::min(v, kMaxTransmission);
    }
    map_ = Image(img.height(), img.width(), 1, std::move(data));
  }

  static TransmissionMap constant(std::size_t height, std::size_t width, float t) {
    return TransmissionMap(Image(height, width, 1, t));
  }

  const Image& image() const noexcept { return map_; }
  std::size_t height() const noexcept { return map_.height(); }
  std::size_t width() const noexcept { return map_.width(); }
  float at(std::size_t y, std::size_t x) const { return map_.at(0, y, x); }

private:
  Image map_;
};

/// Global atmospheric light, one component per channel, each in [0,1].
struct Airlight {
  std::array<float, 3> rgb{1.0f, 1.0f, 1.0f};

  Airlight() = default;
  Airlight(float r, float g, float b) : rgb{r, g, b} { validate(); }
  explicit Airlight(float gray) : Airlight(gray, gray, gray) {}

  float operator[](std::size_t c) const { return rgb[c]; }

  void validate() const {
    for (float v : rgb) {
      if (!(v >= 0.0f && v <= 1.0f)) {
        throw std::invalid_argument("Airlight: components must lie in [0,1]");
      }
    }
  }
};

/// Haze density exponent, strictly positive.
class DensityFactor {
public:
  explicit DensityFactor(double p) : p_(p) {
    if (!(p > 0.0) || !std::isfinite(p)) {
      throw std::invalid_argument("DensityFactor: p must be a positive finite real");
    }
  }
  double value() const noexcept { return p_; }

private:
  double p_;
};

/// Draws density factors uniformly from [lo, hi].
class DensitySampler {
public:
  DensitySampler(double lo = 0.5, double hi = 1.4) : lo_(lo), hi_(hi) {
    if (!(lo > 0.0) || hi < lo) {
      throw std::invalid_argument("DensitySampler: need 0 < lo <= hi");
    }
  }

  template <class Rng>
  DensityFactor operator()(Rng& rng) const {
    std::uniform_real_distribution<double> dist(lo_, hi_);
    return DensityFactor(dist(rng));
  }

  double lo() const noexcept { return lo_; }
  double hi() const noexcept { return hi_; }

private:
  double lo_;
  double hi_;
};

/// I = J*t + A*(1-t), clamped to [0,1]; t is broadcast across channels.
inline Image synthesize_haze(const Image& clean, const TransmissionMap& t, const Airlight& a) {
  if (clean.height() != t.height() || clean.width() != t.width()) {
    throw std::invalid_argument("synthesize_haze: image and transmission sizes differ");
  }
  const std::size_t n = clean.pixels();
  const float* tp = t.image().plane(0);
  std::vector<float> out(clean.size());
  for (std::size_t c = 0; c < clean.channels(); ++c) {
    const float* j = clean.plane(c);
    const double ac = a[c];
    for (std::size_t i = 0; i < n; ++i) {
      const double tv = tp[i];
      out[c * n + i] = static_cast<float>(j[i] * tv + ac * (1.0 - tv));
    }
  }
  return Image(clean.height(), clean.width(), clean.channels(), std::move(out));
}

/// t' = t^p, kept inside [0, 0.99].
inline TransmissionMap hda_adjust(const TransmissionMap& t, const DensityFactor& p) {
  std::vector<float> out = t.image().data();
  const double e = p.value();
  for (float& v : out) {
    v = static_cast<float>(std::pow(static_cast<double>(v), e));
  }
  return TransmissionMap(Image(t.height(), t.width(), 1, std::move(out)));
}

/// Rebuilds a hazy image of adjusted density from a dehazed estimate.
inline Image hda_rebuild(const Image& dehazed, const TransmissionMap& t, const Airlight& a, const DensityFactor& p) {
  return synthesize_haze(dehazed, hda_adjust(t, p), a);
}

/**
 * @brief Algebraic inversion J = (I - A(1-t)) / t, with t floored at `t_floor`.
 *
 * Unclamped double-precision output; used to check haze synthesis.
 */
inline std::vector<double> invert_scattering(const Image& hazy, const TransmissionMap& t, const Airlight& a,
                                             double t_floor = 0.05) {
  if (hazy.height() != t.height() || hazy.width() != t.width()) {
    throw std::invalid_argument("invert_scattering: image and transmission sizes differ");
  }
  const std::size_t n = hazy.pixels();
  std::vector<double> out(hazy.size());
  for (std::size_t c = 0; c < hazy.channels(); ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      const double tv = std::max<double>(t.image().data()[i], t_floor);
      const double iv = hazy.data()[c * n + i];
      out[c * n + i] = (iv - a[c] * (1.0 - tv)) / tv;
    }
  }
  return out;
}

}  // namespace hazeforge

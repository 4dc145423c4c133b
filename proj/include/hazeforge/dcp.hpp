#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "image.hpp"
#include "scatter.hpp"

namespace hazeforge {

inline constexpr int kDefaultDarkChannelPatch = 25;

/// Window minimum of the per-pixel channel minimum (replicate-edge borders).
inline Image dark_channel(const Image& img, int patch = kDefaultDarkChannelPatch) {
  if (img.channels() != 3) {
    throw std::invalid_argument("dark_channel: 3-channel image required");
  }
  return min_filter(channel_min(img), patch);
}

/**
 * @brief Atmospheric light from the brightest dark-channel pixels.
 *
 * Takes the max(1, floor(top_fraction * pixels)) pixels with the largest
 * dark-channel value, then returns the input colour of the one among them
 * with the largest channel sum. Ties resolve to the lowest row-major index.
 */
inline Airlight estimate_airlight(const Image& img, int patch = kDefaultDarkChannelPatch,
                                  double top_fraction = 0.001) {
  if (!(top_fraction > 0.0 && top_fraction <= 1.0)) {
    throw std::invalid_argument("estimate_airlight: top_fraction must lie in (0,1]");
  }
  const Image dc = dark_channel(img, patch);
  const std::size_t n = img.pixels();
  const std::size_t count =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(top_fraction * static_cast<double>(n))));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto& d = dc.data();
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return d[a] > d[b]; });

  std::size_t best = order[0];
  double best_sum = -1.0;
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t i = order[k];
    const double sum = static_cast<double>(img.plane(0)[i]) + img.plane(1)[i] + img.plane(2)[i];
    if (sum > best_sum || (sum == best_sum && i < best)) {
      best_sum = sum;
      best = i;
    }
  }
  return Airlight(img.plane(0)[best], img.plane(1)[best], img.plane(2)[best]);
}

/// t = clamp(1 - omega * dark_channel(I / A), 0, 0.99).
inline TransmissionMap estimate_transmission(const Image& img, const Airlight& a, int patch = kDefaultDarkChannelPatch,
                                             double omega = 0.95) {
  if (img.channels() != 3) {
    throw std::invalid_argument("estimate_transmission: 3-channel image required");
  }
  if (!(omega > 0.0 && omega <= 1.0)) {
    throw std::invalid_argument("estimate_transmission: omega must lie in (0,1]");
  }
  for (std::size_t c = 0; c < 3; ++c) {
    if (!(a[c] > 0.0f)) {
      throw std::invalid_argument("estimate_transmission: zero airlight channel");
    }
  }
  // I/A can exceed 1, so filter the raw plane rather than a clamping Image.
  const std::size_t n = img.pixels();
  std::vector<float> normalized_min(n);
  for (std::size_t i = 0; i < n; ++i) {
    float m = img.plane(0)[i] / a[0];
    m = std::min(m, img.plane(1)[i] / a[1]);
    m = std::min(m, img.plane(2)[i] / a[2]);
    normalized_min[i] = m;
  }
  const std::vector<float> dc = detail::min_filter_plane(normalized_min.data(), img.height(), img.width(), patch);
  std::vector<float> t(n);
  for (std::size_t i = 0; i < n; ++i) {
    t[i] = static_cast<float>(std::max(0.0, 1.0 - omega * dc[i]));
  }
  return TransmissionMap(Image(img.height(), img.width(), 1, std::move(t)));
}

/// Classical recovery J = (I - A) / max(t, t_floor) + A, clamped to [0,1].
inline Image dcp_dehaze(const Image& img, int patch = kDefaultDarkChannelPatch, double omega = 0.95,
                        double t_floor = 0.1) {
  if (!(t_floor > 0.0)) {
    throw std::invalid_argument("dcp_dehaze: t_floor must be positive");
  }
  const Airlight a = estimate_airlight(img, patch);
  Airlight safe = a;
  for (float& v : safe.rgb) {
    v = std::max(v, 1.0f / 255.0f);
  }
  const TransmissionMap t = estimate_transmission(img, safe, patch, omega);
  const std::size_t n = img.pixels();
  std::vector<float> out(img.size());
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      const double tv = std::max<double>(t.image().data()[i], t_floor);
      out[c * n + i] = static_cast<float>((img.plane(c)[i] - a[c]) / tv + a[c]);
    }
  }
  return Image(img.height(), img.width(), 3, std::move(out));
}

}  // namespace hazeforge

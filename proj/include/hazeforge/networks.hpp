#pragma once

#include <cstddef>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "image.hpp"
#include "layers.hpp"
#include "tensor.hpp"

namespace hazeforge {

// ---------------------------------------------------------------------------
// Image <-> tensor

template <class T>
Tensor<T> images_to_tensor(const std::vector<Image>& images) {
  if (images.empty()) {
    throw std::invalid_argument("images_to_tensor: empty batch");
  }
  const Image& first = images.front();
  std::vector<T> data;
  data.reserve(images.size() * first.size());
  for (const Image& img : images) {
    if (!img.same_shape(first)) {
      throw std::invalid_argument("images_to_tensor: batch images differ in shape");
    }
    for (float v : img.data()) {
      data.push_back(static_cast<T>(v));
    }
  }
  return Tensor<T>::from_vector({images.size(), first.channels(), first.height(), first.width()}, std::move(data));
}

/// Batch entry `index` as an Image; values are clamped to [0,1].
template <class T>
Image tensor_to_image(const Tensor<T>& t, std::size_t index = 0) {
  detail::require_4d(t, "tensor_to_image");
  const std::size_t per = t.numel() / t.dim(0);
  std::vector<float> data(per);
  for (std::size_t i = 0; i < per; ++i) {
    data[i] = static_cast<float>(t.data()[index * per + i]);
  }
  return Image(t.dim(2), t.dim(3), t.dim(1), std::move(data));
}

template <class T>
std::vector<Image> tensor_to_images(const Tensor<T>& t) {
  std::vector<Image> out;
  for (std::size_t b = 0; b < t.dim(0); ++b) {
    out.push_back(tensor_to_image(t, b));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Res2Net-style residual block

/**
 * @brief Hierarchical split-channel residual block.
 *
 * Channels split into `scale` slices x_1..x_s. y_1 = x_1, y_2 = relu(K_2 x_2),
 * y_i = relu(K_i (x_i + y_{i-1})) for i > 2. The slices are concatenated, fused
 * by a 1x1 convolution and added to the input.
 */
template <class T>
class Res2Block {
public:
  Res2Block() = default;
  Res2Block(std::size_t channels, std::size_t scale) : channels_(channels), scale_(scale) {
    if (scale < 2 || channels % scale != 0) {
      throw std::invalid_argument("Res2Block: channels must be divisible by scale >= 2");
    }
    const std::size_t w = channels / scale;
    for (std::size_t i = 1; i < scale; ++i) {
      branches_.emplace_back(w, w, 3, 1, 1);
    }
    fuse_ = Conv2d<T>(channels, channels, 1);
  }

  template <class Rng>
  void init(Rng& rng) {
    for (auto& b : branches_) {
      b.init(rng);
    }
    fuse_.init(rng);
  }

  Tensor<T> operator()(const Tensor<T>& x) const {
    if (x.dim(1) != channels_) {
      throw std::invalid_argument("Res2Block: expected " + std::to_string(channels_) + " channels");
    }
    const std::size_t w = channels_ / scale_;
    std::vector<Tensor<T>> ys;
    ys.push_back(slice_channels(x, 0, w));
    for (std::size_t i = 1; i < scale_; ++i) {
      Tensor<T> xi = slice_channels(x, i * w, w);
      if (i > 1) {
        xi = add(xi, ys.back());
      }
      ys.push_back(relu(branches_[i - 1](xi)));
    }
    return add(x, fuse_(concat_channels(ys)));
  }

  void collect(const std::string& prefix, ParameterList<T>& out) const {
    for (std::size_t i = 0; i < branches_.size(); ++i) {
      branches_[i].collect(prefix + ".k" + std::to_string(i + 2), out);
    }
    fuse_.collect(prefix + ".fuse", out);
  }

private:
  std::size_t channels_ = 0;
  std::size_t scale_ = 0;
  std::vector<Conv2d<T>> branches_;
  Conv2d<T> fuse_;
};

// ---------------------------------------------------------------------------
// Dehazing network

struct DehazeNetConfig {
  std::size_t groups = 4;
  std::size_t width = 16;
  std::size_t blocks_per_group = 1;
  std::size_t scale = 4;
  bool input_residual = true;

  /// Full-size variant whose parameter count matches the published ~4.02M.
  static DehazeNetConfig paper_scale() { return {4, 64, 87, 4, true}; }
};

/**
 * @brief Compact cascaded dehazing network.
 *
 * head: 3x3 stride-2 conv to `width` channels; body: `groups` groups of
 * Res2Blocks; aggregation: concat of every group output, 3x3 conv back to
 * `width`; pixel shuffle x2 to full resolution (width/4 channels); tail: 3x3
 * conv to RGB, output (tanh + 1) / 2. With `input_residual` the tail output
 * is added to atanh(2x - 1) before the tanh, so a zero tail reproduces the
 * input and the network learns a correction. Input height and width must be even.
 */
namespace detail {

// atanh(2x - 1): the pre-activation for which (tanh + 1) / 2 returns x.
// The argument is clamped to +-0.995; the gradient is zero where it clamps.
template <class T>
Tensor<T> input_prior(const Tensor<T>& x) {
  static constexpr T kLimit = T(0.995);
  return unary(
      x, [](T v) { return std::atanh(std::clamp(T(2) * v - T(1), -kLimit, kLimit)); },
      [](T v, T) {
        const T u = T(2) * v - T(1);
        return std::abs(u) < kLimit ? T(2) / (T(1) - u * u) : T(0);
      });
}

}  // namespace detail

template <class T>
class DehazeNet {
public:
  DehazeNet() = default;
  explicit DehazeNet(const DehazeNetConfig& cfg) : cfg_(cfg) {
    if (cfg.groups == 0 || cfg.blocks_per_group == 0 || cfg.width % 4 != 0 || cfg.width % cfg.scale != 0) {
      throw std::invalid_argument("DehazeNet: width must be divisible by 4 and by scale; groups/blocks > 0");
    }
    head_ = Conv2d<T>(3, cfg.width, 3, 2, 1);
    for (std::size_t g = 0; g < cfg.groups; ++g) {
      std::vector<Res2Block<T>> blocks;
      for (std::size_t b = 0; b < cfg.blocks_per_group; ++b) {
        blocks.emplace_back(cfg.width, cfg.scale);
      }
      groups_.push_back(std::move(blocks));
    }
    aggregate_ = Conv2d<T>(cfg.groups * cfg.width, cfg.width, 3, 1, 1);
    tail_ = Conv2d<T>(cfg.width / 4, 3, 3, 1, 1);
  }

  template <class Rng>
  void init(Rng& rng) {
    head_.init(rng);
    for (auto& g : groups_) {
      for (auto& b : g) {
        b.init(rng);
      }
    }
    aggregate_.init(rng);
    tail_.init(rng);
  }

  Tensor<T> operator()(const Tensor<T>& x) const {
    detail::require_4d(x, "DehazeNet");
    if (x.dim(1) != 3 || x.dim(2) % 2 != 0 || x.dim(3) % 2 != 0) {
      throw std::invalid_argument("DehazeNet: expected 3-channel input with even height and width");
    }
    Tensor<T> h = head_(x);
    std::vector<Tensor<T>> group_outputs;
    for (const auto& g : groups_) {
      for (const auto& b : g) {
        h = b(h);
      }
      group_outputs.push_back(h);
    }
    Tensor<T> fused = aggregate_(concat_channels(group_outputs));
    Tensor<T> out = tail_(pixel_shuffle(fused, 2));
    if (cfg_.input_residual) {
      out = add(out, detail::input_prior(x));
    }
    return affine(tanh(out), T(0.5), T(0.5));
  }

  ParameterList<T> parameters() const {
    ParameterList<T> out;
    head_.collect("head", out);
    for (std::size_t g = 0; g < groups_.size(); ++g) {
      for (std::size_t b = 0; b < groups_[g].size(); ++b) {
        groups_[g][b].collect("group" + std::to_string(g) + ".block" + std::to_string(b), out);
      }
    }
    aggregate_.collect("aggregate", out);
    tail_.collect("tail", out);
    return out;
  }

  std::size_t param_count() const { return count_parameters(parameters()); }
  const DehazeNetConfig& config() const { return cfg_; }

private:
  DehazeNetConfig cfg_;
  Conv2d<T> head_;
  std::vector<std::vector<Res2Block<T>>> groups_;
  Conv2d<T> aggregate_;
  Conv2d<T> tail_;
};

// ---------------------------------------------------------------------------
// Transmission estimator

/**
 * @brief Encoder-decoder producing a one-channel transmission map in (0, 0.99).
 *
 * Three stride-2 convs down; three (conv, pixel shuffle x2, relu) stages up;
 * 3x3 conv to one channel; 0.99 * sigmoid. Height and width must be multiples of 8.
 */
template <class T>
class TNet {
public:
  TNet() = default;
  explicit TNet(std::size_t base = 8) {
    const std::size_t c1 = base;
    const std::size_t c2 = 2 * base;
    const std::size_t c3 = 4 * base;
    down_ = {Conv2d<T>(3, c1, 3, 2, 1), Conv2d<T>(c1, c2, 3, 2, 1), Conv2d<T>(c2, c3, 3, 2, 1)};
    up_ = {Conv2d<T>(c3, 4 * c2, 3, 1, 1), Conv2d<T>(c2, 4 * c1, 3, 1, 1), Conv2d<T>(c1, 4 * (c1 / 2), 3, 1, 1)};
    out_ = Conv2d<T>(c1 / 2, 1, 3, 1, 1);
  }

  template <class Rng>
  void init(Rng& rng) {
    for (auto& c : down_) {
      c.init(rng);
    }
    for (auto& c : up_) {
      c.init(rng);
    }
    out_.init(rng);
  }

  Tensor<T> operator()(const Tensor<T>& x) const {
    detail::require_4d(x, "TNet");
    if (x.dim(1) != 3 || x.dim(2) % 8 != 0 || x.dim(3) % 8 != 0) {
      throw std::invalid_argument("TNet: expected 3-channel input with sides divisible by 8");
    }
    Tensor<T> h = x;
    for (const auto& c : down_) {
      h = relu(c(h));
    }
    for (const auto& c : up_) {
      h = relu(pixel_shuffle(c(h), 2));
    }
    return scale(sigmoid(out_(h)), T(0.99));
  }

  ParameterList<T> parameters() const {
    ParameterList<T> out;
    for (std::size_t i = 0; i < down_.size(); ++i) {
      down_[i].collect("down" + std::to_string(i), out);
    }
    for (std::size_t i = 0; i < up_.size(); ++i) {
      up_[i].collect("up" + std::to_string(i), out);
    }
    out_.collect("out", out);
    return out;
  }

private:
  std::vector<Conv2d<T>> down_;
  std::vector<Conv2d<T>> up_;
  Conv2d<T> out_;
};

// ---------------------------------------------------------------------------
// Patch discriminator

/**
 * @brief Four 4x4 stride-2 convs (W, 2W, 4W, 8W) with LeakyReLU(0.2), a 3x3
 * conv to one channel and a sigmoid: an (H/16, W/16) grid of realness scores.
 */
template <class T>
class PatchDiscriminator {
public:
  PatchDiscriminator() = default;
  explicit PatchDiscriminator(std::size_t base = 16) {
    std::size_t in = 3;
    for (std::size_t i = 0; i < 4; ++i) {
      const std::size_t out = base << i;
      convs_.emplace_back(in, out, 4, 2, 1);
      in = out;
    }
    head_ = Conv2d<T>(in, 1, 3, 1, 1);
  }

  template <class Rng>
  void init(Rng& rng) {
    for (auto& c : convs_) {
      c.init(rng);
    }
    head_.init(rng);
  }

  Tensor<T> operator()(const Tensor<T>& x) const {
    detail::require_4d(x, "PatchDiscriminator");
    if (x.dim(2) % 16 != 0 || x.dim(3) % 16 != 0) {
      throw std::invalid_argument("PatchDiscriminator: sides must be multiples of 16");
    }
    Tensor<T> h = x;
    for (const auto& c : convs_) {
      h = leaky_relu(c(h), T(0.2));
    }
    return sigmoid(head_(h));
  }

  ParameterList<T> parameters() const {
    ParameterList<T> out;
    for (std::size_t i = 0; i < convs_.size(); ++i) {
      convs_[i].collect("conv" + std::to_string(i), out);
    }
    head_.collect("head", out);
    return out;
  }

private:
  std::vector<Conv2d<T>> convs_;
  Conv2d<T> head_;
};

// ---------------------------------------------------------------------------
// Feature extractors for the perceptual loss

/// Maps an image batch to a list of feature maps. Implementations must not train.
template <class T>
class FeatureExtractor {
public:
  virtual ~FeatureExtractor() = default;
  virtual std::vector<Tensor<T>> features(const Tensor<T>& x) const = 0;
};

struct RandomConvExtractorConfig {
  std::uint64_t seed = 1234;
  std::vector<std::size_t> channels{8, 16, 32};
  bool bias = true;
  bool relu = true;
};

/**
 * @brief Frozen three-stage random convolution stack.
 *
 * Stage 1 is a stride-1 3x3 conv, later stages stride 2. Weights are drawn once
 * from the configured seed and never receive gradients.
 */
template <class T>
class RandomConvExtractor final : public FeatureExtractor<T> {
public:
  explicit RandomConvExtractor(const RandomConvExtractorConfig& cfg = {}) : cfg_(cfg) {
    std::mt19937_64 rng(cfg.seed);
    std::size_t in = 3;
    for (std::size_t i = 0; i < cfg.channels.size(); ++i) {
      Conv2d<T> conv(in, cfg.channels[i], 3, i == 0 ? 1 : 2, 1, cfg.bias);
      conv.init(rng);
      conv.weight().set_requires_grad(false);
      if (cfg.bias) {
        conv.bias().set_requires_grad(false);
      }
      stages_.push_back(conv);
      in = cfg.channels[i];
    }
  }

  std::vector<Tensor<T>> features(const Tensor<T>& x) const override {
    std::vector<Tensor<T>> out;
    Tensor<T> h = x;
    for (const auto& s : stages_) {
      h = s(h);
      if (cfg_.relu) {
        h = relu(h);
      }
      out.push_back(h);
    }
    return out;
  }

private:
  RandomConvExtractorConfig cfg_;
  std::vector<Conv2d<T>> stages_;
};

}  // namespace hazeforge

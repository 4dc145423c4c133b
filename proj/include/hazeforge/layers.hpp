#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "conv.hpp"
#include "tensor.hpp"

namespace hazeforge {

template <class T>
struct NamedParameter {
  std::string name;
  Tensor<T> tensor;
};

template <class T>
using ParameterList = std::vector<NamedParameter<T>>;

template <class T>
std::vector<Tensor<T>> tensors_of(const ParameterList<T>& params) {
  std::vector<Tensor<T>> out;
  out.reserve(params.size());
  for (const auto& p : params) {
    out.push_back(p.tensor);
  }
  return out;
}

template <class T>
std::size_t count_parameters(const ParameterList<T>& params) {
  std::size_t n = 0;
  for (const auto& p : params) {
    n += p.tensor.numel();
  }
  return n;
}

template <class T>
void zero_grads(const ParameterList<T>& params) {
  for (auto p : params) {
    p.tensor.zero_grad();
  }
}

template <class T>
void set_trainable(const ParameterList<T>& params, bool on) {
  for (auto p : params) {
    p.tensor.set_requires_grad(on);
  }
}

/// Copies values between index-aligned parameter lists of identical shapes.
template <class T>
void copy_values(const ParameterList<T>& from, const ParameterList<T>& to) {
  if (from.size() != to.size()) {
    throw std::invalid_argument("copy_values: parameter lists differ in length");
  }
  for (std::size_t i = 0; i < from.size(); ++i) {
    if (from[i].tensor.shape() != to[i].tensor.shape()) {
      throw std::invalid_argument("copy_values: shape mismatch at " + from[i].name);
    }
    auto dst = to[i].tensor;
    dst.data() = from[i].tensor.data();
  }
}

/// Square-kernel convolution layer with optional bias.
template <class T>
class Conv2d {
public:
  Conv2d() = default;
  Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, std::size_t stride = 1,
         std::size_t pad = 0, bool bias = true)
      : stride_(stride), pad_(pad) {
    weight_ = Tensor<T>::zeros({out_channels, in_channels, kernel, kernel}, true);
    if (bias) {
      bias_ = Tensor<T>::zeros({out_channels}, true);
    }
  }

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weight and bias.
  template <class Rng>
  void init(Rng& rng) {
    const double fan_in = static_cast<double>(weight_.dim(1) * weight_.dim(2) * weight_.dim(3));
    const double bound = 1.0 / std::sqrt(fan_in);
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : weight_.data()) {
      v = static_cast<T>(dist(rng));
    }
    if (bias_.defined()) {
      for (auto& v : bias_.data()) {
        v = static_cast<T>(dist(rng));
      }
    }
  }

  Tensor<T> operator()(const Tensor<T>& x) const { return conv2d(x, weight_, bias_, stride_, pad_); }

  void collect(const std::string& prefix, ParameterList<T>& out) const {
    out.push_back({prefix + ".weight", weight_});
    if (bias_.defined()) {
      out.push_back({prefix + ".bias", bias_});
    }
  }

  Tensor<T>& weight() { return weight_; }
  Tensor<T>& bias() { return bias_; }
  std::size_t out_channels() const { return weight_.dim(0); }

private:
  Tensor<T> weight_;
  Tensor<T> bias_;
  std::size_t stride_ = 1;
  std::size_t pad_ = 0;
};

}  // namespace hazeforge

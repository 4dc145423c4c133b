#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "layers.hpp"
#include "tensor.hpp"

namespace hazeforge {

// ---------------------------------------------------------------------------
// Adam

struct AdamHyper {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <class T>
struct AdamState {
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
  std::size_t step = 0;
};

/**
 * @brief One bias-corrected Adam update.
 *
 * `grads[i]` may be empty, meaning a zero gradient. Moments are allocated on
 * first use. The bias correction uses the beta1 passed for this step, so a
 * cycled momentum behaves as it does in common frameworks.
 */
template <class T>
void adam_step(std::span<Tensor<T>> params, std::span<const std::vector<T>> grads, AdamState<T>& state,
               const AdamHyper& hp) {
  if (params.size() != grads.size()) {
    throw std::invalid_argument("adam_step: params and grads differ in length");
  }
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.numel(), T(0));
      state.v.emplace_back(p.numel(), T(0));
    }
  }
  if (state.m.size() != params.size()) {
    throw std::invalid_argument("adam_step: optimizer state does not match parameter list");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(hp.beta1, t);
  const double bc2 = 1.0 - std::pow(hp.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& values = params[i].data();
    if (state.m[i].size() != values.size() || (!grads[i].empty() && grads[i].size() != values.size())) {
      throw std::invalid_argument("adam_step: shape mismatch at parameter " + std::to_string(i));
    }
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t k = 0; k < values.size(); ++k) {
      const double g = grads[i].empty() ? 0.0 : static_cast<double>(grads[i][k]);
      const double mk = hp.beta1 * static_cast<double>(m[k]) + (1.0 - hp.beta1) * g;
      const double vk = hp.beta2 * static_cast<double>(v[k]) + (1.0 - hp.beta2) * g * g;
      m[k] = static_cast<T>(mk);
      v[k] = static_cast<T>(vk);
      const double update = hp.lr * (mk / bc1) / (std::sqrt(vk / bc2) + hp.eps);
      values[k] = static_cast<T>(static_cast<double>(values[k]) - update);
    }
  }
}

/// Adam over a parameter list using the gradients stored on the tensors.
template <class T>
void adam_step(const ParameterList<T>& params, AdamState<T>& state, const AdamHyper& hp) {
  std::vector<Tensor<T>> tensors = tensors_of(params);
  std::vector<std::vector<T>> grads;
  grads.reserve(tensors.size());
  for (const auto& t : tensors) {
    grads.push_back(t.grad());
  }
  adam_step<T>(std::span<Tensor<T>>(tensors), std::span<const std::vector<T>>(grads), state, hp);
}

// ---------------------------------------------------------------------------
// Cyclic learning rate

/**
 * @brief Triangular cyclic schedule with gamma 1 (no amplitude decay).
 *
 * The learning rate rises from base_lr to max_lr over `half_period` steps and
 * falls back over the next `half_period`. Momentum moves inversely, from
 * max_momentum at base_lr to base_momentum at max_lr.
 */
struct CyclicLrSchedule {
  double base_lr = 1e-4;
  double max_lr = 1.5e-4;
  double base_momentum = 0.8;
  double max_momentum = 0.9;
  std::size_t half_period = 2000;
};

struct LrMomentum {
  double lr;
  double momentum;
};

inline LrMomentum cyclic_lr(std::size_t step, const CyclicLrSchedule& s) {
  if (s.half_period == 0) {
    throw std::invalid_argument("cyclic_lr: half_period must be positive");
  }
  const double half = static_cast<double>(s.half_period);
  const double cycle = std::floor(1.0 + static_cast<double>(step) / (2.0 * half));
  const double x = std::abs(static_cast<double>(step) / half - 2.0 * cycle + 1.0);
  const double frac = std::max(0.0, 1.0 - x);
  return {s.base_lr + (s.max_lr - s.base_lr) * frac,
          s.max_momentum - (s.max_momentum - s.base_momentum) * frac};
}

// ---------------------------------------------------------------------------
// Exponential moving average

/**
 * @brief Shadow parameters tracking a live parameter list.
 *
 * The shadow tensors are owned by another network (the student), so updating
 * the state updates that network in place.
 */
template <class T>
struct EmaState {
  double decay = 0.999;
  std::vector<Tensor<T>> shadow;
};

/// shadow <- decay * shadow + (1 - decay) * live, elementwise. Never touches `live`.
template <class T>
void ema_update(EmaState<T>& ema, const std::vector<Tensor<T>>& live) {
  if (!(ema.decay >= 0.0 && ema.decay < 1.0)) {
    throw std::invalid_argument("ema_update: decay must lie in [0,1)");
  }
  if (ema.shadow.size() != live.size()) {
    throw std::invalid_argument("ema_update: shadow and live lists differ in length");
  }
  const double d = ema.decay;
  for (std::size_t i = 0; i < live.size(); ++i) {
    if (ema.shadow[i].shape() != live[i].shape()) {
      throw std::invalid_argument("ema_update: shape mismatch at parameter " + std::to_string(i));
    }
    auto& s = ema.shadow[i].data();
    const auto& l = live[i].data();
    for (std::size_t k = 0; k < s.size(); ++k) {
      s[k] = static_cast<T>(d * static_cast<double>(s[k]) + (1.0 - d) * static_cast<double>(l[k]));
    }
  }
}

}  // namespace hazeforge

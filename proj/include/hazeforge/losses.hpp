#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "networks.hpp"
#include "tensor.hpp"

namespace hazeforge {

inline constexpr double kCharbonnierEps = 1e-3;
inline constexpr double kProbabilityFloor = 1e-6;

/// Trade-off weights of the training objective.
struct LossWeights {
  double rc = 1.0;
  double adv = 0.2;
  double dc = 1e-2;
  double per = 0.2;
  double hda = 0.5;

  void validate() const {
    for (double w : {rc, adv, dc, per, hda}) {
      if (!(w >= 0.0) || !std::isfinite(w)) {
        throw std::invalid_argument("LossWeights: weights must be finite and nonnegative");
      }
    }
  }
};

/// mean(sqrt((x - y)^2 + eps^2))
template <class T>
Tensor<T> charbonnier(const Tensor<T>& x, const Tensor<T>& y, double eps = kCharbonnierEps) {
  return charbonnier_mean(x, y, static_cast<T>(eps));
}

/**
 * @brief Supervised term: Charbonnier on synthetic pairs plus the weighted
 * Charbonnier on pseudo pairs. Pass undefined tensors when there are none.
 */
template <class T>
Tensor<T> reconstruction_loss(const Tensor<T>& out_syn, const Tensor<T>& gt_syn, const Tensor<T>& out_hda,
                              const Tensor<T>& pseudo_clean, double lambda_hda) {
  Tensor<T> loss = charbonnier(out_syn, gt_syn);
  if (out_hda.defined() != pseudo_clean.defined()) {
    throw std::invalid_argument("reconstruction_loss: pseudo-pair output and target must both be given");
  }
  if (out_hda.defined()) {
    loss = add(loss, scale(charbonnier(out_hda, pseudo_clean), static_cast<T>(lambda_hda)));
  }
  return loss;
}

/// Dark channel of an (N, 3, H, W) batch: channel minimum, then window minimum.
template <class T>
Tensor<T> dark_channel(const Tensor<T>& x, int patch) {
  detail::require_4d(x, "dark_channel");
  if (x.dim(1) != 3) {
    throw std::invalid_argument("dark_channel: expected 3 channels, got " + std::to_string(x.dim(1)));
  }
  return window_min(channel_min(x), patch);
}

/// Mean dark-channel intensity: the L1 norm per image over its pixel count, averaged over the batch.
/// Inputs are network outputs in [0,1], so the absolute value is the identity.
template <class T>
Tensor<T> dark_channel_loss(const Tensor<T>& dehazed, int patch = 25) {
  return mean(dark_channel(dehazed, patch));
}

/// mean(-log D(G(x))) over patch cells and batch, probabilities clamped to [1e-6, 1 - 1e-6].
template <class T>
Tensor<T> adversarial_loss_generator(const Tensor<T>& d_out) {
  return neg_log_mean(d_out, static_cast<T>(kProbabilityFloor));
}

/// Sum over stages of the mean squared feature difference (each stage normalized by C*H*W).
template <class T>
Tensor<T> feature_loss(const Tensor<T>& out, const Tensor<T>& ref, const FeatureExtractor<T>& extractor) {
  detail::require_same_shape(out, ref, "feature_loss");
  const auto fo = extractor.features(out);
  const auto fr = extractor.features(ref);
  if (fo.empty()) {
    throw std::invalid_argument("feature_loss: extractor produced no features");
  }
  Tensor<T> total = squared_error_mean(fr[0], fo[0]);
  for (std::size_t j = 1; j < fo.size(); ++j) {
    total = add(total, squared_error_mean(fr[j], fo[j]));
  }
  return total;
}

template <class T>
struct UnsupervisedTerms {
  Tensor<T> adv;
  Tensor<T> dc;
  Tensor<T> total;
};

/// lambda_adv * adversarial + lambda_dc * dark channel, evaluated on real-domain outputs.
template <class T>
UnsupervisedTerms<T> unsupervised_terms(const Tensor<T>& real_dehazed, const PatchDiscriminator<T>& d,
                                        const LossWeights& w, int patch = 25) {
  UnsupervisedTerms<T> t;
  t.adv = adversarial_loss_generator(d(real_dehazed));
  t.dc = dark_channel_loss(real_dehazed, patch);
  t.total = add(scale(t.adv, static_cast<T>(w.adv)), scale(t.dc, static_cast<T>(w.dc)));
  return t;
}

template <class T>
Tensor<T> unsupervised_loss(const Tensor<T>& real_dehazed, const PatchDiscriminator<T>& d, const LossWeights& w,
                            int patch = 25) {
  return unsupervised_terms(real_dehazed, d, w, patch).total;
}

/// Scalar loss components; any may be undefined, meaning absent.
template <class T>
struct LossComponents {
  Tensor<T> rc;
  Tensor<T> adv;
  Tensor<T> dc;
  Tensor<T> per;
};

/// lambda_rc * L_rc + lambda_adv * L_adv + lambda_dc * L_dc + lambda_per * L_per.
template <class T>
Tensor<T> total_loss(const LossComponents<T>& c, const LossWeights& w) {
  Tensor<T> total;
  auto accumulate = [&](const Tensor<T>& term, double weight) {
    if (!term.defined()) {
      return;
    }
    if (term.numel() != 1) {
      throw std::invalid_argument("total_loss: components must be scalars");
    }
    Tensor<T> scaled = scale(term, static_cast<T>(weight));
    total = total.defined() ? add(total, scaled) : scaled;
  };
  accumulate(c.rc, w.rc);
  accumulate(c.adv, w.adv);
  accumulate(c.dc, w.dc);
  accumulate(c.per, w.per);
  return total.defined() ? total : Tensor<T>::scalar(T(0));
}

}  // namespace hazeforge

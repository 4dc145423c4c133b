#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace hazeforge {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    os << (i ? "," : "") << shape[i];
  }
  os << ')';
  return os.str();
}

namespace detail {
inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}
}  // namespace detail

/// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
public:
  NoGradGuard() : previous_(detail::grad_mode()) { detail::grad_mode() = false; }
  ~NoGradGuard() { detail::grad_mode() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
  bool previous_;
};

template <class T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(Node&)> backward;

  bool is_leaf() const noexcept { return !backward; }

  std::vector<T>& ensure_grad() {
    if (grad.size() != value.size()) {
      grad.assign(value.size(), T(0));
    }
    return grad;
  }
};

/**
 * @brief Handle to a value node in a reverse-mode computation graph.
 *
 * Copies share the node. Shapes follow the (N, C, H, W) convention for
 * image tensors; a scalar has an empty shape.
 */
template <class T>
class Tensor {
public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static Tensor zeros(const Shape& shape, bool requires_grad = false) {
    return from_vector(shape, std::vector<T>(shape_numel(shape), T(0)), requires_grad);
  }

  static Tensor full(const Shape& shape, T v, bool requires_grad = false) {
    return from_vector(shape, std::vector<T>(shape_numel(shape), v), requires_grad);
  }

  static Tensor from_vector(const Shape& shape, std::vector<T> values, bool requires_grad = false) {
    if (values.size() != shape_numel(shape)) {
      throw std::invalid_argument("Tensor: value count " + std::to_string(values.size()) +
                                  " does not match shape " + shape_str(shape));
    }
    auto node = std::make_shared<Node<T>>();
    node->shape = shape;
    node->value = std::move(values);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
  }

  static Tensor scalar(T v, bool requires_grad = false) { return from_vector({}, {v}, requires_grad); }

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->value.size(); }

  std::vector<T>& data() { return node_->value; }
  const std::vector<T>& data() const { return node_->value; }

  /// Gradient buffer; empty until a backward pass reaches this node.
  const std::vector<T>& grad() const { return node_->grad; }
  std::vector<T>& mutable_grad() { return node_->ensure_grad(); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  void zero_grad() {
    if (!node_->grad.empty()) {
      std::fill(node_->grad.begin(), node_->grad.end(), T(0));
    }
  }

  T item() const {
    if (numel() != 1) {
      throw std::logic_error("Tensor::item on non-scalar " + shape_str(shape()));
    }
    return node_->value[0];
  }

  /// New leaf sharing no graph history; values copied.
  Tensor detach() const { return from_vector(shape(), data(), false); }

  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }

  bool same_node(const Tensor& other) const { return node_ == other.node_; }

private:
  std::shared_ptr<Node<T>> node_;
};

/**
 * @brief Creates an op result. Graph links are kept only when recording is on
 * and some input requires a gradient.
 */
template <class T>
Tensor<T> make_result(Shape shape, std::vector<T> value, std::vector<Tensor<T>> inputs,
                      std::function<void(Node<T>&)> backward) {
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  bool needs = false;
  if (detail::grad_mode()) {
    for (const auto& in : inputs) {
      needs = needs || in.requires_grad();
    }
  }
  if (needs) {
    node->requires_grad = true;
    node->parents.reserve(inputs.size());
    for (auto& in : inputs) {
      node->parents.push_back(in.node_ptr());
    }
    node->backward = std::move(backward);
  }
  return Tensor<T>(std::move(node));
}

/**
 * @brief Accumulates d(loss)/d(leaf) into every reachable leaf's grad.
 *
 * Each node is visited once, in reverse topological order. Intermediate
 * gradients are reset first so a graph can be replayed; leaf gradients
 * accumulate across calls.
 */
template <class T>
void backward(const Tensor<T>& loss) {
  if (loss.numel() != 1) {
    throw std::invalid_argument("backward: loss must be a scalar, got shape " + shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) {
    return;
  }
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(loss.node(), 0);
  seen.insert(loss.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  for (Node<T>* node : order) {
    if (!node->is_leaf()) {
      node->grad.assign(node->value.size(), T(0));
    }
  }
  loss.node()->ensure_grad()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if (!(*it)->is_leaf()) {
      (*it)->backward(**it);
    }
  }
}

namespace detail {

template <class T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  }
}

template <class T>
std::vector<T>* grad_of(Node<T>& self, std::size_t parent) {
  Node<T>& p = *self.parents[parent];
  return p.requires_grad ? &p.ensure_grad() : nullptr;
}

template <class T>
void require_4d(const Tensor<T>& x, const char* op) {
  if (x.rank() != 4) {
    throw std::invalid_argument(std::string(op) + ": expected (N,C,H,W) tensor, got " + shape_str(x.shape()));
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "add");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = a.data()[i] + b.data()[i];
  }
  return make_result<T>(a.shape(), std::move(out), {a, b}, [](Node<T>& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (auto* g = detail::grad_of(self, k)) {
        for (std::size_t i = 0; i < g->size(); ++i) {
          (*g)[i] += self.grad[i];
        }
      }
    }
  });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "sub");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = a.data()[i] - b.data()[i];
  }
  return make_result<T>(a.shape(), std::move(out), {a, b}, [](Node<T>& self) {
    if (auto* g = detail::grad_of(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) {
        (*g)[i] += self.grad[i];
      }
    }
    if (auto* g = detail::grad_of(self, 1)) {
      for (std::size_t i = 0; i < g->size(); ++i) {
        (*g)[i] -= self.grad[i];
      }
    }
  });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "mul");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = a.data()[i] * b.data()[i];
  }
  return make_result<T>(a.shape(), std::move(out), {a, b}, [](Node<T>& self) {
    const auto& av = self.parents[0]->value;
    const auto& bv = self.parents[1]->value;
    if (auto* g = detail::grad_of(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) {
        (*g)[i] += self.grad[i] * bv[i];
      }
    }
    if (auto* g = detail::grad_of(self, 1)) {
      for (std::size_t i = 0; i < g->size(); ++i) {
        (*g)[i] += self.grad[i] * av[i];
      }
    }
  });
}

/// a * s + offset, elementwise, with constant s and offset.
template <class T>
Tensor<T> affine(const Tensor<T>& a, T s, T offset = T(0)) {
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = a.data()[i] * s + offset;
  }
  return make_result<T>(a.shape(), std::move(out), {a}, [s](Node<T>& self) {
    if (auto* g = detail::grad_of(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) {
        (*g)[i] += self.grad[i] * s;
      }
    }
  });
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  return affine(a, s, T(0));
}

namespace detail {

// Applies y = f(x) elementwise; dfdx receives (x, y).
template <class T, class F, class D>
Tensor<T> unary(const Tensor<T>& a, F f, D dfdx) {
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = f(a.data()[i]);
  }
  return make_result<T>(a.shape(), std::move(out), {a}, [dfdx](Node<T>& self) {
    if (auto* g = grad_of(self, 0)) {
      const auto& x = self.parents[0]->value;
      for (std::size_t i = 0; i < g->size(); ++i) {
        (*g)[i] += self.grad[i] * dfdx(x[i], self.value[i]);
      }
    }
  });
}

}  // namespace detail

template <class T>
Tensor<T> relu(const Tensor<T>& a) {
  return detail::unary(
      a, [](T x) { return x > T(0) ? x : T(0); }, [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <class T>
Tensor<T> leaky_relu(const Tensor<T>& a, T slope = T(0.2)) {
  return detail::unary(
      a, [slope](T x) { return x > T(0) ? x : slope * x; }, [slope](T x, T) { return x > T(0) ? T(1) : slope; });
}

template <class T>
Tensor<T> tanh(const Tensor<T>& a) {
  return detail::unary(
      a, [](T x) { return std::tanh(x); }, [](T, T y) { return T(1) - y * y; });
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  return detail::unary(
      a, [](T x) { return T(1) / (T(1) + std::exp(-x)); }, [](T, T y) { return y * (T(1) - y); });
}

// ---------------------------------------------------------------------------
// Reductions

template <class T>
Tensor<T> sum(const Tensor<T>& a) {
  T s = T(0);
  for (T v : a.data()) {
    s += v;
  }
  return make_result<T>({}, {s}, {a}, [](Node<T>& self) {
    if (auto* g = detail::grad_of(self, 0)) {
      for (auto& v : *g) {
        v += self.grad[0];
      }
    }
  });
}

template <class T>
Tensor<T> mean(const Tensor<T>& a) {
  return scale(sum(a), T(1) / static_cast<T>(a.numel()));
}

// ---------------------------------------------------------------------------
// Channel plumbing

template <class T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) {
    throw std::invalid_argument("concat_channels: no inputs");
  }
  for (const auto& p : parts) {
    detail::require_4d(p, "concat_channels");
    if (p.dim(0) != parts[0].dim(0) || p.dim(2) != parts[0].dim(2) || p.dim(3) != parts[0].dim(3)) {
      throw std::invalid_argument("concat_channels: N/H/W mismatch");
    }
  }
  const std::size_t n = parts[0].dim(0);
  const std::size_t hw = parts[0].dim(2) * parts[0].dim(3);
  std::vector<std::size_t> offsets;
  std::size_t channels = 0;
  for (const auto& p : parts) {
    offsets.push_back(channels);
    channels += p.dim(1);
  }
  std::vector<T> out(n * channels * hw);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const std::size_t ck = parts[k].dim(1);
    for (std::size_t b = 0; b < n; ++b) {
      const T* src = parts[k].data().data() + b * ck * hw;
      std::copy(src, src + ck * hw, out.begin() + static_cast<std::ptrdiff_t>((b * channels + offsets[k]) * hw));
    }
  }
  return make_result<T>({n, channels, parts[0].dim(2), parts[0].dim(3)}, std::move(out), parts,
                        [n, hw, channels, offsets](Node<T>& self) {
                          for (std::size_t k = 0; k < self.parents.size(); ++k) {
                            auto* g = detail::grad_of(self, k);
                            if (!g) {
                              continue;
                            }
                            const std::size_t ck = self.parents[k]->shape[1];
                            for (std::size_t b = 0; b < n; ++b) {
                              const T* src = self.grad.data() + (b * channels + offsets[k]) * hw;
                              T* dst = g->data() + b * ck * hw;
                              for (std::size_t i = 0; i < ck * hw; ++i) {
                                dst[i] += src[i];
                              }
                            }
                          }
                        });
}

template <class T>
Tensor<T> slice_channels(const Tensor<T>& x, std::size_t begin, std::size_t count) {
  detail::require_4d(x, "slice_channels");
  const std::size_t n = x.dim(0);
  const std::size_t c = x.dim(1);
  const std::size_t hw = x.dim(2) * x.dim(3);
  if (begin + count > c || count == 0) {
    throw std::invalid_argument("slice_channels: range outside channel dimension");
  }
  std::vector<T> out(n * count * hw);
  for (std::size_t b = 0; b < n; ++b) {
    const T* src = x.data().data() + (b * c + begin) * hw;
    std::copy(src, src + count * hw, out.begin() + static_cast<std::ptrdiff_t>(b * count * hw));
  }
  return make_result<T>({n, count, x.dim(2), x.dim(3)}, std::move(out), {x}, [=](Node<T>& self) {
    if (auto* g = detail::grad_of(self, 0)) {
      for (std::size_t b = 0; b < n; ++b) {
        const T* src = self.grad.data() + b * count * hw;
        T* dst = g->data() + (b * c + begin) * hw;
        for (std::size_t i = 0; i < count * hw; ++i) {
          dst[i] += src[i];
        }
      }
    }
  });
}

/// Selects batch entries [begin, begin + count).
template <class T>
Tensor<T> slice_batch(const Tensor<T>& x, std::size_t begin, std::size_t count) {
  detail::require_4d(x, "slice_batch");
  if (begin + count > x.dim(0) || count == 0) {
    throw std::invalid_argument("slice_batch: range outside batch dimension");
  }
  const std::size_t per = x.numel() / x.dim(0);
  std::vector<T> out(x.data().begin() + static_cast<std::ptrdiff_t>(begin * per),
                     x.data().begin() + static_cast<std::ptrdiff_t>((begin + count) * per));
  return make_result<T>({count, x.dim(1), x.dim(2), x.dim(3)}, std::move(out), {x}, [=](Node<T>& self) {
    if (auto* g = detail::grad_of(self, 0)) {
      for (std::size_t i = 0; i < count * per; ++i) {
        (*g)[begin * per + i] += self.grad[i];
      }
    }
  });
}

/**
 * @brief Channel-to-space rearrangement: (N, C*r*r, H, W) -> (N, C, H*r, W*r).
 *
 * out[n, c, h*r + i, w*r + j] = in[n, c*r*r + i*r + j, h, w].
 */
template <class T>
Tensor<T> pixel_shuffle(const Tensor<T>& x, std::size_t r) {
  detail::require_4d(x, "pixel_shuffle");
  if (r == 0 || x.dim(1) % (r * r) != 0) {
    throw std::invalid_argument("pixel_shuffle: channels not divisible by r^2");
  }
  const std::size_t n = x.dim(0);
  const std::size_t cin = x.dim(1);
  const std::size_t c = cin / (r * r);
  const std::size_t h = x.dim(2);
  const std::size_t w = x.dim(3);
  const std::size_t oh = h * r;
  const std::size_t ow = w * r;
  // index[k] = source offset of output element k
  std::vector<std::size_t> index(x.numel());
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t y = 0; y < oh; ++y) {
        for (std::size_t xo = 0; xo < ow; ++xo) {
          const std::size_t src_c = ch * r * r + (y % r) * r + (xo % r);
          index[((b * c + ch) * oh + y) * ow + xo] = ((b * cin + src_c) * h + y / r) * w + xo / r;
        }
      }
    }
  }
  std::vector<T> out(x.numel());
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k] = x.data()[index[k]];
  }
  return make_result<T>({n, c, oh, ow}, std::move(out), {x}, [index = std::move(index)](Node<T>& self) {
    if (auto* g = detail::grad_of(self, 0)) {
      for (std::size_t k = 0; k < index.size(); ++k) {
        (*g)[index[k]] += self.grad[k];
      }
    }
  });
}

/// Inverse of pixel_shuffle: (N, C, H*r, W*r) -> (N, C*r*r, H, W).
template <class T>
Tensor<T> pixel_unshuffle(const Tensor<T>& x, std::size_t r) {
  detail::require_4d(x, "pixel_unshuffle");
  if (r == 0 || x.dim(2) % r != 0 || x.dim(3) % r != 0) {
    throw std::invalid_argument("pixel_unshuffle: spatial size not divisible by r");
  }
  const std::size_t n = x.dim(0);
  const std::size_t c = x.dim(1);
  const std::size_t h = x.dim(2) / r;
  const std::size_t w = x.dim(3) / r;
  std::vector<std::size_t> index(x.numel());
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t co = 0; co < c * r * r; ++co) {
      const std::size_t ch = co / (r * r);
      const std::size_t i = (co / r) % r;
      const std::size_t j = co % r;
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t xo = 0; xo < w; ++xo) {
          index[((b * c * r * r + co) * h + y) * w + xo] = ((b * c + ch) * h * r + y * r + i) * w * r + xo * r + j;
        }
      }
    }
  }
  std::vector<T> out(x.numel());
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k] = x.data()[index[k]];
  }
  return make_result<T>({n, c * r * r, h, w}, std::move(out), {x}, [index = std::move(index)](Node<T>& self) {
    if (auto* g = detail::grad_of(self, 0)) {
      for (std::size_t k = 0; k < index.size(); ++k) {
        (*g)[index[k]] += self.grad[k];
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Minimum operators for the dark channel. Gradients route to the argmin; ties
// go to the lowest index.

/// (N, C, H, W) -> (N, 1, H, W) minimum over channels.
template <class T>
Tensor<T> channel_min(const Tensor<T>& x) {
  detail::require_4d(x, "channel_min");
  const std::size_t n = x.dim(0);
  const std::size_t c = x.dim(1);
  const std::size_t hw = x.dim(2) * x.dim(3);
  std::vector<T> out(n * hw);
  std::vector<std::size_t> arg(n * hw);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t i = 0; i < hw; ++i) {
      std::size_t best = (b * c) * hw + i;
      for (std::size_t ch = 1; ch < c; ++ch) {
        const std::size_t k = (b * c + ch) * hw + i;
        if (x.data()[k] < x.data()[best]) {
          best = k;
        }
      }
      out[b * hw + i] = x.data()[best];
      arg[b * hw + i] = best;
    }
  }
  return make_result<T>({n, 1, x.dim(2), x.dim(3)}, std::move(out), {x}, [arg = std::move(arg)](Node<T>& self) {
    if (auto* g = detail::grad_of(self, 0)) {
      for (std::size_t k = 0; k < arg.size(); ++k) {
        (*g)[arg[k]] += self.grad[k];
      }
    }
  });
}

/**
 * @brief Square-window minimum per plane with replicate-edge borders.
 *
 * Separable: a row pass then a column pass, each keeping the first minimum,
 * so the routed argmin is the row-major-first minimum of the window.
 */
template <class T>
Tensor<T> window_min(const Tensor<T>& x, int patch) {
  detail::require_4d(x, "window_min");
  if (patch < 1 || patch % 2 == 0) {
    throw std::invalid_argument("window_min: patch must be odd and >= 1");
  }
  const std::size_t planes = x.dim(0) * x.dim(1);
  const std::size_t h = x.dim(2);
  const std::size_t w = x.dim(3);
  const auto r = static_cast<std::size_t>(patch / 2);
  std::vector<T> out(x.numel());
  std::vector<std::size_t> arg(x.numel());
  std::vector<std::size_t> row_arg(h * w);
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = x.data().data() + p * h * w;
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t xo = 0; xo < w; ++xo) {
        const std::size_t lo = xo >= r ? xo - r : 0;
        const std::size_t hi = std::min(w - 1, xo + r);
        std::size_t best = y * w + lo;
        for (std::size_t j = lo + 1; j <= hi; ++j) {
          if (src[y * w + j] < src[best]) {
            best = y * w + j;
          }
        }
        row_arg[y * w + xo] = best;
      }
    }
    for (std::size_t xo = 0; xo < w; ++xo) {
      for (std::size_t y = 0; y < h; ++y) {
        const std::size_t lo = y >= r ? y - r : 0;
        const std::size_t hi = std::min(h - 1, y + r);
        std::size_t best = row_arg[lo * w + xo];
        for (std::size_t i = lo + 1; i <= hi; ++i) {
          const std::size_t cand = row_arg[i * w + xo];
          if (src[cand] < src[best]) {
            best = cand;
          }
        }
        out[p * h * w + y * w + xo] = src[best];
        arg[p * h * w + y * w + xo] = p * h * w + best;
      }
    }
  }
  return make_result<T>(x.shape(), std::move(out), {x}, [arg = std::move(arg)](Node<T>& self) {
    if (auto* g = detail::grad_of(self, 0)) {
      for (std::size_t k = 0; k < arg.size(); ++k) {
        (*g)[arg[k]] += self.grad[k];
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Fused scalar losses

/// mean(sqrt((x - y)^2 + eps^2))
template <class T>
Tensor<T> charbonnier_mean(const Tensor<T>& x, const Tensor<T>& y, T eps) {
  detail::require_same_shape(x, y, "charbonnier");
  const std::size_t n = x.numel();
  std::vector<T> root(n);
  T total = T(0);
  for (std::size_t i = 0; i < n; ++i) {
    const T d = x.data()[i] - y.data()[i];
    root[i] = std::sqrt(d * d + eps * eps);
    total += root[i];
  }
  const T inv = T(1) / static_cast<T>(n);
  return make_result<T>({}, {total * inv}, {x, y}, [root = std::move(root), inv](Node<T>& self) {
    const auto& xv = self.parents[0]->value;
    const auto& yv = self.parents[1]->value;
    const T g0 = self.grad[0] * inv;
    auto* gx = detail::grad_of(self, 0);
    auto* gy = detail::grad_of(self, 1);
    for (std::size_t i = 0; i < root.size(); ++i) {
      const T d = g0 * (xv[i] - yv[i]) / root[i];
      if (gx) {
        (*gx)[i] += d;
      }
      if (gy) {
        (*gy)[i] -= d;
      }
    }
  });
}

/// mean((x - y)^2)
template <class T>
Tensor<T> squared_error_mean(const Tensor<T>& x, const Tensor<T>& y) {
  detail::require_same_shape(x, y, "squared_error_mean");
  const std::size_t n = x.numel();
  T total = T(0);
  for (std::size_t i = 0; i < n; ++i) {
    const T d = x.data()[i] - y.data()[i];
    total += d * d;
  }
  const T inv = T(1) / static_cast<T>(n);
  return make_result<T>({}, {total * inv}, {x, y}, [inv](Node<T>& self) {
    const auto& xv = self.parents[0]->value;
    const auto& yv = self.parents[1]->value;
    const T g0 = self.grad[0] * inv * T(2);
    auto* gx = detail::grad_of(self, 0);
    auto* gy = detail::grad_of(self, 1);
    for (std::size_t i = 0; i < xv.size(); ++i) {
      const T d = g0 * (xv[i] - yv[i]);
      if (gx) {
        (*gx)[i] += d;
      }
      if (gy) {
        (*gy)[i] -= d;
      }
    }
  });
}

/// mean(-log(clamp(p, floor, 1 - floor))); zero gradient where clamped.
template <class T>
Tensor<T> neg_log_mean(const Tensor<T>& p, T floor = T(1e-6)) {
  const std::size_t n = p.numel();
  T total = T(0);
  for (T v : p.data()) {
    total += -std::log(std::clamp(v, floor, T(1) - floor));
  }
  const T inv = T(1) / static_cast<T>(n);
  return make_result<T>({}, {total * inv}, {p}, [inv, floor](Node<T>& self) {
    if (auto* g = detail::grad_of(self, 0)) {
      const auto& pv = self.parents[0]->value;
      for (std::size_t i = 0; i < pv.size(); ++i) {
        if (pv[i] > floor && pv[i] < T(1) - floor) {
          (*g)[i] += -self.grad[0] * inv / pv[i];
        }
      }
    }
  });
}

/// Binary cross-entropy against a constant label, averaged; probabilities clamped like neg_log_mean.
template <class T>
Tensor<T> bce_mean(const Tensor<T>& p, T label, T floor = T(1e-6)) {
  const std::size_t n = p.numel();
  T total = T(0);
  for (T v : p.data()) {
    const T c = std::clamp(v, floor, T(1) - floor);
    total += -(label * std::log(c) + (T(1) - label) * std::log(T(1) - c));
  }
  const T inv = T(1) / static_cast<T>(n);
  return make_result<T>({}, {total * inv}, {p}, [inv, floor, label](Node<T>& self) {
    if (auto* g = detail::grad_of(self, 0)) {
      const auto& pv = self.parents[0]->value;
      for (std::size_t i = 0; i < pv.size(); ++i) {
        if (pv[i] > floor && pv[i] < T(1) - floor) {
          (*g)[i] += self.grad[0] * inv * (-label / pv[i] + (T(1) - label) / (T(1) - pv[i]));
        }
      }
    }
  });
}

}  // namespace hazeforge

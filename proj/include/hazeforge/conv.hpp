#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "parallel.hpp"
#include "tensor.hpp"

namespace hazeforge {

struct ConvGeometry {
  std::size_t in_channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t kernel = 0;
  std::size_t stride = 1;
  std::size_t pad = 0;

  std::size_t out_height() const { return (height + 2 * pad - kernel) / stride + 1; }
  std::size_t out_width() const { return (width + 2 * pad - kernel) / stride + 1; }
  std::size_t patch_size() const { return in_channels * kernel * kernel; }
  bool is_pointwise() const { return kernel == 1 && stride == 1 && pad == 0; }
};

namespace detail {

template <class T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <class T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

// Unrolls one image (C, H, W) into a (C*k*k, Ho*Wo) matrix, zero padded.
template <class T>
void im2col(const T* img, const ConvGeometry& g, T* cols) {
  const std::size_t oh = g.out_height();
  const std::size_t ow = g.out_width();
  const auto pad = static_cast<long>(g.pad);
  for (std::size_t c = 0; c < g.in_channels; ++c) {
    for (std::size_t ky = 0; ky < g.kernel; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel; ++kx) {
        T* row = cols + ((c * g.kernel + ky) * g.kernel + kx) * oh * ow;
        for (std::size_t y = 0; y < oh; ++y) {
          const long iy = static_cast<long>(y * g.stride + ky) - pad;
          for (std::size_t x = 0; x < ow; ++x) {
            const long ix = static_cast<long>(x * g.stride + kx) - pad;
            const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<long>(g.height) && ix < static_cast<long>(g.width);
            row[y * ow + x] = inside ? img[(c * g.height + static_cast<std::size_t>(iy)) * g.width + static_cast<std::size_t>(ix)] : T(0);
          }
        }
      }
    }
  }
}

template <class T>
void col2im_add(const T* cols, const ConvGeometry& g, T* img) {
  const std::size_t oh = g.out_height();
  const std::size_t ow = g.out_width();
  const auto pad = static_cast<long>(g.pad);
  for (std::size_t c = 0; c < g.in_channels; ++c) {
    for (std::size_t ky = 0; ky < g.kernel; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel; ++kx) {
        const T* row = cols + ((c * g.kernel + ky) * g.kernel + kx) * oh * ow;
        for (std::size_t y = 0; y < oh; ++y) {
          const long iy = static_cast<long>(y * g.stride + ky) - pad;
          if (iy < 0 || iy >= static_cast<long>(g.height)) {
            continue;
          }
          for (std::size_t x = 0; x < ow; ++x) {
            const long ix = static_cast<long>(x * g.stride + kx) - pad;
            if (ix >= 0 && ix < static_cast<long>(g.width)) {
              img[(c * g.height + static_cast<std::size_t>(iy)) * g.width + static_cast<std::size_t>(ix)] += row[y * ow + x];
            }
          }
        }
      }
    }
  }
}

}  // namespace detail

/**
 * @brief 2-D cross-correlation with zero padding.
 *
 * input (N, C, H, W), weight (O, C, k, k), optional bias (O). Output spatial
 * size is floor((H + 2*pad - k) / stride) + 1. Images of the batch run in
 * parallel; weight and bias gradients are formed per image and summed in
 * batch order, so results do not depend on the thread count.
 */
template <class T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias, std::size_t stride,
                 std::size_t pad) {
  detail::require_4d(input, "conv2d");
  detail::require_4d(weight, "conv2d weight");
  if (weight.dim(1) != input.dim(1) || weight.dim(2) != weight.dim(3)) {
    throw std::invalid_argument("conv2d: weight " + shape_str(weight.shape()) + " incompatible with input " +
                                shape_str(input.shape()));
  }
  if (stride == 0) {
    throw std::invalid_argument("conv2d: stride must be positive");
  }
  const bool has_bias = bias.defined();
  if (has_bias && (bias.rank() != 1 || bias.dim(0) != weight.dim(0))) {
    throw std::invalid_argument("conv2d: bias must have shape (O)");
  }
  ConvGeometry g{input.dim(1), input.dim(2), input.dim(3), weight.dim(2), stride, pad};
  if (g.height + 2 * pad < g.kernel || g.width + 2 * pad < g.kernel) {
    throw std::invalid_argument("conv2d: kernel larger than padded input");
  }
  const std::size_t n = input.dim(0);
  const std::size_t oc = weight.dim(0);
  const std::size_t k = g.patch_size();
  const std::size_t p = g.out_height() * g.out_width();
  const std::size_t in_per = g.in_channels * g.height * g.width;

  std::vector<T> out(n * oc * p);
  {
    detail::ConstMatrixMap<T> w(weight.data().data(), static_cast<Eigen::Index>(oc), static_cast<Eigen::Index>(k));
    const T* x = input.data().data();
    parallel_for(n, [&](std::size_t b) {
      detail::MatrixMap<T> o(out.data() + b * oc * p, static_cast<Eigen::Index>(oc), static_cast<Eigen::Index>(p));
      if (g.is_pointwise()) {
        detail::ConstMatrixMap<T> cols(x + b * in_per, static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(p));
        o.noalias() = w * cols;
      } else {
        std::vector<T> buf(k * p);
        detail::im2col(x + b * in_per, g, buf.data());
        detail::ConstMatrixMap<T> cols(buf.data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(p));
        o.noalias() = w * cols;
      }
      if (has_bias) {
        for (std::size_t c = 0; c < oc; ++c) {
          const T bc = bias.data()[c];
          T* row = out.data() + (b * oc + c) * p;
          for (std::size_t i = 0; i < p; ++i) {
            row[i] += bc;
          }
        }
      }
    });
  }

  std::vector<Tensor<T>> inputs{input, weight};
  if (has_bias) {
    inputs.push_back(bias);
  }
  return make_result<T>(
      {n, oc, g.out_height(), g.out_width()}, std::move(out), std::move(inputs),
      [g, n, oc, k, p, in_per, has_bias](Node<T>& self) {
        auto* gx = detail::grad_of(self, 0);
        auto* gw = detail::grad_of(self, 1);
        auto* gb = has_bias ? detail::grad_of(self, 2) : nullptr;
        const T* x = self.parents[0]->value.data();
        detail::ConstMatrixMap<T> w(self.parents[1]->value.data(), static_cast<Eigen::Index>(oc),
                                    static_cast<Eigen::Index>(k));
        std::vector<T> dw_parts(gw ? n * oc * k : 0);
        parallel_for(n, [&](std::size_t b) {
          detail::ConstMatrixMap<T> dout(self.grad.data() + b * oc * p, static_cast<Eigen::Index>(oc),
                                         static_cast<Eigen::Index>(p));
          std::vector<T> buf;
          const T* cols_ptr = x + b * in_per;
          if (gw && !g.is_pointwise()) {
            buf.resize(k * p);
            detail::im2col(x + b * in_per, g, buf.data());
            cols_ptr = buf.data();
          }
          if (gw) {
            detail::ConstMatrixMap<T> cols(cols_ptr, static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(p));
            detail::MatrixMap<T> dw(dw_parts.data() + b * oc * k, static_cast<Eigen::Index>(oc),
                                    static_cast<Eigen::Index>(k));
            dw.noalias() = dout * cols.transpose();
          }
          if (gx) {
            if (g.is_pointwise()) {
              detail::MatrixMap<T> dx(gx->data() + b * in_per, static_cast<Eigen::Index>(k),
                                      static_cast<Eigen::Index>(p));
              dx.noalias() += w.transpose() * dout;
            } else {
              std::vector<T> dcols(k * p);
              detail::MatrixMap<T> dc(dcols.data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(p));
              dc.noalias() = w.transpose() * dout;
              detail::col2im_add(dcols.data(), g, gx->data() + b * in_per);
            }
          }
        });
        if (gw) {
          for (std::size_t b = 0; b < n; ++b) {
            const T* part = dw_parts.data() + b * oc * k;
            for (std::size_t i = 0; i < oc * k; ++i) {
              (*gw)[i] += part[i];
            }
          }
        }
        if (gb) {
          for (std::size_t b = 0; b < n; ++b) {
            for (std::size_t c = 0; c < oc; ++c) {
              const T* row = self.grad.data() + (b * oc + c) * p;
              T s = T(0);
              for (std::size_t i = 0; i < p; ++i) {
                s += row[i];
              }
              (*gb)[c] += s;
            }
          }
        }
      });
}

}  // namespace hazeforge

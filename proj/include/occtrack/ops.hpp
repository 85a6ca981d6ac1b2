#pragma once

#include "occtrack/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace occtrack {

inline constexpr std::uint8_t kIgnoreLabel = 255;

namespace detail {

template <typename Scalar>
constexpr Scalar kProbClamp = Scalar(1e-7);

inline void check_conv_shapes(const Shape& input, const Shape& kernel, int dilation) {
  if (dilation < 1) throw ShapeError("conv2d_dilated: dilation must be >= 1, got " + std::to_string(dilation));
  if (input.size() != 3 || input[1] < 1 || input[2] < 1)
    throw ShapeError("conv2d_dilated: input must be [Cin,H,W] with H,W >= 1, got " + to_string(input));
  if (kernel.size() != 4 || kernel[2] != 3 || kernel[3] != 3)
    throw ShapeError("conv2d_dilated: kernel must be [Cout,Cin,3,3], got " + to_string(kernel));
  if (kernel[1] != input[0])
    throw ShapeError("conv2d_dilated: kernel " + to_string(kernel) + " expects " + std::to_string(kernel[1]) +
                     " input channels, input is " + to_string(input));
}

inline void check_bias_shape(const Shape& bias, int cout, int h, int w) {
  const bool per_channel = bias == Shape{cout};
  const bool per_cell = bias == Shape{cout, h, w};
  if (!per_channel && !per_cell)
    throw ShapeError("bias " + to_string(bias) + " is not broadcastable to " + to_string(Shape{cout, h, w}));
}

/// Gathers the 3x3 dilated neighbourhood of every pixel: (Cin*9, H*W), zero outside the grid.
template <typename Scalar>
RowMatrix<Scalar> im2col(const Tensor<Scalar>& input, int dilation) {
  const int cin = input.dim(0), h = input.dim(1), w = input.dim(2);
  RowMatrix<Scalar> cols = RowMatrix<Scalar>::Zero(static_cast<Eigen::Index>(cin) * 9, static_cast<Eigen::Index>(h) * w);
  for (int c = 0; c < cin; ++c) {
    const Scalar* src = input.data() + static_cast<Eigen::Index>(c) * h * w;
    for (int ky = 0; ky < 3; ++ky) {
      const int dy = (ky - 1) * dilation;
      for (int kx = 0; kx < 3; ++kx) {
        const int dx = (kx - 1) * dilation;
        Scalar* row = cols.row((c * 3 + ky) * 3 + kx).data();
        const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
        if (x0 >= x1) continue;
        for (int y = 0; y < h; ++y) {
          const int sy = y + dy;
          if (sy < 0 || sy >= h) continue;
          std::copy(src + sy * w + x0 + dx, src + sy * w + x1 + dx, row + y * w + x0);
        }
      }
    }
  }
  return cols;
}

/// Adjoint of im2col: scatters column gradients back onto the input grid.
template <typename Scalar>
void col2im_add(const RowMatrix<Scalar>& cols, int dilation, Tensor<Scalar>& grad_input) {
  const int cin = grad_input.dim(0), h = grad_input.dim(1), w = grad_input.dim(2);
  for (int c = 0; c < cin; ++c) {
    Scalar* dst = grad_input.data() + static_cast<Eigen::Index>(c) * h * w;
    for (int ky = 0; ky < 3; ++ky) {
      const int dy = (ky - 1) * dilation;
      for (int kx = 0; kx < 3; ++kx) {
        const int dx = (kx - 1) * dilation;
        const Scalar* row = cols.row((c * 3 + ky) * 3 + kx).data();
        const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
        if (x0 >= x1) continue;
        for (int y = 0; y < h; ++y) {
          const int sy = y + dy;
          if (sy < 0 || sy >= h) continue;
          Scalar* d = dst + sy * w + dx;
          const Scalar* s = row + y * w;
          for (int x = x0; x < x1; ++x) d[x] += s[x];
        }
      }
    }
  }
}

template <typename Scalar>
void add_bias(Tensor<Scalar>& out, const Tensor<Scalar>& bias) {
  if (bias.rank() == 1)
    out.matrix().colwise() += bias.array().matrix();
  else
    out.array() += bias.array();
}

}  // namespace detail

/// 3x3 convolution with dilation, zero padding of `dilation` on every side so
/// the output keeps the input resolution.
///
/// out[o,y,x] = bias[o,y,x] + sum_{i,dy,dx} kernel[o,i,dy+1,dx+1] * input[i, y+dy*d, x+dx*d]
template <typename Scalar>
Tensor<Scalar> conv2d_dilated(const Tensor<Scalar>& input, const Tensor<Scalar>& kernel, int dilation,
                              const Tensor<Scalar>* bias = nullptr) {
  detail::check_conv_shapes(input.shape(), kernel.shape(), dilation);
  const int cout = kernel.dim(0), h = input.dim(1), w = input.dim(2);
  if (bias) detail::check_bias_shape(bias->shape(), cout, h, w);
  Tensor<Scalar> out({cout, h, w});
  const auto cols = detail::im2col(input, dilation);
  const auto weights = kernel.reshaped({cout, kernel.dim(1) * 9});
  out.matrix().noalias() = weights.matrix() * cols;
  if (bias) detail::add_bias(out, *bias);
  return out;
}

template <typename Scalar>
Tensor<Scalar> conv2d_dilated(const Tensor<Scalar>& input, const Tensor<Scalar>& kernel, int dilation,
                              const Tensor<Scalar>& bias) {
  return conv2d_dilated(input, kernel, dilation, &bias);
}

inline void check_pointwise_shapes(const Shape& input, const Shape& weight, const Shape& bias) {
  if (input.size() != 3) throw ShapeError("pointwise_conv: input must be [Cin,H,W], got " + to_string(input));
  if (weight.size() != 2 || weight[1] != input[0])
    throw ShapeError("pointwise_conv: weight " + to_string(weight) + " incompatible with input " + to_string(input));
  if (bias != Shape{weight[0]})
    throw ShapeError("pointwise_conv: bias " + to_string(bias) + " must be [" + std::to_string(weight[0]) + "]");
}

/// 1x1 convolution: weight [Cout,Cin], bias [Cout].
template <typename Scalar>
Tensor<Scalar> pointwise_conv(const Tensor<Scalar>& input, const Tensor<Scalar>& weight, const Tensor<Scalar>& bias) {
  check_pointwise_shapes(input.shape(), weight.shape(), bias.shape());
  Tensor<Scalar> out({weight.dim(0), input.dim(1), input.dim(2)});
  out.matrix().noalias() = weight.matrix() * input.matrix();
  out.matrix().colwise() += bias.array().matrix();
  return out;
}

template <typename Scalar>
Tensor<Scalar> sigmoid(const Tensor<Scalar>& t) {
  // tanh form avoids overflow of exp(-x) for large negative inputs.
  return Tensor<Scalar>(t.shape(), Scalar(0.5) * ((Scalar(0.5) * t.array()).tanh() + Scalar(1)));
}

template <typename Scalar>
Tensor<Scalar> tanh_act(const Tensor<Scalar>& t) {
  return Tensor<Scalar>(t.shape(), t.array().tanh());
}

template <typename Scalar>
Tensor<Scalar> one_minus(const Tensor<Scalar>& t) {
  return Tensor<Scalar>(t.shape(), Scalar(1) - t.array());
}

template <typename Scalar>
Tensor<Scalar> elem_mul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  require_same_shape(a.shape(), b.shape(), "elem_mul");
  return Tensor<Scalar>(a.shape(), a.array() * b.array());
}

template <typename Scalar>
Tensor<Scalar> elem_add(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  require_same_shape(a.shape(), b.shape(), "elem_add");
  return Tensor<Scalar>(a.shape(), a.array() + b.array());
}

template <typename Scalar>
Tensor<Scalar> operator+(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return elem_add(a, b);
}

template <typename Scalar>
Tensor<Scalar> operator*(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return elem_mul(a, b);
}

/// Softmax over the channel axis independently for every cell of a [K,H,W] tensor.
template <typename Scalar>
Tensor<Scalar> softmax_per_cell(const Tensor<Scalar>& logits) {
  if (logits.rank() != 3 || logits.dim(0) < 2)
    throw ShapeError("softmax_per_cell: expected [K,H,W] with K >= 2, got " + to_string(logits.shape()));
  Tensor<Scalar> out(logits.shape());
  auto in = logits.matrix();
  auto o = out.matrix();
  const auto max = in.colwise().maxCoeff();
  o = (in.rowwise() - max).array().exp().matrix();
  const auto sum = o.colwise().sum().eval();
  o.array().rowwise() /= sum.array();
  return out;
}

namespace detail {

template <typename Scalar>
void check_bce_shapes(const Tensor<Scalar>& pred, const Tensor<Scalar>& target, const Tensor<Scalar>& mask) {
  if (!same_spatial(pred.shape(), target.shape()) || !same_spatial(pred.shape(), mask.shape()))
    throw ShapeError("masked_bce_loss: shape mismatch pred " + to_string(pred.shape()) + ", target " +
                     to_string(target.shape()) + ", mask " + to_string(mask.shape()));
}

template <typename Scalar>
Eigen::Index active_count(const Tensor<Scalar>& mask) {
  return (mask.array() != Scalar(0)).count();
}

template <typename Scalar>
void check_class_weights(const std::vector<Scalar>& weights) {
  for (Scalar w : weights)
    if (!(w > 0) || !std::isfinite(w)) throw std::invalid_argument("class weights must be positive and finite");
}

template <typename Scalar>
void check_nll_shapes(const Tensor<Scalar>& pred, const ByteGrid& labels, std::size_t weight_count) {
  if (pred.rank() != 3 || pred.dim(1) != labels.rows() || pred.dim(2) != labels.cols())
    throw ShapeError("weighted_masked_nll: prediction " + to_string(pred.shape()) + " does not match label grid " +
                     std::to_string(labels.rows()) + "x" + std::to_string(labels.cols()));
  if (weight_count != static_cast<std::size_t>(pred.dim(0)))
    throw ShapeError("weighted_masked_nll: " + std::to_string(weight_count) + " class weights for " +
                     std::to_string(pred.dim(0)) + " classes");
  for (Eigen::Index i = 0; i < labels.size(); ++i) {
    const auto label = labels.data()[i];
    if (label != kIgnoreLabel && label >= pred.dim(0))
      throw std::out_of_range("weighted_masked_nll: label " + std::to_string(label) + " >= class count " +
                              std::to_string(pred.dim(0)));
  }
}

}  // namespace detail

/// Mean binary cross-entropy over cells where mask != 0. Predictions are
/// clamped to [1e-7, 1-1e-7]. An empty mask yields 0.
template <typename Scalar>
Scalar masked_bce_loss(const Tensor<Scalar>& pred, const Tensor<Scalar>& target, const Tensor<Scalar>& mask) {
  detail::check_bce_shapes(pred, target, mask);
  const Eigen::Index active = detail::active_count(mask);
  if (active == 0) return Scalar(0);
  const Scalar lo = detail::kProbClamp<Scalar>;
  const auto p = pred.array().max(lo).min(Scalar(1) - lo);
  const auto t = target.array();
  const auto terms = t * p.log() + (Scalar(1) - t) * (Scalar(1) - p).log();
  return -(mask.array() != Scalar(0)).select(terms, Scalar(0)).sum() / static_cast<Scalar>(active);
}

/// Class-weighted negative log-likelihood over labeled cells, normalised by
/// the summed weight of those cells. Cells marked kIgnoreLabel contribute nothing.
template <typename Scalar>
Scalar weighted_masked_nll(const Tensor<Scalar>& pred, const ByteGrid& labels, const std::vector<Scalar>& class_weights) {
  detail::check_nll_shapes(pred, labels, class_weights.size());
  detail::check_class_weights(class_weights);
  const Eigen::Index cells = labels.size();
  Scalar total = 0, norm = 0;
  for (Eigen::Index i = 0; i < cells; ++i) {
    const auto label = labels.data()[i];
    if (label == kIgnoreLabel) continue;
    const Scalar w = class_weights[label];
    const Scalar p = std::max(pred[label * cells + i], detail::kProbClamp<Scalar>);
    total -= w * std::log(p);
    norm += w;
  }
  return norm > 0 ? total / norm : Scalar(0);
}

}  // namespace occtrack

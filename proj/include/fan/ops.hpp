#pragma once

// Differentiable primitives on Tensor4. Every forward is a pure function;
// each backward takes the upstream gradient plus whatever the forward needs.

#include <cstddef>
#include <vector>

#include "fan/tensor.hpp"

namespace fan {

enum class Padding { valid, same };

template <typename T>
struct ConvParams {
  Tensor4<T> weight;  // (c_out, c_in, k_h, k_w)
  std::vector<T> bias;
  Padding padding = Padding::valid;
  std::size_t stride = 1;

  std::size_t c_out() const { return weight.n(); }
  std::size_t c_in() const { return weight.c(); }
  std::size_t k_h() const { return weight.h(); }
  std::size_t k_w() const { return weight.w(); }
};

template <typename T>
struct ConvGrads {
  Tensor4<T> input;
  Tensor4<T> weight;
  std::vector<T> bias;
};

/// Forward state retained for conv2d_backward.
template <typename T>
struct ConvCache {
  Tensor4<T> input;
  ConvParams<T> params;
  bool valid = false;
};

/// Output extents of a convolution; throws ShapeError on any mismatch.
template <typename T>
Shape4 conv2d_output_shape(const Shape4& in, const ConvParams<T>& p);

template <typename T>
Tensor4<T> conv2d(const Tensor4<T>& x, const ConvParams<T>& p);

/// Same as conv2d, also filling `cache` for the backward pass.
template <typename T>
Tensor4<T> conv2d(const Tensor4<T>& x, const ConvParams<T>& p, ConvCache<T>& cache);

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor4<T>& grad_out, const Tensor4<T>& x, const ConvParams<T>& p);

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor4<T>& grad_out, const ConvCache<T>& cache);

/// Per-channel mean and population variance over the n, h, w axes.
struct BatchStats {
  std::vector<double> mean;
  std::vector<double> var;
};

template <typename T>
BatchStats batch_stats(const Tensor4<T>& y);

/// (y - mean) / sqrt(var + eps) with statistics from `stats`.
template <typename T>
Tensor4<T> standardize(const Tensor4<T>& y, const BatchStats& stats, double eps);

/// Gradient of standardize with respect to y, including the dependence of the
/// batch statistics on y. `xhat` is the standardized forward output.
template <typename T>
Tensor4<T> standardize_backward(const Tensor4<T>& grad_out, const Tensor4<T>& xhat, const BatchStats& stats,
                                double eps);

/// Nearest-neighbour resampling: out(i, j) = z(floor(i*h/target_h), floor(j*w/target_w)).
template <typename T>
Tensor4<T> upsample(const Tensor4<T>& z, std::size_t target_h, std::size_t target_w);

/// Adjoint of upsample: sums each output gradient back into its source pixel.
template <typename T>
Tensor4<T> upsample_backward(const Tensor4<T>& grad_out, const Shape4& source);

template <typename T>
Tensor4<T> sigmoid(const Tensor4<T>& x);
/// Takes the forward *output* of sigmoid.
template <typename T>
Tensor4<T> sigmoid_backward(const Tensor4<T>& grad_out, const Tensor4<T>& out);

template <typename T>
Tensor4<T> relu(const Tensor4<T>& x);
/// Takes the forward *output* of relu.
template <typename T>
Tensor4<T> relu_backward(const Tensor4<T>& grad_out, const Tensor4<T>& out);

/// 2x2 max pooling with stride 2. Spatial dims must be even.
template <typename T>
Tensor4<T> maxpool2(const Tensor4<T>& x);
template <typename T>
Tensor4<T> maxpool2_backward(const Tensor4<T>& grad_out, const Tensor4<T>& x);

/// Spatial window [top, top+h) x [left, left+w) of every batch element and channel.
template <typename T>
Tensor4<T> crop(const Tensor4<T>& x, std::size_t top, std::size_t left, std::size_t h, std::size_t w);
/// Embeds grad_out back into a zero tensor of shape `full`.
template <typename T>
Tensor4<T> crop_backward(const Tensor4<T>& grad_out, const Shape4& full, std::size_t top, std::size_t left);

/// Mean over all elements of (a - b)^2, accumulated in double.
template <typename T>
double mse(const Tensor4<T>& a, const Tensor4<T>& b);
/// d mse / d a.
template <typename T>
Tensor4<T> mse_backward(const Tensor4<T>& a, const Tensor4<T>& b);

}  // namespace fan

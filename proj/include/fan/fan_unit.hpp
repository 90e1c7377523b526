#pragma once

// Feature-Aware Normalization.
//
// For every latent channel k a unit computes
//
//   out_k = (y_k - mean_k) / sqrt(var_k + eps) * gamma_k(z) + beta_k(z)
//   gamma = sigmoid(W_mult z),  beta = relu(W_add z)
//
// where mean_k and var_k are population statistics of y_k over batch and
// space, and z is the extractor feature map upsampled (nearest) onto the
// input pixel grid. The gates are evaluated at feature resolution and then
// upsampled; for nearest-neighbour resampling this is the same as applying
// them to the upsampled features.
//
// y only ever covers part of the input image. Both y and the upsampled gates
// are cropped to the intersection of their regions, so each unit may shrink
// the spatial extent of the main path.

#include <cstdint>
#include <memory>
#include <vector>

#include "fan/extractor.hpp"
#include "fan/io.hpp"
#include "fan/ops.hpp"
#include "fan/tape.hpp"

namespace fan {

inline constexpr double kFanEps = 1e-5;

template <typename T>
struct FanUnitParams {
  Tensor4<T> w_mult;  // (latent, z_channels, 1, 1)
  Tensor4<T> w_add;   // (latent, z_channels, 1, 1)
  double eps = kFanEps;

  std::size_t latent_channels() const { return w_mult.n(); }
  std::size_t z_channels() const { return w_mult.c(); }
  void validate() const;
};

/// One unit per pyramid level; units[i] consumes levels[i]. Applied deep to shallow.
template <typename T>
struct FanStack {
  std::vector<FanUnitParams<T>> units;
};

template <typename T>
struct FanCache {
  bool valid = false;
  Shape4 y_shape{};
  Region y_region{};
  Region out_region{};
  Region z_region{};
  Tensor4<T> z;
  Tensor4<T> xhat;
  BatchStats stats;
  double eps = kFanEps;
  Tensor4<T> gamma_low;  // sigmoid(W_mult z) at feature resolution
  Tensor4<T> beta_low;   // relu(W_add z) at feature resolution
  Tensor4<T> gamma;      // upsampled and cropped to out_region
  Tensor4<T> beta;
  ConvParams<T> mult_conv;
  ConvParams<T> add_conv;
};

template <typename T>
struct FanOutput {
  Tensor4<T> out;
  Region region;
  FanCache<T> cache;
};

template <typename T>
struct FanGrads {
  Tensor4<T> y;
  Tensor4<T> w_mult;
  Tensor4<T> w_add;
};

/// `y_region` is the input-pixel rectangle that y covers. Throws ShapeError
/// when the regions do not overlap or batch and channel counts disagree.
template <typename T>
FanOutput<T> fan_forward(const Tensor4<T>& y, const Region& y_region, const FeatureLevel<T>& level,
                         const FanUnitParams<T>& params);

template <typename T>
FanGrads<T> fan_backward(const Tensor4<T>& grad_out, const FanCache<T>& cache);

template <typename T>
struct StackOutput {
  Tensor4<T> out;
  Region region;  // top/left are the total crop offsets
  std::vector<FanCache<T>> caches;  // in application order (deep first)
};

template <typename T>
StackOutput<T> apply_stack(const Tensor4<T>& y, const Region& y_region, const FeaturePyramid<T>& pyramid,
                           const FanStack<T>& stack);

template <typename T>
FanStack<T> init_fan_stack(std::size_t latent_channels, const std::vector<std::size_t>& z_channels, std::uint64_t seed);

template <typename T>
struct FanStackGrads {
  std::vector<Tensor4<T>> w_mult;
  std::vector<Tensor4<T>> w_add;
};

template <typename T>
FanStackGrads<T> zero_grads_like(const FanStack<T>& stack);

/// Records one unit on the tape; `region` receives the output region.
template <typename T>
typename GradTape<T>::NodeId tape_fan(GradTape<T>& tape, typename GradTape<T>::NodeId y, const Region& y_region,
                                      const FeatureLevel<T>& level, const FanUnitParams<T>& params, Tensor4<T>* grad_w_mult,
                                      Tensor4<T>* grad_w_add, Region& region);

/// Entries fan.{level}.w_mult / fan.{level}.w_add (rank 2) and meta.fan.eps.
void save_fan_stack(const FanStack<float>& stack, TensorContainer& out);
FanStack<float> load_fan_stack(const TensorContainer& in);

}  // namespace fan

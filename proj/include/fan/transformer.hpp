#pragma once

// Pixelwise main path: lift = conv1x1(3->L), relu, conv1x1(L->L);
// project = conv1x1(L->L), relu, conv1x1(L->3), sigmoid.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "fan/io.hpp"
#include "fan/ops.hpp"
#include "fan/tape.hpp"

namespace fan {

inline constexpr std::size_t kDefaultLatentChannels = 32;

template <typename T>
struct TransformerParams {
  std::vector<ConvParams<T>> lift;
  std::vector<ConvParams<T>> project;
  std::size_t latent_channels = 0;

  /// Throws ShapeError if any layer is not a 1x1 stride-1 convolution or the
  /// channel chain 3 -> L -> ... -> 3 is broken.
  void validate() const;
};

template <typename T>
struct TransformerGrads {
  std::vector<ConvGrads<T>> lift;
  std::vector<ConvGrads<T>> project;
};

template <typename T>
TransformerParams<T> init_transformer(std::size_t latent_channels, std::uint64_t seed);

template <typename T>
TransformerGrads<T> zero_grads_like(const TransformerParams<T>& p);

template <typename T>
Tensor4<T> lift(const Tensor4<T>& x, const TransformerParams<T>& p);

template <typename T>
Tensor4<T> project(const Tensor4<T>& ybar, const TransformerParams<T>& p);

template <typename T>
typename GradTape<T>::NodeId tape_lift(GradTape<T>& tape, typename GradTape<T>::NodeId x, const TransformerParams<T>& p,
                                       TransformerGrads<T>* grads);

template <typename T>
typename GradTape<T>::NodeId tape_project(GradTape<T>& tape, typename GradTape<T>::NodeId ybar,
                                          const TransformerParams<T>& p, TransformerGrads<T>* grads);

/// Entries t.lift.{i}.weight/bias and t.project.{i}.weight/bias.
void save_transformer(const TransformerParams<float>& p, TensorContainer& out);
TransformerParams<float> load_transformer(const TensorContainer& in);

}  // namespace fan

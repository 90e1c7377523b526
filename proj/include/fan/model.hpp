#pragma once

// The full normalisation network f(x~) = project(FAN_stack(lift(x~), F(x~))).
// The output covers only the region where every pyramid level has valid
// features, so it is a centre crop of the input.

#include <span>
#include <string>
#include <vector>

#include "fan/adam.hpp"
#include "fan/extractor.hpp"
#include "fan/fan_unit.hpp"
#include "fan/noise_model.hpp"
#include "fan/transformer.hpp"

namespace fan {

template <typename T>
struct FanNetwork {
  TransformerParams<T> transformer;
  FanStack<T> fan;

  template <typename U>
  FanNetwork<U> cast() const;
};

template <typename T>
struct NetworkGrads {
  TransformerGrads<T> transformer;
  FanStackGrads<T> fan;
};

template <typename T>
struct NetworkOutput {
  Tensor4<T> image;
  Region region;  // in input pixel coordinates
};

/// Region where every level has features; the output of the network.
Region valid_region(const std::vector<LevelGeometry>& levels, std::size_t height, std::size_t width);

template <typename T>
NetworkGrads<T> zero_grads_like(const FanNetwork<T>& net);

template <typename T>
NetworkOutput<T> network_forward(const FanNetwork<T>& net, const Tensor4<T>& x_tilde, const FeaturePyramid<T>& pyramid);

/// Mean squared error between f(x_tilde) and the matching crop of `clean`.
/// Gradients are accumulated into `grads`.
template <typename T>
double network_loss_and_grad(const FanNetwork<T>& net, const Tensor4<T>& x_tilde, const FeaturePyramid<T>& pyramid,
                             const Tensor4<T>& clean, NetworkGrads<T>& grads);

/// Every trainable tensor with its checkpoint name; extractor weights are never included.
template <typename T>
std::vector<ParamSlot<T>> param_slots(FanNetwork<T>& net, NetworkGrads<T>& grads);

template <typename T>
Tensor4<T> crop_region(const Tensor4<T>& image, const Region& region);

inline constexpr const char* kLossHistory = "meta.loss_history";

/// Extractor + trained network + the corruption model used in training.
class FanModel {
 public:
  FanModel(ExtractorSpec spec, TensorContainer extractor_weights, FanNetwork<float> network, NoiseModel noise);

  /// Checkpoint layout: f.* extractor weights (and meta.preprocess.*),
  /// t.* transformer, fan.* gates, noise.* corruption model, meta.* extras.
  static FanModel from_container(const TensorContainer& c);
  TensorContainer to_container(std::span<const double> loss_history = {}) const;

  NetworkOutput<float> normalize(const Tensor4<float>& x) const;
  /// Output geometry for an input of the given size (throws if too small).
  Region output_region(std::size_t height, std::size_t width) const;

  const FeatureExtractor<float>& extractor() const { return extractor_; }
  const TensorContainer& extractor_weights() const { return extractor_weights_; }
  const FanNetwork<float>& network() const { return network_; }
  FanNetwork<float>& network() { return network_; }
  const NoiseModel& noise() const { return noise_; }

 private:
  ExtractorSpec spec_;
  TensorContainer extractor_weights_;
  FeatureExtractor<float> extractor_;
  FanNetwork<float> network_;
  NoiseModel noise_;
};

}  // namespace fan

#pragma once

// Fixed-weight context network. A sequential stack of valid 3x3 convolutions
// (each followed by relu) and 2x2 max pools, emitting feature maps at three
// tap layers. Weights come from a TensorContainer under f.conv{block}_{idx}.

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fan/io.hpp"
#include "fan/ops.hpp"
#include "fan/tensor.hpp"

namespace fan {

struct ExtractorLayer {
  enum class Kind { conv, maxpool };
  Kind kind = Kind::conv;
  std::string name;  // "conv{block}_{idx}" for convolutions
  std::size_t c_in = 0;
  std::size_t c_out = 0;
  std::size_t kernel = 3;
};

struct ExtractorSpec {
  std::vector<ExtractorLayer> layers;
  std::vector<std::size_t> taps;

  /// Throws std::invalid_argument when an invariant is broken.
  void validate() const;
};

/// Where one tap's feature map sits relative to the input image. Feature
/// pixel (i, j) stands for the input block starting at
/// (top + scale*i, left + scale*j) of size scale x scale.
struct LevelGeometry {
  std::size_t tap_index = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::size_t top = 0;
  std::size_t left = 0;
  std::size_t scale = 1;

  Region region() const;
};

template <typename T>
struct FeatureLevel {
  LevelGeometry geometry;
  Tensor4<T> z;

  Region region() const { return geometry.region(); }
};

template <typename T>
struct FeaturePyramid {
  std::vector<FeatureLevel<T>> levels;  // shallow to deep
};

class InputTooSmallError : public ShapeError {
 public:
  using ShapeError::ShapeError;
};

/// Per-tap geometry for an input of the given size. Before each max pool an
/// odd trailing row or column is dropped. Throws InputTooSmallError (naming
/// the minimum admissible size) if any tap would be empty.
std::vector<LevelGeometry> plan_geometry(const ExtractorSpec& spec, std::size_t height, std::size_t width);

/// Smallest square side for which every tap is non-empty.
std::size_t min_input_size(const ExtractorSpec& spec);

/// VGG-19 convolutional prefix through block 3, taps at conv1_2, conv2_2, conv3_4.
ExtractorSpec default_vgg_spec();

/// Three blocks of two 8-channel convolutions with SplitMix64 weights.
std::pair<ExtractorSpec, TensorContainer> tiny_spec(std::uint64_t seed);

/// Rebuilds the layer list from f.conv{b}_{i}.weight entries: pools between
/// blocks, one tap at the last convolution of each block.
ExtractorSpec spec_from_container(const TensorContainer& weights);

std::string conv_weight_name(const std::string& layer);
std::string conv_bias_name(const std::string& layer);

inline constexpr const char* kPreprocessMean = "meta.preprocess.mean";
inline constexpr const char* kPreprocessStd = "meta.preprocess.std";

template <typename T>
class FeatureExtractor {
 public:
  /// Binds weights to the spec; throws std::invalid_argument listing every
  /// missing or mis-shaped entry.
  FeatureExtractor(ExtractorSpec spec, const TensorContainer& weights);

  FeaturePyramid<T> extract(const Tensor4<T>& x) const;

  const ExtractorSpec& spec() const { return spec_; }
  std::size_t min_input_size() const { return min_size_; }
  std::vector<LevelGeometry> geometry(std::size_t height, std::size_t width) const {
    return plan_geometry(spec_, height, width);
  }

 private:
  ExtractorSpec spec_;
  std::vector<ConvParams<T>> convs_;  // parallel to spec_.layers, empty for pools
  std::vector<double> mean_;
  std::vector<double> std_;
  std::size_t min_size_ = 0;
};

/// One-shot convenience wrapper around FeatureExtractor.
template <typename T>
FeaturePyramid<T> extract(const Tensor4<T>& x, const ExtractorSpec& spec, const TensorContainer& weights) {
  return FeatureExtractor<T>(spec, weights).extract(x);
}

extern template class FeatureExtractor<float>;
extern template class FeatureExtractor<double>;

}  // namespace fan

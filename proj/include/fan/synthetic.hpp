#pragma once

// Synthetic two-tone "tissue": a plasma-textured stroma background with
// randomly placed elliptical nuclei, rendered in a fixed reference palette.

#include <cstdint>
#include <vector>

#include "fan/noise_model.hpp"
#include "fan/tensor.hpp"

namespace fan {

struct SynthPalette {
  Rgb background{0.92f, 0.64f, 0.78f};
  Rgb stroma{0.84f, 0.42f, 0.62f};
  Rgb nucleus{0.36f, 0.22f, 0.56f};
};

struct SynthOptions {
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t min_nuclei = 4;
  std::size_t max_nuclei = 10;
  double min_radius = 2.5;
  double max_radius = 6.0;
  double grain = 0.02;  // std of per-pixel intensity jitter
  SynthPalette palette{};
};

/// One 1x3xHxW image in [0,1]; identical seeds give identical images.
Tensor4<float> synth_tissue(const SynthOptions& opt, std::uint64_t seed);

/// `count` images with per-image seeds derived from `seed`.
std::vector<Tensor4<float>> synth_dataset(std::size_t count, const SynthOptions& opt, std::uint64_t seed);

}  // namespace fan

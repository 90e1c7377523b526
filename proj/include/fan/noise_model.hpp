#pragma once

// Training-time colour corruption. Each image receives one global RGB shift
// drawn from N(0, epsilon * W diag(sigma) W^T), where the columns of W are the
// principal axes of reference pixel colours and sigma their variances.

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "fan/io.hpp"
#include "fan/tensor.hpp"

namespace fan {

using Rgb = std::array<float, 3>;
using Mat3 = std::array<std::array<double, 3>, 3>;

inline constexpr double kDefaultEpsilonAug = 0.5;

struct NoiseModel {
  Mat3 w{};  // w[row][col]; column j is the j-th principal axis
  std::array<double, 3> sigma{};  // explained variances, descending
  double epsilon = kDefaultEpsilonAug;

  /// Throws std::invalid_argument unless w is orthonormal (1e-6), sigma is
  /// sorted descending and non-negative, and 0 <= epsilon < 1.
  void validate() const;
  /// epsilon * W diag(sigma) W^T
  Mat3 covariance() const;
};

struct PcaFit {
  NoiseModel model;
  std::size_t rank = 3;  // < 3 when the pixel covariance is singular
};

/// Eigen-decomposition of the population covariance of `pixels`. Each axis
/// is signed so that its largest-magnitude component is positive.
PcaFit fit_pca(std::span<const Rgb> pixels, double epsilon);

/// Uniform random subsample of at most `max_count` pixels across all images.
std::vector<Rgb> sample_pixels(std::span<const Tensor4<float>> images, std::size_t max_count, std::uint64_t seed);

/// One shift vector sqrt(epsilon) * W diag(sqrt(sigma)) n with n ~ N(0, I).
std::array<double, 3> draw_shift(const NoiseModel& model, std::mt19937_64& rng);

/// Shifts every pixel of each batch element by that element's draw, then
/// clamps to [0, 1] unless `clamp` is false. Deterministic in `seed`.
Tensor4<float> sample_disturbed(const Tensor4<float>& x, const NoiseModel& model, std::uint64_t seed, bool clamp = true);

/// The model as a checkpoint reload reproduces it (every value rounded to f32).
NoiseModel round_to_f32(NoiseModel m);

void save_noise_model(const NoiseModel& m, TensorContainer& out);
NoiseModel load_noise_model(const TensorContainer& in);

}  // namespace fan

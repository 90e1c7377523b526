#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fan/model.hpp"

namespace fan {

struct TrainConfig {
  std::size_t patch_size = 192;
  std::size_t batch_size = 8;
  std::size_t steps = 5000;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  double epsilon_aug = kDefaultEpsilonAug;
  std::size_t latent_channels = kDefaultLatentChannels;
  double holdout_fraction = 0.1;
  std::size_t holdout_every = 100;  // 0 disables periodic held-out evaluation
  std::size_t max_pca_pixels = 1'000'000;
};

struct HoldoutPoint {
  std::size_t step;
  double loss;
};

struct TrainResult {
  std::optional<FanModel> model;  // last parameters that produced a finite loss
  std::vector<double> loss_history;  // training loss per completed step
  std::vector<HoldoutPoint> holdout;
  std::size_t pca_rank = 3;
  /// Trainable tensors whose gradient stayed exactly zero through the first 10 steps.
  std::vector<std::string> dead_parameters;
  bool aborted = false;
  std::string message;
};

/// Called after every step with (step index, training loss).
using ProgressFn = std::function<void(std::size_t, double)>;

/// Throws std::invalid_argument for an empty dataset, non-RGB or unequal
/// patches, or patches smaller than the extractor's minimum input.
TrainResult train(std::span<const Tensor4<float>> patches, const TrainConfig& cfg, const ExtractorSpec& spec,
                  const TensorContainer& extractor_weights, const ProgressFn& progress = {});

/// Denoising objective on `batch` without updating parameters; the
/// disturbance is drawn from the model's noise model with `seed`.
double evaluate_loss(const FanModel& model, const Tensor4<float>& batch, std::uint64_t seed);

/// Up to `count` distinct patch_size x patch_size crops whose top-left
/// corners lie on a grid of the given stride. Returns no patches (rather than
/// throwing) when the image is smaller than the patch.
std::vector<Tensor4<float>> extract_patches(const Tensor4<float>& image, std::size_t patch_size, std::size_t stride,
                                            std::size_t count, std::uint64_t seed);

/// Deterministic per-step seed derived from a run seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace fan

#include "fan/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "fan/random.hpp"

namespace fan {

namespace {

double denoising_loss(const FanNetwork<float>& net, const FeatureExtractor<float>& extractor, const NoiseModel& noise,
                      const Tensor4<float>& batch, std::uint64_t seed) {
  const Tensor4<float> disturbed = sample_disturbed(batch, noise, seed);
  const auto out = network_forward(net, disturbed, extractor.extract(disturbed));
  return mse(out.image, crop_region(batch, out.region));
}

Tensor4<float> gather(std::span<const Tensor4<float>> patches, std::span<const std::size_t> idx) {
  std::vector<Tensor4<float>> parts;
  parts.reserve(idx.size());
  for (auto i : idx) parts.push_back(patches[i]);
  return concat_batch<float>(parts);
}

void validate_inputs(std::span<const Tensor4<float>> patches, const TrainConfig& cfg, const FeatureExtractor<float>& fx) {
  if (patches.empty()) throw std::invalid_argument("train: dataset is empty");
  if (cfg.batch_size == 0 || cfg.steps == 0 || cfg.patch_size == 0 || cfg.latent_channels < 3) {
    throw std::invalid_argument("train: batch_size, steps and patch_size must be positive and latent_channels >= 3");
  }
  if (!(cfg.learning_rate > 0.0)) throw std::invalid_argument("train: learning_rate must be positive");
  if (!(cfg.epsilon_aug >= 0.0 && cfg.epsilon_aug < 1.0)) throw std::invalid_argument("train: epsilon_aug must lie in [0, 1)");
  if (!(cfg.holdout_fraction >= 0.0 && cfg.holdout_fraction < 1.0)) {
    throw std::invalid_argument("train: holdout_fraction must lie in [0, 1)");
  }
  // rejects with the minimum admissible size when the patch is too small
  fx.geometry(cfg.patch_size, cfg.patch_size);
  for (const auto& p : patches) {
    if (p.n() != 1 || p.c() != 3 || p.h() != cfg.patch_size || p.w() != cfg.patch_size) {
      throw std::invalid_argument("train: every patch must be 1x3x" + std::to_string(cfg.patch_size) + "x" +
                                  std::to_string(cfg.patch_size) + ", got " + to_string(p.shape()));
    }
  }
}

bool any_nonzero(std::span<const float> g) {
  return std::any_of(g.begin(), g.end(), [](float v) { return v != 0.0f; });
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  SplitMix64 mix(base ^ (stream * 0xD1B54A32D192ED03ULL));
  mix.next();
  return mix.next();
}

TrainResult train(std::span<const Tensor4<float>> patches, const TrainConfig& cfg, const ExtractorSpec& spec,
                  const TensorContainer& extractor_weights, const ProgressFn& progress) {
  const FeatureExtractor<float> extractor(spec, extractor_weights);
  validate_inputs(patches, cfg, extractor);

  std::vector<std::size_t> order(patches.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 split_rng(derive_seed(cfg.seed, 0));
  std::shuffle(order.begin(), order.end(), split_rng);
  std::size_t n_holdout = static_cast<std::size_t>(std::floor(cfg.holdout_fraction * static_cast<double>(order.size())));
  n_holdout = std::min(n_holdout, order.size() - 1);
  const std::vector<std::size_t> holdout_idx(order.end() - static_cast<std::ptrdiff_t>(n_holdout), order.end());
  const std::vector<std::size_t> train_idx(order.begin(), order.end() - static_cast<std::ptrdiff_t>(n_holdout));

  std::vector<Tensor4<float>> train_set;
  for (auto i : train_idx) train_set.push_back(patches[i]);

  TrainResult result;
  const auto pixels = sample_pixels(train_set, cfg.max_pca_pixels, derive_seed(cfg.seed, 1));
  const PcaFit pca = fit_pca(pixels, cfg.epsilon_aug);
  result.pca_rank = pca.rank;
  const NoiseModel noise = round_to_f32(pca.model);

  std::vector<std::size_t> z_channels;
  for (const auto& l : extractor.geometry(cfg.patch_size, cfg.patch_size)) z_channels.push_back(l.channels);
  FanNetwork<float> net{init_transformer<float>(cfg.latent_channels, derive_seed(cfg.seed, 2)),
                        init_fan_stack<float>(cfg.latent_channels, z_channels, derive_seed(cfg.seed, 3))};
  for (auto& u : net.fan.units) u.eps = static_cast<float>(u.eps);
  FanNetwork<float> last_good = net;

  const AdamConfig adam{cfg.learning_rate, 0.9, 0.999, 1e-8};
  AdamState<float> adam_state;
  std::mt19937_64 batch_rng(derive_seed(cfg.seed, 4));
  std::uniform_int_distribution<std::size_t> pick(0, train_idx.size() - 1);
  const Tensor4<float> holdout_batch = gather(patches, holdout_idx);
  const std::uint64_t holdout_seed = derive_seed(cfg.seed, 5);

  std::vector<bool> touched;
  std::vector<std::size_t> batch_idx(cfg.batch_size);
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    for (auto& i : batch_idx) i = train_idx[pick(batch_rng)];
    const Tensor4<float> clean = gather(patches, batch_idx);
    const Tensor4<float> disturbed = sample_disturbed(clean, noise, derive_seed(cfg.seed, 1000 + step));
    const auto pyramid = extractor.extract(disturbed);

    NetworkGrads<float> grads = zero_grads_like(net);
    const double loss = network_loss_and_grad(net, disturbed, pyramid, clean, grads);
    if (!std::isfinite(loss)) {
      result.aborted = true;
      result.message = "non-finite loss at step " + std::to_string(step);
      break;
    }
    last_good = net;
    auto slots = param_slots(net, grads);
    if (step < 10) {
      touched.resize(slots.size(), false);
      for (std::size_t k = 0; k < slots.size(); ++k) touched[k] = touched[k] || any_nonzero(slots[k].grad);
      if (step == 9 || step + 1 == cfg.steps) {
        for (std::size_t k = 0; k < slots.size(); ++k)
          if (!touched[k]) result.dead_parameters.push_back(slots[k].name);
      }
    }
    try {
      adam_step<float>(slots, adam_state, adam);
    } catch (const NonFiniteError& e) {
      result.aborted = true;
      result.message = std::string(e.what()) + " at step " + std::to_string(step);
      break;
    }
    result.loss_history.push_back(loss);
    if (progress) progress(step, loss);
    const bool report = cfg.holdout_every > 0 && ((step + 1) % cfg.holdout_every == 0 || step + 1 == cfg.steps);
    if (report && !holdout_idx.empty()) {
      result.holdout.push_back({step + 1, denoising_loss(net, extractor, noise, holdout_batch, holdout_seed)});
    }
  }
  result.model.emplace(spec, extractor_weights, result.aborted ? last_good : net, noise);
  return result;
}

double evaluate_loss(const FanModel& model, const Tensor4<float>& batch, std::uint64_t seed) {
  if (batch.c() != 3 || batch.empty()) throw ShapeError("evaluate_loss: expected a non-empty RGB batch, got " + to_string(batch.shape()));
  return denoising_loss(model.network(), model.extractor(), model.noise(), batch, seed);
}

std::vector<Tensor4<float>> extract_patches(const Tensor4<float>& image, std::size_t patch_size, std::size_t stride,
                                            std::size_t count, std::uint64_t seed) {
  if (patch_size == 0 || stride == 0) throw std::invalid_argument("extract_patches: patch_size and stride must be positive");
  if (image.n() != 1) throw ShapeError("extract_patches: expected a single image, got " + to_string(image.shape()));
  if (image.h() < patch_size || image.w() < patch_size) return {};
  std::vector<std::pair<std::size_t, std::size_t>> corners;
  for (std::size_t y = 0; y + patch_size <= image.h(); y += stride)
    for (std::size_t x = 0; x + patch_size <= image.w(); x += stride) corners.emplace_back(y, x);
  std::mt19937_64 rng(seed);
  std::shuffle(corners.begin(), corners.end(), rng);
  corners.resize(std::min(count, corners.size()));
  std::vector<Tensor4<float>> out;
  out.reserve(corners.size());
  for (const auto& [y, x] : corners) out.push_back(crop(image, y, x, patch_size, patch_size));
  return out;
}

}  // namespace fan

// Trains the toy set once per latent width and prints held-out scores.
// Usage: fan_latent_sweep [steps] [widths...]

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <vector>

#include "fan/metrics.hpp"
#include "fan/synthetic.hpp"
#include "fan/trainer.hpp"

using namespace fan;

int main(int argc, char** argv) {
  const std::size_t steps = argc > 1 ? std::strtoul(argv[1], nullptr, 10) : 1500;
  std::vector<std::size_t> widths;
  for (int i = 2; i < argc; ++i) widths.push_back(std::strtoul(argv[i], nullptr, 10));
  if (widths.empty()) widths = {8, 16, 32, 64};

  const auto train_set = synth_dataset(200, SynthOptions{}, 11);
  const auto test_set = synth_dataset(50, SynthOptions{}, 12);
  const auto [spec, w] = tiny_spec(7);
  std::printf("latent\tsteps\tseconds\tfinal_loss_avg100\tssdh_ratio\tsdsim\tlab_ratio\n");
  for (std::size_t latent : widths) {
    TrainConfig cfg;
    cfg.patch_size = 64;
    cfg.steps = steps;
    cfg.latent_channels = latent;
    cfg.holdout_every = 0;
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = train(train_set, cfg, spec, w);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    double tail = 0.0;
    const std::size_t k = std::min<std::size_t>(100, r.loss_history.size());
    for (std::size_t i = r.loss_history.size() - k; i < r.loss_history.size(); ++i) tail += r.loss_history[i] / k;
    double s_out = 0, s_in = 0, sd = 0, lab_o = 0, lab_r = 0;
    for (std::size_t i = 0; i < test_set.size(); ++i) {
      const auto xt = sample_disturbed(test_set[i], r.model->noise(), derive_seed(99, i));
      const auto out = r.model->normalize(xt);
      const auto xc = crop_region(test_set[i], out.region), xtc = crop_region(xt, out.region);
      const auto hx = kde_histogram(xc);
      s_out += ssdh(kde_histogram(out.image), hx);
      s_in += ssdh(kde_histogram(xtc), hx);
      sd += sdsim(out.image, xtc);
      lab_o += lab_volume(out.image);
      lab_r += lab_volume(xc);
    }
    std::printf("%zu\t%zu\t%.0f\t%.5g\t%.3f\t%.4f\t%.3f\n", latent, steps, secs, tail, s_out / s_in,
                sd / static_cast<double>(test_set.size()), lab_o / lab_r);
    std::fflush(stdout);
  }
}

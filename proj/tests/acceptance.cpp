// Acceptance checks; prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails.

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "fan/fan_unit.hpp"
#include "fan/io.hpp"
#include "fan/metrics.hpp"
#include "fan/model.hpp"
#include "fan/noise_model.hpp"
#include "fan/synthetic.hpp"
#include "fan/trainer.hpp"
#include "oracles.hpp"

using namespace fan;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::vector<Tensor4<float>> tissue(std::size_t count, std::size_t size, std::uint64_t seed) {
  SynthOptions opt;
  opt.height = opt.width = size;
  return synth_dataset(count, opt, seed);
}

NoiseModel tissue_noise(std::span<const Tensor4<float>> images, double epsilon) {
  return round_to_f32(fit_pca(sample_pixels(images, 200000, 1), epsilon).model);
}

struct GradientCheck {
  double worst = 0.0;
  std::string where;
  std::size_t within = 0;
};

Outcome gradient_check(std::string& note) {
  const auto t0 = Clock::now();
  const auto [spec, w] = tiny_spec(0);
  const auto clean_f = concat_batch<float>(tissue(2, 48, 31));
  const auto noisy_f = sample_disturbed(clean_f, tissue_noise(tissue(8, 48, 32), 0.5), 33);
  const auto clean = clean_f.cast<double>();
  const auto noisy = noisy_f.cast<double>();
  const auto pyramid = extract(noisy, spec, w);
  std::vector<std::size_t> zc;
  for (const auto& l : pyramid.levels) zc.push_back(l.geometry.channels);
  FanNetwork<double> net{init_transformer<double>(kDefaultLatentChannels, 34),
                         init_fan_stack<double>(kDefaultLatentChannels, zc, 35)};

  auto grads = zero_grads_like(net);
  network_loss_and_grad(net, noisy, pyramid, clean, grads);
  auto loss = [&] {
    const auto out = network_forward(net, noisy, pyramid);
    return mse(out.image, crop_region(clean, out.region));
  };
  auto central = [&](double& v, double delta) {
    const double keep = v;
    v = keep + delta;
    const double up = loss();
    v = keep - delta;
    const double down = loss();
    v = keep;
    return (up - down) / (2 * delta);
  };
  auto relative = [](double a, double n, double floor) {
    return std::abs(n - a) / std::max({std::abs(n), std::abs(a), floor});
  };
  GradientCheck coarse, fine;
  std::size_t checked = 0, tensors = 0;
  for (auto& s : param_slots(net, grads)) {
    ++tensors;
    for (std::size_t i = 0; i < s.value.size(); ++i, ++checked) {
      const std::string where = s.name + "[" + std::to_string(i) + "]";
      const double rc = relative(s.grad[i], central(s.value[i], 1e-3), 1e-8);
      if (rc < 1e-3) ++coarse.within;
      if (rc > coarse.worst) coarse = {rc, where, coarse.within};
      const double rf = relative(s.grad[i], central(s.value[i], 1e-6), 1e-6);
      if (rf < 1e-3) ++fine.within;
      if (rf > fine.worst) fine = {rf, where, fine.within};
    }
  }
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = coarse.worst < 1e-3 && secs < 120.0;
  o.detail = std::to_string(checked) + " elements in " + std::to_string(tensors) + " tensors, delta 1e-3: max rel err " +
             fmt("%.3g", coarse.worst) + " at " + coarse.where + ", " + std::to_string(coarse.within) +
             " elements within 1e-3, " + fmt("%.1f s", secs);
  note = "gradient check at delta 1e-6: max rel err " + fmt("%.3g", fine.worst) + " at " + fine.where + ", " +
         std::to_string(fine.within) + " of " + std::to_string(checked) + " elements within 1e-3";
  return o;
}

Outcome zero_gate_algebra() {
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<float> u(-3.0f, 5.0f);
  Tensor4<float> y(2, kDefaultLatentChannels, 20, 20);
  for (auto& v : y.data()) v = u(rng);
  Tensor4<float> z(2, 8, 5, 5);
  for (auto& v : z.data()) v = std::abs(u(rng));
  FanUnitParams<float> p;
  p.w_mult = Tensor4<float>(kDefaultLatentChannels, 8, 1, 1);
  p.w_add = Tensor4<float>(kDefaultLatentChannels, 8, 1, 1);
  const FeatureLevel<float> level{LevelGeometry{0, 5, 5, 8, 0, 0, 4}, z};
  const auto r = fan_forward(y, Region{0, 0, 20, 20}, level, p);

  // reference standardisation in double
  const std::size_t n = y.n(), c = y.c(), hw = y.h() * y.w();
  double worst_half = 0.0, worst_mean = 0.0, worst_var = 0.0;
  for (std::size_t k = 0; k < c; ++k) {
    double m = 0.0, v = 0.0;
    for (std::size_t b = 0; b < n; ++b)
      for (float x : y.plane(b, k)) m += x;
    m /= static_cast<double>(n * hw);
    for (std::size_t b = 0; b < n; ++b)
      for (float x : y.plane(b, k)) v += (x - m) * (x - m);
    v /= static_cast<double>(n * hw);
    double om = 0.0, ov = 0.0;
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t i = 0; i < hw; ++i) {
        const double xhat = (y.plane(b, k)[i] - m) / std::sqrt(v + kFanEps);
        worst_half = std::max(worst_half, std::abs(static_cast<double>(r.out.plane(b, k)[i]) - 0.5 * xhat));
        om += 2.0 * r.out.plane(b, k)[i];
      }
    om /= static_cast<double>(n * hw);
    for (std::size_t b = 0; b < n; ++b)
      for (float x : r.out.plane(b, k)) ov += (2.0 * x - om) * (2.0 * x - om);
    ov /= static_cast<double>(n * hw);
    worst_mean = std::max(worst_mean, std::abs(om));
    worst_var = std::max(worst_var, std::abs(ov - 1.0));
  }
  Outcome o;
  o.pass = worst_half < 1e-6 && worst_mean < 1e-5 && worst_var < 1e-3;
  o.detail = "max |out - 0.5 xhat| " + fmt("%.3g", worst_half) + ", max |mean| " + fmt("%.3g", worst_mean) +
             ", max |var - 1| " + fmt("%.3g", worst_var);
  return o;
}

Outcome metric_oracles() {
  std::mt19937_64 rng(51);
  std::vector<std::string> failed;
  auto need = [&](bool ok, const std::string& what) {
    if (!ok) failed.push_back(what);
  };
  const auto x = tissue(1, 48, 52)[0];
  const auto h = kde_histogram(x);
  need(ssdh(h, h) == 0.0, "ssdh(h,h)");
  need(std::abs(sdsim(x, x)) < 1e-12, "sdsim(x,x)");
  Tensor4<float> flat(1, 3, 16, 16);
  for (std::size_t c = 0; c < 3; ++c)
    for (auto& v : flat.plane(0, c)) v = 0.2f + 0.3f * static_cast<float>(c);
  need(std::abs(lab_volume(flat)) < 1e-9, "lab(constant)");
  const double binomial[7] = {1, 6, 15, 20, 15, 6, 1};
  for (int i = 0; i < 7; ++i) need(kBinomialKernel[i] == binomial[i] / 64.0, "kernel");
  double worst_mass = 0.0;
  for (int k = 0; k < 10; ++k) {
    std::uniform_real_distribution<float> u(-0.2f, 1.2f);
    Tensor4<float> t(1, 3, 9 + k, 13);
    for (auto& v : t.data()) v = u(rng);
    for (const auto& ch : kde_histogram(t).bins) {
      double m = 0.0;
      for (double v : ch) m += v;
      worst_mass = std::max(worst_mass, std::abs(m - 1.0));
    }
  }
  need(worst_mass <= 1e-9, "kde mass");
  double worst_ssim = 0.0;
  for (int k = 0; k < 20; ++k) {
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    const std::size_t hh = 11 + static_cast<std::size_t>(k) % 9, ww = 11 + static_cast<std::size_t>(k * 5) % 13;
    Tensor4<float> a(1, 3, hh, ww), b(1, 3, hh, ww);
    for (auto& v : a.data()) v = u(rng);
    const float mix = static_cast<float>(k) / 20.0f;
    for (std::size_t i = 0; i < a.size(); ++i) b.data()[i] = (1.0f - mix) * a.data()[i] + mix * u(rng);
    const double want = std::clamp((1.0 - fan::test::ssim_oracle(a, b)) / 2.0, 0.0, 1.0);
    worst_ssim = std::max(worst_ssim, std::abs(sdsim(a, b) - want));
  }
  need(worst_ssim < 1e-6, "sdsim vs reference");
  Outcome o;
  o.pass = failed.empty();
  o.detail = "kde mass err " + fmt("%.3g", worst_mass) + ", sdsim vs reference max diff " + fmt("%.3g", worst_ssim);
  for (const auto& f : failed) o.detail += "; failed: " + f;
  return o;
}

Outcome noise_statistics() {
  const auto images = tissue(20, 64, 61);
  const NoiseModel model = tissue_noise(images, 0.5);
  const std::size_t draws = 100000;
  std::mt19937_64 rng(62);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Tensor4<float> x(draws, 3, 1, 2);
  for (auto& v : x.data()) v = u(rng);
  const auto xt = sample_disturbed(x, model, 63, false);
  std::array<double, 3> mean{};
  std::vector<std::array<double, 3>> d(draws);
  for (std::size_t n = 0; n < draws; ++n)
    for (std::size_t c = 0; c < 3; ++c) {
      d[n][c] = static_cast<double>(xt.at(n, c, 0, 0)) - static_cast<double>(x.at(n, c, 0, 0));
      mean[c] += d[n][c] / static_cast<double>(draws);
    }
  Mat3 emp{};
  for (const auto& s : d)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) emp[i][j] += (s[i] - mean[i]) * (s[j] - mean[j]) / static_cast<double>(draws);
  const Mat3 want = model.covariance();
  double worst = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) worst = std::max(worst, std::abs(emp[i][j] - want[i][j]) / std::abs(want[i][j]));

  NoiseModel zero = model;
  zero.epsilon = 0.0;
  const bool identity = sample_disturbed(x, zero, 64) == x && sample_disturbed(x, zero, 64, false) == x;
  Outcome o;
  o.pass = worst < 0.05 && identity;
  o.detail = std::to_string(draws) + " draws, max entrywise rel err " + fmt("%.3g", worst) +
             (identity ? ", eps=0 reproduces x exactly" : ", eps=0 changed x");
  return o;
}

struct E2EScores {
  double ssdh_out = 0, ssdh_in = 0, sdsim = 0, lab_out = 0, lab_ref = 0;
};

Outcome end_to_end(std::vector<double>& losses) {
  const auto train_set = tissue(200, 64, 11);
  const auto test_set = tissue(50, 64, 12);
  const auto [spec, w] = tiny_spec(7);
  TrainConfig cfg;
  cfg.patch_size = 64;
  cfg.batch_size = 8;
  cfg.steps = 1500;
  cfg.latent_channels = kDefaultLatentChannels;
  cfg.learning_rate = 1e-3;
  cfg.holdout_every = 0;
  const auto t0 = Clock::now();
  const auto result = train(train_set, cfg, spec, w);
  const double secs = seconds_since(t0);
  losses = result.loss_history;
  Outcome o;
  if (!result.model || result.aborted) {
    o.pass = false;
    o.detail = "training aborted: " + result.message;
    return o;
  }
  const FanModel& m = *result.model;
  E2EScores s;
  for (std::size_t i = 0; i < test_set.size(); ++i) {
    const auto& x = test_set[i];
    const auto xt = sample_disturbed(x, m.noise(), derive_seed(99, i));
    const auto out = m.normalize(xt);
    const auto xc = crop_region(x, out.region), xtc = crop_region(xt, out.region);
    const auto hx = kde_histogram(xc);
    s.ssdh_out += ssdh(kde_histogram(out.image), hx);
    s.ssdh_in += ssdh(kde_histogram(xtc), hx);
    s.sdsim += sdsim(out.image, xtc);
    s.lab_out += lab_volume(out.image);
    s.lab_ref += lab_volume(xc);
  }
  const double n = static_cast<double>(test_set.size());
  const double ssdh_ratio = s.ssdh_out / s.ssdh_in, mean_sdsim = s.sdsim / n, lab_ratio = s.lab_out / s.lab_ref;
  o.pass = ssdh_ratio <= 0.5 && mean_sdsim <= 0.1 && lab_ratio >= 0.7 && secs < 900.0;
  o.detail = "SSDH out/in " + fmt("%.3f", ssdh_ratio) + " (mean out " + fmt("%.4g", s.ssdh_out / n) + ", in " +
             fmt("%.4g", s.ssdh_in / n) + "), SDSIM " + fmt("%.4f", mean_sdsim) + ", LAB out/ref " +
             fmt("%.3f", lab_ratio) + ", " + std::to_string(cfg.steps) + " steps in " + fmt("%.0f s", secs);
  return o;
}

std::string loss_log(const std::vector<double>& losses) {
  std::string out;
  char buf[64];
  for (std::size_t i = 0; i < losses.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu\t%.17g\n", i, losses[i]);
    out += buf;
  }
  return out;
}

Outcome determinism() {
  std::vector<std::string> failed;
  auto need = [&](bool ok, const std::string& what) {
    if (!ok) failed.push_back(what);
  };
  const auto data = tissue(12, 48, 71);
  const auto [spec, w] = tiny_spec(0);
  TrainConfig cfg;
  cfg.patch_size = 48;
  cfg.batch_size = 4;
  cfg.steps = 40;
  cfg.seed = 72;
  const auto a = train(data, cfg, spec, w);
  const auto b = train(data, cfg, spec, w);
  need(loss_log(a.loss_history) == loss_log(b.loss_history), "loss logs");

  const auto dir = fs::temp_directory_path() / "fan_acceptance";
  fs::remove_all(dir);
  fs::create_directories(dir);
  a.model->to_container(a.loss_history).save(dir / "model.fanc");
  const auto back = FanModel::from_container(TensorContainer::load(dir / "model.fanc"));
  const Tensor4<float> batch = concat_batch<float>(data);
  const double before = evaluate_loss(*a.model, batch, 73), after = evaluate_loss(back, batch, 73);
  need(std::bit_cast<std::uint64_t>(before) == std::bit_cast<std::uint64_t>(after), "evaluate_loss after reload");

  std::mt19937_64 rng(74);
  TensorContainer c;
  std::vector<float> bits(4096);
  for (auto& v : bits) v = std::bit_cast<float>(static_cast<std::uint32_t>(rng()));
  c.add("random_bits", {16, 256}, bits);
  c.add("scalar", {}, {-0.0f});
  for (const auto& e : w.entries()) c.add(e);
  const auto bytes = c.serialize();
  need(TensorContainer::parse(bytes).serialize() == bytes, "container bytes");
  const auto model_bytes = read_file_bytes(dir / "model.fanc");
  need(TensorContainer::parse(model_bytes).serialize() == model_bytes, "checkpoint bytes");

  double worst_px = 0.0;
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Tensor4<float> img(1, 3, 37, 29);
  for (auto& v : img.data()) v = u(rng);
  for (const char* name : {"img.png", "img.ppm"}) {
    write_image(img, dir / name);
    const auto got = read_image(dir / name);
    if (got.shape() != img.shape()) {
      failed.push_back(std::string(name) + " shape");
      continue;
    }
    for (std::size_t i = 0; i < img.size(); ++i)
      worst_px = std::max(worst_px, std::abs(static_cast<double>(got.data()[i]) - img.data()[i]));
  }
  need(worst_px <= 0.5 / 255.0 + 1e-7, "image round trip");
  fs::remove_all(dir);
  Outcome o;
  o.pass = failed.empty();
  o.detail = "evaluate_loss " + fmt("%.17g", before) + " vs " + fmt("%.17g", after) + ", image max err " +
             fmt("%.4f/255", worst_px * 255.0);
  for (const auto& f : failed) o.detail += "; failed: " + f;
  return o;
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](const char* name, const std::function<Outcome()>& fn) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    if (!o.pass) ++failures;
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
  };
  std::string gradient_note;
  report("gradient correctness", [&] { return gradient_check(gradient_note); });
  report("zero-gate algebra", zero_gate_algebra);
  report("metric oracles", metric_oracles);
  report("noise-model statistics", noise_statistics);
  std::vector<double> losses;
  report("synthetic end-to-end denoising", [&] { return end_to_end(losses); });
  report("determinism and persistence", determinism);

  if (!gradient_note.empty()) std::printf("note: %s\n", gradient_note.c_str());
  if (!losses.empty()) {
    bool finite = std::all_of(losses.begin(), losses.end(), [](double v) { return std::isfinite(v); });
    std::size_t rises = 0, windows = 0;
    double prev = 0.0;
    for (std::size_t start = 0; start + 100 <= losses.size(); start += 100, ++windows) {
      double m = 0.0;
      for (std::size_t i = start; i < start + 100; ++i) m += losses[i] / 100.0;
      if (windows > 0 && m > prev) ++rises;
      prev = m;
    }
    std::printf("note: end-to-end loss finite at every step: %s; 100-step window means rising %zu of %zu times\n",
                finite ? "yes" : "no", rises, windows > 0 ? windows - 1 : 0);
  }
  return failures == 0 ? 0 : 1;
}

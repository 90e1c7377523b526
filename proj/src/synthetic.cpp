#include "fan/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "fan/random.hpp"

namespace fan {

namespace {

// Sum of bilinearly interpolated value-noise octaves, rescaled to [0,1].
std::vector<double> plasma(std::size_t h, std::size_t w, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> field(h * w, 0.0);
  double amp = 1.0;
  for (std::size_t cells = 2; cells <= 16; cells *= 2, amp *= 0.55) {
    const std::size_t g = cells + 1;
    std::vector<double> grid(g * g);
    for (auto& v : grid) v = u(rng);
    for (std::size_t y = 0; y < h; ++y) {
      const double fy = static_cast<double>(y) * static_cast<double>(cells) / static_cast<double>(h);
      const auto y0 = static_cast<std::size_t>(fy);
      const double ty = fy - static_cast<double>(y0);
      for (std::size_t x = 0; x < w; ++x) {
        const double fx = static_cast<double>(x) * static_cast<double>(cells) / static_cast<double>(w);
        const auto x0 = static_cast<std::size_t>(fx);
        const double tx = fx - static_cast<double>(x0);
        const double top = grid[y0 * g + x0] * (1 - tx) + grid[y0 * g + x0 + 1] * tx;
        const double bot = grid[(y0 + 1) * g + x0] * (1 - tx) + grid[(y0 + 1) * g + x0 + 1] * tx;
        field[y * w + x] += amp * (top * (1 - ty) + bot * ty);
      }
    }
  }
  const auto [lo, hi] = std::minmax_element(field.begin(), field.end());
  const double span = std::max(*hi - *lo, 1e-12);
  const double base = *lo;
  for (auto& v : field) v = (v - base) / span;
  return field;
}

}  // namespace

Tensor4<float> synth_tissue(const SynthOptions& opt, std::uint64_t seed) {
  if (opt.height == 0 || opt.width == 0) throw std::invalid_argument("synth_tissue: empty image size");
  if (opt.min_nuclei > opt.max_nuclei || !(opt.min_radius > 0.0) || opt.min_radius > opt.max_radius) {
    throw std::invalid_argument("synth_tissue: inconsistent nucleus count or radius range");
  }
  const std::size_t h = opt.height, w = opt.width;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);

  const auto stroma = plasma(h, w, rng);
  std::vector<double> nuclei(h * w, 0.0);
  std::uniform_int_distribution<std::size_t> count(opt.min_nuclei, opt.max_nuclei);
  const std::size_t n_nuclei = count(rng);
  for (std::size_t k = 0; k < n_nuclei; ++k) {
    const double cy = u(rng) * static_cast<double>(h), cx = u(rng) * static_cast<double>(w);
    const double ra = opt.min_radius + u(rng) * (opt.max_radius - opt.min_radius);
    const double rb = ra * (0.55 + 0.45 * u(rng));
    const double theta = u(rng) * std::numbers::pi;
    const double c = std::cos(theta), s = std::sin(theta);
    const double density = 0.75 + 0.25 * u(rng);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const double dy = static_cast<double>(y) + 0.5 - cy, dx = static_cast<double>(x) + 0.5 - cx;
        const double a = (dx * c + dy * s) / ra, b = (-dx * s + dy * c) / rb;
        const double r = std::sqrt(a * a + b * b);
        // one-pixel soft edge
        const double cover = std::clamp((1.0 - r) * ra + 0.5, 0.0, 1.0);
        nuclei[y * w + x] = std::max(nuclei[y * w + x], density * cover);
      }
  }

  std::normal_distribution<double> jitter(0.0, opt.grain);
  Tensor4<float> img(1, 3, h, w);
  const auto& p = opt.palette;
  for (std::size_t i = 0; i < h * w; ++i) {
    const double t = stroma[i], m = nuclei[i];
    const double shade = 1.0 + jitter(rng);
    for (std::size_t ch = 0; ch < 3; ++ch) {
      const double bg = p.background[ch] * (1.0 - t) + p.stroma[ch] * t;
      const double v = (bg * (1.0 - m) + p.nucleus[ch] * m) * shade;
      img.plane(0, ch)[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return img;
}

std::vector<Tensor4<float>> synth_dataset(std::size_t count, const SynthOptions& opt, std::uint64_t seed) {
  std::vector<Tensor4<float>> out;
  out.reserve(count);
  SplitMix64 seeds(seed);
  for (std::size_t i = 0; i < count; ++i) out.push_back(synth_tissue(opt, seeds.next()));
  return out;
}

}  // namespace fan

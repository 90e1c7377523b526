#pragma once

#include <cmath>
#include <vector>

#include "fan/tensor.hpp"

namespace fan::test {

// Direct 2-D Gaussian-weighted SSIM over every fully contained window.
inline double ssim_oracle(const Tensor4<float>& a, const Tensor4<float>& b) {
  const std::size_t h = a.h(), w = a.w(), win = 11;
  auto y = [](const Tensor4<float>& t, std::size_t i, std::size_t j) {
    return 0.299 * t.at(0, 0, i, j) + 0.587 * t.at(0, 1, i, j) + 0.114 * t.at(0, 2, i, j);
  };
  std::vector<double> g(win);
  double gs = 0.0;
  for (std::size_t k = 0; k < win; ++k) {
    const double d = static_cast<double>(k) - 5.0;
    g[k] = std::exp(-d * d / (2 * 1.5 * 1.5));
    gs += g[k];
  }
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i + win <= h; ++i)
    for (std::size_t j = 0; j + win <= w; ++j) {
      double mx = 0, my = 0;
      for (std::size_t u = 0; u < win; ++u)
        for (std::size_t v = 0; v < win; ++v) {
          const double wt = g[u] * g[v] / (gs * gs);
          mx += wt * y(a, i + u, j + v);
          my += wt * y(b, i + u, j + v);
        }
      double vx = 0, vy = 0, cxy = 0;
      for (std::size_t u = 0; u < win; ++u)
        for (std::size_t v = 0; v < win; ++v) {
          const double wt = g[u] * g[v] / (gs * gs);
          const double dx = y(a, i + u, j + v) - mx, dy = y(b, i + u, j + v) - my;
          vx += wt * dx * dx;
          vy += wt * dy * dy;
          cxy += wt * dx * dy;
        }
      total += (2 * mx * my + c1) * (2 * cxy + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  return total / static_cast<double>(count);
}

}  // namespace fan::test

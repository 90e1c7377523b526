#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <string>

#include "fan/tensor.hpp"

namespace fan::test {

template <typename T = double>
Tensor4<T> random_tensor(Shape4 s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor4<T> t(s);
  for (auto& v : t.data()) v = static_cast<T>(u(rng));
  return t;
}

template <typename T>
double dot(const Tensor4<T>& a, const Tensor4<T>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a.data()[i]) * static_cast<double>(b.data()[i]);
  return s;
}

// Central differences of a scalar function of x.
template <typename F>
Tensor4<double> numeric_grad(Tensor4<double> x, F&& f, double h = 1e-6) {
  Tensor4<double> g(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x.data()[i];
    x.data()[i] = keep + h;
    const double up = f(x);
    x.data()[i] = keep - h;
    const double down = f(x);
    x.data()[i] = keep;
    g.data()[i] = (up - down) / (2.0 * h);
  }
  return g;
}

template <typename T>
double max_abs_diff(const Tensor4<T>& a, const Tensor4<T>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a.data()[i]) - static_cast<double>(b.data()[i])));
  return m;
}

// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor)
inline double max_rel_err(const Tensor4<double>& a, const Tensor4<double>& b, double floor = 1e-8) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a.data()[i], y = b.data()[i];
    m = std::max(m, std::abs(x - y) / std::max({std::abs(x), std::abs(y), floor}));
  }
  return m;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("fan_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace fan::test

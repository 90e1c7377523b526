#include "fan/noise_model.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fan {

void NoiseModel::validate() const {
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double dot = 0.0;
      for (int k = 0; k < 3; ++k) dot += w[k][i] * w[k][j];
      if (std::abs(dot - (i == j ? 1.0 : 0.0)) > 1e-6) throw std::invalid_argument("noise model: W is not orthonormal");
    }
  for (int i = 0; i < 3; ++i) {
    if (!(sigma[i] >= 0.0)) throw std::invalid_argument("noise model: negative variance");
    if (i > 0 && sigma[i] > sigma[i - 1]) throw std::invalid_argument("noise model: variances not sorted descending");
  }
  if (!(epsilon >= 0.0 && epsilon < 1.0)) throw std::invalid_argument("noise model: epsilon must lie in [0, 1)");
}

Mat3 NoiseModel::covariance() const {
  Mat3 c{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += w[i][k] * sigma[k] * w[j][k];
      c[i][j] = epsilon * s;
    }
  return c;
}

PcaFit fit_pca(std::span<const Rgb> pixels, double epsilon) {
  if (pixels.empty()) throw std::invalid_argument("fit_pca: no pixels");
  if (!(epsilon >= 0.0 && epsilon < 1.0)) throw std::invalid_argument("fit_pca: epsilon must lie in [0, 1)");
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (const auto& p : pixels) mean += Eigen::Vector3d(p[0], p[1], p[2]);
  mean /= static_cast<double>(pixels.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto& p : pixels) {
    const Eigen::Vector3d d = Eigen::Vector3d(p[0], p[1], p[2]) - mean;
    cov += d * d.transpose();
  }
  cov /= static_cast<double>(pixels.size());

  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(cov);
  if (solver.info() != Eigen::Success) throw std::runtime_error("fit_pca: eigen-decomposition failed");

  PcaFit fit;
  fit.model.epsilon = epsilon;
  const double top = std::max(solver.eigenvalues().maxCoeff(), 0.0);
  fit.rank = 0;
  // Eigen returns ascending eigenvalues
  for (int j = 0; j < 3; ++j) {
    const int src = 2 - j;
    Eigen::Vector3d v = solver.eigenvectors().col(src);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v[arg] < 0) v = -v;
    double lambda = solver.eigenvalues()[src];
    if (lambda <= 1e-12 * std::max(top, 1e-300)) lambda = 0.0;
    else ++fit.rank;
    fit.model.sigma[j] = lambda;
    for (int i = 0; i < 3; ++i) fit.model.w[i][j] = v[i];
  }
  return fit;
}

std::vector<Rgb> sample_pixels(std::span<const Tensor4<float>> images, std::size_t max_count, std::uint64_t seed) {
  std::vector<std::pair<std::size_t, std::size_t>> index;  // (image, batch element)
  std::size_t total = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].c() != 3) throw ShapeError("sample_pixels: expected RGB tensors");
    total += images[i].n() * images[i].h() * images[i].w();
  }
  auto pixel_at = [&](std::size_t flat) {
    for (const auto& img : images) {
      const std::size_t per = img.h() * img.w();
      const std::size_t count = img.n() * per;
      if (flat < count) {
        const std::size_t n = flat / per;
        const std::size_t p = flat % per;
        return Rgb{img.plane(n, 0)[p], img.plane(n, 1)[p], img.plane(n, 2)[p]};
      }
      flat -= count;
    }
    throw std::logic_error("sample_pixels: index out of range");
  };
  std::vector<Rgb> out;
  if (total <= max_count) {
    out.reserve(total);
    for (std::size_t f = 0; f < total; ++f) out.push_back(pixel_at(f));
    return out;
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> dist(0, total - 1);
  out.reserve(max_count);
  for (std::size_t k = 0; k < max_count; ++k) out.push_back(pixel_at(dist(rng)));
  return out;
}

std::array<double, 3> draw_shift(const NoiseModel& model, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::array<double, 3> n{};
  for (auto& v : n) v = normal(rng);
  std::array<double, 3> shift{};
  const double scale = std::sqrt(model.epsilon);
  for (int i = 0; i < 3; ++i) {
    double s = 0.0;
    for (int k = 0; k < 3; ++k) s += model.w[i][k] * std::sqrt(model.sigma[k]) * n[k];
    shift[i] = scale * s;
  }
  return shift;
}

Tensor4<float> sample_disturbed(const Tensor4<float>& x, const NoiseModel& model, std::uint64_t seed, bool clamp) {
  if (x.c() != 3) throw ShapeError("sample_disturbed: expected RGB tensor, got " + to_string(x.shape()));
  std::mt19937_64 rng(seed);
  Tensor4<float> out = x;
  for (std::size_t n = 0; n < x.n(); ++n) {
    const auto shift = draw_shift(model, rng);
    for (std::size_t c = 0; c < 3; ++c) {
      const float s = static_cast<float>(shift[c]);
      for (auto& v : out.plane(n, c)) {
        v += s;
        if (clamp) v = std::clamp(v, 0.0f, 1.0f);
      }
    }
  }
  return out;
}

NoiseModel round_to_f32(NoiseModel m) {
  auto f32 = [](double v) { return static_cast<double>(static_cast<float>(v)); };
  for (auto& row : m.w)
    for (auto& v : row) v = f32(v);
  for (auto& v : m.sigma) v = f32(v);
  m.epsilon = f32(m.epsilon);
  return m;
}

void save_noise_model(const NoiseModel& m, TensorContainer& out) {
  std::vector<float> w;
  for (const auto& row : m.w)
    for (double v : row) w.push_back(static_cast<float>(v));
  out.add("noise.w", {3, 3}, std::move(w));
  out.add("noise.sigma", {3}, {static_cast<float>(m.sigma[0]), static_cast<float>(m.sigma[1]), static_cast<float>(m.sigma[2])});
  out.add("noise.epsilon", {1}, {static_cast<float>(m.epsilon)});
}

NoiseModel load_noise_model(const TensorContainer& in) {
  const auto& w = in.get("noise.w");
  const auto& s = in.get("noise.sigma");
  const auto& e = in.get("noise.epsilon");
  if (w.data.size() != 9 || s.data.size() != 3 || e.data.size() != 1) {
    throw std::invalid_argument("noise model entries have wrong sizes");
  }
  NoiseModel m;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) m.w[i][j] = w.data[3 * i + j];
    m.sigma[i] = s.data[i];
  }
  m.epsilon = e.data[0];
  return m;
}

}  // namespace fan

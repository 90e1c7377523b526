#include "fan/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <stdexcept>

#include "fan/io.hpp"
#include "fan/ops.hpp"

namespace fan {

namespace {

void require_single_rgb(const Tensor4<float>& image, const char* what) {
  if (image.n() != 1 || image.c() != 3 || image.h() == 0 || image.w() == 0) {
    throw ShapeError(std::string(what) + ": expected a non-empty 1x3xHxW image, got " + to_string(image.shape()));
  }
}

double srgb_to_linear(double v) { return v <= 0.04045 ? v / 12.92 : std::pow((v + 0.055) / 1.055, 2.4); }

double lab_f(double t) {
  constexpr double d = 6.0 / 29.0;
  return t > d * d * d ? std::cbrt(t) : t / (3.0 * d * d) + 4.0 / 29.0;
}

// 1-D correlation along rows then columns, keeping only fully covered positions.
std::vector<double> filter_valid(const std::vector<double>& img, std::size_t h, std::size_t w,
                                 const std::vector<double>& k) {
  const std::size_t n = k.size();
  const std::size_t ow = w - n + 1, oh = h - n + 1;
  std::vector<double> rows(h * ow, 0.0);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double s = 0.0;
      for (std::size_t t = 0; t < n; ++t) s += k[t] * img[y * w + x + t];
      rows[y * ow + x] = s;
    }
  std::vector<double> out(oh * ow, 0.0);
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double s = 0.0;
      for (std::size_t t = 0; t < n; ++t) s += k[t] * rows[(y + t) * ow + x];
      out[y * ow + x] = s;
    }
  return out;
}

}  // namespace

HistogramKDE kde_histogram(const Tensor4<float>& image) {
  require_single_rgb(image, "kde_histogram");
  HistogramKDE out;
  const double count = static_cast<double>(image.h() * image.w());
  for (std::size_t c = 0; c < 3; ++c) {
    std::array<double, kHistogramBins> raw{};
    for (float v : image.plane(0, c)) {
      const double q = std::floor(std::clamp(static_cast<double>(v), 0.0, 1.0) * 255.0 + 0.5);
      raw[static_cast<std::size_t>(q)] += 1.0;
    }
    for (auto& r : raw) r /= count;
    // mass of bin i is spread over its (truncated) kernel footprint
    auto& dst = out.bins[c];
    constexpr int half = 3;
    for (int i = 0; i < static_cast<int>(kHistogramBins); ++i) {
      if (raw[i] == 0.0) continue;
      double norm = 0.0;
      for (int t = -half; t <= half; ++t)
        if (i + t >= 0 && i + t < static_cast<int>(kHistogramBins)) norm += kBinomialKernel[t + half];
      for (int t = -half; t <= half; ++t)
        if (i + t >= 0 && i + t < static_cast<int>(kHistogramBins)) dst[i + t] += raw[i] * kBinomialKernel[t + half] / norm;
    }
  }
  return out;
}

double ssdh(const HistogramKDE& a, const HistogramKDE& b) {
  double s = 0.0;
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < kHistogramBins; ++i) {
      const double d = a.bins[c][i] - b.bins[c][i];
      s += d * d;
    }
  return s;
}

std::vector<double> luma(const Tensor4<float>& image) {
  require_single_rgb(image, "luma");
  const auto r = image.plane(0, 0), g = image.plane(0, 1), b = image.plane(0, 2);
  std::vector<double> y(r.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = 0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i];
  return y;
}

std::vector<double> gaussian_window(std::size_t size, double sigma) {
  if (size == 0 || !(sigma > 0.0)) throw std::invalid_argument("gaussian_window: size and sigma must be positive");
  std::vector<double> k(size);
  const double c = (static_cast<double>(size) - 1.0) / 2.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < size; ++i) {
    const double d = static_cast<double>(i) - c;
    k[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    sum += k[i];
  }
  for (auto& v : k) v /= sum;
  return k;
}

double mssim(const Tensor4<float>& a, const Tensor4<float>& b, const SsimOptions& opt) {
  require_single_rgb(a, "sdsim");
  require_single_rgb(b, "sdsim");
  if (a.shape() != b.shape()) throw ShapeError("sdsim: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  if (a.h() < opt.window || a.w() < opt.window) {
    throw ShapeError("sdsim: image " + to_string(a.shape()) + " is smaller than the " + std::to_string(opt.window) +
                     "x" + std::to_string(opt.window) + " window");
  }
  const std::size_t h = a.h(), w = a.w();
  const auto x = luma(a), y = luma(b);
  std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto k = gaussian_window(opt.window, opt.sigma);
  const auto mx = filter_valid(x, h, w, k), my = filter_valid(y, h, w, k);
  const auto sxx = filter_valid(xx, h, w, k), syy = filter_valid(yy, h, w, k), sxy = filter_valid(xy, h, w, k);
  const double c1 = std::pow(opt.k1 * opt.dynamic_range, 2), c2 = std::pow(opt.k2 * opt.dynamic_range, 2);
  double total = 0.0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = sxx[i] - mx[i] * mx[i], vy = syy[i] - my[i] * my[i], cxy = sxy[i] - mx[i] * my[i];
    total += ((2.0 * mx[i] * my[i] + c1) * (2.0 * cxy + c2)) /
             ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
  }
  return total / static_cast<double>(mx.size());
}

double sdsim(const Tensor4<float>& a, const Tensor4<float>& b, const SsimOptions& opt) {
  return std::clamp((1.0 - mssim(a, b, opt)) / 2.0, 0.0, 1.0);
}

std::array<double, 3> rgb_to_lab(double r, double g, double b) {
  const double rl = srgb_to_linear(r), gl = srgb_to_linear(g), bl = srgb_to_linear(b);
  const double x = 0.4124564 * rl + 0.3575761 * gl + 0.1804375 * bl;
  const double y = 0.2126729 * rl + 0.7151522 * gl + 0.0721750 * bl;
  const double z = 0.0193339 * rl + 0.1191920 * gl + 0.9503041 * bl;
  const double fx = lab_f(x / 0.95047), fy = lab_f(y), fz = lab_f(z / 1.08883);
  return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

Tensor4<float> rgb_to_lab(const Tensor4<float>& image) {
  if (image.c() != 3) throw ShapeError("rgb_to_lab: expected 3 channels, got " + to_string(image.shape()));
  Tensor4<float> out(image.shape());
  for (std::size_t n = 0; n < image.n(); ++n) {
    const auto r = image.plane(n, 0), g = image.plane(n, 1), b = image.plane(n, 2);
    auto L = out.plane(n, 0), A = out.plane(n, 1), B = out.plane(n, 2);
    for (std::size_t i = 0; i < r.size(); ++i) {
      const auto lab = rgb_to_lab(r[i], g[i], b[i]);
      L[i] = static_cast<float>(lab[0]);
      A[i] = static_cast<float>(lab[1]);
      B[i] = static_cast<float>(lab[2]);
    }
  }
  return out;
}

double lab_volume(const Tensor4<float>& image) {
  if (image.c() != 3 || image.empty()) throw ShapeError("lab_volume: expected a non-empty RGB image, got " + to_string(image.shape()));
  std::array<double, 3> sum{}, sq{};
  const std::size_t plane = image.h() * image.w();
  const double count = static_cast<double>(image.n() * plane);
  std::array<double, 3> shift{};
  for (std::size_t n = 0; n < image.n(); ++n) {
    const auto r = image.plane(n, 0), g = image.plane(n, 1), b = image.plane(n, 2);
    for (std::size_t i = 0; i < plane; ++i) {
      const auto lab = rgb_to_lab(r[i], g[i], b[i]);
      if (n == 0 && i == 0) shift = lab;
      for (int c = 0; c < 3; ++c) {
        const double d = lab[c] - shift[c];
        sum[c] += d;
        sq[c] += d * d;
      }
    }
  }
  double vol = 1.0;
  for (int c = 0; c < 3; ++c) {
    const double mean = sum[c] / count;
    vol *= std::sqrt(std::max(0.0, sq[c] / count - mean * mean));
  }
  return vol;
}

MetricSummary summarize(const std::vector<double>& values) {
  MetricSummary s;
  if (values.empty()) return s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(var / static_cast<double>(values.size()));
  return s;
}

Tensor4<float> center_crop(const Tensor4<float>& image, std::size_t h, std::size_t w) {
  if (h > image.h() || w > image.w()) {
    throw ShapeError("center_crop: " + std::to_string(h) + "x" + std::to_string(w) + " exceeds " + to_string(image.shape()));
  }
  return crop(image, (image.h() - h) / 2, (image.w() - w) / 2, h, w);
}

MetricsReport evaluate_pair(const std::string& id, const Tensor4<float>& normalized, const Tensor4<float>& reference,
                            const Tensor4<float>& original) {
  MetricsReport r;
  r.pair_id = id;
  const auto ref = center_crop(reference, std::min(reference.h(), normalized.h()), std::min(reference.w(), normalized.w()));
  r.ssdh = ssdh(kde_histogram(normalized), kde_histogram(ref));
  r.sdsim = sdsim(normalized, center_crop(original, normalized.h(), normalized.w()));
  r.lab_volume = lab_volume(normalized);
  return r;
}

EvaluationResult evaluate_pairs(const std::filesystem::path& normalized_dir, const std::filesystem::path& reference_dir,
                                const std::filesystem::path& originals_dir) {
  namespace fs = std::filesystem;
  for (const auto& d : {normalized_dir, reference_dir, originals_dir}) {
    if (!fs::is_directory(d)) throw std::invalid_argument("evaluate: not a directory: " + d.string());
  }
  auto list = [](const fs::path& dir) {
    std::map<std::string, fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
      if (e.is_regular_file() && is_image_path(e.path())) files.emplace(e.path().filename().string(), e.path());
    return files;
  };
  const auto norm = list(normalized_dir), refs = list(reference_dir), origs = list(originals_dir);
  EvaluationResult result;
  for (const auto& [name, path] : norm) {
    const auto r = refs.find(name);
    const auto o = origs.find(name);
    if (r == refs.end() || o == origs.end()) {
      result.unmatched.push_back(name);
      continue;
    }
    result.reports.push_back(evaluate_pair(name, read_image(path), read_image(r->second), read_image(o->second)));
  }
  for (const auto& [name, path] : refs)
    if (!norm.contains(name)) result.unmatched.push_back(name);
  std::vector<double> a, b, c;
  for (const auto& r : result.reports) {
    a.push_back(r.ssdh);
    b.push_back(r.sdsim);
    c.push_back(r.lab_volume);
  }
  result.ssdh = summarize(a);
  result.sdsim = summarize(b);
  result.lab_volume = summarize(c);
  return result;
}

void write_report(std::ostream& os, const EvaluationResult& result) {
  char buf[256];
  os << "pair_id\tssdh\tsdsim\tlab_volume\n";
  for (const auto& r : result.reports) {
    std::snprintf(buf, sizeof buf, "\t%.9g\t%.9g\t%.9g\n", r.ssdh, r.sdsim, r.lab_volume);
    os << r.pair_id << buf;
  }
  os << "\nmetric\tmean\tstd\n";
  const std::pair<const char*, const MetricSummary*> rows[] = {
      {"ssdh", &result.ssdh}, {"sdsim", &result.sdsim}, {"lab_volume", &result.lab_volume}};
  for (const auto& [name, s] : rows) {
    std::snprintf(buf, sizeof buf, "%s\t%.9g\t%.9g\n", name, s->mean, s->std);
    os << buf;
  }
}

}  // namespace fan

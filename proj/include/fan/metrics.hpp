#pragma once

// Evaluation metrics for stain normalisation:
//   SSDH - squared distance between smoothed per-channel colour histograms
//   SDSIM - structural dissimilarity (1 - MSSIM) / 2 on luma
//   LAB volume - std(L) * std(a) * std(b) in CIELAB
//
// sRGB -> CIELAB constants (D65 white):
//   linearise: v <= 0.04045 ? v / 12.92 : ((v + 0.055) / 1.055)^2.4
//   X = 0.4124564 R + 0.3575761 G + 0.1804375 B
//   Y = 0.2126729 R + 0.7151522 G + 0.0721750 B
//   Z = 0.0193339 R + 0.1191920 G + 0.9503041 B
//   white (Xn, Yn, Zn) = (0.95047, 1.0, 1.08883)
//   f(t) = t > (6/29)^3 ? cbrt(t) : t / (3 (6/29)^2) + 4/29
//   L = 116 f(Y/Yn) - 16, a = 500 (f(X/Xn) - f(Y/Yn)), b = 200 (f(Y/Yn) - f(Z/Zn))

#include <array>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "fan/tensor.hpp"

namespace fan {

inline constexpr std::size_t kHistogramBins = 256;
inline constexpr std::array<double, 7> kBinomialKernel = {1.0 / 64, 6.0 / 64, 15.0 / 64, 20.0 / 64,
                                                          15.0 / 64, 6.0 / 64, 1.0 / 64};

struct HistogramKDE {
  std::array<std::array<double, kHistogramBins>, 3> bins{};
};

/// 8-bit quantisation floor(v * 255 + 0.5), normalised counts, then the
/// length-7 binomial kernel. Near the ends the kernel is truncated and
/// renormalised so every channel keeps unit mass.
HistogramKDE kde_histogram(const Tensor4<float>& image);

double ssdh(const HistogramKDE& a, const HistogramKDE& b);

struct SsimOptions {
  std::size_t window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

/// Rec. 601 luma 0.299 R + 0.587 G + 0.114 B of batch element 0, as h x w doubles.
std::vector<double> luma(const Tensor4<float>& image);

/// Normalised 1-D Gaussian taps of the SSIM window.
std::vector<double> gaussian_window(std::size_t size, double sigma);

/// Mean SSIM over all window positions fully inside the image.
double mssim(const Tensor4<float>& a, const Tensor4<float>& b, const SsimOptions& opt = {});
double sdsim(const Tensor4<float>& a, const Tensor4<float>& b, const SsimOptions& opt = {});

/// Channels become L, a, b. Computed in double, stored as float.
Tensor4<float> rgb_to_lab(const Tensor4<float>& image);
std::array<double, 3> rgb_to_lab(double r, double g, double b);

double lab_volume(const Tensor4<float>& image);

struct MetricsReport {
  std::string pair_id;
  double ssdh = 0.0;
  double sdsim = 0.0;
  double lab_volume = 0.0;
};

struct MetricSummary {
  double mean = 0.0;
  double std = 0.0;  // population
};

struct EvaluationResult {
  std::vector<MetricsReport> reports;
  MetricSummary ssdh, sdsim, lab_volume;
  std::vector<std::string> unmatched;  // normalized files without a partner
};

MetricSummary summarize(const std::vector<double>& values);

/// For every image in `normalized_dir` (sorted by name) with same-named
/// files in the other two directories: SSDH against the reference, SDSIM
/// against the original, LAB volume of the normalized image. An original
/// larger than the normalized image is centre-cropped to match.
EvaluationResult evaluate_pairs(const std::filesystem::path& normalized_dir, const std::filesystem::path& reference_dir,
                                const std::filesystem::path& originals_dir);

/// Metrics for one in-memory triple.
MetricsReport evaluate_pair(const std::string& id, const Tensor4<float>& normalized, const Tensor4<float>& reference,
                            const Tensor4<float>& original);

/// Tab-separated table "pair_id ssdh sdsim lab_volume", a blank line, then
/// "metric mean std" rows for each metric.
void write_report(std::ostream& os, const EvaluationResult& result);

/// Centre crop to h x w.
Tensor4<float> center_crop(const Tensor4<float>& image, std::size_t h, std::size_t w);

}  // namespace fan

#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fan {

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// A named view of one trainable tensor and its gradient buffer.
template <typename T>
struct ParamSlot {
  std::string name;
  std::span<T> value;
  std::span<const T> grad;
};

template <typename T>
struct AdamState {
  std::uint64_t step = 0;
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
};

/// One bias-corrected Adam update over every slot. Throws NonFiniteError
/// (leaving params and state untouched) if any gradient is NaN or infinite.
template <typename T>
void adam_step(std::span<const ParamSlot<T>> params, AdamState<T>& state, const AdamConfig& cfg);

}  // namespace fan

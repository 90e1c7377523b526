#include "fan/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace fan {

std::string to_string(const Shape4& s) {
  std::ostringstream os;
  os << s.n << "x" << s.c << "x" << s.h << "x" << s.w;
  return os.str();
}

std::string to_string(const Region& r) {
  std::ostringstream os;
  os << "[top=" << r.top << " left=" << r.left << " " << r.height << "x" << r.width << "]";
  return os.str();
}

Region intersect(const Region& a, const Region& b) {
  const auto top = std::max(a.top, b.top);
  const auto left = std::max(a.left, b.left);
  const auto bottom = std::min(a.bottom(), b.bottom());
  const auto right = std::min(a.right(), b.right());
  if (bottom <= top || right <= left) return Region{top, left, 0, 0};
  return Region{top, left, static_cast<std::size_t>(bottom - top), static_cast<std::size_t>(right - left)};
}

template <typename T>
Tensor4<T>::Tensor4(Shape4 shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
  if (data_.size() != shape_.size()) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                     to_string(shape_));
  }
}

template <typename T>
void Tensor4<T>::fill(T v) {
  std::fill(data_.begin(), data_.end(), v);
}

template <typename T>
bool Tensor4<T>::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
}

template <typename T>
Tensor4<T> Tensor4<T>::slice_batch(std::size_t first, std::size_t count) const {
  if (first + count > shape_.n) {
    throw ShapeError("batch slice [" + std::to_string(first) + ", " + std::to_string(first + count) +
                     ") out of range for " + to_string(shape_));
  }
  Shape4 s = shape_;
  s.n = count;
  const std::size_t stride = shape_.c * shape_.plane();
  std::vector<T> out(data_.begin() + static_cast<std::ptrdiff_t>(first * stride),
                     data_.begin() + static_cast<std::ptrdiff_t>((first + count) * stride));
  return Tensor4<T>(s, std::move(out));
}

template <typename T>
Tensor4<T> concat_batch(std::span<const Tensor4<T>> parts) {
  if (parts.empty()) return {};
  Shape4 s = parts.front().shape();
  s.n = 0;
  for (const auto& p : parts) {
    if (p.c() != s.c || p.h() != s.h || p.w() != s.w) {
      throw ShapeError("cannot concatenate " + to_string(p.shape()) + " with " + to_string(parts.front().shape()));
    }
    s.n += p.n();
  }
  std::vector<T> data;
  data.reserve(s.size());
  for (const auto& p : parts) data.insert(data.end(), p.storage().begin(), p.storage().end());
  return Tensor4<T>(s, std::move(data));
}

template class Tensor4<float>;
template class Tensor4<double>;
template Tensor4<float> concat_batch(std::span<const Tensor4<float>>);
template Tensor4<double> concat_batch(std::span<const Tensor4<double>>);

}  // namespace fan

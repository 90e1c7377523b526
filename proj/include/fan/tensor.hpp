#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fan {

/// Raised when operands do not have compatible dimensions.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Batch, channel, height, width extents of a Tensor4.
struct Shape4 {
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  std::size_t size() const { return n * c * h * w; }
  std::size_t plane() const { return h * w; }
  bool operator==(const Shape4&) const = default;
};

std::string to_string(const Shape4& s);

/// Axis-aligned rectangle in input-image pixel coordinates.
struct Region {
  std::ptrdiff_t top = 0;
  std::ptrdiff_t left = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  std::ptrdiff_t bottom() const { return top + static_cast<std::ptrdiff_t>(height); }
  std::ptrdiff_t right() const { return left + static_cast<std::ptrdiff_t>(width); }
  bool empty() const { return height == 0 || width == 0; }
  bool operator==(const Region&) const = default;
};

std::string to_string(const Region& r);
Region intersect(const Region& a, const Region& b);

/// Dense rank-4 array in NCHW row-major order.
template <typename T>
class Tensor4 {
 public:
  Tensor4() = default;
  explicit Tensor4(Shape4 shape, T fill = T(0)) : shape_(shape), data_(shape.size(), fill) {}
  Tensor4(std::size_t n, std::size_t c, std::size_t h, std::size_t w, T fill = T(0))
      : Tensor4(Shape4{n, c, h, w}, fill) {}
  Tensor4(Shape4 shape, std::vector<T> data);

  const Shape4& shape() const { return shape_; }
  std::size_t n() const { return shape_.n; }
  std::size_t c() const { return shape_.c; }
  std::size_t h() const { return shape_.h; }
  std::size_t w() const { return shape_.w; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::size_t index(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const {
    return ((n * shape_.c + c) * shape_.h + y) * shape_.w + x;
  }
  T& at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) { return data_[index(n, c, y, x)]; }
  T at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const { return data_[index(n, c, y, x)]; }

  /// Contiguous h*w plane of one (batch, channel) pair.
  std::span<T> plane(std::size_t n, std::size_t c) {
    return {data_.data() + (n * shape_.c + c) * shape_.plane(), shape_.plane()};
  }
  std::span<const T> plane(std::size_t n, std::size_t c) const {
    return {data_.data() + (n * shape_.c + c) * shape_.plane(), shape_.plane()};
  }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  void fill(T v);
  bool all_finite() const;

  /// Copy of batch elements [first, first + count).
  Tensor4 slice_batch(std::size_t first, std::size_t count) const;

  template <typename U>
  Tensor4<U> cast() const {
    Tensor4<U> out(shape_);
    for (std::size_t i = 0; i < data_.size(); ++i) out.data()[i] = static_cast<U>(data_[i]);
    return out;
  }

  bool operator==(const Tensor4&) const = default;

 private:
  Shape4 shape_{};
  std::vector<T> data_;
};

/// Concatenates tensors along the batch axis; all must share c, h, w.
template <typename T>
Tensor4<T> concat_batch(std::span<const Tensor4<T>> parts);

extern template class Tensor4<float>;
extern template class Tensor4<double>;

using Tensor = Tensor4<float>;

}  // namespace fan

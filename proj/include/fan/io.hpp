#pragma once

// Named-tensor container ("FANC") and 8-bit RGB image codecs.
//
// Container layout, all integers u32 little-endian, no padding:
//   magic "FANC" | version = 1 | entry count
//   per entry: name_len | name bytes (UTF-8) | rank | dims[rank] | f32 payload
// The payload is row-major and holds exactly prod(dims) values.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fan/tensor.hpp"

namespace fan {

class ContainerError : public std::runtime_error {
 public:
  ContainerError(const std::string& what, std::size_t offset);
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

class ImageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NamedTensor {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> data;

  std::size_t element_count() const;
  bool operator==(const NamedTensor&) const = default;
};

/// Ordered collection of uniquely named tensors.
class TensorContainer {
 public:
  static constexpr std::uint32_t kVersion = 1;

  /// Throws std::invalid_argument on duplicate names or inconsistent dims.
  void add(NamedTensor entry);
  void add(const std::string& name, const Tensor4<float>& t);
  void add(const std::string& name, std::vector<std::uint32_t> dims, std::vector<float> data);

  bool contains(const std::string& name) const { return find(name) != nullptr; }
  const NamedTensor* find(const std::string& name) const;
  const NamedTensor& get(const std::string& name) const;
  const std::vector<NamedTensor>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  std::vector<std::uint8_t> serialize() const;
  /// Validates every length against the remaining bytes before allocating.
  static TensorContainer parse(std::span<const std::uint8_t> bytes);

  void save(const std::filesystem::path& path) const;
  static TensorContainer load(const std::filesystem::path& path);

  bool operator==(const TensorContainer&) const = default;

 private:
  std::vector<NamedTensor> entries_;
};

/// Interprets a rank<=4 entry as NCHW, left-padding missing leading dims with 1.
Tensor4<float> to_tensor4(const NamedTensor& t);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

/// 8-bit RGB PNG or binary PPM (P6, maxval 255) to a 1x3xHxW tensor of v/255.
Tensor4<float> read_image(const std::filesystem::path& path);
Tensor4<float> decode_ppm(std::span<const std::uint8_t> bytes);

/// Writes batch element 0 of a 3-channel tensor as round(clamp(v,0,1)*255).
/// The format follows the extension: .png or .ppm.
void write_image(const Tensor4<float>& t, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_ppm(const Tensor4<float>& t);

bool is_image_path(const std::filesystem::path& path);

}  // namespace fan

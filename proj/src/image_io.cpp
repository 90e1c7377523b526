#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

#include "fan/io.hpp"

namespace fan {

namespace {

std::string lower_ext(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
  return ext;
}

std::uint8_t quantize(float v) {
  const float c = std::clamp(v, 0.0f, 1.0f);
  return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

Tensor4<float> from_interleaved(std::span<const std::uint8_t> rgb, std::size_t width, std::size_t height) {
  Tensor4<float> t(1, 3, height, width);
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x)
      for (std::size_t c = 0; c < 3; ++c) t.at(0, c, y, x) = rgb[(y * width + x) * 3 + c] / 255.0f;
  return t;
}

std::vector<std::uint8_t> to_interleaved(const Tensor4<float>& t) {
  if (t.c() != 3 || t.n() < 1 || t.h() == 0 || t.w() == 0) {
    throw ImageError("cannot write tensor " + to_string(t.shape()) + " as an RGB image");
  }
  std::vector<std::uint8_t> rgb(t.h() * t.w() * 3);
  for (std::size_t y = 0; y < t.h(); ++y)
    for (std::size_t x = 0; x < t.w(); ++x)
      for (std::size_t c = 0; c < 3; ++c) rgb[(y * t.w() + x) * 3 + c] = quantize(t.at(0, c, y, x));
  return rgb;
}

class PpmHeaderReader {
 public:
  explicit PpmHeaderReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t number(const char* field) {
    skip_space_and_comments();
    std::size_t v = 0;
    std::size_t digits = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      v = v * 10 + (bytes_[pos_++] - '0');
      if (++digits > 9) throw ImageError(std::string("PPM: ") + field + " too large");
    }
    if (digits == 0) throw ImageError(std::string("PPM: missing ") + field);
    return v;
  }

  std::size_t finish_header() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) throw ImageError("PPM: malformed header");
    return pos_ + 1;
  }

  std::size_t pos_ = 2;

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  std::span<const std::uint8_t> bytes_;
};

Tensor4<float> decode_png(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.string().c_str())) {
    throw ImageError("PNG " + path.string() + ": " + image.message);
  }
  const auto fmt = image.format;
  std::string problem;
  if (fmt & PNG_FORMAT_FLAG_LINEAR) problem = "bit depth 16 (only 8-bit supported)";
  else if (fmt & PNG_FORMAT_FLAG_COLORMAP) problem = "palette color type (only RGB supported)";
  else if (!(fmt & PNG_FORMAT_FLAG_COLOR)) problem = "grayscale color type (only RGB supported)";
  else if (fmt & PNG_FORMAT_FLAG_ALPHA) problem = "RGBA color type (only RGB supported)";
  if (!problem.empty()) {
    png_image_free(&image);
    throw ImageError("PNG " + path.string() + ": unsupported " + problem);
  }
  image.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw ImageError("PNG " + path.string() + ": " + msg);
  }
  return from_interleaved(buf, image.width, image.height);
}

}  // namespace

Tensor4<float> decode_ppm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P') throw ImageError("PPM: bad magic");
  if (bytes[1] != '6') throw ImageError(std::string("PPM: unsupported variant P") + static_cast<char>(bytes[1]) +
                                        " (only binary P6 supported)");
  PpmHeaderReader hdr(bytes);
  const std::size_t width = hdr.number("width");
  const std::size_t height = hdr.number("height");
  const std::size_t maxval = hdr.number("maxval");
  if (width == 0 || height == 0) throw ImageError("PPM: zero image dimension");
  if (maxval != 255) throw ImageError("PPM: unsupported maxval " + std::to_string(maxval) + " (only 8-bit supported)");
  const std::size_t start = hdr.finish_header();
  const std::size_t need = width * height * 3;
  if (bytes.size() - start < need) {
    throw ImageError("PPM: truncated pixel data, need " + std::to_string(need) + " bytes, have " +
                     std::to_string(bytes.size() - start));
  }
  return from_interleaved(bytes.subspan(start, need), width, height);
}

Tensor4<float> read_image(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  static constexpr std::uint8_t kPngSig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (bytes.size() >= 8 && std::equal(kPngSig, kPngSig + 8, bytes.begin())) return decode_png(path);
  if (bytes.size() >= 2 && bytes[0] == 'P') return decode_ppm(bytes);
  throw ImageError(path.string() + ": not a PNG or PPM file");
}

std::vector<std::uint8_t> encode_ppm(const Tensor4<float>& t) {
  const auto rgb = to_interleaved(t);
  const std::string header = "P6\n" + std::to_string(t.w()) + " " + std::to_string(t.h()) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), rgb.begin(), rgb.end());
  return out;
}

void write_image(const Tensor4<float>& t, const std::filesystem::path& path) {
  const std::string ext = lower_ext(path);
  if (ext == ".ppm") {
    const auto bytes = encode_ppm(t);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw ImageError("cannot open " + path.string() + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw ImageError("failed writing " + path.string());
    return;
  }
  if (ext == ".png") {
    const auto rgb = to_interleaved(t);
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(t.w());
    image.height = static_cast<png_uint_32>(t.h());
    image.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&image, path.string().c_str(), 0, rgb.data(), 0, nullptr)) {
      throw ImageError("PNG " + path.string() + ": " + image.message);
    }
    return;
  }
  throw ImageError("unsupported image extension '" + ext + "' for " + path.string() + " (use .png or .ppm)");
}

bool is_image_path(const std::filesystem::path& path) {
  const std::string ext = lower_ext(path);
  return ext == ".png" || ext == ".ppm";
}

}  // namespace fan

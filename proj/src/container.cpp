#include <algorithm>
#include <bit>
#include <fstream>
#include <unordered_set>

#include "fan/io.hpp"

namespace fan {

namespace {

constexpr std::uint8_t kMagic[4] = {'F', 'A', 'N', 'C'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  void need(std::size_t count, const char* what) const {
    if (remaining() < count) {
      throw ContainerError(std::string("truncated ") + what + ": need " + std::to_string(count) + " bytes, " +
                               std::to_string(remaining()) + " left",
                           pos_);
    }
  }

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }

  std::span<const std::uint8_t> take(std::size_t count, const char* what) {
    need(count, what);
    auto s = bytes_.subspan(pos_, count);
    pos_ += count;
    return s;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

ContainerError::ContainerError(const std::string& what, std::size_t offset)
    : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

std::size_t NamedTensor::element_count() const {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

void TensorContainer::add(NamedTensor entry) {
  if (entry.name.empty()) throw std::invalid_argument("container entry name must not be empty");
  if (contains(entry.name)) throw std::invalid_argument("duplicate container entry '" + entry.name + "'");
  if (entry.element_count() != entry.data.size()) {
    throw std::invalid_argument("container entry '" + entry.name + "' declares " +
                                std::to_string(entry.element_count()) + " values but holds " +
                                std::to_string(entry.data.size()));
  }
  entries_.push_back(std::move(entry));
}

void TensorContainer::add(const std::string& name, const Tensor4<float>& t) {
  const auto& s = t.shape();
  add(NamedTensor{name,
                  {static_cast<std::uint32_t>(s.n), static_cast<std::uint32_t>(s.c), static_cast<std::uint32_t>(s.h),
                   static_cast<std::uint32_t>(s.w)},
                  t.storage()});
}

void TensorContainer::add(const std::string& name, std::vector<std::uint32_t> dims, std::vector<float> data) {
  add(NamedTensor{name, std::move(dims), std::move(data)});
}

const NamedTensor* TensorContainer::find(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return &e;
  return nullptr;
}

const NamedTensor& TensorContainer::get(const std::string& name) const {
  if (const auto* e = find(name)) return *e;
  throw std::out_of_range("container has no entry '" + name + "'");
}

std::vector<std::uint8_t> TensorContainer::serialize() const {
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(entries_.size()));
  for (const auto& e : entries_) {
    put_u32(out, static_cast<std::uint32_t>(e.name.size()));
    out.insert(out.end(), e.name.begin(), e.name.end());
    put_u32(out, static_cast<std::uint32_t>(e.dims.size()));
    for (auto d : e.dims) put_u32(out, d);
    for (float v : e.data) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

TensorContainer TensorContainer::parse(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  const auto magic = r.take(4, "magic");
  if (!std::equal(magic.begin(), magic.end(), kMagic)) throw ContainerError("bad magic, expected \"FANC\"", 0);
  const std::uint32_t version = r.u32("version");
  if (version != kVersion) {
    throw ContainerError("unsupported container version " + std::to_string(version), r.offset() - 4);
  }
  const std::uint32_t count = r.u32("entry count");

  TensorContainer c;
  std::unordered_set<std::string> seen;
  for (std::uint32_t k = 0; k < count; ++k) {
    const std::size_t entry_offset = r.offset();
    const std::uint32_t name_len = r.u32("name length");
    const auto name_bytes = r.take(name_len, "name");
    std::string name(name_bytes.begin(), name_bytes.end());
    if (name.empty()) throw ContainerError("empty entry name", entry_offset);
    if (!seen.insert(name).second) throw ContainerError("duplicate entry name '" + name + "'", entry_offset);

    const std::uint32_t rank = r.u32("rank");
    r.need(static_cast<std::size_t>(rank) * 4, "dims");
    std::vector<std::uint32_t> dims(rank);
    for (auto& d : dims) d = r.u32("dim");
    // saturating product: anything above the remaining byte budget is rejected
    const std::uint64_t budget = r.remaining() / 4;
    std::uint64_t elements = 1;
    bool oversized = false;
    for (auto d : dims) {
      if (d == 0) {
        elements = 0;
        oversized = false;
        break;
      }
      if (elements > budget / d) oversized = true;
      else elements *= d;
    }
    const std::size_t payload_offset = r.offset();
    if (oversized || elements > budget) {
      throw ContainerError("truncated payload of '" + name + "': " + std::to_string(r.remaining()) + " bytes left",
                           payload_offset);
    }
    const auto payload = r.take(static_cast<std::size_t>(elements) * 4, "payload");
    std::vector<float> data(static_cast<std::size_t>(elements));
    for (std::size_t i = 0; i < data.size(); ++i) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(payload[4 * i + b]) << (8 * b);
      data[i] = std::bit_cast<float>(bits);
    }
    c.entries_.push_back(NamedTensor{std::move(name), std::move(dims), std::move(data)});
  }
  if (r.remaining() != 0) {
    throw ContainerError(std::to_string(r.remaining()) + " trailing bytes after last entry", r.offset());
  }
  return c;
}

void TensorContainer::save(const std::filesystem::path& path) const {
  const auto bytes = serialize();
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("failed writing " + path.string());
}

TensorContainer TensorContainer::load(const std::filesystem::path& path) { return parse(read_file_bytes(path)); }

Tensor4<float> to_tensor4(const NamedTensor& t) {
  if (t.dims.size() > 4) throw ShapeError("entry '" + t.name + "' has rank " + std::to_string(t.dims.size()) + " > 4");
  std::size_t d[4] = {1, 1, 1, 1};
  const std::size_t pad = 4 - t.dims.size();
  for (std::size_t i = 0; i < t.dims.size(); ++i) d[pad + i] = t.dims[i];
  return Tensor4<float>(Shape4{d[0], d[1], d[2], d[3]}, t.data);
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

}  // namespace fan

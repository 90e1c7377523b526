#include "fan/extractor.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <regex>
#include <sstream>
#include <stdexcept>

#include "fan/random.hpp"

namespace fan {

namespace {

std::optional<std::vector<LevelGeometry>> try_plan(const ExtractorSpec& spec, std::size_t height, std::size_t width) {
  std::vector<LevelGeometry> out;
  std::size_t h = height;
  std::size_t w = width;
  std::size_t top = 0;
  std::size_t left = 0;
  std::size_t scale = 1;
  std::size_t channels = 3;
  std::size_t next_tap = 0;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& layer = spec.layers[i];
    if (layer.kind == ExtractorLayer::Kind::conv) {
      if (h < layer.kernel || w < layer.kernel) return std::nullopt;
      h -= layer.kernel - 1;
      w -= layer.kernel - 1;
      top += scale * ((layer.kernel - 1) / 2);
      left += scale * ((layer.kernel - 1) / 2);
      channels = layer.c_out;
    } else {
      h &= ~std::size_t{1};
      w &= ~std::size_t{1};
      if (h < 2 || w < 2) return std::nullopt;
      h /= 2;
      w /= 2;
      scale *= 2;
    }
    if (next_tap < spec.taps.size() && spec.taps[next_tap] == i) {
      out.push_back(LevelGeometry{i, h, w, channels, top, left, scale});
      ++next_tap;
    }
  }
  return out;
}

std::size_t search_min_size(const ExtractorSpec& spec) {
  for (std::size_t s = 1; s <= (1u << 16); ++s)
    if (try_plan(spec, s, s)) return s;
  throw std::invalid_argument("extractor spec admits no input size up to 65536");
}

ExtractorLayer conv_layer(std::size_t block, std::size_t idx, std::size_t c_in, std::size_t c_out) {
  return ExtractorLayer{ExtractorLayer::Kind::conv,
                        "conv" + std::to_string(block) + "_" + std::to_string(idx), c_in, c_out, 3};
}

ExtractorLayer pool_layer() { return ExtractorLayer{ExtractorLayer::Kind::maxpool, "pool", 0, 0, 0}; }

ExtractorSpec blocks_spec(const std::vector<std::pair<std::size_t, std::size_t>>& blocks) {
  // blocks: (convolutions in block, channel width)
  ExtractorSpec spec;
  std::size_t c_in = 3;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    if (b > 0) spec.layers.push_back(pool_layer());
    for (std::size_t i = 0; i < blocks[b].first; ++i) {
      spec.layers.push_back(conv_layer(b + 1, i + 1, c_in, blocks[b].second));
      c_in = blocks[b].second;
    }
    spec.taps.push_back(spec.layers.size() - 1);
  }
  return spec;
}

}  // namespace

Region LevelGeometry::region() const {
  return Region{static_cast<std::ptrdiff_t>(top), static_cast<std::ptrdiff_t>(left), scale * height, scale * width};
}

void ExtractorSpec::validate() const {
  if (taps.size() != 3) throw std::invalid_argument("extractor spec needs exactly 3 taps, has " + std::to_string(taps.size()));
  std::size_t channels = 3;
  bool seen_conv = false;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (l.kind == ExtractorLayer::Kind::conv) {
      if (l.c_in != channels) {
        throw std::invalid_argument("layer " + l.name + " expects " + std::to_string(l.c_in) + " input channels, gets " +
                                    std::to_string(channels));
      }
      if (l.kernel == 0 || l.kernel % 2 == 0) throw std::invalid_argument("layer " + l.name + " needs an odd kernel");
      channels = l.c_out;
      seen_conv = true;
    }
  }
  for (std::size_t t = 0; t < taps.size(); ++t) {
    if (taps[t] >= layers.size()) throw std::invalid_argument("tap index out of range");
    if (t > 0 && taps[t] <= taps[t - 1]) throw std::invalid_argument("taps must be strictly increasing");
    if (layers[taps[t]].kind != ExtractorLayer::Kind::conv) {
      throw std::invalid_argument("tap " + std::to_string(taps[t]) + " does not follow a convolution");
    }
  }
  if (!seen_conv) throw std::invalid_argument("extractor spec has no convolution");
}

std::vector<LevelGeometry> plan_geometry(const ExtractorSpec& spec, std::size_t height, std::size_t width) {
  if (auto plan = try_plan(spec, height, width)) return *plan;
  const std::size_t min_side = search_min_size(spec);
  throw InputTooSmallError("input " + std::to_string(height) + "x" + std::to_string(width) +
                           " too small for the feature extractor; minimum admissible size is " +
                           std::to_string(min_side) + "x" + std::to_string(min_side));
}

std::size_t min_input_size(const ExtractorSpec& spec) { return search_min_size(spec); }

ExtractorSpec default_vgg_spec() { return blocks_spec({{2, 64}, {2, 128}, {4, 256}}); }

std::pair<ExtractorSpec, TensorContainer> tiny_spec(std::uint64_t seed) {
  ExtractorSpec spec = blocks_spec({{2, 8}, {2, 8}, {2, 8}});
  SplitMix64 rng(seed);
  TensorContainer weights;
  for (const auto& l : spec.layers) {
    if (l.kind != ExtractorLayer::Kind::conv) continue;
    const double bound = std::sqrt(6.0 / static_cast<double>(l.c_in * l.kernel * l.kernel));
    std::vector<float> w(l.c_out * l.c_in * l.kernel * l.kernel);
    for (auto& v : w) v = static_cast<float>(rng.symmetric(bound));
    std::vector<float> b(l.c_out);
    for (auto& v : b) v = static_cast<float>(rng.symmetric(0.1));
    weights.add(conv_weight_name(l.name),
                {static_cast<std::uint32_t>(l.c_out), static_cast<std::uint32_t>(l.c_in),
                 static_cast<std::uint32_t>(l.kernel), static_cast<std::uint32_t>(l.kernel)},
                std::move(w));
    weights.add(conv_bias_name(l.name), {static_cast<std::uint32_t>(l.c_out)}, std::move(b));
  }
  return {spec, weights};
}

ExtractorSpec spec_from_container(const TensorContainer& weights) {
  static const std::regex pattern(R"(f\.conv(\d+)_(\d+)\.weight)");
  std::map<std::pair<std::size_t, std::size_t>, const NamedTensor*> convs;
  for (const auto& e : weights.entries()) {
    std::smatch m;
    if (std::regex_match(e.name, m, pattern)) convs[{std::stoul(m[1]), std::stoul(m[2])}] = &e;
  }
  if (convs.empty()) throw std::invalid_argument("container holds no f.conv{block}_{idx}.weight entries");
  ExtractorSpec spec;
  std::size_t block = 0;
  std::size_t idx = 0;
  for (const auto& [key, entry] : convs) {
    if (entry->dims.size() != 4) throw std::invalid_argument(entry->name + " must have rank 4");
    if (key.first != block) {
      if (key.first != block + 1 || key.second != 1) {
        throw std::invalid_argument("extractor blocks must be numbered consecutively from conv1_1, found " + entry->name);
      }
      if (block > 0) {
        spec.taps.push_back(spec.layers.size() - 1);
        spec.layers.push_back(pool_layer());
      }
      block = key.first;
      idx = 0;
    }
    if (key.second != idx + 1) throw std::invalid_argument("gap in convolution numbering before " + entry->name);
    idx = key.second;
    spec.layers.push_back(ExtractorLayer{ExtractorLayer::Kind::conv,
                                         "conv" + std::to_string(key.first) + "_" + std::to_string(key.second),
                                         entry->dims[1], entry->dims[0], entry->dims[2]});
  }
  spec.taps.push_back(spec.layers.size() - 1);
  spec.validate();
  return spec;
}

std::string conv_weight_name(const std::string& layer) { return "f." + layer + ".weight"; }
std::string conv_bias_name(const std::string& layer) { return "f." + layer + ".bias"; }

template <typename T>
FeatureExtractor<T>::FeatureExtractor(ExtractorSpec spec, const TensorContainer& weights) : spec_(std::move(spec)) {
  spec_.validate();
  std::vector<std::string> problems;
  convs_.resize(spec_.layers.size());
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const auto& l = spec_.layers[i];
    if (l.kind != ExtractorLayer::Kind::conv) continue;
    const auto* w = weights.find(conv_weight_name(l.name));
    const auto* b = weights.find(conv_bias_name(l.name));
    if (w == nullptr) problems.push_back("missing " + conv_weight_name(l.name));
    if (b == nullptr) problems.push_back("missing " + conv_bias_name(l.name));
    if (w == nullptr || b == nullptr) continue;
    const std::vector<std::uint32_t> want{static_cast<std::uint32_t>(l.c_out), static_cast<std::uint32_t>(l.c_in),
                                          static_cast<std::uint32_t>(l.kernel), static_cast<std::uint32_t>(l.kernel)};
    if (w->dims != want) {
      problems.push_back(w->name + " has wrong dims");
      continue;
    }
    if (b->data.size() != l.c_out) {
      problems.push_back(b->name + " has wrong length");
      continue;
    }
    ConvParams<T> p;
    p.weight = to_tensor4(*w).cast<T>();
    p.bias.assign(b->data.begin(), b->data.end());
    p.padding = Padding::valid;
    convs_[i] = std::move(p);
  }
  if (!problems.empty()) {
    std::ostringstream os;
    os << "extractor weights incomplete:";
    for (const auto& p : problems) os << " " << p << ";";
    throw std::invalid_argument(os.str());
  }
  if (const auto* m = weights.find(kPreprocessMean)) mean_.assign(m->data.begin(), m->data.end());
  if (const auto* s = weights.find(kPreprocessStd)) std_.assign(s->data.begin(), s->data.end());
  if (!mean_.empty() && mean_.size() != 3) throw std::invalid_argument(std::string(kPreprocessMean) + " must hold 3 values");
  if (!std_.empty() && std_.size() != 3) throw std::invalid_argument(std::string(kPreprocessStd) + " must hold 3 values");
  min_size_ = fan::min_input_size(spec_);
}

template <typename T>
FeaturePyramid<T> FeatureExtractor<T>::extract(const Tensor4<T>& x) const {
  if (x.c() != 3) throw ShapeError("extract: expected 3 input channels, got " + to_string(x.shape()));
  const auto plan = plan_geometry(spec_, x.h(), x.w());

  Tensor4<T> a = x;
  if (!mean_.empty() || !std_.empty()) {
    for (std::size_t n = 0; n < a.n(); ++n)
      for (std::size_t c = 0; c < 3; ++c) {
        const double m = mean_.empty() ? 0.0 : mean_[c];
        const double s = std_.empty() ? 1.0 : std_[c];
        for (auto& v : a.plane(n, c)) v = static_cast<T>((v - m) / s);
      }
  }

  FeaturePyramid<T> pyramid;
  std::size_t next_tap = 0;
  for (std::size_t i = 0; i < spec_.layers.size() && next_tap < plan.size(); ++i) {
    if (spec_.layers[i].kind == ExtractorLayer::Kind::conv) {
      a = relu(conv2d(a, convs_[i]));
    } else {
      const std::size_t h = a.h() & ~std::size_t{1};
      const std::size_t w = a.w() & ~std::size_t{1};
      if (h != a.h() || w != a.w()) a = crop(a, 0, 0, h, w);
      a = maxpool2(a);
    }
    if (plan[next_tap].tap_index == i) {
      if (a.h() != plan[next_tap].height || a.w() != plan[next_tap].width) {
        throw std::logic_error("extractor geometry plan disagrees with the forward pass");
      }
      pyramid.levels.push_back(FeatureLevel<T>{plan[next_tap], a});
      ++next_tap;
    }
  }
  return pyramid;
}

template class FeatureExtractor<float>;
template class FeatureExtractor<double>;

}  // namespace fan

#include "fan/transformer.hpp"

#include <cmath>
#include <random>

namespace fan {

namespace {

template <typename T>
ConvParams<T> init_pointwise(std::size_t c_in, std::size_t c_out, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(c_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  ConvParams<T> p;
  p.weight = Tensor4<T>(c_out, c_in, 1, 1);
  for (auto& v : p.weight.data()) v = static_cast<T>(dist(rng));
  p.bias.resize(c_out);
  for (auto& v : p.bias) v = static_cast<T>(dist(rng));
  return p;
}

template <typename T>
void check_pointwise(const ConvParams<T>& p, const char* where) {
  if (p.k_h() != 1 || p.k_w() != 1 || p.stride != 1) {
    throw ShapeError(std::string(where) + ": main-path layers must be 1x1 stride-1, got kernel " +
                     to_string(p.weight.shape()));
  }
  if (p.bias.size() != p.c_out()) throw ShapeError(std::string(where) + ": bias length mismatch");
}

template <typename T>
void save_layers(const std::vector<ConvParams<T>>& layers, const std::string& prefix, TensorContainer& out) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string base = prefix + std::to_string(i);
    out.add(base + ".weight", layers[i].weight.template cast<float>());
    out.add(base + ".bias", {static_cast<std::uint32_t>(layers[i].bias.size())},
            std::vector<float>(layers[i].bias.begin(), layers[i].bias.end()));
  }
}

std::vector<ConvParams<float>> load_layers(const TensorContainer& in, const std::string& prefix) {
  std::vector<ConvParams<float>> layers;
  for (std::size_t i = 0;; ++i) {
    const std::string base = prefix + std::to_string(i);
    const auto* w = in.find(base + ".weight");
    if (w == nullptr) break;
    const auto& b = in.get(base + ".bias");
    ConvParams<float> p;
    p.weight = to_tensor4(*w);
    p.bias = b.data;
    layers.push_back(std::move(p));
  }
  return layers;
}

}  // namespace

template <typename T>
void TransformerParams<T>::validate() const {
  if (lift.empty() || project.empty()) throw ShapeError("transformer needs at least one lift and one project layer");
  std::size_t channels = 3;
  for (const auto& l : lift) {
    check_pointwise(l, "lift");
    if (l.c_in() != channels) throw ShapeError("lift: channel chain broken at " + to_string(l.weight.shape()));
    channels = l.c_out();
  }
  if (channels != latent_channels) throw ShapeError("lift does not end at latent_channels");
  for (const auto& l : project) {
    check_pointwise(l, "project");
    if (l.c_in() != channels) throw ShapeError("project: channel chain broken at " + to_string(l.weight.shape()));
    channels = l.c_out();
  }
  if (channels != 3) throw ShapeError("project must end with 3 channels");
}

template <typename T>
TransformerParams<T> init_transformer(std::size_t latent_channels, std::uint64_t seed) {
  if (latent_channels < 3) throw std::invalid_argument("latent_channels must be at least 3");
  std::mt19937_64 rng(seed);
  TransformerParams<T> p;
  p.latent_channels = latent_channels;
  p.lift.push_back(init_pointwise<T>(3, latent_channels, rng));
  p.lift.push_back(init_pointwise<T>(latent_channels, latent_channels, rng));
  p.project.push_back(init_pointwise<T>(latent_channels, latent_channels, rng));
  p.project.push_back(init_pointwise<T>(latent_channels, 3, rng));
  return p;
}

template <typename T>
TransformerGrads<T> zero_grads_like(const TransformerParams<T>& p) {
  TransformerGrads<T> g;
  for (const auto& l : p.lift) g.lift.push_back(zero_grads_like(l));
  for (const auto& l : p.project) g.project.push_back(zero_grads_like(l));
  return g;
}

// Layers alternate with relu; the last project layer is followed by sigmoid.
template <typename T>
Tensor4<T> lift(const Tensor4<T>& x, const TransformerParams<T>& p) {
  if (x.c() != 3) throw ShapeError("lift: expected 3 channels, got " + to_string(x.shape()));
  Tensor4<T> a = x;
  for (std::size_t i = 0; i < p.lift.size(); ++i) {
    a = conv2d(a, p.lift[i]);
    if (i + 1 < p.lift.size()) a = relu(a);
  }
  return a;
}

template <typename T>
Tensor4<T> project(const Tensor4<T>& ybar, const TransformerParams<T>& p) {
  if (ybar.c() != p.latent_channels) {
    throw ShapeError("project: expected " + std::to_string(p.latent_channels) + " channels, got " +
                     to_string(ybar.shape()));
  }
  Tensor4<T> a = ybar;
  for (std::size_t i = 0; i < p.project.size(); ++i) {
    a = conv2d(a, p.project[i]);
    a = i + 1 < p.project.size() ? relu(a) : sigmoid(a);
  }
  return a;
}

template <typename T>
typename GradTape<T>::NodeId tape_lift(GradTape<T>& tape, typename GradTape<T>::NodeId x, const TransformerParams<T>& p,
                                       TransformerGrads<T>* grads) {
  if (tape.value(x).c() != 3) throw ShapeError("lift: expected 3 channels, got " + to_string(tape.value(x).shape()));
  auto a = x;
  for (std::size_t i = 0; i < p.lift.size(); ++i) {
    a = tape_conv2d(tape, a, p.lift[i], grads ? &grads->lift[i] : nullptr);
    if (i + 1 < p.lift.size()) a = tape_relu(tape, a);
  }
  return a;
}

template <typename T>
typename GradTape<T>::NodeId tape_project(GradTape<T>& tape, typename GradTape<T>::NodeId ybar,
                                          const TransformerParams<T>& p, TransformerGrads<T>* grads) {
  if (tape.value(ybar).c() != p.latent_channels) {
    throw ShapeError("project: expected " + std::to_string(p.latent_channels) + " channels, got " +
                     to_string(tape.value(ybar).shape()));
  }
  auto a = ybar;
  for (std::size_t i = 0; i < p.project.size(); ++i) {
    a = tape_conv2d(tape, a, p.project[i], grads ? &grads->project[i] : nullptr);
    a = i + 1 < p.project.size() ? tape_relu(tape, a) : tape_sigmoid(tape, a);
  }
  return a;
}

void save_transformer(const TransformerParams<float>& p, TensorContainer& out) {
  save_layers(p.lift, "t.lift.", out);
  save_layers(p.project, "t.project.", out);
}

TransformerParams<float> load_transformer(const TensorContainer& in) {
  TransformerParams<float> p;
  p.lift = load_layers(in, "t.lift.");
  p.project = load_layers(in, "t.project.");
  if (p.lift.empty()) throw std::invalid_argument("container has no t.lift.0.weight entry");
  p.latent_channels = p.lift.back().c_out();
  p.validate();
  return p;
}

#define FAN_INSTANTIATE_TRANSFORMER(T)                                                                            \
  template struct TransformerParams<T>;                                                                          \
  template TransformerParams<T> init_transformer(std::size_t, std::uint64_t);                                    \
  template TransformerGrads<T> zero_grads_like(const TransformerParams<T>&);                                     \
  template Tensor4<T> lift(const Tensor4<T>&, const TransformerParams<T>&);                                      \
  template Tensor4<T> project(const Tensor4<T>&, const TransformerParams<T>&);                                   \
  template GradTape<T>::NodeId tape_lift(GradTape<T>&, GradTape<T>::NodeId, const TransformerParams<T>&,         \
                                         TransformerGrads<T>*);                                                  \
  template GradTape<T>::NodeId tape_project(GradTape<T>&, GradTape<T>::NodeId, const TransformerParams<T>&,      \
                                            TransformerGrads<T>*);

FAN_INSTANTIATE_TRANSFORMER(float)
FAN_INSTANTIATE_TRANSFORMER(double)

#undef FAN_INSTANTIATE_TRANSFORMER

}  // namespace fan

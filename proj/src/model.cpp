#include "fan/model.hpp"

#include <algorithm>

namespace fan {

namespace {

template <typename U, typename T>
ConvParams<U> cast_conv(const ConvParams<T>& p) {
  ConvParams<U> out;
  out.weight = p.weight.template cast<U>();
  out.bias.assign(p.bias.begin(), p.bias.end());
  out.padding = p.padding;
  out.stride = p.stride;
  return out;
}

template <typename T>
ParamSlot<T> slot(std::string name, Tensor4<T>& value, const Tensor4<T>& grad) {
  return ParamSlot<T>{std::move(name), value.data(), grad.data()};
}

template <typename T>
ParamSlot<T> slot(std::string name, std::vector<T>& value, const std::vector<T>& grad) {
  return ParamSlot<T>{std::move(name), std::span<T>(value), std::span<const T>(grad)};
}

double f32(double v) { return static_cast<double>(static_cast<float>(v)); }

}  // namespace

template <typename T>
template <typename U>
FanNetwork<U> FanNetwork<T>::cast() const {
  FanNetwork<U> out;
  out.transformer.latent_channels = transformer.latent_channels;
  for (const auto& l : transformer.lift) out.transformer.lift.push_back(cast_conv<U>(l));
  for (const auto& l : transformer.project) out.transformer.project.push_back(cast_conv<U>(l));
  for (const auto& u : fan.units) {
    FanUnitParams<U> v;
    v.w_mult = u.w_mult.template cast<U>();
    v.w_add = u.w_add.template cast<U>();
    v.eps = u.eps;
    out.fan.units.push_back(std::move(v));
  }
  return out;
}

Region valid_region(const std::vector<LevelGeometry>& levels, std::size_t height, std::size_t width) {
  Region r{0, 0, height, width};
  for (const auto& l : levels) r = intersect(r, l.region());
  if (r.empty()) throw ShapeError("no pixel is covered by every feature level");
  return r;
}

template <typename T>
NetworkGrads<T> zero_grads_like(const FanNetwork<T>& net) {
  return NetworkGrads<T>{zero_grads_like(net.transformer), zero_grads_like(net.fan)};
}

template <typename T>
Tensor4<T> crop_region(const Tensor4<T>& image, const Region& region) {
  if (region.top < 0 || region.left < 0) throw ShapeError("crop_region: negative offset " + to_string(region));
  return crop(image, static_cast<std::size_t>(region.top), static_cast<std::size_t>(region.left), region.height,
              region.width);
}

namespace {

// The main path is pixelwise, so restricting x~ to the final valid region
// before lifting gives exactly the values the full-size lift would have there.
template <typename T>
typename GradTape<T>::NodeId record_network(GradTape<T>& tape, const FanNetwork<T>& net, const Tensor4<T>& x_tilde,
                                            const FeaturePyramid<T>& pyramid, NetworkGrads<T>* grads, Region& region) {
  std::vector<LevelGeometry> levels;
  for (const auto& l : pyramid.levels) levels.push_back(l.geometry);
  region = valid_region(levels, x_tilde.h(), x_tilde.w());
  auto node = tape.constant(crop_region(x_tilde, region));
  node = tape_lift(tape, node, net.transformer, grads ? &grads->transformer : nullptr);
  if (net.fan.units.size() != pyramid.levels.size()) {
    throw ShapeError("network has " + std::to_string(net.fan.units.size()) + " FAN units for " +
                     std::to_string(pyramid.levels.size()) + " feature levels");
  }
  for (std::size_t k = net.fan.units.size(); k-- > 0;) {
    Region next;
    node = tape_fan(tape, node, region, pyramid.levels[k], net.fan.units[k], grads ? &grads->fan.w_mult[k] : nullptr,
                    grads ? &grads->fan.w_add[k] : nullptr, next);
    region = next;
  }
  return tape_project(tape, node, net.transformer, grads ? &grads->transformer : nullptr);
}

}  // namespace

template <typename T>
NetworkOutput<T> network_forward(const FanNetwork<T>& net, const Tensor4<T>& x_tilde, const FeaturePyramid<T>& pyramid) {
  GradTape<T> tape;
  Region region;
  const auto out = record_network<T>(tape, net, x_tilde, pyramid, nullptr, region);
  return NetworkOutput<T>{tape.value(out), region};
}

template <typename T>
double network_loss_and_grad(const FanNetwork<T>& net, const Tensor4<T>& x_tilde, const FeaturePyramid<T>& pyramid,
                             const Tensor4<T>& clean, NetworkGrads<T>& grads) {
  if (clean.shape() != x_tilde.shape()) {
    throw ShapeError("loss: clean " + to_string(clean.shape()) + " vs disturbed " + to_string(x_tilde.shape()));
  }
  GradTape<T> tape;
  Region region;
  const auto out = record_network<T>(tape, net, x_tilde, pyramid, &grads, region);
  const Tensor4<T> target = crop_region(clean, region);
  const double loss = mse(tape.value(out), target);
  const auto loss_node = tape_mse(tape, out, target);
  tape.backward(loss_node);
  return loss;
}

template <typename T>
std::vector<ParamSlot<T>> param_slots(FanNetwork<T>& net, NetworkGrads<T>& grads) {
  std::vector<ParamSlot<T>> slots;
  auto add_layers = [&](std::vector<ConvParams<T>>& layers, std::vector<ConvGrads<T>>& g, const std::string& prefix) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      slots.push_back(slot(prefix + std::to_string(i) + ".weight", layers[i].weight, g[i].weight));
      slots.push_back(slot(prefix + std::to_string(i) + ".bias", layers[i].bias, g[i].bias));
    }
  };
  add_layers(net.transformer.lift, grads.transformer.lift, "t.lift.");
  add_layers(net.transformer.project, grads.transformer.project, "t.project.");
  for (std::size_t k = 0; k < net.fan.units.size(); ++k) {
    slots.push_back(slot("fan." + std::to_string(k) + ".w_mult", net.fan.units[k].w_mult, grads.fan.w_mult[k]));
    slots.push_back(slot("fan." + std::to_string(k) + ".w_add", net.fan.units[k].w_add, grads.fan.w_add[k]));
  }
  return slots;
}

FanModel::FanModel(ExtractorSpec spec, TensorContainer extractor_weights, FanNetwork<float> network, NoiseModel noise)
    : spec_(std::move(spec)),
      extractor_weights_(std::move(extractor_weights)),
      extractor_(spec_, extractor_weights_),
      network_(std::move(network)),
      noise_(round_to_f32(noise)) {
  for (auto& u : network_.fan.units) u.eps = f32(u.eps);
  network_.transformer.validate();
  if (network_.fan.units.size() != spec_.taps.size()) throw std::invalid_argument("FAN unit count must equal tap count");
  const auto levels = extractor_.geometry(extractor_.min_input_size(), extractor_.min_input_size());
  for (std::size_t k = 0; k < levels.size(); ++k) {
    const auto& u = network_.fan.units[k];
    u.validate();
    if (u.z_channels() != levels[k].channels || u.latent_channels() != network_.transformer.latent_channels) {
      throw std::invalid_argument("fan." + std::to_string(k) + " gates do not match extractor/transformer widths");
    }
  }
}

FanModel FanModel::from_container(const TensorContainer& c) {
  TensorContainer fweights;
  for (const auto& e : c.entries())
    if (e.name.rfind("f.", 0) == 0 || e.name.rfind("meta.preprocess.", 0) == 0) fweights.add(e);
  ExtractorSpec spec = spec_from_container(fweights);
  FanNetwork<float> net{load_transformer(c), load_fan_stack(c)};
  return FanModel(std::move(spec), std::move(fweights), std::move(net), load_noise_model(c));
}

TensorContainer FanModel::to_container(std::span<const double> loss_history) const {
  TensorContainer c;
  for (const auto& e : extractor_weights_.entries()) c.add(e);
  save_transformer(network_.transformer, c);
  save_fan_stack(network_.fan, c);
  save_noise_model(noise_, c);
  if (!loss_history.empty()) {
    c.add(kLossHistory, {static_cast<std::uint32_t>(loss_history.size())},
          std::vector<float>(loss_history.begin(), loss_history.end()));
  }
  return c;
}

Region FanModel::output_region(std::size_t height, std::size_t width) const {
  return valid_region(extractor_.geometry(height, width), height, width);
}

NetworkOutput<float> FanModel::normalize(const Tensor4<float>& x) const {
  return network_forward(network_, x, extractor_.extract(x));
}

#define FAN_INSTANTIATE_MODEL(T)                                                                                 \
  template NetworkGrads<T> zero_grads_like(const FanNetwork<T>&);                                               \
  template Tensor4<T> crop_region(const Tensor4<T>&, const Region&);                                            \
  template NetworkOutput<T> network_forward(const FanNetwork<T>&, const Tensor4<T>&, const FeaturePyramid<T>&); \
  template double network_loss_and_grad(const FanNetwork<T>&, const Tensor4<T>&, const FeaturePyramid<T>&,      \
                                        const Tensor4<T>&, NetworkGrads<T>&);                                   \
  template std::vector<ParamSlot<T>> param_slots(FanNetwork<T>&, NetworkGrads<T>&);

FAN_INSTANTIATE_MODEL(float)
FAN_INSTANTIATE_MODEL(double)

template FanNetwork<double> FanNetwork<float>::cast<double>() const;
template FanNetwork<float> FanNetwork<double>::cast<float>() const;
template FanNetwork<float> FanNetwork<float>::cast<float>() const;

#undef FAN_INSTANTIATE_MODEL

}  // namespace fan

#include "fan/fan_unit.hpp"

#include <cmath>
#include <random>

namespace fan {

namespace {

template <typename T>
ConvParams<T> gate_conv(const Tensor4<T>& w) {
  ConvParams<T> p;
  p.weight = w;
  p.bias.assign(w.n(), T(0));
  return p;
}

std::size_t row_in(const Region& outer, const Region& inner) { return static_cast<std::size_t>(inner.top - outer.top); }
std::size_t col_in(const Region& outer, const Region& inner) { return static_cast<std::size_t>(inner.left - outer.left); }

}  // namespace

template <typename T>
void FanUnitParams<T>::validate() const {
  if (w_mult.shape() != w_add.shape()) {
    throw ShapeError("FAN unit gate matrices differ: " + to_string(w_mult.shape()) + " vs " + to_string(w_add.shape()));
  }
  if (w_mult.h() != 1 || w_mult.w() != 1 || w_mult.empty()) {
    throw ShapeError("FAN unit gates must be (latent, z_channels, 1, 1), got " + to_string(w_mult.shape()));
  }
  if (!(eps > 0.0)) throw std::invalid_argument("FAN unit eps must be positive");
}

template <typename T>
FanOutput<T> fan_forward(const Tensor4<T>& y, const Region& y_region, const FeatureLevel<T>& level,
                         const FanUnitParams<T>& params) {
  params.validate();
  const Tensor4<T>& z = level.z;
  if (y.h() != y_region.height || y.w() != y_region.width) {
    throw ShapeError("fan_forward: y " + to_string(y.shape()) + " does not match its region " + to_string(y_region));
  }
  if (y.n() != z.n()) {
    throw ShapeError("fan_forward: batch mismatch, y " + to_string(y.shape()) + " vs z " + to_string(z.shape()));
  }
  if (y.c() != params.latent_channels() || z.c() != params.z_channels()) {
    throw ShapeError("fan_forward: gates " + to_string(params.w_mult.shape()) + " do not map z " + to_string(z.shape()) +
                     " onto y " + to_string(y.shape()));
  }
  if (z.h() != level.geometry.height || z.w() != level.geometry.width) {
    throw ShapeError("fan_forward: feature map " + to_string(z.shape()) + " disagrees with its level geometry");
  }
  const Region z_region = level.region();
  const Region out_region = intersect(y_region, z_region);
  if (out_region.empty()) {
    throw ShapeError("fan_forward: misaligned grids, y covers " + to_string(y_region) + " but features cover " +
                     to_string(z_region));
  }

  FanOutput<T> result;
  FanCache<T>& c = result.cache;
  c.y_shape = y.shape();
  c.y_region = y_region;
  c.out_region = out_region;
  c.z_region = z_region;
  c.z = z;
  c.eps = params.eps;

  const Tensor4<T> y_crop = crop(y, row_in(y_region, out_region), col_in(y_region, out_region),
                                 out_region.height, out_region.width);
  c.stats = batch_stats(y_crop);
  c.xhat = standardize(y_crop, c.stats, params.eps);

  c.mult_conv = gate_conv(params.w_mult);
  c.add_conv = gate_conv(params.w_add);
  c.gamma_low = sigmoid(conv2d(z, c.mult_conv));
  c.beta_low = relu(conv2d(z, c.add_conv));

  const std::size_t zt = row_in(z_region, out_region);
  const std::size_t zl = col_in(z_region, out_region);
  c.gamma = crop(upsample(c.gamma_low, z_region.height, z_region.width), zt, zl, out_region.height, out_region.width);
  c.beta = crop(upsample(c.beta_low, z_region.height, z_region.width), zt, zl, out_region.height, out_region.width);

  result.out = Tensor4<T>(c.xhat.shape());
  for (std::size_t i = 0; i < result.out.size(); ++i) {
    result.out.data()[i] = c.xhat.data()[i] * c.gamma.data()[i] + c.beta.data()[i];
  }
  result.region = out_region;
  c.valid = true;
  return result;
}

template <typename T>
FanGrads<T> fan_backward(const Tensor4<T>& grad_out, const FanCache<T>& c) {
  if (!c.valid) throw std::logic_error("fan_backward: called without a forward cache");
  if (grad_out.shape() != c.xhat.shape()) {
    throw ShapeError("fan_backward: grad_out " + to_string(grad_out.shape()) + " != forward output " +
                     to_string(c.xhat.shape()));
  }
  const std::size_t count = grad_out.size();
  Tensor4<T> grad_xhat(grad_out.shape());
  Tensor4<T> grad_gamma(grad_out.shape());
  for (std::size_t i = 0; i < count; ++i) {
    grad_xhat.data()[i] = grad_out.data()[i] * c.gamma.data()[i];
    grad_gamma.data()[i] = grad_out.data()[i] * c.xhat.data()[i];
  }

  FanGrads<T> g;
  const Tensor4<T> grad_ycrop = standardize_backward(grad_xhat, c.xhat, c.stats, c.eps);
  g.y = crop_backward(grad_ycrop, c.y_shape, row_in(c.y_region, c.out_region),
                      col_in(c.y_region, c.out_region));

  const Shape4 up_shape{c.z.n(), c.gamma_low.c(), c.z_region.height, c.z_region.width};
  const std::size_t zt = row_in(c.z_region, c.out_region);
  const std::size_t zl = col_in(c.z_region, c.out_region);

  const Tensor4<T> grad_gamma_low = upsample_backward(crop_backward(grad_gamma, up_shape, zt, zl), c.gamma_low.shape());
  g.w_mult = conv2d_backward(sigmoid_backward(grad_gamma_low, c.gamma_low), c.z, c.mult_conv).weight;

  const Tensor4<T> grad_beta_low = upsample_backward(crop_backward(grad_out, up_shape, zt, zl), c.beta_low.shape());
  g.w_add = conv2d_backward(relu_backward(grad_beta_low, c.beta_low), c.z, c.add_conv).weight;
  return g;
}

template <typename T>
StackOutput<T> apply_stack(const Tensor4<T>& y, const Region& y_region, const FeaturePyramid<T>& pyramid,
                           const FanStack<T>& stack) {
  if (stack.units.size() != pyramid.levels.size()) {
    throw ShapeError("apply_stack: " + std::to_string(stack.units.size()) + " units for " +
                     std::to_string(pyramid.levels.size()) + " pyramid levels");
  }
  StackOutput<T> result;
  result.out = y;
  result.region = y_region;
  for (std::size_t k = stack.units.size(); k-- > 0;) {
    FanOutput<T> step = fan_forward(result.out, result.region, pyramid.levels[k], stack.units[k]);
    result.out = std::move(step.out);
    result.region = step.region;
    result.caches.push_back(std::move(step.cache));
  }
  return result;
}

template <typename T>
FanStack<T> init_fan_stack(std::size_t latent_channels, const std::vector<std::size_t>& z_channels, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  FanStack<T> stack;
  for (std::size_t zc : z_channels) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(zc));
    std::uniform_real_distribution<double> dist(-bound, bound);
    FanUnitParams<T> u;
    u.w_mult = Tensor4<T>(latent_channels, zc, 1, 1);
    u.w_add = Tensor4<T>(latent_channels, zc, 1, 1);
    for (auto& v : u.w_mult.data()) v = static_cast<T>(dist(rng));
    for (auto& v : u.w_add.data()) v = static_cast<T>(dist(rng));
    stack.units.push_back(std::move(u));
  }
  return stack;
}

template <typename T>
FanStackGrads<T> zero_grads_like(const FanStack<T>& stack) {
  FanStackGrads<T> g;
  for (const auto& u : stack.units) {
    g.w_mult.emplace_back(u.w_mult.shape());
    g.w_add.emplace_back(u.w_add.shape());
  }
  return g;
}

template <typename T>
typename GradTape<T>::NodeId tape_fan(GradTape<T>& tape, typename GradTape<T>::NodeId y, const Region& y_region,
                                      const FeatureLevel<T>& level, const FanUnitParams<T>& params, Tensor4<T>* grad_w_mult,
                                      Tensor4<T>* grad_w_add, Region& region) {
  FanOutput<T> fwd = fan_forward(tape.value(y), y_region, level, params);
  region = fwd.region;
  auto cache = std::make_shared<FanCache<T>>(std::move(fwd.cache));
  return tape.record("fan", std::move(fwd.out),
                     [y, cache, grad_w_mult, grad_w_add](GradTape<T>& t, typename GradTape<T>::NodeId o) {
                       FanGrads<T> g = fan_backward(t.grad(o), *cache);
                       t.accumulate(y, g.y);
                       if (grad_w_mult != nullptr) accumulate_into(*grad_w_mult, g.w_mult);
                       if (grad_w_add != nullptr) accumulate_into(*grad_w_add, g.w_add);
                     });
}

void save_fan_stack(const FanStack<float>& stack, TensorContainer& out) {
  for (std::size_t k = 0; k < stack.units.size(); ++k) {
    const auto& u = stack.units[k];
    const std::vector<std::uint32_t> dims{static_cast<std::uint32_t>(u.latent_channels()),
                                          static_cast<std::uint32_t>(u.z_channels())};
    const std::string base = "fan." + std::to_string(k);
    out.add(base + ".w_mult", dims, u.w_mult.storage());
    out.add(base + ".w_add", dims, u.w_add.storage());
  }
  if (!stack.units.empty()) out.add("meta.fan.eps", {1}, {static_cast<float>(stack.units.front().eps)});
}

FanStack<float> load_fan_stack(const TensorContainer& in) {
  FanStack<float> stack;
  double eps = kFanEps;
  if (const auto* e = in.find("meta.fan.eps"); e != nullptr && e->data.size() == 1) eps = e->data[0];
  for (std::size_t k = 0;; ++k) {
    const std::string base = "fan." + std::to_string(k);
    const auto* wm = in.find(base + ".w_mult");
    if (wm == nullptr) break;
    const auto& wa = in.get(base + ".w_add");
    if (wm->dims.size() != 2 || wa.dims != wm->dims) throw std::invalid_argument(base + " gates must be matching rank-2");
    FanUnitParams<float> u;
    const Shape4 s{wm->dims[0], wm->dims[1], 1, 1};
    u.w_mult = Tensor4<float>(s, wm->data);
    u.w_add = Tensor4<float>(s, wa.data);
    u.eps = eps;
    u.validate();
    stack.units.push_back(std::move(u));
  }
  if (stack.units.empty()) throw std::invalid_argument("container has no fan.0.w_mult entry");
  return stack;
}

#define FAN_INSTANTIATE_UNIT(T)                                                                                   \
  template struct FanUnitParams<T>;                                                                              \
  template FanOutput<T> fan_forward(const Tensor4<T>&, const Region&, const FeatureLevel<T>&,                    \
                                    const FanUnitParams<T>&);                                                    \
  template FanGrads<T> fan_backward(const Tensor4<T>&, const FanCache<T>&);                                      \
  template StackOutput<T> apply_stack(const Tensor4<T>&, const Region&, const FeaturePyramid<T>&,                \
                                      const FanStack<T>&);                                                       \
  template FanStack<T> init_fan_stack(std::size_t, const std::vector<std::size_t>&, std::uint64_t);              \
  template FanStackGrads<T> zero_grads_like(const FanStack<T>&);                                                 \
  template GradTape<T>::NodeId tape_fan(GradTape<T>&, GradTape<T>::NodeId, const Region&, const FeatureLevel<T>&, \
                                        const FanUnitParams<T>&, Tensor4<T>*, Tensor4<T>*, Region&);

FAN_INSTANTIATE_UNIT(float)
FAN_INSTANTIATE_UNIT(double)

#undef FAN_INSTANTIATE_UNIT

}  // namespace fan

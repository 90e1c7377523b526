#include "fan/tape.hpp"

#include <stdexcept>

namespace fan {

template <typename T>
typename GradTape<T>::NodeId GradTape<T>::constant(Tensor4<T> value) {
  nodes_.push_back(Node{std::move(value), {}, false});
  return nodes_.size() - 1;
}

template <typename T>
typename GradTape<T>::NodeId GradTape<T>::leaf(Tensor4<T> value) {
  nodes_.push_back(Node{std::move(value), {}, true});
  return nodes_.size() - 1;
}

template <typename T>
typename GradTape<T>::NodeId GradTape<T>::record(std::string op, Tensor4<T> value, BackwardFn backward) {
  if (consumed_) throw std::logic_error("GradTape: cannot record after backward()");
  nodes_.push_back(Node{std::move(value), {}, true});
  const NodeId id = nodes_.size() - 1;
  forward_log_.push_back(op);
  entries_.push_back(Entry{std::move(op), id, std::move(backward)});
  return id;
}

template <typename T>
void GradTape<T>::accumulate(NodeId id, const Tensor4<T>& g) {
  Node& node = nodes_.at(id);
  if (!node.requires_grad) return;
  if (g.shape() != node.value.shape()) {
    throw ShapeError("GradTape: gradient " + to_string(g.shape()) + " does not match node " +
                     to_string(node.value.shape()));
  }
  accumulate_into(node.grad, g);
}

template <typename T>
void GradTape<T>::backward(NodeId target) {
  if (consumed_) throw std::logic_error("GradTape: backward() already ran");
  Node& t = nodes_.at(target);
  if (t.value.size() != 1) throw ShapeError("GradTape: backward target must be scalar, got " + to_string(t.value.shape()));
  consumed_ = true;
  t.grad = Tensor4<T>(t.value.shape(), T(1));
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    backward_log_.push_back(it->op);
    if (nodes_[it->output].grad.empty()) continue;
    it->backward(*this, it->output);
  }
}

template <typename T>
void accumulate_into(Tensor4<T>& dst, const Tensor4<T>& src) {
  if (dst.empty()) {
    dst = src;
    return;
  }
  if (dst.shape() != src.shape()) {
    throw ShapeError("accumulate: " + to_string(src.shape()) + " into " + to_string(dst.shape()));
  }
  for (std::size_t i = 0; i < dst.size(); ++i) dst.data()[i] += src.data()[i];
}

template <typename T>
ConvGrads<T> zero_grads_like(const ConvParams<T>& p) {
  ConvGrads<T> g;
  g.weight = Tensor4<T>(p.weight.shape());
  g.bias.assign(p.bias.size(), T(0));
  return g;
}

template <typename T>
typename GradTape<T>::NodeId tape_conv2d(GradTape<T>& tape, typename GradTape<T>::NodeId x, const ConvParams<T>& p,
                                         ConvGrads<T>* grads) {
  Tensor4<T> out = conv2d(tape.value(x), p);
  const ConvParams<T>* params = &p;
  return tape.record("conv2d", std::move(out), [x, params, grads](GradTape<T>& t, typename GradTape<T>::NodeId o) {
    ConvGrads<T> g = conv2d_backward(t.grad(o), t.value(x), *params);
    t.accumulate(x, g.input);
    if (grads != nullptr) {
      accumulate_into(grads->weight, g.weight);
      if (grads->bias.empty()) grads->bias.assign(g.bias.size(), T(0));
      for (std::size_t i = 0; i < g.bias.size(); ++i) grads->bias[i] += g.bias[i];
    }
  });
}

template <typename T>
typename GradTape<T>::NodeId tape_relu(GradTape<T>& tape, typename GradTape<T>::NodeId x) {
  return tape.record("relu", relu(tape.value(x)), [x](GradTape<T>& t, typename GradTape<T>::NodeId o) {
    t.accumulate(x, relu_backward(t.grad(o), t.value(o)));
  });
}

template <typename T>
typename GradTape<T>::NodeId tape_sigmoid(GradTape<T>& tape, typename GradTape<T>::NodeId x) {
  return tape.record("sigmoid", sigmoid(tape.value(x)), [x](GradTape<T>& t, typename GradTape<T>::NodeId o) {
    t.accumulate(x, sigmoid_backward(t.grad(o), t.value(o)));
  });
}

template <typename T>
typename GradTape<T>::NodeId tape_mse(GradTape<T>& tape, typename GradTape<T>::NodeId x, const Tensor4<T>& target) {
  const double loss = mse(tape.value(x), target);
  Tensor4<T> out(1, 1, 1, 1, static_cast<T>(loss));
  return tape.record("mse", std::move(out), [x, target](GradTape<T>& t, typename GradTape<T>::NodeId o) {
    Tensor4<T> g = mse_backward(t.value(x), target);
    const T upstream = t.grad(o).data()[0];
    for (auto& v : g.data()) v *= upstream;
    t.accumulate(x, g);
  });
}

#define FAN_INSTANTIATE_TAPE(T)                                                                                  \
  template class GradTape<T>;                                                                                   \
  template void accumulate_into(Tensor4<T>&, const Tensor4<T>&);                                                \
  template ConvGrads<T> zero_grads_like(const ConvParams<T>&);                                                  \
  template GradTape<T>::NodeId tape_conv2d(GradTape<T>&, GradTape<T>::NodeId, const ConvParams<T>&,            \
                                           ConvGrads<T>*);                                                      \
  template GradTape<T>::NodeId tape_relu(GradTape<T>&, GradTape<T>::NodeId);                                    \
  template GradTape<T>::NodeId tape_sigmoid(GradTape<T>&, GradTape<T>::NodeId);                                 \
  template GradTape<T>::NodeId tape_mse(GradTape<T>&, GradTape<T>::NodeId, const Tensor4<T>&);

FAN_INSTANTIATE_TAPE(float)
FAN_INSTANTIATE_TAPE(double)

#undef FAN_INSTANTIATE_TAPE

}  // namespace fan

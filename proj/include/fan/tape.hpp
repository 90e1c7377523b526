#pragma once

// Explicit reverse-mode tape. Each recorded primitive owns a closure that
// reads the gradient of its output node and accumulates into its inputs and
// into external parameter-gradient buffers. Parameters themselves live outside
// the tape and must outlive backward().

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "fan/ops.hpp"
#include "fan/tensor.hpp"

namespace fan {

template <typename T>
class GradTape {
 public:
  using NodeId = std::size_t;
  using BackwardFn = std::function<void(GradTape&, NodeId)>;

  /// Registers a tensor that does not need a gradient (network input, frozen features).
  NodeId constant(Tensor4<T> value);
  /// Registers a leaf whose gradient should be kept after backward.
  NodeId leaf(Tensor4<T> value);

  /// Records one executed primitive and its output value.
  NodeId record(std::string op, Tensor4<T> value, BackwardFn backward);

  const Tensor4<T>& value(NodeId id) const { return nodes_.at(id).value; }
  /// Gradient of the last backward() target with respect to node `id`;
  /// empty when nothing flowed into it.
  const Tensor4<T>& grad(NodeId id) const { return nodes_.at(id).grad; }
  bool requires_grad(NodeId id) const { return nodes_.at(id).requires_grad; }

  void accumulate(NodeId id, const Tensor4<T>& g);

  /// Seeds d(target)/d(target) = 1 (target must hold a single element) and
  /// runs every recorded primitive in reverse order. A tape runs backward once.
  void backward(NodeId target);

  const std::vector<std::string>& forward_log() const { return forward_log_; }
  const std::vector<std::string>& backward_log() const { return backward_log_; }

 private:
  struct Node {
    Tensor4<T> value;
    Tensor4<T> grad;
    bool requires_grad = false;
  };
  struct Entry {
    std::string op;
    NodeId output;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  std::vector<Entry> entries_;
  std::vector<std::string> forward_log_;
  std::vector<std::string> backward_log_;
  bool consumed_ = false;
};

/// Accumulates `src` into `dst`, allocating `dst` on first use.
template <typename T>
void accumulate_into(Tensor4<T>& dst, const Tensor4<T>& src);

/// Gradient buffers matching a ConvParams.
template <typename T>
ConvGrads<T> zero_grads_like(const ConvParams<T>& p);

// Tape-recording wrappers. `grads` may be null for frozen parameters.
template <typename T>
typename GradTape<T>::NodeId tape_conv2d(GradTape<T>& tape, typename GradTape<T>::NodeId x, const ConvParams<T>& p,
                                         ConvGrads<T>* grads);
template <typename T>
typename GradTape<T>::NodeId tape_relu(GradTape<T>& tape, typename GradTape<T>::NodeId x);
template <typename T>
typename GradTape<T>::NodeId tape_sigmoid(GradTape<T>& tape, typename GradTape<T>::NodeId x);
/// Scalar MSE against a constant target; the output node holds one element.
template <typename T>
typename GradTape<T>::NodeId tape_mse(GradTape<T>& tape, typename GradTape<T>::NodeId x, const Tensor4<T>& target);

}  // namespace fan

#pragma once

#include <cstddef>
#include <vector>

#include "ubr/diffcore/tensor.hpp"

namespace ubr::diff {

enum class OpKind {
  leaf,
  conv2d,
  relu,
  maxpool2d,
  global_avg_pool,
  fully_connected,
  sigmoid,
  log_probability,
  smooth_l1,
  adjacent_diff,
  sum,
  add,
  scale,
  weighted_sum,
  reshape,
};

const char* op_name(OpKind kind);

/// Handle to a node inside one Graph.
struct Var {
  std::size_t id = 0;
};

struct Node {
  OpKind op = OpKind::leaf;
  std::vector<std::size_t> inputs;
  Tensor value;
  Tensor grad;  // same shape as value once backward has run; only for requires_grad nodes
  bool requires_grad = false;

  // Op attributes.
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t window = 0;
  double factor = 1.0;
  Tensor weights;                     // weighted_sum
  std::vector<std::size_t> argmax;    // maxpool2d routing
};

/// Append-only tape of the operations the regressor and its losses need.
/// Nodes are created in topological order, so backward is a reverse sweep.
/// A Graph is confined to one thread; distinct graphs are independent.
class Graph {
 public:
  Var constant(Tensor value);
  Var parameter(Tensor value);

  Var conv2d(Var input, Var kernels, Var bias, std::size_t stride, std::size_t padding);
  Var relu(Var x);
  Var maxpool2d(Var x, std::size_t window, std::size_t stride);
  Var global_avg_pool(Var x);
  Var fully_connected(Var x, Var weights, Var bias);
  Var sigmoid(Var x);
  /// Elementwise log of a probability, clamped from below at kProbabilityFloor.
  Var log_probability(Var x);
  Var smooth_l1(Var x);
  /// [R,C] -> [R,C-1], out[r][c] = x[r][c+1] - x[r][c].
  Var adjacent_diff(Var x);
  Var sum(Var x);
  Var add(Var a, Var b);
  Var scale(Var x, double factor);
  /// Scalar <x, weights> with constant weights. Seeds backward with an
  /// externally computed gradient.
  Var weighted_sum(Var x, Tensor weights);
  Var reshape(Var x, Tensor::Shape shape);

  /// Populates grad on every node reachable from `output`, which must be a
  /// scalar. Gradients are reset first, so repeated calls do not accumulate.
  void backward(Var output);

  const Tensor& value(Var v) const { return node(v).value; }
  const Tensor& grad(Var v) const;
  const Node& node(Var v) const;
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Which side of every kink the current values sit on: relu signs,
  /// maxpool routing, smooth-L1 and log-clamp regions.
  std::vector<std::size_t> branch_signature() const;

 private:
  Var push(Node node);
  bool any_requires_grad(std::initializer_list<Var> vars) const;
  void backward_node(const Node& n);

  std::vector<Node> nodes_;
};

}  // namespace ubr::diff

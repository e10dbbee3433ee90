#include "ubr/diffcore/graph.hpp"

#include <cmath>

#include "ubr/diffcore/kernels.hpp"
#include "ubr/diffcore/scalar.hpp"
#include "ubr/error.hpp"

namespace ubr::diff {

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::leaf: return "leaf";
    case OpKind::conv2d: return "conv2d";
    case OpKind::relu: return "relu";
    case OpKind::maxpool2d: return "maxpool2d";
    case OpKind::global_avg_pool: return "global_avg_pool";
    case OpKind::fully_connected: return "fully_connected";
    case OpKind::sigmoid: return "sigmoid";
    case OpKind::log_probability: return "log_probability";
    case OpKind::smooth_l1: return "smooth_l1";
    case OpKind::adjacent_diff: return "adjacent_diff";
    case OpKind::sum: return "sum";
    case OpKind::add: return "add";
    case OpKind::scale: return "scale";
    case OpKind::weighted_sum: return "weighted_sum";
    case OpKind::reshape: return "reshape";
  }
  return "unknown";
}

const Node& Graph::node(Var v) const {
  if (v.id >= nodes_.size()) throw usage_error("graph variable " + std::to_string(v.id) + " does not exist");
  return nodes_[v.id];
}

std::vector<std::size_t> Graph::branch_signature() const {
  std::vector<std::size_t> sig;
  for (const auto& n : nodes_) {
    switch (n.op) {
      case OpKind::relu:
        for (double x : nodes_[n.inputs[0]].value.data()) sig.push_back(x > 0.0);
        break;
      case OpKind::maxpool2d:
        sig.insert(sig.end(), n.argmax.begin(), n.argmax.end());
        break;
      case OpKind::smooth_l1:
        for (double x : nodes_[n.inputs[0]].value.data()) sig.push_back(x <= -1.0 ? 0 : x < 1.0 ? 1 : 2);
        break;
      case OpKind::log_probability:
        for (double x : nodes_[n.inputs[0]].value.data()) sig.push_back(x < kProbabilityFloor);
        break;
      default:
        break;
    }
  }
  return sig;
}

const Tensor& Graph::grad(Var v) const {
  const Node& n = node(v);
  if (!n.requires_grad) throw usage_error(std::string("no gradient tracked for ") + op_name(n.op) + " node");
  return n.grad;
}

Var Graph::push(Node n) {
  if (n.requires_grad) n.grad = Tensor::zeros_like(n.value);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

bool Graph::any_requires_grad(std::initializer_list<Var> vars) const {
  for (auto v : vars) {
    if (node(v).requires_grad) return true;
  }
  return false;
}

Var Graph::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Graph::parameter(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

Var Graph::conv2d(Var input, Var kernels, Var bias, std::size_t stride, std::size_t padding) {
  Node n;
  n.op = OpKind::conv2d;
  n.inputs = {input.id, kernels.id, bias.id};
  n.stride = stride;
  n.padding = padding;
  n.value = kernels::conv2d_forward(value(input), value(kernels), value(bias), {stride, padding});
  n.requires_grad = any_requires_grad({input, kernels, bias});
  return push(std::move(n));
}

Var Graph::relu(Var x) {
  Node n;
  n.op = OpKind::relu;
  n.inputs = {x.id};
  n.value = kernels::relu_forward(value(x));
  n.requires_grad = node(x).requires_grad;
  return push(std::move(n));
}

Var Graph::maxpool2d(Var x, std::size_t window, std::size_t stride) {
  Node n;
  n.op = OpKind::maxpool2d;
  n.inputs = {x.id};
  n.window = window;
  n.stride = stride;
  n.value = kernels::maxpool2d_forward(value(x), window, stride, n.argmax);
  n.requires_grad = node(x).requires_grad;
  return push(std::move(n));
}

Var Graph::global_avg_pool(Var x) {
  Node n;
  n.op = OpKind::global_avg_pool;
  n.inputs = {x.id};
  n.value = kernels::global_avg_pool_forward(value(x));
  n.requires_grad = node(x).requires_grad;
  return push(std::move(n));
}

Var Graph::fully_connected(Var x, Var weights, Var bias) {
  Node n;
  n.op = OpKind::fully_connected;
  n.inputs = {x.id, weights.id, bias.id};
  n.value = kernels::fully_connected_forward(value(x), value(weights), value(bias));
  n.requires_grad = any_requires_grad({x, weights, bias});
  return push(std::move(n));
}

Var Graph::sigmoid(Var x) {
  Node n;
  n.op = OpKind::sigmoid;
  n.inputs = {x.id};
  n.value = value(x);
  for (auto& v : n.value.data()) v = diff::sigmoid(v);
  n.requires_grad = node(x).requires_grad;
  return push(std::move(n));
}

Var Graph::log_probability(Var x) {
  Node n;
  n.op = OpKind::log_probability;
  n.inputs = {x.id};
  n.value = value(x);
  for (auto& v : n.value.data()) v = diff::log_probability(v);
  n.requires_grad = node(x).requires_grad;
  return push(std::move(n));
}

Var Graph::smooth_l1(Var x) {
  Node n;
  n.op = OpKind::smooth_l1;
  n.inputs = {x.id};
  n.value = value(x);
  for (auto& v : n.value.data()) v = diff::smooth_l1(v);
  n.requires_grad = node(x).requires_grad;
  return push(std::move(n));
}

Var Graph::adjacent_diff(Var x) {
  const Tensor& in = value(x);
  if (in.rank() != 2) throw ShapeError("rank", "adjacent_diff expects [R,C], got " + shape_string(in.shape()));
  const std::size_t rows = in.extent(0);
  const std::size_t cols = in.extent(1);
  if (cols < 2) throw ShapeError("column", "adjacent_diff needs at least 2 columns");
  Node n;
  n.op = OpKind::adjacent_diff;
  n.inputs = {x.id};
  n.value = Tensor({rows, cols - 1});
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c + 1 < cols; ++c) n.value[r * (cols - 1) + c] = in[r * cols + c + 1] - in[r * cols + c];
  }
  n.requires_grad = node(x).requires_grad;
  return push(std::move(n));
}

Var Graph::sum(Var x) {
  Node n;
  n.op = OpKind::sum;
  n.inputs = {x.id};
  double s = 0.0;
  for (double v : value(x).data()) s += v;
  n.value = Tensor::scalar(s);
  n.requires_grad = node(x).requires_grad;
  return push(std::move(n));
}

Var Graph::add(Var a, Var b) {
  if (value(a).shape() != value(b).shape()) {
    throw ShapeError("operand", "add operands differ: " + shape_string(value(a).shape()) + " vs " +
                                    shape_string(value(b).shape()));
  }
  Node n;
  n.op = OpKind::add;
  n.inputs = {a.id, b.id};
  n.value = value(a);
  const Tensor& rhs = value(b);
  for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] += rhs[i];
  n.requires_grad = any_requires_grad({a, b});
  return push(std::move(n));
}

Var Graph::scale(Var x, double factor) {
  Node n;
  n.op = OpKind::scale;
  n.inputs = {x.id};
  n.factor = factor;
  n.value = value(x);
  for (auto& v : n.value.data()) v *= factor;
  n.requires_grad = node(x).requires_grad;
  return push(std::move(n));
}

Var Graph::weighted_sum(Var x, Tensor weights) {
  if (weights.size() != value(x).size()) {
    throw ShapeError("weights", "weighted_sum weights have " + std::to_string(weights.size()) + " entries, input has " +
                                    std::to_string(value(x).size()));
  }
  Node n;
  n.op = OpKind::weighted_sum;
  n.inputs = {x.id};
  double s = 0.0;
  const Tensor& in = value(x);
  for (std::size_t i = 0; i < in.size(); ++i) s += in[i] * weights[i];
  n.value = Tensor::scalar(s);
  n.weights = std::move(weights);
  n.requires_grad = node(x).requires_grad;
  return push(std::move(n));
}

Var Graph::reshape(Var x, Tensor::Shape shape) {
  Node n;
  n.op = OpKind::reshape;
  n.inputs = {x.id};
  n.value = value(x).reshaped(std::move(shape));
  n.requires_grad = node(x).requires_grad;
  return push(std::move(n));
}

void Graph::backward(Var output) {
  const Node& out = node(output);
  if (out.value.size() != 1) {
    throw ShapeError("output", "backward needs a scalar output, got " + shape_string(out.value.shape()));
  }
  for (auto& n : nodes_) {
    if (n.requires_grad) n.grad.fill(0.0);
  }
  if (!out.requires_grad) return;
  nodes_[output.id].grad[0] = 1.0;
  for (std::size_t i = output.id + 1; i-- > 0;) {
    const Node& n = nodes_[i];
    if (n.requires_grad && n.op != OpKind::leaf) backward_node(n);
  }
}

void Graph::backward_node(const Node& n) {
  auto input_grad = [&](std::size_t slot) -> Tensor* {
    Node& in = nodes_[n.inputs[slot]];
    return in.requires_grad ? &in.grad : nullptr;
  };
  auto input_value = [&](std::size_t slot) -> const Tensor& { return nodes_[n.inputs[slot]].value; };

  switch (n.op) {
    case OpKind::leaf:
      break;
    case OpKind::conv2d:
      kernels::conv2d_backward(input_value(0), input_value(1), {n.stride, n.padding}, n.grad, input_grad(0),
                               input_grad(1), input_grad(2));
      break;
    case OpKind::relu:
      if (auto* g = input_grad(0)) kernels::relu_backward(input_value(0), n.grad, *g);
      break;
    case OpKind::maxpool2d:
      if (auto* g = input_grad(0)) kernels::maxpool2d_backward(n.argmax, n.grad, *g);
      break;
    case OpKind::global_avg_pool:
      if (auto* g = input_grad(0)) kernels::global_avg_pool_backward(input_value(0).shape(), n.grad, *g);
      break;
    case OpKind::fully_connected:
      kernels::fully_connected_backward(input_value(0), input_value(1), n.grad, input_grad(0), input_grad(1),
                                        input_grad(2));
      break;
    case OpKind::sigmoid:
      if (auto* g = input_grad(0)) {
        for (std::size_t i = 0; i < n.value.size(); ++i) (*g)[i] += n.grad[i] * n.value[i] * (1.0 - n.value[i]);
      }
      break;
    case OpKind::log_probability:
      if (auto* g = input_grad(0)) {
        const Tensor& x = input_value(0);
        for (std::size_t i = 0; i < x.size(); ++i) (*g)[i] += n.grad[i] * log_probability_derivative(x[i]);
      }
      break;
    case OpKind::smooth_l1:
      if (auto* g = input_grad(0)) {
        const Tensor& x = input_value(0);
        for (std::size_t i = 0; i < x.size(); ++i) (*g)[i] += n.grad[i] * smooth_l1_derivative(x[i]);
      }
      break;
    case OpKind::adjacent_diff:
      if (auto* g = input_grad(0)) {
        const std::size_t rows = n.value.extent(0);
        const std::size_t out_cols = n.value.extent(1);
        const std::size_t cols = out_cols + 1;
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < out_cols; ++c) {
            const double gv = n.grad[r * out_cols + c];
            (*g)[r * cols + c + 1] += gv;
            (*g)[r * cols + c] -= gv;
          }
        }
      }
      break;
    case OpKind::sum:
      if (auto* g = input_grad(0)) {
        for (auto& v : g->data()) v += n.grad[0];
      }
      break;
    case OpKind::add:
      for (std::size_t slot = 0; slot < 2; ++slot) {
        if (auto* g = input_grad(slot)) {
          for (std::size_t i = 0; i < n.grad.size(); ++i) (*g)[i] += n.grad[i];
        }
      }
      break;
    case OpKind::scale:
      if (auto* g = input_grad(0)) {
        for (std::size_t i = 0; i < n.grad.size(); ++i) (*g)[i] += n.factor * n.grad[i];
      }
      break;
    case OpKind::weighted_sum:
      if (auto* g = input_grad(0)) {
        for (std::size_t i = 0; i < n.weights.size(); ++i) (*g)[i] += n.grad[0] * n.weights[i];
      }
      break;
    case OpKind::reshape:
      if (auto* g = input_grad(0)) {
        for (std::size_t i = 0; i < n.grad.size(); ++i) (*g)[i] += n.grad[i];
      }
      break;
  }
}

}  // namespace ubr::diff

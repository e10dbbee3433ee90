#include "ubr/diffcore/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "ubr/error.hpp"

namespace ubr::diff {

namespace {

void validate_shape(const Tensor::Shape& shape) {
  if (shape.empty() || shape.size() > 4) {
    throw ShapeError("rank", "tensor rank must be 1..4, got " + std::to_string(shape.size()));
  }
  for (std::size_t axis = 0; axis < shape.size(); ++axis) {
    if (shape[axis] == 0) {
      throw ShapeError("axis " + std::to_string(axis),
                       "tensor extents must be >= 1, got " + shape_string(shape));
    }
  }
}

}  // namespace

std::size_t element_count(const Tensor::Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_string(const Tensor::Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  validate_shape(shape_);
  data_.assign(element_count(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  validate_shape(shape_);
  if (data_.size() != element_count(shape_)) {
    throw ShapeError("data", "tensor of shape " + shape_string(shape_) + " needs " +
                                 std::to_string(element_count(shape_)) + " values, got " +
                                 std::to_string(data_.size()));
  }
}

Tensor Tensor::reshaped(Shape shape) const {
  if (element_count(shape) != data_.size()) {
    throw ShapeError("reshape", "cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

double Tensor::item() const {
  if (data_.size() != 1) {
    throw ShapeError("size", "item() on non-scalar tensor " + shape_string(shape_));
  }
  return data_[0];
}

}  // namespace ubr::diff

#pragma once

#include <cstddef>
#include <vector>

#include "ubr/diffcore/tensor.hpp"

// Raw forward/backward kernels behind the graph nodes. Backward kernels
// accumulate into the gradient tensors they are handed; a null pointer skips
// that gradient.
namespace ubr::diff::kernels {

struct ConvGeometry {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

Tensor::Shape conv2d_output_shape(const Tensor::Shape& input, const Tensor::Shape& kernels,
                                  const Tensor::Shape& bias, ConvGeometry geometry);
Tensor conv2d_forward(const Tensor& input, const Tensor& kernels, const Tensor& bias, ConvGeometry geometry);
void conv2d_backward(const Tensor& input, const Tensor& kernels, ConvGeometry geometry, const Tensor& grad_out,
                     Tensor* grad_input, Tensor* grad_kernels, Tensor* grad_bias);

Tensor relu_forward(const Tensor& input);
void relu_backward(const Tensor& input, const Tensor& grad_out, Tensor& grad_input);

/// `argmax` receives, for every output element, the flat input index that won
/// its window (first maximum in row-major scan order).
Tensor maxpool2d_forward(const Tensor& input, std::size_t window, std::size_t stride,
                         std::vector<std::size_t>& argmax);
void maxpool2d_backward(const std::vector<std::size_t>& argmax, const Tensor& grad_out, Tensor& grad_input);

Tensor global_avg_pool_forward(const Tensor& input);
void global_avg_pool_backward(const Tensor::Shape& input_shape, const Tensor& grad_out, Tensor& grad_input);

Tensor fully_connected_forward(const Tensor& input, const Tensor& weights, const Tensor& bias);
void fully_connected_backward(const Tensor& input, const Tensor& weights, const Tensor& grad_out,
                              Tensor* grad_input, Tensor* grad_weights, Tensor* grad_bias);

}  // namespace ubr::diff::kernels

#include "ubr/diffcore/kernels.hpp"

#include <algorithm>

#include "ubr/error.hpp"

namespace ubr::diff::kernels {

namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw ShapeError("rank", std::string(what) + " must have rank " + std::to_string(rank) + ", got " +
                                 shape_string(t.shape()));
  }
}

struct ConvDims {
  std::size_t batch, in_channels, height, width;
  std::size_t out_channels, kernel_h, kernel_w;
  std::size_t out_h, out_w;
  std::size_t stride, padding;

  std::size_t patch() const { return in_channels * kernel_h * kernel_w; }
  std::size_t out_plane() const { return out_h * out_w; }
  bool pointwise() const { return kernel_h == 1 && kernel_w == 1 && stride == 1 && padding == 0; }
};

ConvDims conv_dims(const Tensor::Shape& input, const Tensor::Shape& kernels, const Tensor::Shape& bias,
                   ConvGeometry geometry) {
  if (input.size() != 4) throw ShapeError("rank", "conv2d input must be [B,C,H,W], got " + shape_string(input));
  if (kernels.size() != 4) {
    throw ShapeError("rank", "conv2d kernels must be [Cout,Cin,kH,kW], got " + shape_string(kernels));
  }
  if (geometry.stride == 0) throw ShapeError("stride", "conv2d stride must be positive");
  if (kernels[1] != input[1]) {
    throw ShapeError("channel", "conv2d kernel expects " + std::to_string(kernels[1]) + " input channels, input has " +
                                    std::to_string(input[1]));
  }
  if (bias.size() != 1 || bias[0] != kernels[0]) {
    throw ShapeError("bias", "conv2d bias must be [" + std::to_string(kernels[0]) + "], got " + shape_string(bias));
  }
  const std::size_t padded_h = input[2] + 2 * geometry.padding;
  const std::size_t padded_w = input[3] + 2 * geometry.padding;
  if (padded_h < kernels[2]) {
    throw ShapeError("height", "conv2d kernel height " + std::to_string(kernels[2]) + " exceeds padded input height " +
                                   std::to_string(padded_h));
  }
  if (padded_w < kernels[3]) {
    throw ShapeError("width", "conv2d kernel width " + std::to_string(kernels[3]) + " exceeds padded input width " +
                                  std::to_string(padded_w));
  }
  ConvDims d{};
  d.batch = input[0];
  d.in_channels = input[1];
  d.height = input[2];
  d.width = input[3];
  d.out_channels = kernels[0];
  d.kernel_h = kernels[2];
  d.kernel_w = kernels[3];
  d.stride = geometry.stride;
  d.padding = geometry.padding;
  d.out_h = (padded_h - d.kernel_h) / d.stride + 1;
  d.out_w = (padded_w - d.kernel_w) / d.stride + 1;
  return d;
}

// Unfolds one batch item into a [patch][out_plane] matrix.
void im2col(const ConvDims& d, const double* image, double* col) {
  const std::size_t plane = d.out_plane();
  std::size_t row = 0;
  for (std::size_t c = 0; c < d.in_channels; ++c) {
    const double* channel = image + c * d.height * d.width;
    for (std::size_t ki = 0; ki < d.kernel_h; ++ki) {
      for (std::size_t kj = 0; kj < d.kernel_w; ++kj, ++row) {
        double* dst = col + row * plane;
        for (std::size_t oh = 0; oh < d.out_h; ++oh) {
          const long ih = static_cast<long>(oh * d.stride + ki) - static_cast<long>(d.padding);
          double* out_row = dst + oh * d.out_w;
          if (ih < 0 || ih >= static_cast<long>(d.height)) {
            std::fill(out_row, out_row + d.out_w, 0.0);
            continue;
          }
          const double* in_row = channel + static_cast<std::size_t>(ih) * d.width;
          for (std::size_t ow = 0; ow < d.out_w; ++ow) {
            const long iw = static_cast<long>(ow * d.stride + kj) - static_cast<long>(d.padding);
            out_row[ow] = (iw < 0 || iw >= static_cast<long>(d.width)) ? 0.0 : in_row[iw];
          }
        }
      }
    }
  }
}

void col2im_accumulate(const ConvDims& d, const double* col, double* image) {
  const std::size_t plane = d.out_plane();
  std::size_t row = 0;
  for (std::size_t c = 0; c < d.in_channels; ++c) {
    double* channel = image + c * d.height * d.width;
    for (std::size_t ki = 0; ki < d.kernel_h; ++ki) {
      for (std::size_t kj = 0; kj < d.kernel_w; ++kj, ++row) {
        const double* src = col + row * plane;
        for (std::size_t oh = 0; oh < d.out_h; ++oh) {
          const long ih = static_cast<long>(oh * d.stride + ki) - static_cast<long>(d.padding);
          if (ih < 0 || ih >= static_cast<long>(d.height)) continue;
          double* in_row = channel + static_cast<std::size_t>(ih) * d.width;
          const double* col_row = src + oh * d.out_w;
          for (std::size_t ow = 0; ow < d.out_w; ++ow) {
            const long iw = static_cast<long>(ow * d.stride + kj) - static_cast<long>(d.padding);
            if (iw >= 0 && iw < static_cast<long>(d.width)) in_row[iw] += col_row[ow];
          }
        }
      }
    }
  }
}

// Fixed-order dot product with four interleaved partial sums.
double dot(const double* a, const double* b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

}  // namespace

Tensor::Shape conv2d_output_shape(const Tensor::Shape& input, const Tensor::Shape& kernels,
                                  const Tensor::Shape& bias, ConvGeometry geometry) {
  const auto d = conv_dims(input, kernels, bias, geometry);
  return {d.batch, d.out_channels, d.out_h, d.out_w};
}

Tensor conv2d_forward(const Tensor& input, const Tensor& kernels, const Tensor& bias, ConvGeometry geometry) {
  const auto d = conv_dims(input.shape(), kernels.shape(), bias.shape(), geometry);
  Tensor out({d.batch, d.out_channels, d.out_h, d.out_w});
  const std::size_t patch = d.patch();
  const std::size_t plane = d.out_plane();
  const std::size_t in_item = d.in_channels * d.height * d.width;
  std::vector<double> col(d.pointwise() ? 0 : patch * plane);
  const double* w = kernels.data().data();

  for (std::size_t b = 0; b < d.batch; ++b) {
    const double* image = input.data().data() + b * in_item;
    const double* cols = image;
    if (!d.pointwise()) {
      im2col(d, image, col.data());
      cols = col.data();
    }
    double* dst = out.data().data() + b * d.out_channels * plane;
    for (std::size_t co = 0; co < d.out_channels; ++co) {
      double* row = dst + co * plane;
      std::fill(row, row + plane, bias[co]);
      const double* wrow = w + co * patch;
      for (std::size_t k = 0; k < patch; ++k) {
        const double wk = wrow[k];
        const double* src = cols + k * plane;
        for (std::size_t p = 0; p < plane; ++p) row[p] += wk * src[p];
      }
    }
  }
  return out;
}

void conv2d_backward(const Tensor& input, const Tensor& kernels, ConvGeometry geometry, const Tensor& grad_out,
                     Tensor* grad_input, Tensor* grad_kernels, Tensor* grad_bias) {
  const Tensor::Shape bias_shape{kernels.extent(0)};
  const auto d = conv_dims(input.shape(), kernels.shape(), bias_shape, geometry);
  const std::size_t patch = d.patch();
  const std::size_t plane = d.out_plane();
  const std::size_t in_item = d.in_channels * d.height * d.width;
  const bool need_cols = grad_kernels != nullptr && !d.pointwise();
  std::vector<double> col(need_cols ? patch * plane : 0);
  std::vector<double> dcol(grad_input != nullptr ? patch * plane : 0);
  const double* w = kernels.data().data();

  for (std::size_t b = 0; b < d.batch; ++b) {
    const double* gout = grad_out.data().data() + b * d.out_channels * plane;
    if (grad_bias != nullptr) {
      for (std::size_t co = 0; co < d.out_channels; ++co) {
        const double* g = gout + co * plane;
        double s = 0.0;
        for (std::size_t p = 0; p < plane; ++p) s += g[p];
        (*grad_bias)[co] += s;
      }
    }
    if (grad_kernels != nullptr) {
      const double* image = input.data().data() + b * in_item;
      const double* cols = image;
      if (need_cols) {
        im2col(d, image, col.data());
        cols = col.data();
      }
      double* gw = grad_kernels->data().data();
      for (std::size_t co = 0; co < d.out_channels; ++co) {
        const double* g = gout + co * plane;
        double* gwrow = gw + co * patch;
        for (std::size_t k = 0; k < patch; ++k) {
          gwrow[k] += dot(g, cols + k * plane, plane);
        }
      }
    }
    if (grad_input != nullptr) {
      std::fill(dcol.begin(), dcol.end(), 0.0);
      for (std::size_t co = 0; co < d.out_channels; ++co) {
        const double* g = gout + co * plane;
        const double* wrow = w + co * patch;
        for (std::size_t k = 0; k < patch; ++k) {
          const double wk = wrow[k];
          double* dst = dcol.data() + k * plane;
          for (std::size_t p = 0; p < plane; ++p) dst[p] += wk * g[p];
        }
      }
      double* gimage = grad_input->data().data() + b * in_item;
      if (d.pointwise()) {
        for (std::size_t i = 0; i < patch * plane; ++i) gimage[i] += dcol[i];
      } else {
        col2im_accumulate(d, dcol.data(), gimage);
      }
    }
  }
}

Tensor relu_forward(const Tensor& input) {
  Tensor out = input;
  for (auto& v : out.data()) v = v > 0.0 ? v : 0.0;
  return out;
}

void relu_backward(const Tensor& input, const Tensor& grad_out, Tensor& grad_input) {
  for (std::size_t i = 0; i < input.size(); ++i) {
    if (input[i] > 0.0) grad_input[i] += grad_out[i];
  }
}

Tensor maxpool2d_forward(const Tensor& input, std::size_t window, std::size_t stride,
                         std::vector<std::size_t>& argmax) {
  require_rank(input, 4, "maxpool2d input");
  if (window == 0) throw ShapeError("window", "maxpool2d window must be positive");
  if (stride == 0) throw ShapeError("stride", "maxpool2d stride must be positive");
  const auto& s = input.shape();
  if (s[2] < window) {
    throw ShapeError("height", "maxpool2d window " + std::to_string(window) + " exceeds height " + std::to_string(s[2]));
  }
  if (s[3] < window) {
    throw ShapeError("width", "maxpool2d window " + std::to_string(window) + " exceeds width " + std::to_string(s[3]));
  }
  const std::size_t out_h = (s[2] - window) / stride + 1;
  const std::size_t out_w = (s[3] - window) / stride + 1;
  Tensor out({s[0], s[1], out_h, out_w});
  argmax.assign(out.size(), 0);
  std::size_t o = 0;
  for (std::size_t bc = 0; bc < s[0] * s[1]; ++bc) {
    const std::size_t base = bc * s[2] * s[3];
    for (std::size_t oh = 0; oh < out_h; ++oh) {
      for (std::size_t ow = 0; ow < out_w; ++ow, ++o) {
        std::size_t best = base + (oh * stride) * s[3] + ow * stride;
        double best_value = input[best];
        for (std::size_t i = 0; i < window; ++i) {
          for (std::size_t j = 0; j < window; ++j) {
            const std::size_t idx = base + (oh * stride + i) * s[3] + ow * stride + j;
            if (input[idx] > best_value) {
              best_value = input[idx];
              best = idx;
            }
          }
        }
        out[o] = best_value;
        argmax[o] = best;
      }
    }
  }
  return out;
}

void maxpool2d_backward(const std::vector<std::size_t>& argmax, const Tensor& grad_out, Tensor& grad_input) {
  for (std::size_t o = 0; o < argmax.size(); ++o) grad_input[argmax[o]] += grad_out[o];
}

Tensor global_avg_pool_forward(const Tensor& input) {
  require_rank(input, 4, "global_avg_pool input");
  const auto& s = input.shape();
  const std::size_t plane = s[2] * s[3];
  Tensor out({s[0], s[1]});
  for (std::size_t bc = 0; bc < s[0] * s[1]; ++bc) {
    double sum = 0.0;
    const double* src = input.data().data() + bc * plane;
    for (std::size_t p = 0; p < plane; ++p) sum += src[p];
    out[bc] = sum / static_cast<double>(plane);
  }
  return out;
}

void global_avg_pool_backward(const Tensor::Shape& input_shape, const Tensor& grad_out, Tensor& grad_input) {
  const std::size_t plane = input_shape[2] * input_shape[3];
  const double inv = 1.0 / static_cast<double>(plane);
  for (std::size_t bc = 0; bc < input_shape[0] * input_shape[1]; ++bc) {
    const double g = grad_out[bc] * inv;
    double* dst = grad_input.data().data() + bc * plane;
    for (std::size_t p = 0; p < plane; ++p) dst[p] += g;
  }
}

Tensor fully_connected_forward(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  require_rank(input, 2, "fully_connected input");
  require_rank(weights, 2, "fully_connected weights");
  require_rank(bias, 1, "fully_connected bias");
  const std::size_t batch = input.extent(0);
  const std::size_t features = input.extent(1);
  const std::size_t outputs = weights.extent(1);
  if (weights.extent(0) != features) {
    throw ShapeError("inner", "fully_connected weights expect " + std::to_string(weights.extent(0)) +
                                  " features, input has " + std::to_string(features));
  }
  if (bias.extent(0) != outputs) {
    throw ShapeError("bias", "fully_connected bias must have " + std::to_string(outputs) + " entries, got " +
                                 std::to_string(bias.extent(0)));
  }
  Tensor out({batch, outputs});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t o = 0; o < outputs; ++o) {
      double s = bias[o];
      for (std::size_t f = 0; f < features; ++f) s += input[b * features + f] * weights[f * outputs + o];
      out[b * outputs + o] = s;
    }
  }
  return out;
}

void fully_connected_backward(const Tensor& input, const Tensor& weights, const Tensor& grad_out,
                              Tensor* grad_input, Tensor* grad_weights, Tensor* grad_bias) {
  const std::size_t batch = input.extent(0);
  const std::size_t features = input.extent(1);
  const std::size_t outputs = weights.extent(1);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t o = 0; o < outputs; ++o) {
      const double g = grad_out[b * outputs + o];
      if (grad_bias != nullptr) (*grad_bias)[o] += g;
      for (std::size_t f = 0; f < features; ++f) {
        if (grad_weights != nullptr) (*grad_weights)[f * outputs + o] += input[b * features + f] * g;
        if (grad_input != nullptr) (*grad_input)[b * features + f] += weights[f * outputs + o] * g;
      }
    }
  }
}

}  // namespace ubr::diff::kernels

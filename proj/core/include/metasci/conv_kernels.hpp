#pragma once

// Patch-matrix (im2col) lowering of zero-padded "same" convolutions over NHWC
// feature maps, plus the transposed (adjoint) convolution and the kernels
// needed for their reverse-mode derivatives.

#include <cstddef>
#include <string>
#include <vector>

#include "metasci/linalg.hpp"
#include "metasci/tensor.hpp"

namespace metasci::kernels {

struct ConvGeometry {
  std::size_t batch = 1;
  std::size_t in_rows = 0, in_cols = 0, in_channels = 0;
  std::size_t out_rows = 0, out_cols = 0;
  std::size_t k_rows = 1, k_cols = 1;
  std::size_t stride = 1;

  std::size_t pad_rows() const { return k_rows / 2; }
  std::size_t pad_cols() const { return k_cols / 2; }
  std::size_t patch_size() const { return k_rows * k_cols * in_channels; }
  std::size_t out_pixels() const { return batch * out_rows * out_cols; }
  /// 1x1 stride-1 convolutions need no lowering: the input already is the patch matrix.
  bool is_pointwise() const { return k_rows == 1 && k_cols == 1 && stride == 1; }
};

inline std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

/// Splits a rank-3 (HWC) or rank-4 (NHWC) shape into batch, rows, cols, channels.
inline void split_feature_shape(const Shape& s, std::size_t& n, std::size_t& h, std::size_t& w,
                                std::size_t& c) {
  if (s.size() == 3) {
    n = 1;
    h = s[0];
    w = s[1];
    c = s[2];
  } else if (s.size() == 4) {
    n = s[0];
    h = s[1];
    w = s[2];
    c = s[3];
  } else {
    throw DimensionMismatch("feature map must be HWC or NHWC, got " + shape_string(s));
  }
}

inline Shape feature_shape(const Shape& like, std::size_t n, std::size_t h, std::size_t w,
                           std::size_t c) {
  if (like.size() == 3) return {h, w, c};
  return {n, h, w, c};
}

/// Builds the (out_pixels x patch_size) patch matrix; column index is (u*k_cols + v)*C + c.
template <class T>
void im2col(const T* input, const ConvGeometry& g, T* cols) {
  const std::size_t C = g.in_channels;
  const std::size_t P = g.patch_size();
  const auto pr = static_cast<std::ptrdiff_t>(g.pad_rows());
  const auto pc = static_cast<std::ptrdiff_t>(g.pad_cols());
  const auto H = static_cast<std::ptrdiff_t>(g.in_rows);
  const auto W = static_cast<std::ptrdiff_t>(g.in_cols);
  std::size_t row = 0;
  for (std::size_t n = 0; n < g.batch; ++n) {
    const T* img = input + n * g.in_rows * g.in_cols * C;
    for (std::size_t i = 0; i < g.out_rows; ++i) {
      for (std::size_t j = 0; j < g.out_cols; ++j, ++row) {
        T* dst = cols + row * P;
        for (std::size_t u = 0; u < g.k_rows; ++u) {
          const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(g.stride * i + u) - pr;
          for (std::size_t v = 0; v < g.k_cols; ++v, dst += C) {
            const std::ptrdiff_t x = static_cast<std::ptrdiff_t>(g.stride * j + v) - pc;
            if (y < 0 || y >= H || x < 0 || x >= W) {
              std::fill(dst, dst + C, T{});
            } else {
              const T* src = img + (static_cast<std::size_t>(y) * g.in_cols + static_cast<std::size_t>(x)) * C;
              std::copy(src, src + C, dst);
            }
          }
        }
      }
    }
  }
}

/// Adjoint of im2col: scatter-adds patch rows back onto the (zeroed) input grid.
template <class T>
void col2im(const T* cols, const ConvGeometry& g, T* input) {
  const std::size_t C = g.in_channels;
  const std::size_t P = g.patch_size();
  const auto pr = static_cast<std::ptrdiff_t>(g.pad_rows());
  const auto pc = static_cast<std::ptrdiff_t>(g.pad_cols());
  const auto H = static_cast<std::ptrdiff_t>(g.in_rows);
  const auto W = static_cast<std::ptrdiff_t>(g.in_cols);
  std::fill(input, input + g.batch * g.in_rows * g.in_cols * C, T{});
  std::size_t row = 0;
  for (std::size_t n = 0; n < g.batch; ++n) {
    T* img = input + n * g.in_rows * g.in_cols * C;
    for (std::size_t i = 0; i < g.out_rows; ++i) {
      for (std::size_t j = 0; j < g.out_cols; ++j, ++row) {
        const T* src = cols + row * P;
        for (std::size_t u = 0; u < g.k_rows; ++u) {
          const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(g.stride * i + u) - pr;
          for (std::size_t v = 0; v < g.k_cols; ++v, src += C) {
            const std::ptrdiff_t x = static_cast<std::ptrdiff_t>(g.stride * j + v) - pc;
            if (y < 0 || y >= H || x < 0 || x >= W) continue;
            T* dst = img + (static_cast<std::size_t>(y) * g.in_cols + static_cast<std::size_t>(x)) * C;
            for (std::size_t c = 0; c < C; ++c) dst[c] += src[c];
          }
        }
      }
    }
  }
}

/// Geometry of a strided same-padded conv reading `input_shape` with kernel [kx,ky,Ci,Co].
inline ConvGeometry conv_geometry(const Shape& input_shape, const Shape& kernel_shape,
                                  std::size_t stride) {
  if (kernel_shape.size() != 4) {
    throw DimensionMismatch("kernel must be [kx,ky,Cin,Cout], got " + shape_string(kernel_shape));
  }
  if (stride != 1 && stride != 2) throw InvalidArgument("stride must be 1 or 2");
  ConvGeometry g;
  split_feature_shape(input_shape, g.batch, g.in_rows, g.in_cols, g.in_channels);
  if (g.in_channels != kernel_shape[2]) {
    throw DimensionMismatch("conv2d: input has " + std::to_string(g.in_channels) +
                            " channels, kernel expects " + std::to_string(kernel_shape[2]));
  }
  g.k_rows = kernel_shape[0];
  g.k_cols = kernel_shape[1];
  g.stride = stride;
  g.out_rows = ceil_div(g.in_rows, stride);
  g.out_cols = ceil_div(g.in_cols, stride);
  return g;
}

template <class T>
void add_bias(T* out, std::size_t pixels, const Tensor<T>& bias) {
  const std::size_t C = bias.size();
  for (std::size_t p = 0; p < pixels; ++p) {
    T* row = out + p * C;
    for (std::size_t c = 0; c < C; ++c) row[c] += bias[c];
  }
}

template <class T>
void check_bias(const Tensor<T>& bias, std::size_t channels) {
  if (bias.rank() != 1 || bias.size() != channels) {
    throw DimensionMismatch("bias must have length " + std::to_string(channels) + ", got " +
                            shape_string(bias.shape()));
  }
}

/// Q[i,j,o] = sum_{u,v,c} G[s*i+u-kx/2, s*j+v-ky/2, c] * W[u,v,c,o] + E[o], zero outside.
template <class T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias,
                 std::size_t stride) {
  const ConvGeometry g = conv_geometry(input.shape(), kernel.shape(), stride);
  const std::size_t co = kernel.dim(3);
  check_bias(bias, co);
  Tensor<T> out(feature_shape(input.shape(), g.batch, g.out_rows, g.out_cols, co));
  if (g.is_pointwise()) {
    linalg::gemm(g.out_pixels(), co, g.patch_size(), input.data(), false, kernel.data(), false,
                 out.data(), false);
  } else {
    std::vector<T> cols(g.out_pixels() * g.patch_size());
    im2col(input.data(), g, cols.data());
    linalg::gemm(g.out_pixels(), co, g.patch_size(), cols.data(), false, kernel.data(), false,
                 out.data(), false);
  }
  add_bias(out.data(), g.out_pixels(), bias);
  return out;
}

/// Gradients of conv2d. `grad_input` / `grad_kernel` may be null to skip them.
template <class T>
void conv2d_backward(const Tensor<T>& input, const Tensor<T>& kernel, std::size_t stride,
                     const Tensor<T>& grad_out, Tensor<T>* grad_input, Tensor<T>* grad_kernel,
                     Tensor<T>* grad_bias) {
  const ConvGeometry g = conv_geometry(input.shape(), kernel.shape(), stride);
  const std::size_t co = kernel.dim(3);
  const std::size_t rows = g.out_pixels();
  const std::size_t P = g.patch_size();
  if (grad_bias) {
    for (std::size_t p = 0; p < rows; ++p) {
      const T* r = grad_out.data() + p * co;
      for (std::size_t c = 0; c < co; ++c) (*grad_bias)[c] += r[c];
    }
  }
  if (grad_kernel) {
    if (g.is_pointwise()) {
      linalg::gemm(P, co, rows, input.data(), true, grad_out.data(), false, grad_kernel->data(), true);
    } else {
      std::vector<T> cols(rows * P);
      im2col(input.data(), g, cols.data());
      linalg::gemm(P, co, rows, cols.data(), true, grad_out.data(), false, grad_kernel->data(), true);
    }
  }
  if (grad_input) {
    if (g.is_pointwise()) {
      Tensor<T> gi(input.shape());
      linalg::gemm(rows, P, co, grad_out.data(), false, kernel.data(), true, gi.data(), false);
      for (std::size_t i = 0; i < gi.size(); ++i) (*grad_input)[i] += gi[i];
    } else {
      std::vector<T> cols(rows * P);
      linalg::gemm(rows, P, co, grad_out.data(), false, kernel.data(), true, cols.data(), false);
      Tensor<T> gi(input.shape());
      col2im(cols.data(), g, gi.data());
      for (std::size_t i = 0; i < gi.size(); ++i) (*grad_input)[i] += gi[i];
    }
  }
}

/// Kernel [kx,ky,Ci,Co] of a transposed conv, rearranged as the Ci x (kx*ky*Co)
/// matrix that scatters one input pixel onto the output patch.
template <class T>
std::vector<T> transposed_scatter_matrix(const Tensor<T>& kernel) {
  const std::size_t kk = kernel.dim(0) * kernel.dim(1);
  const std::size_t ci = kernel.dim(2);
  const std::size_t co = kernel.dim(3);
  std::vector<T> m(ci * kk * co);
  for (std::size_t uv = 0; uv < kk; ++uv)
    for (std::size_t c = 0; c < ci; ++c)
      for (std::size_t o = 0; o < co; ++o) m[c * kk * co + uv * co + o] = kernel[(uv * ci + c) * co + o];
  return m;
}

/// Geometry of the forward conv that the transposed conv is the adjoint of:
/// it reads the (stride*H, stride*W, Co) output grid and produces (H, W, Ci).
inline ConvGeometry transposed_geometry(const Shape& input_shape, const Shape& kernel_shape,
                                        std::size_t stride) {
  if (kernel_shape.size() != 4) {
    throw DimensionMismatch("kernel must be [kx,ky,Cin,Cout], got " + shape_string(kernel_shape));
  }
  if (stride != 1 && stride != 2) throw InvalidArgument("stride must be 1 or 2");
  std::size_t n, h, w, c;
  split_feature_shape(input_shape, n, h, w, c);
  if (c != kernel_shape[2]) {
    throw DimensionMismatch("conv2d_transposed: input has " + std::to_string(c) +
                            " channels, kernel expects " + std::to_string(kernel_shape[2]));
  }
  ConvGeometry g;
  g.batch = n;
  g.in_rows = h * stride;
  g.in_cols = w * stride;
  g.in_channels = kernel_shape[3];
  g.out_rows = h;
  g.out_cols = w;
  g.k_rows = kernel_shape[0];
  g.k_cols = kernel_shape[1];
  g.stride = stride;
  return g;
}

/// Adjoint of the strided same-padded conv with the same kernel geometry, plus bias.
/// Output spatial size is stride x input spatial size.
template <class T>
Tensor<T> conv2d_transposed(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias,
                            std::size_t stride) {
  const ConvGeometry g = transposed_geometry(input.shape(), kernel.shape(), stride);
  const std::size_t ci = kernel.dim(2);
  const std::size_t co = kernel.dim(3);
  check_bias(bias, co);
  const std::vector<T> scatter = transposed_scatter_matrix(kernel);
  std::vector<T> cols(g.out_pixels() * g.patch_size());
  linalg::gemm(g.out_pixels(), g.patch_size(), ci, input.data(), false, scatter.data(), false,
               cols.data(), false);
  Tensor<T> out(feature_shape(input.shape(), g.batch, g.in_rows, g.in_cols, co));
  col2im(cols.data(), g, out.data());
  add_bias(out.data(), g.batch * g.in_rows * g.in_cols, bias);
  return out;
}

template <class T>
void conv2d_transposed_backward(const Tensor<T>& input, const Tensor<T>& kernel, std::size_t stride,
                                const Tensor<T>& grad_out, Tensor<T>* grad_input,
                                Tensor<T>* grad_kernel, Tensor<T>* grad_bias) {
  const ConvGeometry g = transposed_geometry(input.shape(), kernel.shape(), stride);
  const std::size_t ci = kernel.dim(2);
  const std::size_t co = kernel.dim(3);
  const std::size_t kk = kernel.dim(0) * kernel.dim(1);
  if (grad_bias) {
    const std::size_t pixels = g.batch * g.in_rows * g.in_cols;
    for (std::size_t p = 0; p < pixels; ++p) {
      const T* r = grad_out.data() + p * co;
      for (std::size_t c = 0; c < co; ++c) (*grad_bias)[c] += r[c];
    }
  }
  if (!grad_input && !grad_kernel) return;
  std::vector<T> cols(g.out_pixels() * g.patch_size());
  im2col(grad_out.data(), g, cols.data());
  if (grad_input) {
    const std::vector<T> scatter = transposed_scatter_matrix(kernel);
    Tensor<T> gi(input.shape());
    linalg::gemm(g.out_pixels(), ci, g.patch_size(), cols.data(), false, scatter.data(), true,
                 gi.data(), false);
    for (std::size_t i = 0; i < gi.size(); ++i) (*grad_input)[i] += gi[i];
  }
  if (grad_kernel) {
    std::vector<T> gm(ci * g.patch_size());
    linalg::gemm(ci, g.patch_size(), g.out_pixels(), input.data(), true, cols.data(), false,
                 gm.data(), false);
    for (std::size_t uv = 0; uv < kk; ++uv)
      for (std::size_t c = 0; c < ci; ++c)
        for (std::size_t o = 0; o < co; ++o) (*grad_kernel)[(uv * ci + c) * co + o] += gm[c * kk * co + uv * co + o];
  }
}

}  // namespace metasci::kernels

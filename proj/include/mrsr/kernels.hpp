#pragma once

// Convolution and pooling kernels in two flavours:
//
//   kernels::parallel   im2col + BLAS GEMM, OpenMP across channels/rows.
//                       Used by the network code.
//   kernels::reference  straightforward serial loops. Kept as the ground
//                       truth for tests and as the benchmark baseline.
//
// All functions take NCHW tensors. Backward kernels accumulate into their
// outputs (they never overwrite), matching how gradients are summed.

#include "mrsr/tensor.hpp"

namespace mrsr {

struct ConvGeometry {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 3;
  int stride = 1;
  int padding = 1;

  int out_extent(int in) const { return (in + 2 * padding - kernel) / stride + 1; }
  Shape4 weight_shape() const { return {out_channels, in_channels, kernel, kernel}; }
};

namespace kernels {

namespace parallel {

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& weight, const T* bias,
                         const ConvGeometry& g);

template <typename T>
void conv2d_backward_input(const Tensor<T>& grad_out, const Tensor<T>& weight,
                           const ConvGeometry& g, Tensor<T>& grad_in);

// grad_bias may be null.
template <typename T>
void conv2d_backward_weight(const Tensor<T>& x, const Tensor<T>& grad_out, const ConvGeometry& g,
                            Tensor<T>& grad_weight, T* grad_bias);

}  // namespace parallel

namespace reference {

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& weight, const T* bias,
                         const ConvGeometry& g);

template <typename T>
void conv2d_backward_input(const Tensor<T>& grad_out, const Tensor<T>& weight,
                           const ConvGeometry& g, Tensor<T>& grad_in);

template <typename T>
void conv2d_backward_weight(const Tensor<T>& x, const Tensor<T>& grad_out, const ConvGeometry& g,
                            Tensor<T>& grad_weight, T* grad_bias);

}  // namespace reference

// C = alpha * op(A) * op(B) + beta * C, row-major. Thin wrapper over cblas.
template <typename T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, T alpha, const T* a, int lda,
          const T* b, int ldb, T beta, T* c, int ldc);

}  // namespace kernels
}  // namespace mrsr

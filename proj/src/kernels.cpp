#include "mrsr/kernels.hpp"

#include <cblas.h>

#include <vector>

namespace mrsr::kernels {

template <>
void gemm<float>(bool trans_a, bool trans_b, int m, int n, int k, float alpha, const float* a,
                 int lda, const float* b, int ldb, float beta, float* c, int ldc) {
  cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

template <>
void gemm<double>(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a,
                  int lda, const double* b, int ldb, double beta, double* c, int ldc) {
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

namespace {

void check_input(const Shape4& x, const Shape4& w, const ConvGeometry& g) {
  if (x.c != g.in_channels) {
    throw ShapeError("conv2d expects " + std::to_string(g.in_channels) + " input channels, got " +
                     x.str());
  }
  if (!(w == g.weight_shape())) {
    throw ShapeError("conv2d weight shape " + w.str() + " does not match geometry " +
                     g.weight_shape().str());
  }
  if (g.out_extent(x.h) <= 0 || g.out_extent(x.w) <= 0) {
    throw ShapeError("conv2d input " + x.str() + " too small for kernel");
  }
}

// cols has shape (C*K*K) x (Ho*Wo).
template <typename T>
void im2col(const T* src, int channels, int height, int width, const ConvGeometry& g, int out_h,
            int out_w, T* cols) {
  const int k = g.kernel;
  const std::size_t spatial = static_cast<std::size_t>(out_h) * out_w;
#pragma omp parallel for collapse(2) schedule(static)
  for (int c = 0; c < channels; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      const T* plane = src + static_cast<std::size_t>(c) * height * width;
      for (int kx = 0; kx < k; ++kx) {
        T* dst = cols + (static_cast<std::size_t>(c) * k * k + ky * k + kx) * spatial;
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * g.stride - g.padding + ky;
          T* drow = dst + static_cast<std::size_t>(oy) * out_w;
          if (iy < 0 || iy >= height) {
            std::fill(drow, drow + out_w, T{0});
            continue;
          }
          const T* srow = plane + static_cast<std::size_t>(iy) * width;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * g.stride - g.padding + kx;
            drow[ox] = (ix >= 0 && ix < width) ? srow[ix] : T{0};
          }
        }
      }
    }
  }
}

// Scatter-add cols back into the image. Each thread owns whole channels.
template <typename T>
void col2im_add(const T* cols, int channels, int height, int width, const ConvGeometry& g,
                int out_h, int out_w, T* dst) {
  const int k = g.kernel;
  const std::size_t spatial = static_cast<std::size_t>(out_h) * out_w;
#pragma omp parallel for schedule(static)
  for (int c = 0; c < channels; ++c) {
    T* plane = dst + static_cast<std::size_t>(c) * height * width;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* src = cols + (static_cast<std::size_t>(c) * k * k + ky * k + kx) * spatial;
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * g.stride - g.padding + ky;
          if (iy < 0 || iy >= height) continue;
          T* prow = plane + static_cast<std::size_t>(iy) * width;
          const T* srow = src + static_cast<std::size_t>(oy) * out_w;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * g.stride - g.padding + kx;
            if (ix >= 0 && ix < width) prow[ix] += srow[ox];
          }
        }
      }
    }
  }
}

}  // namespace

namespace parallel {

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& weight, const T* bias,
                         const ConvGeometry& g) {
  check_input(x.shape(), weight.shape(), g);
  const int out_h = g.out_extent(x.h());
  const int out_w = g.out_extent(x.w());
  const int patch = g.in_channels * g.kernel * g.kernel;
  const int spatial = out_h * out_w;

  Tensor<T> y({x.n(), g.out_channels, out_h, out_w});
  std::vector<T> cols(static_cast<std::size_t>(patch) * spatial);
  for (int n = 0; n < x.n(); ++n) {
    im2col(x.plane(n, 0), x.c(), x.h(), x.w(), g, out_h, out_w, cols.data());
    T* out = y.plane(n, 0);
    gemm<T>(false, false, g.out_channels, spatial, patch, T{1}, weight.data(), patch, cols.data(),
            spatial, T{0}, out, spatial);
    if (bias != nullptr) {
#pragma omp parallel for schedule(static)
      for (int oc = 0; oc < g.out_channels; ++oc) {
        T* p = out + static_cast<std::size_t>(oc) * spatial;
        const T b = bias[oc];
        for (int i = 0; i < spatial; ++i) p[i] += b;
      }
    }
  }
  return y;
}

template <typename T>
void conv2d_backward_input(const Tensor<T>& grad_out, const Tensor<T>& weight,
                           const ConvGeometry& g, Tensor<T>& grad_in) {
  check_input(grad_in.shape(), weight.shape(), g);
  const int out_h = grad_out.h();
  const int out_w = grad_out.w();
  const int patch = g.in_channels * g.kernel * g.kernel;
  const int spatial = out_h * out_w;
  std::vector<T> cols(static_cast<std::size_t>(patch) * spatial);
  for (int n = 0; n < grad_out.n(); ++n) {
    gemm<T>(true, false, patch, spatial, g.out_channels, T{1}, weight.data(), patch,
            grad_out.plane(n, 0), spatial, T{0}, cols.data(), spatial);
    col2im_add(cols.data(), g.in_channels, grad_in.h(), grad_in.w(), g, out_h, out_w,
               grad_in.plane(n, 0));
  }
}

template <typename T>
void conv2d_backward_weight(const Tensor<T>& x, const Tensor<T>& grad_out, const ConvGeometry& g,
                            Tensor<T>& grad_weight, T* grad_bias) {
  check_input(x.shape(), grad_weight.shape(), g);
  const int out_h = grad_out.h();
  const int out_w = grad_out.w();
  const int patch = g.in_channels * g.kernel * g.kernel;
  const int spatial = out_h * out_w;
  std::vector<T> cols(static_cast<std::size_t>(patch) * spatial);
  for (int n = 0; n < x.n(); ++n) {
    im2col(x.plane(n, 0), x.c(), x.h(), x.w(), g, out_h, out_w, cols.data());
    gemm<T>(false, true, g.out_channels, patch, spatial, T{1}, grad_out.plane(n, 0), spatial,
            cols.data(), spatial, T{1}, grad_weight.data(), patch);
    if (grad_bias != nullptr) {
      const T* go = grad_out.plane(n, 0);
#pragma omp parallel for schedule(static)
      for (int oc = 0; oc < g.out_channels; ++oc) {
        const T* p = go + static_cast<std::size_t>(oc) * spatial;
        T acc{0};
        for (int i = 0; i < spatial; ++i) acc += p[i];
        grad_bias[oc] += acc;
      }
    }
  }
}

}  // namespace parallel

namespace reference {

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& weight, const T* bias,
                         const ConvGeometry& g) {
  check_input(x.shape(), weight.shape(), g);
  const int out_h = g.out_extent(x.h());
  const int out_w = g.out_extent(x.w());
  Tensor<T> y({x.n(), g.out_channels, out_h, out_w});
  for (int n = 0; n < x.n(); ++n)
    for (int oc = 0; oc < g.out_channels; ++oc)
      for (int oy = 0; oy < out_h; ++oy)
        for (int ox = 0; ox < out_w; ++ox) {
          T acc = bias != nullptr ? bias[oc] : T{0};
          for (int ic = 0; ic < g.in_channels; ++ic)
            for (int ky = 0; ky < g.kernel; ++ky)
              for (int kx = 0; kx < g.kernel; ++kx) {
                const int iy = oy * g.stride - g.padding + ky;
                const int ix = ox * g.stride - g.padding + kx;
                if (iy < 0 || iy >= x.h() || ix < 0 || ix >= x.w()) continue;
                acc += weight.at(oc, ic, ky, kx) * x.at(n, ic, iy, ix);
              }
          y.at(n, oc, oy, ox) = acc;
        }
  return y;
}

template <typename T>
void conv2d_backward_input(const Tensor<T>& grad_out, const Tensor<T>& weight,
                           const ConvGeometry& g, Tensor<T>& grad_in) {
  check_input(grad_in.shape(), weight.shape(), g);
  for (int n = 0; n < grad_out.n(); ++n)
    for (int oc = 0; oc < g.out_channels; ++oc)
      for (int oy = 0; oy < grad_out.h(); ++oy)
        for (int ox = 0; ox < grad_out.w(); ++ox) {
          const T go = grad_out.at(n, oc, oy, ox);
          for (int ic = 0; ic < g.in_channels; ++ic)
            for (int ky = 0; ky < g.kernel; ++ky)
              for (int kx = 0; kx < g.kernel; ++kx) {
                const int iy = oy * g.stride - g.padding + ky;
                const int ix = ox * g.stride - g.padding + kx;
                if (iy < 0 || iy >= grad_in.h() || ix < 0 || ix >= grad_in.w()) continue;
                grad_in.at(n, ic, iy, ix) += weight.at(oc, ic, ky, kx) * go;
              }
        }
}

template <typename T>
void conv2d_backward_weight(const Tensor<T>& x, const Tensor<T>& grad_out, const ConvGeometry& g,
                            Tensor<T>& grad_weight, T* grad_bias) {
  check_input(x.shape(), grad_weight.shape(), g);
  for (int n = 0; n < grad_out.n(); ++n)
    for (int oc = 0; oc < g.out_channels; ++oc)
      for (int oy = 0; oy < grad_out.h(); ++oy)
        for (int ox = 0; ox < grad_out.w(); ++ox) {
          const T go = grad_out.at(n, oc, oy, ox);
          if (grad_bias != nullptr) grad_bias[oc] += go;
          for (int ic = 0; ic < g.in_channels; ++ic)
            for (int ky = 0; ky < g.kernel; ++ky)
              for (int kx = 0; kx < g.kernel; ++kx) {
                const int iy = oy * g.stride - g.padding + ky;
                const int ix = ox * g.stride - g.padding + kx;
                if (iy < 0 || iy >= x.h() || ix < 0 || ix >= x.w()) continue;
                grad_weight.at(oc, ic, ky, kx) += x.at(n, ic, iy, ix) * go;
              }
        }
}

}  // namespace reference

#define MRSR_INSTANTIATE_CONV(T)                                                              \
  template Tensor<T> parallel::conv2d_forward<T>(const Tensor<T>&, const Tensor<T>&, const T*, \
                                                 const ConvGeometry&);                        \
  template void parallel::conv2d_backward_input<T>(const Tensor<T>&, const Tensor<T>&,         \
                                                   const ConvGeometry&, Tensor<T>&);          \
  template void parallel::conv2d_backward_weight<T>(const Tensor<T>&, const Tensor<T>&,        \
                                                    const ConvGeometry&, Tensor<T>&, T*);     \
  template Tensor<T> reference::conv2d_forward<T>(const Tensor<T>&, const Tensor<T>&,          \
                                                  const T*, const ConvGeometry&);             \
  template void reference::conv2d_backward_input<T>(const Tensor<T>&, const Tensor<T>&,        \
                                                    const ConvGeometry&, Tensor<T>&);         \
  template void reference::conv2d_backward_weight<T>(const Tensor<T>&, const Tensor<T>&,       \
                                                     const ConvGeometry&, Tensor<T>&, T*);

MRSR_INSTANTIATE_CONV(float)
MRSR_INSTANTIATE_CONV(double)

#undef MRSR_INSTANTIATE_CONV

}  // namespace mrsr::kernels

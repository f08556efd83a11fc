#include "mrsr/metrics.hpp"

#include <cmath>

#include "mrsr/errors.hpp"

namespace mrsr {

namespace metrics {

std::vector<double> gaussian_kernel(int size, double sigma) {
  if (size < 1 || size % 2 == 0) throw ConfigError("Gaussian window size must be odd");
  std::vector<double> k(size);
  const int half = size / 2;
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    const double d = i - half;
    k[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    sum += k[i];
  }
  for (double& v : k) v /= sum;
  return k;
}

namespace parallel {

ImageD valid_filter(const ImageD& src, const std::vector<double>& k) {
  const int n = static_cast<int>(k.size());
  const int out_rows = src.rows() - n + 1;
  const int out_cols = src.cols() - n + 1;
  if (out_rows < 1 || out_cols < 1) throw ShapeError("filter window larger than image");
  ImageD horiz(src.rows(), out_cols);
#pragma omp parallel for schedule(static)
  for (int r = 0; r < src.rows(); ++r) {
    const double* s = src.row(r);
    double* h = horiz.row(r);
    for (int c = 0; c < out_cols; ++c) {
      double acc = 0.0;
      for (int j = 0; j < n; ++j) acc += k[j] * s[c + j];
      h[c] = acc;
    }
  }
  ImageD out(out_rows, out_cols);
#pragma omp parallel for schedule(static)
  for (int r = 0; r < out_rows; ++r) {
    double* o = out.row(r);
    for (int i = 0; i < n; ++i) {
      const double* h = horiz.row(r + i);
      const double w = k[i];
      for (int c = 0; c < out_cols; ++c) o[c] += w * h[c];
    }
  }
  return out;
}

}  // namespace parallel

namespace reference {

ImageD valid_filter(const ImageD& src, const std::vector<double>& k) {
  const int n = static_cast<int>(k.size());
  const int out_rows = src.rows() - n + 1;
  const int out_cols = src.cols() - n + 1;
  if (out_rows < 1 || out_cols < 1) throw ShapeError("filter window larger than image");
  ImageD out(out_rows, out_cols);
  for (int r = 0; r < out_rows; ++r)
    for (int c = 0; c < out_cols; ++c) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) acc += k[i] * k[j] * src(r + i, c + j);
      out(r, c) = acc;
    }
  return out;
}

}  // namespace reference

}  // namespace metrics

namespace {

void require_same_shape(const Image& a, const Image& b, const char* what) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(what) + ": shape mismatch " + shape_str(a.rows(), a.cols()) +
                     " vs " + shape_str(b.rows(), b.cols()));
  }
  if (a.empty()) throw ShapeError(std::string(what) + ": empty image");
}

ImageD to_double(const Image& x, double scale = 1.0) {
  ImageD out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) out.data()[i] = scale * x.data()[i];
  return out;
}

ImageD product(const ImageD& a, const ImageD& b) {
  ImageD out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] * b.data()[i];
  return out;
}

ImageD decimate2(const ImageD& x) {
  ImageD out((x.rows() + 1) / 2, (x.cols() + 1) / 2);
  for (int r = 0; r < out.rows(); ++r)
    for (int c = 0; c < out.cols(); ++c) out(r, c) = x(2 * r, 2 * c);
  return out;
}

}  // namespace

double ssim(const Image& x, const Image& y) {
  require_same_shape(x, y, "ssim");
  if (x.rows() < kSsimWindow || x.cols() < kSsimWindow) {
    throw ShapeError("ssim: image " + shape_str(x.rows(), x.cols()) + " is smaller than the " +
                     std::to_string(kSsimWindow) + "x" + std::to_string(kSsimWindow) + " window");
  }
  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;
  const auto k = metrics::gaussian_kernel(kSsimWindow, 1.5);
  const ImageD a = to_double(x);
  const ImageD b = to_double(y);
  using metrics::parallel::valid_filter;
  const ImageD mu_a = valid_filter(a, k);
  const ImageD mu_b = valid_filter(b, k);
  const ImageD aa = valid_filter(product(a, a), k);
  const ImageD bb = valid_filter(product(b, b), k);
  const ImageD ab = valid_filter(product(a, b), k);
  double sum = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a.data()[i];
    const double mb = mu_b.data()[i];
    const double va = aa.data()[i] - ma * ma;
    const double vb = bb.data()[i] - mb * mb;
    const double cov = ab.data()[i] - ma * mb;
    sum += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
  }
  return sum / static_cast<double>(mu_a.size());
}

double nrmse(const Image& gt, const Image& pred) {
  require_same_shape(gt, pred, "nrmse");
  double sq = 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const double d = static_cast<double>(gt.data()[i]) - pred.data()[i];
    sq += d * d;
    total += gt.data()[i];
  }
  const double n = static_cast<double>(gt.size());
  const double mean = total / n;
  if (!(mean > 0.0)) {
    throw DegenerateInputError("nrmse: ground-truth mean is " + std::to_string(mean) +
                               "; normalisation needs a positive mean");
  }
  return std::sqrt(sq / n) / mean;
}

double mae(const Image& x, const Image& y) {
  require_same_shape(x, y, "mae");
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    acc += std::abs(static_cast<double>(x.data()[i]) - y.data()[i]);
  }
  return acc / static_cast<double>(x.size());
}

double vif(const Image& gt, const Image& pred) {
  require_same_shape(gt, pred, "vif");
  if (gt.rows() < kVifMinExtent || gt.cols() < kVifMinExtent) {
    throw ShapeError("vif: image " + shape_str(gt.rows(), gt.cols()) +
                     " is too small for four scales (need at least " +
                     std::to_string(kVifMinExtent) + " per side)");
  }
  constexpr double sigma_n = 2.0;
  constexpr double eps = 1e-10;
  using metrics::parallel::valid_filter;
  ImageD ref = to_double(gt, 255.0);
  ImageD dist = to_double(pred, 255.0);
  double num = 0.0;
  double den = 0.0;
  for (int scale = 1; scale <= 4; ++scale) {
    const int taps = (1 << (5 - scale)) + 1;
    const auto k = metrics::gaussian_kernel(taps, taps / 5.0);
    if (scale > 1) {
      ref = decimate2(valid_filter(ref, k));
      dist = decimate2(valid_filter(dist, k));
    }
    const ImageD mu1 = valid_filter(ref, k);
    const ImageD mu2 = valid_filter(dist, k);
    const ImageD s11 = valid_filter(product(ref, ref), k);
    const ImageD s22 = valid_filter(product(dist, dist), k);
    const ImageD s12 = valid_filter(product(ref, dist), k);
    for (std::size_t i = 0; i < mu1.size(); ++i) {
      const double m1 = mu1.data()[i];
      const double m2 = mu2.data()[i];
      double var1 = std::max(0.0, s11.data()[i] - m1 * m1);
      const double var2 = std::max(0.0, s22.data()[i] - m2 * m2);
      const double cov = s12.data()[i] - m1 * m2;
      double g = 0.0;
      double sv = var2;
      if (var1 >= eps) {
        g = cov / var1;
        sv = var2 - g * cov;
      } else {
        var1 = 0.0;
      }
      if (var2 < eps) {
        g = 0.0;
        sv = 0.0;
      }
      if (g < 0.0) {
        sv = var2;
        g = 0.0;
      }
      sv = std::max(sv, eps);
      num += std::log10(1.0 + g * g * var1 / (sv + sigma_n));
      den += std::log10(1.0 + var1 / sigma_n);
    }
  }
  if (!(den > 0.0)) {
    throw DegenerateInputError("vif: reference image has no local variance");
  }
  return num / den;
}

}  // namespace mrsr

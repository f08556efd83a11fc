#include "mrsr/resample.hpp"

#include <algorithm>
#include <cmath>

#include "mrsr/errors.hpp"

namespace mrsr {

namespace {

double triangle(double x) {
  x = std::abs(x);
  return x < 1.0 ? 1.0 - x : 0.0;
}

double keys_cubic(double x) {
  constexpr double a = -0.75;
  x = std::abs(x);
  if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
  return 0.0;
}

// Folds a tap over clamped indices [lo, hi] into one contiguous window.
ResampleTap clamped_tap(int in, int lo, const std::vector<double>& w) {
  const int first = std::clamp(lo, 0, in - 1);
  const int last = std::clamp(lo + static_cast<int>(w.size()) - 1, 0, in - 1);
  ResampleTap tap{first, std::vector<double>(last - first + 1, 0.0)};
  for (std::size_t k = 0; k < w.size(); ++k) {
    const int idx = std::clamp(lo + static_cast<int>(k), 0, in - 1);
    tap.weights[idx - first] += w[k];
  }
  return tap;
}

}  // namespace

UpscaleMethod parse_upscale_method(const std::string& name) {
  if (name == "bilinear") return UpscaleMethod::kBilinear;
  if (name == "bicubic") return UpscaleMethod::kBicubic;
  if (name == "nearest") return UpscaleMethod::kNearest;
  throw ConfigError("unsupported interpolation method '" + name +
                    "' (expected bilinear, bicubic or nearest)");
}

std::string to_string(UpscaleMethod m) {
  switch (m) {
    case UpscaleMethod::kBilinear: return "bilinear";
    case UpscaleMethod::kBicubic: return "bicubic";
    case UpscaleMethod::kNearest: return "nearest";
  }
  return "unknown";
}

std::vector<ResampleTap> downsample_taps(int in, int factor) {
  if (factor < 1 || in % factor != 0) {
    throw ShapeError("extent " + std::to_string(in) + " is not divisible by " +
                     std::to_string(factor));
  }
  const int out = in / factor;
  std::vector<ResampleTap> taps(out);
  for (int o = 0; o < out; ++o) {
    const double center = (o + 0.5) * factor;
    const int lo = std::max(0, static_cast<int>(std::floor(center - factor)));
    const int hi = std::min(in, static_cast<int>(std::ceil(center + factor)));
    ResampleTap& tap = taps[o];
    tap.first = lo;
    double sum = 0.0;
    for (int j = lo; j < hi; ++j) {
      const double w = triangle((j + 0.5 - center) / factor);
      tap.weights.push_back(w);
      sum += w;
    }
    for (double& w : tap.weights) w /= sum;
    // Trim zero-weight ends so the window is tight.
    while (!tap.weights.empty() && tap.weights.back() == 0.0) tap.weights.pop_back();
    while (!tap.weights.empty() && tap.weights.front() == 0.0) {
      tap.weights.erase(tap.weights.begin());
      ++tap.first;
    }
  }
  return taps;
}

std::vector<ResampleTap> upsample_taps(int in, int factor, UpscaleMethod method) {
  if (in < 1 || factor < 1) throw ShapeError("invalid upsampling extent or factor");
  const int out = in * factor;
  std::vector<ResampleTap> taps(out);
  for (int o = 0; o < out; ++o) {
    const double src = (o + 0.5) / factor - 0.5;
    switch (method) {
      case UpscaleMethod::kNearest: {
        taps[o] = {std::min(o / factor, in - 1), {1.0}};
        break;
      }
      case UpscaleMethod::kBilinear: {
        const int i0 = static_cast<int>(std::floor(src));
        const double t = src - i0;
        taps[o] = clamped_tap(in, i0, {1.0 - t, t});
        break;
      }
      case UpscaleMethod::kBicubic: {
        const int i0 = static_cast<int>(std::floor(src));
        const double t = src - i0;
        taps[o] = clamped_tap(in, i0 - 1,
                              {keys_cubic(t + 1.0), keys_cubic(t), keys_cubic(1.0 - t),
                               keys_cubic(2.0 - t)});
        break;
      }
    }
  }
  return taps;
}

namespace resample {

namespace parallel {

Image apply(const Image& src, const std::vector<ResampleTap>& row_taps,
            const std::vector<ResampleTap>& col_taps) {
  const int out_rows = static_cast<int>(row_taps.size());
  const int out_cols = static_cast<int>(col_taps.size());
  const int in_rows = src.rows();
  // Horizontal pass kept in double so the vertical pass sees unrounded sums.
  std::vector<double> tmp(static_cast<std::size_t>(in_rows) * out_cols);
#pragma omp parallel for schedule(static)
  for (int r = 0; r < in_rows; ++r) {
    const float* s = src.row(r);
    double* t = tmp.data() + static_cast<std::size_t>(r) * out_cols;
    for (int c = 0; c < out_cols; ++c) {
      const ResampleTap& tap = col_taps[c];
      double acc = 0.0;
      for (std::size_t k = 0; k < tap.weights.size(); ++k) acc += tap.weights[k] * s[tap.first + k];
      t[c] = acc;
    }
  }
  Image dst(out_rows, out_cols);
#pragma omp parallel for schedule(static)
  for (int r = 0; r < out_rows; ++r) {
    const ResampleTap& tap = row_taps[r];
    float* d = dst.row(r);
    for (int c = 0; c < out_cols; ++c) {
      double acc = 0.0;
      for (std::size_t k = 0; k < tap.weights.size(); ++k) {
        acc += tap.weights[k] * tmp[(tap.first + k) * out_cols + c];
      }
      d[c] = static_cast<float>(acc);
    }
  }
  return dst;
}

}  // namespace parallel

namespace reference {

Image apply(const Image& src, const std::vector<ResampleTap>& row_taps,
            const std::vector<ResampleTap>& col_taps) {
  Image dst(static_cast<int>(row_taps.size()), static_cast<int>(col_taps.size()));
  for (int r = 0; r < dst.rows(); ++r) {
    const ResampleTap& ty = row_taps[r];
    for (int c = 0; c < dst.cols(); ++c) {
      const ResampleTap& tx = col_taps[c];
      double acc = 0.0;
      for (std::size_t i = 0; i < ty.weights.size(); ++i) {
        for (std::size_t j = 0; j < tx.weights.size(); ++j) {
          acc += ty.weights[i] * tx.weights[j] *
                 src(ty.first + static_cast<int>(i), tx.first + static_cast<int>(j));
        }
      }
      dst(r, c) = static_cast<float>(acc);
    }
  }
  return dst;
}

}  // namespace reference

}  // namespace resample

Image downsample(const Image& src, int factor) {
  if (src.rows() != src.cols()) {
    throw ShapeError("downsampling expects a square image, got " +
                     shape_str(src.rows(), src.cols()));
  }
  if (src.rows() == 0 || src.rows() % factor != 0) {
    throw ShapeError("image extent " + std::to_string(src.rows()) + " is not a multiple of " +
                     std::to_string(factor));
  }
  const auto taps = downsample_taps(src.rows(), factor);
  return resample::parallel::apply(src, taps, taps);
}

Image upscale(const Image& src, int factor, UpscaleMethod method) {
  if (src.empty()) throw ShapeError("cannot upscale an empty image");
  Image out = resample::parallel::apply(src, upsample_taps(src.rows(), factor, method),
                                        upsample_taps(src.cols(), factor, method));
  if (method == UpscaleMethod::kBicubic) {
    for (float& v : out.values()) v = std::clamp(v, 0.0f, 1.0f);
  }
  return out;
}

}  // namespace mrsr

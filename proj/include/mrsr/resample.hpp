#pragma once

// Integer-factor resampling of single-channel images.
//
// Every resize is separable: a 1D weight table per axis, applied first along
// rows and then along columns. Sample i of an n-pixel axis sits at i + 0.5
// (half-pixel centres), so a factor-s resize maps output sample o to source
// coordinate (o + 0.5) * in / out - 0.5.
//
// Downsampling by s uses the triangle (bilinear) kernel stretched by s, i.e.
// every output averages its source footprint. For s = 4 an interior output j
// reads source samples 4j-2 .. 4j+5 with weights
//
//     1  3  5  7  7  5  3  1   (all / 32)
//
// At the borders the taps that fall outside the image are dropped and the
// remaining weights renormalised to sum to one.
//
// Upsampling uses the bilinear kernel or the Keys cubic kernel (a = -0.75)
// with edge-replicated source indices.

#include <string>
#include <vector>

#include "mrsr/image.hpp"

namespace mrsr {

enum class UpscaleMethod { kBilinear, kBicubic, kNearest };

// "bilinear" | "bicubic" | "nearest"; throws ConfigError otherwise.
UpscaleMethod parse_upscale_method(const std::string& name);
std::string to_string(UpscaleMethod m);

// Contiguous source window feeding one output sample.
struct ResampleTap {
  int first = 0;
  std::vector<double> weights;
};

// Antialiased triangle-filter taps for shrinking `in` samples to `in / factor`.
std::vector<ResampleTap> downsample_taps(int in, int factor);
// Interpolation taps for growing `in` samples to `in * factor`.
std::vector<ResampleTap> upsample_taps(int in, int factor, UpscaleMethod method);

namespace resample {

namespace parallel {
// Applies row_taps along y and col_taps along x; OpenMP over rows.
Image apply(const Image& src, const std::vector<ResampleTap>& row_taps,
            const std::vector<ResampleTap>& col_taps);
}  // namespace parallel

namespace reference {
// Same result computed as a direct 2D weighted sum per output pixel.
Image apply(const Image& src, const std::vector<ResampleTap>& row_taps,
            const std::vector<ResampleTap>& col_taps);
}  // namespace reference

}  // namespace resample

// x`factor` antialiased bilinear shrink. The image must be square with an
// extent divisible by factor.
Image downsample(const Image& src, int factor);

// x`factor` enlargement. Bicubic output is clamped to [0, 1].
Image upscale(const Image& src, int factor, UpscaleMethod method);

}  // namespace mrsr

#pragma once

// Full-reference quality metrics. Inputs are [0, 1] images; all arithmetic
// is done in double.

#include <vector>

#include "mrsr/image.hpp"

namespace mrsr {

// Smallest extent for which the four VIF scales leave at least one sample.
inline constexpr int kVifMinExtent = 41;
inline constexpr int kSsimWindow = 11;

namespace metrics {

// Normalised 1D Gaussian of odd length `size`.
std::vector<double> gaussian_kernel(int size, double sigma);

namespace parallel {
// 'valid' correlation with the separable kernel k (x) k.
ImageD valid_filter(const ImageD& src, const std::vector<double>& k);
}  // namespace parallel

namespace reference {
// Same as parallel::valid_filter, as a direct 2D window sum.
ImageD valid_filter(const ImageD& src, const std::vector<double>& k);
}  // namespace reference

}  // namespace metrics

// Mean SSIM over the valid region: 11x11 Gaussian window (sigma 1.5),
// K1 = 0.01, K2 = 0.03, data range 1.
double ssim(const Image& x, const Image& y);

// sqrt(mean((gt - pred)^2)) / mean(gt). Throws DegenerateInputError when
// mean(gt) is not positive.
double nrmse(const Image& gt, const Image& pred);

double mae(const Image& x, const Image& y);

// Pixel-domain multi-scale VIF on the 0..255 scale with noise variance 2:
// four scales with Gaussian windows of 17, 9, 5, 3 taps (sigma = taps / 5),
// each coarser scale filtered and decimated by 2.
double vif(const Image& gt, const Image& pred);

}  // namespace mrsr

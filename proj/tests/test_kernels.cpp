// Parallel kernels against their serial references.

#include <cmath>

#include "doctest.h"
#include "fixtures.hpp"
#include "mrsr/kernels.hpp"
#include "mrsr/metrics.hpp"
#include "mrsr/resample.hpp"
#include "oracles.hpp"

using namespace mrsr;
using test::random_tensor;

namespace {

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  REQUIRE(a.shape() == b.shape());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(static_cast<double>(a.data()[i]) - b.data()[i]));
  }
  return m;
}

double max_abs_diff(const Image& a, const Image& b) {
  REQUIRE(a.same_shape(b));
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(static_cast<double>(a.data()[i]) - b.data()[i]));
  }
  return m;
}

double max_abs_diff(const ImageD& a, const ImageD& b) {
  REQUIRE(a.same_shape(b));
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

struct ConvCase {
  int n, cin, cout, h, w, k, stride, pad;
};

const ConvCase kCases[] = {
    {1, 1, 4, 8, 8, 3, 1, 1},  {2, 3, 5, 7, 9, 3, 1, 1},   {1, 4, 6, 16, 16, 4, 2, 1},
    {2, 8, 3, 6, 10, 4, 2, 1}, {1, 2, 2, 5, 5, 1, 1, 0},   {1, 3, 4, 9, 7, 3, 2, 0},
};

}  // namespace

TEST_CASE_TEMPLATE("conv2d forward: parallel matches reference", T, float, double) {
  std::uint64_t seed = 1;
  for (const auto& c : kCases) {
    const ConvGeometry g{c.cin, c.cout, c.k, c.stride, c.pad};
    const auto x = random_tensor<T>({c.n, c.cin, c.h, c.w}, seed++);
    const auto w = random_tensor<T>(g.weight_shape(), seed++);
    const auto b = random_tensor<T>({c.cout, 1, 1, 1}, seed++);
    const auto p = kernels::parallel::conv2d_forward(x, w, b.data(), g);
    const auto r = kernels::reference::conv2d_forward(x, w, b.data(), g);
    CHECK(p.shape() == Shape4{c.n, c.cout, g.out_extent(c.h), g.out_extent(c.w)});
    CHECK(max_abs_diff(p, r) < (sizeof(T) == 4 ? 1e-4 : 1e-12));
    const auto nb = kernels::parallel::conv2d_forward<T>(x, w, nullptr, g);
    CHECK(max_abs_diff(nb, kernels::reference::conv2d_forward<T>(x, w, nullptr, g)) <
          (sizeof(T) == 4 ? 1e-4 : 1e-12));
  }
}

TEST_CASE_TEMPLATE("conv2d backward: parallel matches reference and accumulates", T, float, double) {
  std::uint64_t seed = 100;
  const double tol = sizeof(T) == 4 ? 2e-4 : 1e-11;
  for (const auto& c : kCases) {
    const ConvGeometry g{c.cin, c.cout, c.k, c.stride, c.pad};
    const auto x = random_tensor<T>({c.n, c.cin, c.h, c.w}, seed++);
    const auto w = random_tensor<T>(g.weight_shape(), seed++);
    const auto go = random_tensor<T>({c.n, c.cout, g.out_extent(c.h), g.out_extent(c.w)}, seed++);

    // Start from a non-zero buffer to check accumulation.
    const auto base_in = random_tensor<T>(x.shape(), seed++);
    Tensor<T> gi_p = base_in, gi_r = base_in;
    kernels::parallel::conv2d_backward_input(go, w, g, gi_p);
    kernels::reference::conv2d_backward_input(go, w, g, gi_r);
    CHECK(max_abs_diff(gi_p, gi_r) < tol);

    const auto base_w = random_tensor<T>(w.shape(), seed++);
    Tensor<T> gw_p = base_w, gw_r = base_w;
    std::vector<T> gb_p(c.cout, T{1}), gb_r(c.cout, T{1});
    kernels::parallel::conv2d_backward_weight(x, go, g, gw_p, gb_p.data());
    kernels::reference::conv2d_backward_weight(x, go, g, gw_r, gb_r.data());
    CHECK(max_abs_diff(gw_p, gw_r) < tol);
    for (int o = 0; o < c.cout; ++o) CHECK(std::abs(gb_p[o] - gb_r[o]) < tol);
  }
}

TEST_CASE("conv2d backward is the adjoint of forward") {
  // <conv(x), y> == <x, conv^T(y)> for the input gradient, in double.
  const ConvGeometry g{3, 4, 4, 2, 1};
  const auto x = random_tensor<double>({2, 3, 10, 8}, 7);
  const auto w = random_tensor<double>(g.weight_shape(), 8);
  const auto y = random_tensor<double>({2, 4, g.out_extent(10), g.out_extent(8)}, 9);
  const auto fx = kernels::parallel::conv2d_forward<double>(x, w, nullptr, g);
  Tensor<double> gt(x.shape());
  kernels::parallel::conv2d_backward_input(y, w, g, gt);
  double lhs = 0.0, rhs = 0.0;
  for (std::size_t i = 0; i < fx.size(); ++i) lhs += fx.data()[i] * y.data()[i];
  for (std::size_t i = 0; i < x.size(); ++i) rhs += x.data()[i] * gt.data()[i];
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("gemm wrapper handles transposes") {
  const int m = 3, n = 4, k = 5;
  const auto a = random_tensor<double>({1, 1, m, k}, 1);
  const auto b = random_tensor<double>({1, 1, k, n}, 2);
  std::vector<double> c(m * n, 0.0);
  kernels::gemm<double>(false, false, m, n, k, 1.0, a.data(), k, b.data(), n, 0.0, c.data(), n);
  // A^T stored as k x m, B^T stored as n x k.
  std::vector<double> at(k * m), bt(n * k), c2(m * n, 0.0);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < k; ++j) at[j * m + i] = a.data()[i * k + j];
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < n; ++j) bt[j * k + i] = b.data()[i * n + j];
  kernels::gemm<double>(true, true, m, n, k, 1.0, at.data(), m, bt.data(), k, 0.0, c2.data(), n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double ref = 0.0;
      for (int p = 0; p < k; ++p) ref += a.data()[i * k + p] * b.data()[p * n + j];
      CHECK(c[i * n + j] == doctest::Approx(ref).epsilon(1e-14));
      CHECK(c2[i * n + j] == doctest::Approx(ref).epsilon(1e-14));
    }
}

TEST_CASE("resample: parallel matches reference for every kernel") {
  const Image src = test::random_image(40, 40, 3);
  const auto down = downsample_taps(40, 4);
  CHECK(max_abs_diff(resample::parallel::apply(src, down, down),
                     resample::reference::apply(src, down, down)) < 1e-6);
  for (auto m : {UpscaleMethod::kBilinear, UpscaleMethod::kBicubic, UpscaleMethod::kNearest}) {
    const Image small = test::random_image(12, 9, 4);
    const auto rows = upsample_taps(12, 4, m);
    const auto cols = upsample_taps(9, 4, m);
    CHECK(max_abs_diff(resample::parallel::apply(small, rows, cols),
                       resample::reference::apply(small, rows, cols)) < 1e-6);
  }
}

TEST_CASE("downsample weight table") {
  const auto taps = downsample_taps(256, 4);
  REQUIRE(taps.size() == 64);
  // Interior outputs use the 8-tap [1,3,5,7,7,5,3,1]/32 table starting at 4j-2.
  for (int j = 1; j < 63; ++j) {
    REQUIRE(taps[j].weights.size() == 8);
    CHECK(taps[j].first == 4 * j - 2);
    const double expect[8] = {1, 3, 5, 7, 7, 5, 3, 1};
    for (int k = 0; k < 8; ++k) CHECK(taps[j].weights[k] == doctest::Approx(expect[k] / 32).epsilon(1e-15));
  }
  // Borders are renormalised: the first output drops the two leftmost taps.
  REQUIRE(taps[0].weights.size() == 6);
  CHECK(taps[0].first == 0);
  const double expect0[6] = {5, 7, 7, 5, 3, 1};
  for (int k = 0; k < 6; ++k) CHECK(taps[0].weights[k] == doctest::Approx(expect0[k] / 28).epsilon(1e-15));
  for (const auto& t : taps) {
    double s = 0.0;
    for (double w : t.weights) {
      CHECK(w > 0.0);
      s += w;
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-15));
  }
}

TEST_CASE("valid filter: parallel matches reference") {
  ImageD src(30, 23);
  Rng rng(11);
  for (double& v : src.values()) v = rng.uniform();
  for (int taps : {3, 5, 9, 11, 17}) {
    const auto k = metrics::gaussian_kernel(taps, taps / 5.0);
    CHECK(max_abs_diff(metrics::parallel::valid_filter(src, k), metrics::reference::valid_filter(src, k)) < 1e-13);
  }
  CHECK_THROWS_AS(metrics::parallel::valid_filter(src, metrics::gaussian_kernel(31, 2.0)), ShapeError);
}

#include <cmath>

#include "doctest.h"
#include "fixtures.hpp"
#include "mrsr/data_pipeline.hpp"
#include "mrsr/metrics.hpp"
#include "oracles.hpp"

using namespace mrsr;
using test::random_image;

namespace {

// Golden value of the stored pair under tools/vifp_reference.py.
constexpr double kVifGolden = 0.46683136658725638;

// Separable Gaussian blur with edge clamping.
Image blur(const Image& src, double sigma) {
  const int r = static_cast<int>(std::ceil(3 * sigma));
  std::vector<double> k(2 * r + 1);
  double s = 0.0;
  for (int i = -r; i <= r; ++i) s += k[i + r] = std::exp(-i * i / (2 * sigma * sigma));
  for (double& v : k) v /= s;
  auto at = [](const Image& im, int y, int x) {
    return im(std::clamp(y, 0, im.rows() - 1), std::clamp(x, 0, im.cols() - 1));
  };
  Image tmp(src.rows(), src.cols()), out(src.rows(), src.cols());
  for (int y = 0; y < src.rows(); ++y)
    for (int x = 0; x < src.cols(); ++x) {
      double acc = 0.0;
      for (int i = -r; i <= r; ++i) acc += k[i + r] * at(src, y, x + i);
      tmp(y, x) = static_cast<float>(acc);
    }
  for (int y = 0; y < src.rows(); ++y)
    for (int x = 0; x < src.cols(); ++x) {
      double acc = 0.0;
      for (int i = -r; i <= r; ++i) acc += k[i + r] * at(tmp, y + i, x);
      out(y, x) = static_cast<float>(acc);
    }
  return out;
}

}  // namespace

TEST_CASE("metrics agree with scalar-loop oracles") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Image x = random_image(32, 32, 2 * seed + 1);
    const Image y = random_image(32, 32, 2 * seed + 2);
    CHECK(std::abs(ssim(x, y) - oracle::ssim(x, y)) <= 1e-6);
    CHECK(std::abs(nrmse(x, y) - oracle::nrmse(x, y)) <= 1e-7);
    CHECK(std::abs(mae(x, y) - oracle::mae(x, y)) <= 1e-7);
  }
  // Structured, correlated pair on a non-square image.
  const Image p = test::phantom(48, 3);
  Image q = blur(p, 1.0);
  Image pr(40, 48), qr(40, 48);
  for (int r = 0; r < 40; ++r)
    for (int c = 0; c < 48; ++c) pr(r, c) = p(r, c), qr(r, c) = q(r, c);
  CHECK(std::abs(ssim(pr, qr) - oracle::ssim(pr, qr)) <= 1e-6);
}

TEST_CASE("perfect reconstruction fixed points") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Image x = random_image(64, 64, seed + 100);
    CHECK(ssim(x, x) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(nrmse(x, x) == 0.0);
    CHECK(mae(x, x) == 0.0);
    CHECK(std::abs(vif(x, x) - 1.0) <= 1e-9);
  }
}

TEST_CASE("closed-form values") {
  const double c1 = 1e-4;
  CHECK(ssim(Image(16, 16, 0.0f), Image(16, 16, 1.0f)) == doctest::Approx(c1 / (1 + c1)).epsilon(1e-12));
  CHECK(nrmse(Image(8, 8, 0.5f), Image(8, 8, 0.6f)) == doctest::Approx(0.2).epsilon(1e-6));
  CHECK(mae(Image(8, 8, 0.0f), Image(8, 8, 1.0f)) == 1.0);
}

TEST_CASE("symmetry") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Image x = random_image(24, 24, seed + 300);
    const Image y = random_image(24, 24, seed + 400);
    CHECK(ssim(x, y) == doctest::Approx(ssim(y, x)).epsilon(1e-14));
    CHECK(mae(x, y) == mae(y, x));
  }
}

TEST_CASE("range invariants") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Image x = test::phantom(64, seed);
    const Image y = random_image(64, 64, seed);
    const double s = ssim(x, y);
    CHECK(s >= -1.0);
    CHECK(s <= 1.0);
    CHECK(nrmse(x, y) >= 0.0);
    CHECK(mae(x, y) >= 0.0);
    CHECK(vif(x, y) >= 0.0);
  }
}

TEST_CASE("vif golden value from the reference implementation") {
  const Image gt = read_f32(std::filesystem::path(MRSR_TEST_DATA_DIR) / "vif_gt.f32", 64, 64);
  const Image pred = read_f32(std::filesystem::path(MRSR_TEST_DATA_DIR) / "vif_pred.f32", 64, 64);
  CHECK(std::abs(vif(gt, pred) - kVifGolden) <= 1e-9);
}

TEST_CASE("vif decreases with stronger blur") {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const Image x = test::phantom(128, seed);
    const double mild = vif(x, blur(x, 0.8));
    const double strong = vif(x, blur(x, 2.5));
    CHECK(strong < mild);
    CHECK(mild < 1.0);
  }
}

TEST_CASE("errors") {
  const Image a(32, 32, 0.5f);
  CHECK_THROWS_AS(ssim(a, Image(32, 31)), ShapeError);
  CHECK_THROWS_AS(ssim(Image(10, 10), Image(10, 10)), ShapeError);
  CHECK_THROWS_AS(mae(a, Image(31, 32)), ShapeError);
  CHECK_THROWS_AS(nrmse(Image(32, 32, 0.0f), a), DegenerateInputError);
  CHECK_THROWS_AS(vif(random_image(kVifMinExtent - 1, 64, 1), random_image(kVifMinExtent - 1, 64, 2)), ShapeError);
  CHECK_NOTHROW(vif(random_image(kVifMinExtent, kVifMinExtent, 1), random_image(kVifMinExtent, kVifMinExtent, 2)));
  CHECK_THROWS_AS(vif(Image(64, 64, 0.3f), Image(64, 64, 0.5f)), DegenerateInputError);
}

TEST_CASE("gaussian kernel") {
  const auto k = metrics::gaussian_kernel(11, 1.5);
  REQUIRE(k.size() == 11);
  double s = 0.0;
  for (double v : k) s += v;
  CHECK(s == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(k[5] > k[4]);
  CHECK(k[0] == doctest::Approx(k[10]).epsilon(1e-15));
  CHECK_THROWS_AS(metrics::gaussian_kernel(4, 1.0), ConfigError);
}

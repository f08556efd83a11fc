#include <cmath>

#include "doctest.h"
#include "fixtures.hpp"
#include "mrsr/losses.hpp"
#include "mrsr/models.hpp"
#include "oracles.hpp"

using namespace mrsr;
using test::random_tensor;
using VD = Var<double>;

namespace {

// conv "c1" (1 -> 2) -> ReLU -> conv "c2" (2 -> 1), single tap on c2.
BackboneSpec toy_spec(double tap_weight) {
  BackboneSpec s;
  s.layers = {{BackboneLayer::Kind::kConv, "c1", "f.0", 1, 2, 3, 1},
              {BackboneLayer::Kind::kRelu, "r1", "f.1", 2, 2, 0, 0},
              {BackboneLayer::Kind::kConv, "c2", "f.2", 2, 1, 3, 1}};
  s.taps = {{"c2", tap_weight}};
  return s;
}

// Zero-padded 3x3 correlation of one channel, written out directly.
std::vector<double> conv3x3(const std::vector<double>& img, int n, const double* k, double bias) {
  std::vector<double> out(n * n, bias);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int yy = y + dy, xx = x + dx;
          if (yy < 0 || yy >= n || xx < 0 || xx >= n) continue;
          out[y * n + x] += k[(dy + 1) * 3 + (dx + 1)] * img[yy * n + xx];
        }
  return out;
}

}  // namespace

TEST_CASE("pixel loss") {
  const auto x = VD::constant(random_tensor<double>({2, 1, 8, 8}, 1));
  CHECK(pixel_loss(x, x).value().item() == 0.0);
  CHECK(pixel_loss(VD::constant(Tensor<double>({1, 1, 4, 4}, 0.0)), VD::constant(Tensor<double>({1, 1, 4, 4}, 1.0)))
            .value()
            .item() == 1.0);

  const auto a = random_tensor<float>({2, 1, 16, 16}, 2, 0, 1);
  const auto b = random_tensor<float>({2, 1, 16, 16}, 3, 0, 1);
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += std::fabs(static_cast<double>(a.data()[i]) - b.data()[i]);
  CHECK(std::abs(pixel_loss(Var<float>::constant(a), Var<float>::constant(b)).value().item() - sum / a.size()) <=
        1e-7);
  CHECK_THROWS_AS(pixel_loss(x, VD::constant(Tensor<double>({2, 1, 8, 9}))), ShapeError);

  SUBCASE("scaling the error field increases the loss") {
    const auto hr = random_tensor<double>({1, 1, 8, 8}, 4);
    const auto sr = random_tensor<double>({1, 1, 8, 8}, 5);
    double prev = 0.0;
    for (double alpha : {1.0, 1.5, 2.0, 4.0}) {
      Tensor<double> s = hr;
      for (std::size_t i = 0; i < s.size(); ++i) s.data()[i] += alpha * (sr.data()[i] - hr.data()[i]);
      const double l = pixel_loss(VD::constant(s), VD::constant(hr)).value().item();
      CHECK(l > prev);
      prev = l;
    }
  }
}

TEST_CASE("relativistic adversarial losses") {
  const double two_ln2 = 2.0 * std::log(2.0);
  for (double c : {0.0, 3.5, -12.0}) {
    const auto z = VD::constant(Tensor<double>({2, 1, 4, 4}, c));
    const auto l = adversarial_losses(z, z);
    CHECK(std::abs(l.discriminator.value().item() - two_ln2) <= 1e-6);
    CHECK(std::abs(l.generator.value().item() - two_ln2) <= 1e-6);
  }
  SUBCASE("separated classes") {
    const auto l = adversarial_losses(VD::constant(Tensor<double>({1, 1, 4, 4}, 30.0)),
                                      VD::constant(Tensor<double>({1, 1, 4, 4}, -30.0)));
    CHECK(l.discriminator.value().item() < 1e-20);
    CHECK(l.generator.value().item() == doctest::Approx(120.0));
  }
  SUBCASE("matches the scalar-loop oracle") {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      const auto r = random_tensor<double>({2, 1, 4, 4}, seed, -3, 3);
      const auto f = random_tensor<double>({2, 1, 4, 4}, seed + 100, -3, 3);
      const auto l = adversarial_losses(VD::constant(r), VD::constant(f));
      const auto o = oracle::relativistic({r.values().begin(), r.values().end()}, {f.values().begin(), f.values().end()});
      CHECK(std::abs(l.discriminator.value().item() - o.discriminator) <= 1e-6);
      CHECK(std::abs(l.generator.value().item() - o.generator) <= 1e-6);
    }
  }
  SUBCASE("errors") {
    const auto ok = VD::constant(Tensor<double>({1, 1, 2, 2}, 0.0));
    CHECK_THROWS_AS(adversarial_losses(ok, VD::constant(Tensor<double>({1, 1, 2, 2}, std::nan("")))), NumericError);
    CHECK_THROWS_AS(adversarial_losses(ok, VD::constant(Tensor<double>({1, 1, 2, 3}))), ShapeError);
  }
}

TEST_CASE("combine") {
  const auto b = combine(0.5, 0.3, 0.2);
  CHECK(b.total_g == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(combine(0, 0, 0).total_g == 0.0);
  Rng rng(3);
  for (int i = 0; i < 20; ++i) {
    const double p = rng.uniform(), q = rng.uniform(), r = rng.uniform(-2, 2);
    CHECK(combine(p, q, r).total_g == p + q + r);
  }
  CHECK(combine(1, 1, 1, {1.0, 0.0, 0.5}).total_g == 1.5);
  CHECK_THROWS_AS(combine(std::nan(""), 0, 0), NumericError);
}

TEST_CASE("perceptual loss on a hand-set toy backbone") {
  FeatureExtractor<double> ex(toy_spec(0.5), 1);
  const double k1[2][9] = {{0, 1, 0, 1, -4, 1, 0, 1, 0}, {0.1, 0.2, 0.1, 0, 0, 0, -0.1, -0.2, -0.1}};
  const double k2[2][9] = {{1, 0, 0, 0, 1, 0, 0, 0, 1}, {0, 0, 0, 0, 2, 0, 0, 0, 0}};
  Tensor<double> w1({2, 1, 3, 3}), w2({1, 2, 3, 3});
  std::copy(&k1[0][0], &k1[0][0] + 18, w1.data());
  std::copy(&k2[0][0], &k2[0][0] + 18, w2.data());
  const Tensor<double> b1({2, 1, 1, 1}, std::vector<double>{0.05, -0.02});
  const Tensor<double> b2({1, 1, 1, 1}, std::vector<double>{0.3});
  ex.set_conv("c1", w1, b1);
  ex.set_conv("c2", w2, b2);

  const int n = 6;
  const auto sr = random_tensor<double>({1, 1, n, n}, 7, 0, 1);
  const auto hr = random_tensor<double>({1, 1, n, n}, 8, 0, 1);
  auto features = [&](const Tensor<double>& t) {
    const std::vector<double> img(t.values().begin(), t.values().end());
    std::vector<double> out(n * n, b2.data()[0]);
    for (int c = 0; c < 2; ++c) {
      auto h = conv3x3(img, n, k1[c], b1.data()[c]);
      for (double& v : h) v = std::max(v, 0.0);
      const auto contrib = conv3x3(h, n, k2[c], 0.0);
      for (int i = 0; i < n * n; ++i) out[i] += contrib[i];
    }
    return out;
  };
  const auto fs = features(sr), fh = features(hr);
  double expect = 0.0;
  for (int i = 0; i < n * n; ++i) expect += std::fabs(fs[i] - fh[i]);
  expect = 0.5 * expect / (n * n);
  CHECK(perceptual_loss(ex, VD::constant(sr), VD::constant(hr)).value().item() ==
        doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("perceptual loss with the VGG19 layout") {
  const BackboneSpec spec = vgg19_spec();
  REQUIRE(spec.taps.size() == 5);
  const char* names[] = {"conv1_2", "conv2_2", "conv3_4", "conv4_4", "conv5_4"};
  const double weights[] = {0.1, 0.1, 1, 1, 1};
  for (int i = 0; i < 5; ++i) {
    CHECK(spec.taps[i].layer == names[i]);
    CHECK(spec.taps[i].weight == weights[i]);
  }
  const FeatureExtractor<float> ex(spec, 19);
  CHECK(ex.min_input_extent() == 32);
  const auto x = Var<float>::constant(random_tensor<float>({1, 1, 32, 32}, 1, 0, 1));
  const auto y = Var<float>::constant(random_tensor<float>({1, 1, 32, 32}, 2, 0, 1));
  CHECK(perceptual_loss(ex, x, x).value().item() == 0.0f);
  const float xy = perceptual_loss(ex, x, y).value().item();
  CHECK(xy > 0.0f);
  CHECK(xy == doctest::Approx(perceptual_loss(ex, y, x).value().item()).epsilon(1e-6));
  CHECK_THROWS_AS(perceptual_loss(ex, Var<float>::constant(Tensor<float>({1, 1, 16, 16})),
                                  Var<float>::constant(Tensor<float>({1, 1, 16, 16}))),
                  ShapeError);

  SUBCASE("backbone parameters are frozen") {
    const auto p = Var<float>::parameter(x.value());
    backward(perceptual_loss(ex, p, y));
    double norm = 0.0;
    for (float g : p.grad().values()) norm += g * g;
    CHECK(norm > 0.0);
  }
}

TEST_CASE("total generator loss gradient on an 8x8 instance") {
  FeatureExtractor<double> ex(toy_spec(1.0), 3);
  DiscriminatorConfig dc;
  dc.base_channels = 4;
  const Discriminator<double> disc(dc, 4);
  const auto hr = VD::constant(random_tensor<double>({1, 1, 8, 8}, 5, 0, 1));
  const auto sr0 = random_tensor<double>({1, 1, 8, 8}, 6, 0, 1);

  auto total = [&](const VD& sr) {
    const auto adv = adversarial_losses(disc.forward(hr, false), disc.forward(sr, false));
    return ops::add(ops::add(pixel_loss(sr, hr), perceptual_loss(ex, sr, hr)), adv.generator);
  };
  const auto sr = VD::parameter(sr0);
  backward(total(sr));
  double worst = 0.0;
  const double h = 1e-6;
  for (std::size_t i = 0; i < sr0.size(); ++i) {
    Tensor<double> up = sr0, down = sr0;
    up.data()[i] += h;
    down.data()[i] -= h;
    NoGradGuard g;
    const double n = (total(VD::constant(up)).value().item() - total(VD::constant(down)).value().item()) / (2 * h);
    const double a = sr.grad().data()[i];
    worst = std::max(worst, std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-6}));
  }
  CHECK(worst <= 1e-3);
}

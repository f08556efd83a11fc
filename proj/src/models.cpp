#include "mrsr/models.hpp"

#include <cmath>

#include "mrsr/rng.hpp"

namespace mrsr {

namespace {

constexpr double kLeakySlope = 0.2;

enum class Init {
  kTorchDefault,   // U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weight and bias
  kScaledKaiming,  // N(0, 2/fan_in) * scale, zero bias
};

template <typename T>
ConvLayer<T> make_conv(std::string name, ConvGeometry geom, bool with_bias, Init init,
                       double init_scale, Rng& rng) {
  ConvLayer<T> layer;
  layer.name = std::move(name);
  layer.geom = geom;
  const double fan_in = static_cast<double>(geom.in_channels) * geom.kernel * geom.kernel;
  Tensor<T> w(geom.weight_shape());
  const double bound = 1.0 / std::sqrt(fan_in);
  const double std_dev = std::sqrt(2.0 / fan_in) * init_scale;
  for (T& v : w.values()) {
    v = static_cast<T>(init == Init::kTorchDefault ? rng.uniform(-bound, bound)
                                                   : rng.normal() * std_dev);
  }
  layer.weight = Var<T>::parameter(std::move(w));
  if (with_bias) {
    Tensor<T> b({geom.out_channels, 1, 1, 1});
    if (init == Init::kTorchDefault) {
      for (T& v : b.values()) v = static_cast<T>(rng.uniform(-bound, bound));
    }
    layer.bias = Var<T>::parameter(std::move(b));
  }
  return layer;
}

ConvGeometry conv3(int in, int out) { return {in, out, 3, 1, 1}; }

template <typename T>
void collect(const ConvLayer<T>& layer, std::vector<NamedParam<T>>& out) {
  out.push_back({layer.name + ".weight", layer.weight});
  if (layer.bias.defined()) out.push_back({layer.name + ".bias", layer.bias});
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

}  // namespace

void GeneratorConfig::validate() const {
  require(in_channels == 1, "generator in_channels must be 1 (grayscale)");
  require(out_channels == 1, "generator out_channels must be 1 (grayscale)");
  require(base_channels > 0, "generator base_channels must be positive");
  require(growth_channels > 0, "generator growth_channels must be positive");
  require(num_rrdb >= 1, "generator num_rrdb must be >= 1");
  require(dense_blocks_per_rrdb >= 1, "generator dense_blocks_per_rrdb must be >= 1");
  require(convs_per_dense_block >= 2, "generator convs_per_dense_block must be >= 2");
  require(residual_scale_beta >= 0.0 && residual_scale_beta < 1.0,
          "generator residual_scale_beta must lie in [0, 1)");
  require(scale == 4, "generator scale must be 4 (two x2 nearest-neighbour stages)");
  require(upsample_mode == "nearest", "generator upsample_mode must be 'nearest'");
}

void DiscriminatorConfig::validate() const {
  require(in_channels == 1, "discriminator in_channels must be 1 (grayscale)");
  require(base_channels > 0, "discriminator base_channels must be positive");
  require(num_down_stages >= 1, "discriminator num_down_stages must be >= 1");
  require(num_up_stages == num_down_stages,
          "discriminator num_up_stages must equal num_down_stages");
  require(leaky_slope >= 0.0 && leaky_slope < 1.0, "discriminator leaky_slope must lie in [0, 1)");
}

template <typename T>
Var<T> ConvLayer<T>::operator()(const Var<T>& x, bool update_spectral) const {
  if (spectral) {
    return ops::conv2d(x, ops::spectral_normalize(weight, *spectral, update_spectral), bias, geom);
  }
  return ops::conv2d(x, weight, bias, geom);
}

template <typename T>
std::size_t ConvLayer<T>::parameter_count() const {
  return weight.value().size() + (bias.defined() ? bias.value().size() : 0);
}

// ---------------------------------------------------------------------------
// Generator

template <typename T>
Generator<T>::Generator(const GeneratorConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  const int nf = cfg_.base_channels;
  const int gc = cfg_.growth_channels;
  const int k = cfg_.convs_per_dense_block;

  conv_first_ = make_conv<T>("conv_first", conv3(cfg_.in_channels, nf), true, Init::kTorchDefault,
                             1.0, rng);
  trunk_.resize(cfg_.num_rrdb);
  for (int b = 0; b < cfg_.num_rrdb; ++b) {
    trunk_[b].resize(cfg_.dense_blocks_per_rrdb);
    for (int d = 0; d < cfg_.dense_blocks_per_rrdb; ++d) {
      for (int c = 0; c < k; ++c) {
        const int in = nf + c * gc;
        const int out = c == k - 1 ? nf : gc;
        const std::string name = "body." + std::to_string(b) + ".rdb" + std::to_string(d + 1) +
                                 ".conv" + std::to_string(c + 1);
        trunk_[b][d].push_back(
            make_conv<T>(name, conv3(in, out), true, Init::kScaledKaiming, 0.1, rng));
      }
    }
  }
  conv_body_ = make_conv<T>("conv_body", conv3(nf, nf), true, Init::kTorchDefault, 1.0, rng);
  conv_up1_ = make_conv<T>("conv_up1", conv3(nf, nf), true, Init::kTorchDefault, 1.0, rng);
  conv_up2_ = make_conv<T>("conv_up2", conv3(nf, nf), true, Init::kTorchDefault, 1.0, rng);
  conv_hr_ = make_conv<T>("conv_hr", conv3(nf, nf), true, Init::kTorchDefault, 1.0, rng);
  conv_last_ = make_conv<T>("conv_last", conv3(nf, cfg_.out_channels), true, Init::kTorchDefault,
                            1.0, rng);
}

template <typename T>
Var<T> Generator<T>::dense_block(int block, int dense, const Var<T>& x) const {
  const auto& convs = trunk_[block][dense];
  std::vector<Var<T>> features{x};
  const T slope = static_cast<T>(kLeakySlope);
  for (std::size_t c = 0; c + 1 < convs.size(); ++c) {
    Var<T> in = features.size() == 1 ? x : ops::concat_channels(features);
    features.push_back(ops::leaky_relu(convs[c](in, false), slope));
  }
  Var<T> last = convs.back()(ops::concat_channels(features), false);
  return ops::add(x, ops::scale(last, static_cast<T>(cfg_.residual_scale_beta)));
}

template <typename T>
Var<T> Generator<T>::rrdb_forward(int block, const Var<T>& x) const {
  if (block < 0 || block >= cfg_.num_rrdb) throw Error("rrdb index out of range");
  if (x.shape().c != cfg_.base_channels) {
    throw ShapeError("rrdb expects " + std::to_string(cfg_.base_channels) + " channels, got " +
                     x.shape().str());
  }
  Var<T> out = x;
  for (int d = 0; d < cfg_.dense_blocks_per_rrdb; ++d) out = dense_block(block, d, out);
  return ops::add(x, ops::scale(out, static_cast<T>(cfg_.residual_scale_beta)));
}

template <typename T>
Var<T> Generator<T>::forward(const Var<T>& lr) const {
  const Shape4& s = lr.shape();
  if (s.c != cfg_.in_channels) {
    throw ShapeError("generator expects " + std::to_string(cfg_.in_channels) +
                     "-channel input, got " + s.str());
  }
  if (s.n < 1 || s.h < 1 || s.w < 1) throw ShapeError("generator input is empty: " + s.str());
  const T slope = static_cast<T>(kLeakySlope);
  Var<T> feat = conv_first_(lr, false);
  Var<T> body = feat;
  for (int b = 0; b < cfg_.num_rrdb; ++b) body = rrdb_forward(b, body);
  feat = ops::add(feat, conv_body_(body, false));
  feat = ops::leaky_relu(conv_up1_(ops::upsample_nearest2(feat), false), slope);
  feat = ops::leaky_relu(conv_up2_(ops::upsample_nearest2(feat), false), slope);
  return conv_last_(ops::leaky_relu(conv_hr_(feat, false), slope), false);
}

template <typename T>
Tensor<T> Generator<T>::infer(const Tensor<T>& lr) const {
  NoGradGuard guard;
  return forward(Var<T>::constant(lr)).value();
}

template <typename T>
std::vector<NamedParam<T>> Generator<T>::parameters() const {
  std::vector<NamedParam<T>> out;
  collect(conv_first_, out);
  for (const auto& block : trunk_)
    for (const auto& dense : block)
      for (const auto& conv : dense) collect(conv, out);
  collect(conv_body_, out);
  collect(conv_up1_, out);
  collect(conv_up2_, out);
  collect(conv_hr_, out);
  collect(conv_last_, out);
  return out;
}

template <typename T>
std::size_t Generator<T>::parameter_count() const {
  std::size_t total = 0;
  for (const auto& p : parameters()) total += p.var.value().size();
  return total;
}

template <typename T>
void Generator<T>::set_requires_grad(bool on) {
  for (auto& p : parameters()) p.var.set_requires_grad(on);
}

// ---------------------------------------------------------------------------
// Discriminator

template <typename T>
Discriminator<T>::Discriminator(const DiscriminatorConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  const int nf = cfg_.base_channels;
  const int stages = cfg_.num_down_stages;
  auto width = [nf](int level) { return nf << level; };
  int index = 0;
  auto next_name = [&index] { return "conv" + std::to_string(index++); };

  layers_.push_back(make_conv<T>(next_name(), conv3(cfg_.in_channels, nf), true,
                                 Init::kTorchDefault, 1.0, rng));
  for (int s = 0; s < stages; ++s) {
    layers_.push_back(make_conv<T>(next_name(), {width(s), width(s + 1), 4, 2, 1}, false,
                                   Init::kTorchDefault, 1.0, rng));
  }
  for (int s = stages; s > 0; --s) {
    layers_.push_back(make_conv<T>(next_name(), conv3(width(s), width(s - 1)), false,
                                   Init::kTorchDefault, 1.0, rng));
  }
  layers_.push_back(make_conv<T>(next_name(), conv3(nf, nf), false, Init::kTorchDefault, 1.0, rng));
  layers_.push_back(make_conv<T>(next_name(), conv3(nf, nf), false, Init::kTorchDefault, 1.0, rng));
  layers_.push_back(make_conv<T>(next_name(), conv3(nf, 1), true, Init::kTorchDefault, 1.0, rng));

  if (cfg_.spectral_norm) {
    // Every conv except the input and output convs.
    for (std::size_t i = 1; i + 1 < layers_.size(); ++i) {
      ConvLayer<T>& layer = layers_[i];
      SpectralState<T> st;
      st.u.resize(layer.geom.out_channels);
      for (T& e : st.u) e = static_cast<T>(rng.normal());
      power_iterate(layer.weight.value(), st, kSpectralWarmupIterations);
      layer.spectral = std::move(st);
    }
  }
}

template <typename T>
Var<T> Discriminator<T>::forward(const Var<T>& img, bool update_spectral) const {
  const Shape4& s = img.shape();
  if (s.c != cfg_.in_channels) {
    throw ShapeError("discriminator expects " + std::to_string(cfg_.in_channels) +
                     "-channel input, got " + s.str());
  }
  const int factor = 1 << cfg_.num_down_stages;
  if (s.h < factor || s.w < factor || s.h % factor != 0 || s.w % factor != 0) {
    throw ShapeError("discriminator input " + s.str() + " must have spatial dims divisible by " +
                     std::to_string(factor));
  }
  const T slope = static_cast<T>(cfg_.leaky_slope);
  const int stages = cfg_.num_down_stages;
  std::vector<Var<T>> skips;
  Var<T> h = ops::leaky_relu(layers_[0](img, update_spectral), slope);
  skips.push_back(h);
  for (int i = 1; i <= stages; ++i) {
    h = ops::leaky_relu(layers_[i](h, update_spectral), slope);
    if (i < stages) skips.push_back(h);
  }
  for (int i = 0; i < stages; ++i) {
    h = ops::upsample_bilinear2(h);
    h = ops::leaky_relu(layers_[stages + 1 + i](h, update_spectral), slope);
    h = ops::add(h, skips[stages - 1 - i]);
  }
  const std::size_t tail = 2 * stages + 1;
  h = ops::leaky_relu(layers_[tail](h, update_spectral), slope);
  h = ops::leaky_relu(layers_[tail + 1](h, update_spectral), slope);
  return layers_[tail + 2](h, update_spectral);
}

template <typename T>
std::vector<NamedParam<T>> Discriminator<T>::parameters() const {
  std::vector<NamedParam<T>> out;
  for (const auto& layer : layers_) collect(layer, out);
  return out;
}

template <typename T>
std::size_t Discriminator<T>::parameter_count() const {
  std::size_t total = 0;
  for (const auto& layer : layers_) total += layer.parameter_count();
  return total;
}

template <typename T>
void Discriminator<T>::set_requires_grad(bool on) {
  for (auto& p : parameters()) p.var.set_requires_grad(on);
}

template struct ConvLayer<float>;
template struct ConvLayer<double>;
template class Generator<float>;
template class Generator<double>;
template class Discriminator<float>;
template class Discriminator<double>;

}  // namespace mrsr

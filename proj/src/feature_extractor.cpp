#include "mrsr/feature_extractor.hpp"

#include <algorithm>
#include <cmath>

#include "mrsr/checkpoint.hpp"
#include "mrsr/rng.hpp"

namespace mrsr {

BackboneSpec vgg19_spec() {
  BackboneSpec spec;
  // Channel plan of the five VGG19 conv groups.
  const int groups[5][2] = {{64, 2}, {128, 2}, {256, 4}, {512, 4}, {512, 4}};
  int index = 0;
  int in = 3;
  for (int g = 0; g < 5; ++g) {
    const int out = groups[g][0];
    for (int c = 0; c < groups[g][1]; ++c) {
      const std::string suffix = std::to_string(g + 1) + "_" + std::to_string(c + 1);
      spec.layers.push_back({BackboneLayer::Kind::kConv, "conv" + suffix,
                             "features." + std::to_string(index++), in, out, 3, 1});
      spec.layers.push_back({BackboneLayer::Kind::kRelu, "relu" + suffix,
                             "features." + std::to_string(index++), out, out, 0, 0});
      in = out;
    }
    spec.layers.push_back({BackboneLayer::Kind::kMaxPool, "pool" + std::to_string(g + 1),
                           "features." + std::to_string(index++), out, out, 0, 0});
  }
  spec.taps = {{"conv1_2", 0.1}, {"conv2_2", 0.1}, {"conv3_4", 1.0}, {"conv4_4", 1.0},
               {"conv5_4", 1.0}};
  spec.input_mean = {0.485, 0.456, 0.406};
  spec.input_std = {0.229, 0.224, 0.225};
  return spec;
}

namespace {

std::size_t deepest_tap(const BackboneSpec& spec) {
  std::size_t deepest = 0;
  for (const auto& tap : spec.taps) {
    auto it = std::find_if(spec.layers.begin(), spec.layers.end(), [&](const BackboneLayer& l) {
      return l.name == tap.layer && l.kind == BackboneLayer::Kind::kConv;
    });
    if (it == spec.layers.end()) throw ConfigError("perceptual tap '" + tap.layer + "' is not a conv layer");
    if (tap.weight < 0) throw ConfigError("perceptual tap weights must be nonnegative");
    deepest = std::max(deepest, static_cast<std::size_t>(it - spec.layers.begin()));
  }
  if (spec.taps.empty()) throw ConfigError("perceptual backbone has no taps");
  return deepest;
}

}  // namespace

template <typename T>
FeatureExtractor<T>::FeatureExtractor(BackboneSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
  deepest_tap(spec_);
  Rng rng(seed);
  convs_.resize(spec_.layers.size());
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const BackboneLayer& l = spec_.layers[i];
    if (l.kind != BackboneLayer::Kind::kConv) continue;
    Tensor<T> w({l.out_channels, l.in_channels, l.kernel, l.kernel});
    const double std_dev = std::sqrt(2.0 / (static_cast<double>(l.in_channels) * l.kernel * l.kernel));
    for (T& v : w.values()) v = static_cast<T>(rng.normal() * std_dev);
    convs_[i].weight = Var<T>::constant(std::move(w));
    convs_[i].bias = Var<T>::constant(Tensor<T>({l.out_channels, 1, 1, 1}));
  }
  weights_source_ = "random-init(seed=" + std::to_string(seed) + ")";
}

template <typename T>
FeatureExtractor<T> FeatureExtractor<T>::from_archive(BackboneSpec spec,
                                                      const std::filesystem::path& path) {
  FeatureExtractor ex(std::move(spec), 0);
  const TensorArchive ar = TensorArchive::load(path);
  for (std::size_t i = 0; i < ex.spec_.layers.size(); ++i) {
    const BackboneLayer& l = ex.spec_.layers[i];
    if (l.kind != BackboneLayer::Kind::kConv) continue;
    Tensor<T> w = ar.get_tensor<T>(l.param_prefix + ".weight");
    Tensor<T> b = ar.get_tensor<T>(l.param_prefix + ".bias");
    const Shape4 expected{l.out_channels, l.in_channels, l.kernel, l.kernel};
    if (!(w.shape() == expected) || b.size() != static_cast<std::size_t>(l.out_channels)) {
      throw ShapeError("backbone weight " + l.param_prefix + " has shape " + w.shape().str() +
                       ", expected " + expected.str());
    }
    ex.convs_[i].weight = Var<T>::constant(std::move(w));
    ex.convs_[i].bias = Var<T>::constant(std::move(b));
  }
  ex.weights_source_ = path.string() + " (" + file_fingerprint(path) + ")";
  return ex;
}

template <typename T>
int FeatureExtractor<T>::min_input_extent() const {
  const std::size_t last = deepest_tap(spec_);
  int pools = 0;
  for (std::size_t i = 0; i <= last; ++i) {
    if (spec_.layers[i].kind == BackboneLayer::Kind::kMaxPool) ++pools;
  }
  // The deepest tapped feature map must be at least 2x2.
  return 2 << pools;
}

template <typename T>
std::vector<Var<T>> FeatureExtractor<T>::features(const Var<T>& x) const {
  const int min_extent = min_input_extent();
  if (x.shape().h < min_extent || x.shape().w < min_extent) {
    throw ShapeError("perceptual backbone needs inputs of at least " + std::to_string(min_extent) +
                     "x" + std::to_string(min_extent) + ", got " + x.shape().str());
  }
  Var<T> h = x;
  if (!spec_.input_mean.empty()) {
    std::vector<T> mean(spec_.input_mean.begin(), spec_.input_mean.end());
    std::vector<T> stdv(spec_.input_std.begin(), spec_.input_std.end());
    h = ops::channel_normalize(h, mean, stdv);
  }
  const std::size_t last = deepest_tap(spec_);
  std::vector<Var<T>> taps(spec_.taps.size());
  for (std::size_t i = 0; i <= last; ++i) {
    const BackboneLayer& l = spec_.layers[i];
    switch (l.kind) {
      case BackboneLayer::Kind::kConv:
        h = ops::conv2d(h, convs_[i].weight, convs_[i].bias,
                        ConvGeometry{l.in_channels, l.out_channels, l.kernel, 1, l.padding});
        for (std::size_t t = 0; t < spec_.taps.size(); ++t) {
          if (spec_.taps[t].layer == l.name) taps[t] = h;
        }
        break;
      case BackboneLayer::Kind::kRelu:
        h = ops::leaky_relu(h, T{0});
        break;
      case BackboneLayer::Kind::kMaxPool:
        h = ops::max_pool2(h);
        break;
    }
  }
  return taps;
}

template <typename T>
void FeatureExtractor<T>::set_conv(const std::string& layer, const Tensor<T>& weight,
                                   const Tensor<T>& bias) {
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const BackboneLayer& l = spec_.layers[i];
    if (l.name != layer || l.kind != BackboneLayer::Kind::kConv) continue;
    if (!(weight.shape() == Shape4{l.out_channels, l.in_channels, l.kernel, l.kernel})) {
      throw ShapeError("set_conv: weight shape mismatch for " + layer);
    }
    convs_[i].weight = Var<T>::constant(weight);
    convs_[i].bias = Var<T>::constant(bias);
    weights_source_ = "manual";
    return;
  }
  throw ConfigError("no conv layer named " + layer);
}

template class FeatureExtractor<float>;
template class FeatureExtractor<double>;

}  // namespace mrsr

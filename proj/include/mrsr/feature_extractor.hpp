#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mrsr/autograd.hpp"

namespace mrsr {

struct BackboneLayer {
  enum class Kind { kConv, kRelu, kMaxPool };
  Kind kind = Kind::kConv;
  std::string name;          // e.g. "conv3_4"; taps refer to these names
  std::string param_prefix;  // e.g. "features.16" for torchvision VGG19 weights
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 3;
  int padding = 1;
};

struct FeatureTap {
  std::string layer;  // name of a conv layer; its pre-activation output is used
  double weight = 1.0;
};

struct BackboneSpec {
  std::vector<BackboneLayer> layers;
  std::vector<FeatureTap> taps;
  // When non-empty, a 1-channel input is replicated to input_mean.size()
  // channels and normalised per channel before the first layer.
  std::vector<double> input_mean;
  std::vector<double> input_std;
};

// VGG19 convolutional trunk with taps conv1_2, conv2_2, conv3_4, conv4_4,
// conv5_4 weighted (0.1, 0.1, 1, 1, 1) and ImageNet input statistics.
BackboneSpec vgg19_spec();

// Frozen backbone used for the perceptual loss. Parameters never require
// gradients; gradients flow only to the input.
template <typename T>
class FeatureExtractor {
 public:
  // Seeded He-normal initialisation (used when no pretrained file is given).
  FeatureExtractor(BackboneSpec spec, std::uint64_t seed);

  // Loads "<param_prefix>.weight" / ".bias" tensors from a tensor archive.
  static FeatureExtractor from_archive(BackboneSpec spec, const std::filesystem::path& path);

  const BackboneSpec& spec() const { return spec_; }
  // Human-readable description of where the weights came from.
  const std::string& weights_source() const { return weights_source_; }

  // Smallest spatial extent accepted by features().
  int min_input_extent() const;

  // Tap outputs in spec().taps order. Stops after the deepest tap.
  std::vector<Var<T>> features(const Var<T>& x) const;

  // Overwrite one conv's parameters (toy backbones in tests).
  void set_conv(const std::string& layer, const Tensor<T>& weight, const Tensor<T>& bias);

 private:
  struct Conv {
    Var<T> weight;
    Var<T> bias;
  };

  BackboneSpec spec_;
  std::vector<Conv> convs_;  // parallel to spec_.layers (unused for non-conv entries)
  std::string weights_source_;
};

}  // namespace mrsr

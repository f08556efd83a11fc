#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mrsr/autograd.hpp"

namespace mrsr {

struct GeneratorConfig {
  int in_channels = 1;
  int out_channels = 1;
  int base_channels = 64;
  int growth_channels = 32;
  int num_rrdb = 23;
  int dense_blocks_per_rrdb = 3;
  int convs_per_dense_block = 5;
  double residual_scale_beta = 0.2;
  int scale = 4;
  std::string upsample_mode = "nearest";

  // Throws ConfigError. beta = 0 is accepted here so the identity property
  // of the residual blocks can be exercised; run configs require (0, 1).
  void validate() const;
  bool operator==(const GeneratorConfig&) const = default;
};

struct DiscriminatorConfig {
  int in_channels = 1;
  int base_channels = 64;
  int num_down_stages = 3;
  int num_up_stages = 3;
  bool spectral_norm = true;
  double leaky_slope = 0.2;

  void validate() const;
  bool operator==(const DiscriminatorConfig&) const = default;
};

template <typename T>
struct NamedParam {
  std::string name;
  Var<T> var;
};

// One convolution with optional bias and optional spectral normalisation.
template <typename T>
struct ConvLayer {
  std::string name;
  ConvGeometry geom;
  Var<T> weight;
  Var<T> bias;  // undefined when the layer has no bias
  // Refreshed by training-mode forwards, hence mutable.
  mutable std::optional<SpectralState<T>> spectral;

  Var<T> operator()(const Var<T>& x, bool update_spectral) const;
  std::size_t parameter_count() const;
};

// Residual-in-residual dense block network for x4 single-channel SR.
template <typename T>
class Generator {
 public:
  Generator(const GeneratorConfig& cfg, std::uint64_t seed);

  const GeneratorConfig& config() const { return cfg_; }

  // (B, in, H, W) -> (B, out, 4H, 4W).
  Var<T> forward(const Var<T>& lr) const;
  // Forward through one RRDB of the trunk, for block-level checks.
  Var<T> rrdb_forward(int block, const Var<T>& x) const;
  // Evaluation-mode forward without recording a graph.
  Tensor<T> infer(const Tensor<T>& lr) const;

  std::vector<NamedParam<T>> parameters() const;
  std::size_t parameter_count() const;
  void set_requires_grad(bool on);

 private:
  Var<T> dense_block(int block, int dense, const Var<T>& x) const;

  GeneratorConfig cfg_;
  ConvLayer<T> conv_first_;
  // trunk_[block][dense][conv]
  std::vector<std::vector<std::vector<ConvLayer<T>>>> trunk_;
  ConvLayer<T> conv_body_;
  ConvLayer<T> conv_up1_;
  ConvLayer<T> conv_up2_;
  ConvLayer<T> conv_hr_;
  ConvLayer<T> conv_last_;
};

// U-Net discriminator producing a per-pixel realness logit map.
template <typename T>
class Discriminator {
 public:
  Discriminator(const DiscriminatorConfig& cfg, std::uint64_t seed);

  const DiscriminatorConfig& config() const { return cfg_; }

  // update_spectral = true advances the power iteration (training mode).
  Var<T> forward(const Var<T>& img, bool update_spectral) const;

  std::vector<NamedParam<T>> parameters() const;
  std::size_t parameter_count() const;
  void set_requires_grad(bool on);

  // Layers in forward order; spectral state is reachable through them.
  const std::vector<ConvLayer<T>>& layers() const { return layers_; }
  std::vector<ConvLayer<T>>& layers() { return layers_; }

 private:
  DiscriminatorConfig cfg_;
  // conv0, N down convs, N up convs, two refinement convs, output conv.
  std::vector<ConvLayer<T>> layers_;
};

// Power iterations used to settle the spectral state at construction.
inline constexpr int kSpectralWarmupIterations = 500;

}  // namespace mrsr

#pragma once

// Run configuration: one JSON document with sections
//
//   { "train": {...}, "generator": {...}, "discriminator": {...},
//     "data": {...}, "perceptual": {...} }
//
// Every section and key is optional; missing keys keep their defaults.
// Unknown keys are rejected with the dotted key path in the message.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>

#include "json.hpp"
#include "mrsr/losses.hpp"
#include "mrsr/models.hpp"

namespace mrsr {

struct TrainConfig {
  double learning_rate = 1e-4;
  std::int64_t iterations = 300000;
  int batch_size = 1;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.99;
  double adam_epsilon = 1e-8;
  std::uint64_t seed = 0;
  std::int64_t checkpoint_every = 5000;
  std::int64_t log_every = 100;
  LossWeights loss_weights;
  // Exponential moving average of generator weights; 0 disables it.
  double ema_decay = 0.0;
  // Global gradient-norm clip per network; 0 disables it.
  double grad_clip = 0.0;
  // Side of the random HR crop taken from each training pair; 0 uses the
  // whole slice.
  int hr_crop = 0;

  void validate() const;
};

struct DataConfig {
  std::uint64_t seed = 0;
  double split_fraction = 0.8;
  int scale = 4;
  int pad_to = 256;
  std::string blank_rule = "all_zero";
  std::array<int, 3> expected_shape{240, 240, 155};

  void validate() const;
};

struct PerceptualConfig {
  // Tensor archive with torchvision-named VGG19 weights. Empty means: use
  // $MRSR_VGG19_WEIGHTS, else a seeded random initialisation.
  std::string weights_path;
  std::uint64_t init_seed = 19;
};

inline constexpr const char* kVggWeightsEnv = "MRSR_VGG19_WEIGHTS";

struct RunConfig {
  TrainConfig train;
  GeneratorConfig generator;
  DiscriminatorConfig discriminator;
  DataConfig data;
  PerceptualConfig perceptual;

  // Throws ConfigError on unknown keys, wrong types or invalid values.
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;

  void validate() const;
  // Applies the single --seed override to every seeded component.
  void set_seed(std::uint64_t seed);
  // Weights path after the environment fallback; empty if none.
  std::string resolved_vgg_weights() const;
};

nlohmann::json to_json(const GeneratorConfig& c);
nlohmann::json to_json(const DiscriminatorConfig& c);
GeneratorConfig generator_config_from_json(const nlohmann::json& j);
DiscriminatorConfig discriminator_config_from_json(const nlohmann::json& j);

}  // namespace mrsr

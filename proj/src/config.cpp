#include "mrsr/config.hpp"

#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>

#include "mrsr/errors.hpp"

namespace mrsr {

using nlohmann::json;

namespace {

// Dispatches each key of a JSON object to a handler; unknown keys throw.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("config section '" + path_ + "' must be an object");
  }

  template <typename T>
  Section& field(const std::string& key, T& out) {
    handlers_[key] = [this, key, &out](const json& v) {
      try {
        out = v.get<T>();
      } catch (const json::exception&) {
        throw ConfigError("config key '" + qualified(key) + "' has the wrong type");
      }
    };
    return *this;
  }

  Section& nested(const std::string& key, std::function<void(const json&, const std::string&)> fn) {
    handlers_[key] = [this, key, fn](const json& v) { fn(v, qualified(key)); };
    return *this;
  }

  void run() const {
    for (const auto& [key, value] : j_.items()) {
      auto it = handlers_.find(key);
      if (it == handlers_.end()) throw ConfigError("unknown config key '" + qualified(key) + "'");
      it->second(value);
    }
  }

 private:
  std::string qualified(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  const json& j_;
  std::string path_;
  std::map<std::string, std::function<void(const json&)>> handlers_;
};

void read_generator(const json& j, const std::string& path, GeneratorConfig& c) {
  Section(j, path)
      .field("in_channels", c.in_channels)
      .field("out_channels", c.out_channels)
      .field("base_channels", c.base_channels)
      .field("growth_channels", c.growth_channels)
      .field("num_rrdb", c.num_rrdb)
      .field("dense_blocks_per_rrdb", c.dense_blocks_per_rrdb)
      .field("convs_per_dense_block", c.convs_per_dense_block)
      .field("residual_scale_beta", c.residual_scale_beta)
      .field("scale", c.scale)
      .field("upsample_mode", c.upsample_mode)
      .run();
}

void read_discriminator(const json& j, const std::string& path, DiscriminatorConfig& c) {
  Section(j, path)
      .field("in_channels", c.in_channels)
      .field("base_channels", c.base_channels)
      .field("num_down_stages", c.num_down_stages)
      .field("num_up_stages", c.num_up_stages)
      .field("spectral_norm", c.spectral_norm)
      .field("leaky_slope", c.leaky_slope)
      .run();
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

}  // namespace

void TrainConfig::validate() const {
  require(learning_rate > 0.0, "train.learning_rate must be > 0");
  require(iterations >= 1, "train.iterations must be >= 1");
  require(batch_size >= 1, "train.batch_size must be >= 1");
  require(adam_beta1 >= 0.0 && adam_beta1 < 1.0, "train.adam_beta1 must lie in [0, 1)");
  require(adam_beta2 >= 0.0 && adam_beta2 < 1.0, "train.adam_beta2 must lie in [0, 1)");
  require(adam_epsilon > 0.0, "train.adam_epsilon must be > 0");
  require(checkpoint_every >= 1, "train.checkpoint_every must be >= 1");
  require(log_every >= 1, "train.log_every must be >= 1");
  require(loss_weights.pixel >= 0.0 && loss_weights.perceptual >= 0.0 &&
              loss_weights.adversarial >= 0.0,
          "train.loss_weights must be non-negative");
  require(ema_decay >= 0.0 && ema_decay < 1.0, "train.ema_decay must lie in [0, 1)");
  require(grad_clip >= 0.0, "train.grad_clip must be >= 0");
  require(hr_crop >= 0 && hr_crop % 4 == 0, "train.hr_crop must be 0 or a multiple of 4");
}

void DataConfig::validate() const {
  require(split_fraction >= 0.0 && split_fraction <= 1.0, "data.split_fraction must lie in [0, 1]");
  require(scale == 4, "data.scale is fixed at 4");
  require(pad_to == 256, "data.pad_to is fixed at 256");
  require(blank_rule == "all_zero", "data.blank_rule must be 'all_zero'");
  for (int e : expected_shape) require(e > 0, "data.expected_shape extents must be positive");
  require(expected_shape[0] <= pad_to && expected_shape[1] <= pad_to,
          "data.expected_shape in-plane extents must not exceed pad_to");
}

RunConfig RunConfig::from_json(const json& j) {
  RunConfig c;
  Section(j, "")
      .nested("train",
              [&c](const json& v, const std::string& p) {
                TrainConfig& t = c.train;
                Section(v, p)
                    .field("learning_rate", t.learning_rate)
                    .field("iterations", t.iterations)
                    .field("batch_size", t.batch_size)
                    .field("adam_beta1", t.adam_beta1)
                    .field("adam_beta2", t.adam_beta2)
                    .field("adam_epsilon", t.adam_epsilon)
                    .field("seed", t.seed)
                    .field("checkpoint_every", t.checkpoint_every)
                    .field("log_every", t.log_every)
                    .nested("loss_weights",
                            [&t](const json& w, const std::string& wp) {
                              Section(w, wp)
                                  .field("pixel", t.loss_weights.pixel)
                                  .field("perceptual", t.loss_weights.perceptual)
                                  .field("adversarial", t.loss_weights.adversarial)
                                  .run();
                            })
                    .field("ema_decay", t.ema_decay)
                    .field("grad_clip", t.grad_clip)
                    .field("hr_crop", t.hr_crop)
                    .run();
              })
      .nested("generator",
              [&c](const json& v, const std::string& p) { read_generator(v, p, c.generator); })
      .nested("discriminator",
              [&c](const json& v, const std::string& p) { read_discriminator(v, p, c.discriminator); })
      .nested("data",
              [&c](const json& v, const std::string& p) {
                DataConfig& d = c.data;
                Section(v, p)
                    .field("seed", d.seed)
                    .field("split_fraction", d.split_fraction)
                    .field("scale", d.scale)
                    .field("pad_to", d.pad_to)
                    .field("blank_rule", d.blank_rule)
                    .field("expected_shape", d.expected_shape)
                    .run();
              })
      .nested("perceptual",
              [&c](const json& v, const std::string& p) {
                Section(v, p)
                    .field("weights_path", c.perceptual.weights_path)
                    .field("init_seed", c.perceptual.init_seed)
                    .run();
              })
      .run();
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return from_json(j);
}

json to_json(const GeneratorConfig& c) {
  return {{"in_channels", c.in_channels},
          {"out_channels", c.out_channels},
          {"base_channels", c.base_channels},
          {"growth_channels", c.growth_channels},
          {"num_rrdb", c.num_rrdb},
          {"dense_blocks_per_rrdb", c.dense_blocks_per_rrdb},
          {"convs_per_dense_block", c.convs_per_dense_block},
          {"residual_scale_beta", c.residual_scale_beta},
          {"scale", c.scale},
          {"upsample_mode", c.upsample_mode}};
}

json to_json(const DiscriminatorConfig& c) {
  return {{"in_channels", c.in_channels},
          {"base_channels", c.base_channels},
          {"num_down_stages", c.num_down_stages},
          {"num_up_stages", c.num_up_stages},
          {"spectral_norm", c.spectral_norm},
          {"leaky_slope", c.leaky_slope}};
}

GeneratorConfig generator_config_from_json(const json& j) {
  GeneratorConfig c;
  read_generator(j, "generator", c);
  return c;
}

DiscriminatorConfig discriminator_config_from_json(const json& j) {
  DiscriminatorConfig c;
  read_discriminator(j, "discriminator", c);
  return c;
}

json RunConfig::to_json() const {
  const auto& t = train;
  return {{"train",
           {{"learning_rate", t.learning_rate},
            {"iterations", t.iterations},
            {"batch_size", t.batch_size},
            {"adam_beta1", t.adam_beta1},
            {"adam_beta2", t.adam_beta2},
            {"adam_epsilon", t.adam_epsilon},
            {"seed", t.seed},
            {"checkpoint_every", t.checkpoint_every},
            {"log_every", t.log_every},
            {"loss_weights",
             {{"pixel", t.loss_weights.pixel},
              {"perceptual", t.loss_weights.perceptual},
              {"adversarial", t.loss_weights.adversarial}}},
            {"ema_decay", t.ema_decay},
            {"grad_clip", t.grad_clip},
            {"hr_crop", t.hr_crop}}},
          {"generator", mrsr::to_json(generator)},
          {"discriminator", mrsr::to_json(discriminator)},
          {"data",
           {{"seed", data.seed},
            {"split_fraction", data.split_fraction},
            {"scale", data.scale},
            {"pad_to", data.pad_to},
            {"blank_rule", data.blank_rule},
            {"expected_shape", data.expected_shape}}},
          {"perceptual",
           {{"weights_path", perceptual.weights_path}, {"init_seed", perceptual.init_seed}}}};
}

void RunConfig::validate() const {
  train.validate();
  data.validate();
  try {
    generator.validate();
    discriminator.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("invalid model config: ") + e.what());
  }
  require(generator.residual_scale_beta > 0.0,
          "generator.residual_scale_beta must lie in (0, 1) for training");
}

void RunConfig::set_seed(std::uint64_t seed) {
  train.seed = seed;
  data.seed = seed;
}

std::string RunConfig::resolved_vgg_weights() const {
  if (!perceptual.weights_path.empty()) return perceptual.weights_path;
  if (const char* env = std::getenv(kVggWeightsEnv); env && *env) return env;
  return {};
}

}  // namespace mrsr

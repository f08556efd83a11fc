#include <cstdlib>
#include <fstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "mrsr/config.hpp"

using namespace mrsr;
using nlohmann::json;

namespace {

std::string config_error(const json& j) {
  try {
    RunConfig::from_json(j);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("defaults") {
  const RunConfig c = RunConfig::from_json(json::object());
  CHECK(c.train.learning_rate == 1e-4);
  CHECK(c.train.batch_size == 1);
  CHECK(c.train.adam_beta1 == 0.9);
  CHECK(c.train.adam_beta2 == 0.99);
  CHECK(c.train.loss_weights == LossWeights{1.0, 1.0, 1.0});
  CHECK(c.train.ema_decay == 0.0);
  CHECK(c.train.grad_clip == 0.0);
  CHECK(c.generator == GeneratorConfig{});
  CHECK(c.discriminator == DiscriminatorConfig{});
  CHECK(c.data.split_fraction == 0.8);
}

TEST_CASE("partial documents override only the given keys") {
  const auto c = RunConfig::from_json(json::parse(R"({
    "train": {"iterations": 20, "loss_weights": {"perceptual": 0.5}},
    "generator": {"num_rrdb": 2, "base_channels": 8, "growth_channels": 4},
    "discriminator": {"base_channels": 8}
  })"));
  CHECK(c.train.iterations == 20);
  CHECK(c.train.loss_weights.perceptual == 0.5);
  CHECK(c.train.loss_weights.pixel == 1.0);
  CHECK(c.generator.num_rrdb == 2);
  CHECK(c.generator.dense_blocks_per_rrdb == GeneratorConfig{}.dense_blocks_per_rrdb);
  CHECK(c.discriminator.base_channels == 8);
}

TEST_CASE("json round trip") {
  RunConfig c;
  c.train.iterations = 77;
  c.train.hr_crop = 32;
  c.train.ema_decay = 0.999;
  c.generator.num_rrdb = 3;
  c.discriminator.leaky_slope = 0.1;
  c.data.split_fraction = 0.5;
  c.perceptual.weights_path = "/x/vgg.mrsr";
  const json j = c.to_json();
  const RunConfig back = RunConfig::from_json(j);
  CHECK(back.to_json() == j);
  CHECK(back.generator == c.generator);
  CHECK(back.discriminator == c.discriminator);

  test::TempDir dir("cfg");
  std::ofstream(dir / "c.json") << j.dump(2);
  CHECK(RunConfig::load(dir / "c.json").to_json() == j);
}

TEST_CASE("unknown keys are named with their full path") {
  CHECK(config_error(json::parse(R"({"train": {"foo": 1}})")).find("train.foo") != std::string::npos);
  CHECK(config_error(json::parse(R"({"train": {"loss_weights": {"gan": 1}}})")).find("train.loss_weights.gan") !=
        std::string::npos);
  CHECK(config_error(json::parse(R"({"generator": {"blocks": 3}})")).find("generator.blocks") != std::string::npos);
  CHECK(config_error(json::parse(R"({"optimizer": {}})")).find("optimizer") != std::string::npos);
}

TEST_CASE("type and value errors") {
  CHECK(config_error(json::parse(R"({"train": {"iterations": "many"}})")).find("train.iterations") !=
        std::string::npos);
  CHECK(config_error(json::parse(R"({"train": 3})")).find("train") != std::string::npos);
  CHECK_FALSE(config_error(json::parse(R"({"train": {"learning_rate": 0}})")).empty());
  CHECK_FALSE(config_error(json::parse(R"({"train": {"iterations": 0}})")).empty());
  CHECK_FALSE(config_error(json::parse(R"({"train": {"hr_crop": 30}})")).empty());
  CHECK_FALSE(config_error(json::parse(R"({"train": {"ema_decay": 1.0}})")).empty());
  CHECK_FALSE(config_error(json::parse(R"({"train": {"loss_weights": {"pixel": -1}}})")).empty());
  CHECK_FALSE(config_error(json::parse(R"({"data": {"split_fraction": 1.5}})")).empty());
  CHECK_FALSE(config_error(json::parse(R"({"data": {"pad_to": 128}})")).empty());
  CHECK_FALSE(config_error(json::parse(R"({"generator": {"residual_scale_beta": 0}})")).empty());
  CHECK_FALSE(config_error(json::parse(R"({"discriminator": {"num_up_stages": 2}})")).empty());
}

TEST_CASE("file loading errors") {
  test::TempDir dir("cfg_err");
  CHECK_THROWS_AS(RunConfig::load(dir / "missing.json"), IoError);
  std::ofstream(dir / "bad.json") << "{ not json";
  CHECK_THROWS_AS(RunConfig::load(dir / "bad.json"), ConfigError);
}

TEST_CASE("seed override and weight resolution") {
  RunConfig c;
  c.set_seed(42);
  CHECK(c.train.seed == 42);
  CHECK(c.data.seed == 42);

  ::setenv(kVggWeightsEnv, "/from/env", 1);
  CHECK(c.resolved_vgg_weights() == "/from/env");
  c.perceptual.weights_path = "/from/config";
  CHECK(c.resolved_vgg_weights() == "/from/config");
  ::unsetenv(kVggWeightsEnv);
  c.perceptual.weights_path.clear();
  CHECK(c.resolved_vgg_weights().empty());
}

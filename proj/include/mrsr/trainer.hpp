#pragma once

// GAN training loop: one generator update then one discriminator update per
// iteration, Adam for both, checkpointing and loss logging.
//
// Run directory layout:
//
//   <run>/config.json              effective configuration + run metadata
//   <run>/loss_log.csv             iteration,pixel,perceptual,adv_g,adv_d,total_g
//   <run>/checkpoints/iter_<n>.ckpt
//   <run>/divergence.json          written only when training aborts on NaN

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mrsr/config.hpp"
#include "mrsr/data_pipeline.hpp"
#include "mrsr/losses.hpp"
#include "mrsr/models.hpp"
#include "mrsr/optim.hpp"
#include "mrsr/rng.hpp"

namespace mrsr {

struct LossRecord {
  std::int64_t iteration = 0;
  double pixel = 0.0;
  double perceptual = 0.0;
  double adversarial_g = 0.0;
  double adversarial_d = 0.0;
  double total_g = 0.0;
  bool operator==(const LossRecord&) const = default;
};

// Raised when a loss or gradient becomes non-finite. snapshot() holds the
// iteration, the loss terms and the gradient norms at the time of failure.
class TrainingDiverged : public NumericError {
 public:
  TrainingDiverged(const std::string& what, nlohmann::json snapshot)
      : NumericError(what), snapshot_(std::move(snapshot)) {}
  const nlohmann::json& snapshot() const { return snapshot_; }

 private:
  nlohmann::json snapshot_;
};

// Stacks equally sized pairs into (B,1,h,w) LR and (B,1,4h,4w) HR tensors.
struct Batch {
  Tensor<float> lr;
  Tensor<float> hr;
};
Batch make_batch(const std::vector<SlicePair>& pairs);
// Aligned random crop of side hr_crop (HR pixels) from every pair.
Batch make_batch(const std::vector<SlicePair>& pairs, int hr_crop, Rng& rng);

// Builds the perceptual backbone named by the config (pretrained archive or
// seeded random init).
std::shared_ptr<const FeatureExtractor<float>> make_feature_extractor(const RunConfig& cfg);

class Trainer {
 public:
  // extractor may be null when the perceptual weight is zero.
  Trainer(const RunConfig& cfg, std::shared_ptr<const FeatureExtractor<float>> extractor);

  // One generator step followed by one discriminator step. Throws
  // TrainingDiverged without touching the parameters if anything is
  // non-finite.
  LossRecord step(const Batch& batch);

  std::int64_t iteration() const { return iteration_; }
  const std::vector<LossRecord>& history() const { return history_; }
  const RunConfig& config() const { return cfg_; }
  Generator<float>& generator() { return generator_; }
  const Generator<float>& generator() const { return generator_; }
  Discriminator<float>& discriminator() { return discriminator_; }
  const Discriminator<float>& discriminator() const { return discriminator_; }
  Rng& rng() { return rng_; }

  // Gradient norms of the most recent step.
  double last_generator_grad_norm() const { return last_g_norm_; }
  double last_discriminator_grad_norm() const { return last_d_norm_; }

  void save_checkpoint(const std::filesystem::path& path) const;
  // Restores every piece of state. Throws ConfigError if the checkpoint's
  // model configs differ from this trainer's.
  void load_checkpoint(const std::filesystem::path& path);

 private:
  void update_ema();

  RunConfig cfg_;
  std::shared_ptr<const FeatureExtractor<float>> extractor_;
  Generator<float> generator_;
  Discriminator<float> discriminator_;
  Adam<float> opt_g_;
  Adam<float> opt_d_;
  Rng rng_;
  std::int64_t iteration_ = 0;
  std::vector<LossRecord> history_;
  std::vector<std::vector<float>> ema_;
  double last_g_norm_ = 0.0;
  double last_d_norm_ = 0.0;
};

struct TrainOutcome {
  std::filesystem::path final_checkpoint;
  std::int64_t iteration = 0;
  std::vector<LossRecord> history;
};

// Trains on the train split of a prepared dataset until cfg.train.iterations.
// With resume set, state is restored from that checkpoint first.
TrainOutcome train(const RunConfig& cfg, const std::filesystem::path& data_dir,
                   const std::filesystem::path& run_dir,
                   const std::optional<std::filesystem::path>& resume = std::nullopt);

// Most recent checkpoints/iter_<n>.ckpt under run_dir.
std::optional<std::filesystem::path> latest_checkpoint(const std::filesystem::path& run_dir);

// Generator restored from a checkpoint (EMA weights when present).
Generator<float> load_generator(const std::filesystem::path& checkpoint);

// x4 super-resolution of one [0, 1] image; output clamped to [0, 1].
Image infer(const Generator<float>& generator, const Image& lr);

}  // namespace mrsr

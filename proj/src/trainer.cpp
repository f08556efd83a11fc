#include "mrsr/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <regex>

#include <fmt/core.h>
#include <fmt/os.h>

#include "mrsr/errors.hpp"
#include "mrsr/log.hpp"

namespace mrsr {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kCheckpointFormat = "mrsr-checkpoint/1";

AdamConfig adam_config(const TrainConfig& t) {
  return {t.learning_rate, t.adam_beta1, t.adam_beta2, t.adam_epsilon};
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(seed ^ splitmix64(stream));
}

json record_to_json(const LossRecord& r) {
  return json::array({r.iteration, r.pixel, r.perceptual, r.adversarial_g, r.adversarial_d, r.total_g});
}

LossRecord record_from_json(const json& j) {
  return {j.at(0).get<std::int64_t>(), j.at(1).get<double>(), j.at(2).get<double>(),
          j.at(3).get<double>(),       j.at(4).get<double>(), j.at(5).get<double>()};
}

std::string csv_row(const LossRecord& r) {
  return fmt::format("{},{},{},{},{},{}\n", r.iteration, r.pixel, r.perceptual, r.adversarial_g,
                     r.adversarial_d, r.total_g);
}

constexpr const char* kCsvHeader = "iteration,pixel,perceptual,adv_g,adv_d,total_g\n";

template <typename T>
void load_params(const TensorArchive& ar, const std::string& prefix,
                 const std::vector<NamedParam<T>>& params) {
  for (const auto& p : params) {
    const std::string key = prefix + "." + p.name;
    if (!ar.contains(key)) throw ConfigError("checkpoint is missing tensor " + key);
    Tensor<T> t = ar.get_tensor<T>(key);
    if (!(t.shape() == p.var.shape())) {
      throw ConfigError("checkpoint tensor " + key + " has shape " + t.shape().str() +
                        ", model expects " + p.var.shape().str());
    }
    Var<T> v = p.var;
    v.mutable_value() = std::move(t);
  }
}

bool all_finite(const LossRecord& r) {
  return std::isfinite(r.pixel) && std::isfinite(r.perceptual) && std::isfinite(r.adversarial_g) &&
         std::isfinite(r.adversarial_d) && std::isfinite(r.total_g);
}

}  // namespace

Batch make_batch(const std::vector<SlicePair>& pairs) {
  if (pairs.empty()) throw ConfigError("empty batch");
  const int lh = pairs[0].lr.rows();
  const int lw = pairs[0].lr.cols();
  const int b = static_cast<int>(pairs.size());
  Batch out{Tensor<float>({b, 1, lh, lw}), Tensor<float>({b, 1, 4 * lh, 4 * lw})};
  for (int i = 0; i < b; ++i) {
    const SlicePair& p = pairs[i];
    if (p.lr.rows() != lh || p.lr.cols() != lw || p.hr.rows() != 4 * lh || p.hr.cols() != 4 * lw) {
      throw ShapeError("batch entries must share one LR/HR shape with a x4 ratio");
    }
    std::copy(p.lr.data(), p.lr.data() + p.lr.size(), out.lr.plane(i, 0));
    std::copy(p.hr.data(), p.hr.data() + p.hr.size(), out.hr.plane(i, 0));
  }
  return out;
}

Batch make_batch(const std::vector<SlicePair>& pairs, int hr_crop, Rng& rng) {
  if (pairs.empty()) throw ConfigError("empty batch");
  if (hr_crop <= 0 || hr_crop >= pairs[0].hr.rows()) return make_batch(pairs);
  if (hr_crop % 4 != 0) throw ConfigError("hr_crop must be a multiple of 4");
  const int lc = hr_crop / 4;
  std::vector<SlicePair> cropped;
  for (const SlicePair& p : pairs) {
    const auto ly = static_cast<int>(rng.index(static_cast<std::uint64_t>(p.lr.rows() - lc + 1)));
    const auto lx = static_cast<int>(rng.index(static_cast<std::uint64_t>(p.lr.cols() - lc + 1)));
    SlicePair c{p.volume_id, p.slice_index, Image(hr_crop, hr_crop), Image(lc, lc)};
    for (int r = 0; r < lc; ++r)
      for (int k = 0; k < lc; ++k) c.lr(r, k) = p.lr(ly + r, lx + k);
    for (int r = 0; r < hr_crop; ++r)
      for (int k = 0; k < hr_crop; ++k) c.hr(r, k) = p.hr(4 * ly + r, 4 * lx + k);
    cropped.push_back(std::move(c));
  }
  return make_batch(cropped);
}

std::shared_ptr<const FeatureExtractor<float>> make_feature_extractor(const RunConfig& cfg) {
  const std::string path = cfg.resolved_vgg_weights();
  if (!path.empty()) {
    return std::make_shared<const FeatureExtractor<float>>(
        FeatureExtractor<float>::from_archive(vgg19_spec(), path));
  }
  log::warn("no VGG19 weights configured (perceptual.weights_path or ${}); "
            "using a seeded random backbone",
            kVggWeightsEnv);
  return std::make_shared<const FeatureExtractor<float>>(vgg19_spec(), cfg.perceptual.init_seed);
}

Trainer::Trainer(const RunConfig& cfg, std::shared_ptr<const FeatureExtractor<float>> extractor)
    : cfg_(cfg),
      extractor_(std::move(extractor)),
      generator_(cfg.generator, derive_seed(cfg.train.seed, 1)),
      discriminator_(cfg.discriminator, derive_seed(cfg.train.seed, 2)),
      opt_g_(generator_.parameters(), adam_config(cfg.train)),
      opt_d_(discriminator_.parameters(), adam_config(cfg.train)),
      rng_(derive_seed(cfg.train.seed, 3)) {
  cfg_.train.validate();
  if (cfg_.train.loss_weights.perceptual > 0.0 && !extractor_) {
    throw ConfigError("a perceptual backbone is required when loss_weights.perceptual > 0");
  }
  if (cfg_.train.ema_decay > 0.0) {
    for (const auto& p : generator_.parameters()) {
      ema_.emplace_back(p.var.value().values().begin(), p.var.value().values().end());
    }
  }
}

void Trainer::update_ema() {
  if (ema_.empty()) return;
  const auto d = static_cast<float>(cfg_.train.ema_decay);
  const auto params = generator_.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const float* w = params[i].var.value().data();
    for (std::size_t k = 0; k < ema_[i].size(); ++k) ema_[i][k] = d * ema_[i][k] + (1.0f - d) * w[k];
  }
}

LossRecord Trainer::step(const Batch& batch) {
  const LossWeights& lw = cfg_.train.loss_weights;
  const bool adversarial = lw.adversarial > 0.0;
  const bool perceptual = lw.perceptual > 0.0;
  LossRecord rec;
  rec.iteration = iteration_ + 1;

  const Var<float> lr = Var<float>::constant(batch.lr);
  const Var<float> hr = Var<float>::constant(batch.hr);

  auto diverged = [&](const std::string& what) {
    json snap = {{"iteration", rec.iteration},
                 {"pixel", rec.pixel},
                 {"perceptual", rec.perceptual},
                 {"adv_g", rec.adversarial_g},
                 {"adv_d", rec.adversarial_d},
                 {"total_g", rec.total_g},
                 {"grad_norm_g", last_g_norm_},
                 {"grad_norm_d", last_d_norm_}};
    // json cannot hold NaN; record them as strings.
    for (auto& [k, v] : snap.items()) {
      if (v.is_number_float() && !std::isfinite(v.get<double>())) v = fmt::format("{}", v.get<double>());
    }
    return TrainingDiverged(fmt::format("training diverged at iteration {}: {}", rec.iteration, what),
                            std::move(snap));
  };

  try {
    // Generator update with the discriminator frozen.
    discriminator_.set_requires_grad(false);
    opt_g_.zero_grad();
    const Var<float> sr = generator_.forward(lr);
    const Var<float> px = pixel_loss(sr, hr);
    rec.pixel = px.value().item();
    Var<float> total = ops::scale(px, static_cast<float>(lw.pixel));
    if (perceptual) {
      const Var<float> pc = perceptual_loss(*extractor_, sr, hr);
      rec.perceptual = pc.value().item();
      total = ops::add(total, ops::scale(pc, static_cast<float>(lw.perceptual)));
    }
    Var<float> real_for_g;
    if (adversarial) {
      {
        NoGradGuard guard;
        real_for_g = discriminator_.forward(hr, false);
      }
      const Var<float> fake_logits = discriminator_.forward(sr, false);
      const Var<float> adv_g = adversarial_losses(real_for_g, fake_logits).generator;
      rec.adversarial_g = adv_g.value().item();
      total = ops::add(total, ops::scale(adv_g, static_cast<float>(lw.adversarial)));
    }
    rec.total_g = total.value().item();
    backward(total);
    last_g_norm_ = opt_g_.grad_norm();
    if (!all_finite(rec) || !std::isfinite(last_g_norm_)) throw diverged("non-finite generator loss");
    if (cfg_.train.grad_clip > 0.0) opt_g_.clip_grad_norm(cfg_.train.grad_clip);

    // Discriminator update on the detached generator output.
    last_d_norm_ = 0.0;
    if (adversarial) {
      discriminator_.set_requires_grad(true);
      opt_d_.zero_grad();
      const Var<float> fake = sr.detach();
      const Var<float> real_logits = discriminator_.forward(hr, true);
      const Var<float> fake_logits = discriminator_.forward(fake, false);
      const Var<float> adv_d = adversarial_losses(real_logits, fake_logits).discriminator;
      rec.adversarial_d = adv_d.value().item();
      backward(adv_d);
      last_d_norm_ = opt_d_.grad_norm();
      if (!std::isfinite(rec.adversarial_d) || !std::isfinite(last_d_norm_)) {
        throw diverged("non-finite discriminator loss");
      }
      if (cfg_.train.grad_clip > 0.0) opt_d_.clip_grad_norm(cfg_.train.grad_clip);
    }
  } catch (const TrainingDiverged&) {
    throw;
  } catch (const NumericError& e) {
    // Non-finite values caught inside an op (e.g. NaN logits).
    opt_g_.zero_grad();
    opt_d_.zero_grad();
    throw diverged(e.what());
  }

  opt_g_.step();
  update_ema();
  if (adversarial) opt_d_.step();
  opt_g_.zero_grad();
  opt_d_.zero_grad();
  ++iteration_;
  history_.push_back(rec);
  return rec;
}

void Trainer::save_checkpoint(const fs::path& path) const {
  TensorArchive ar;
  ar.metadata["format"] = kCheckpointFormat;
  ar.metadata["iteration"] = iteration_;
  ar.metadata["config"] = cfg_.to_json();
  ar.metadata["rng_state"] = rng_.state();
  ar.metadata["perceptual_backbone"] = extractor_ ? extractor_->weights_source() : "none";
  json hist = json::array();
  for (const auto& r : history_) hist.push_back(record_to_json(r));
  ar.metadata["loss_history"] = std::move(hist);
  for (const auto& p : generator_.parameters()) ar.put("generator." + p.name, p.var.value());
  for (const auto& p : discriminator_.parameters()) ar.put("discriminator." + p.name, p.var.value());
  for (const auto& layer : discriminator_.layers()) {
    if (!layer.spectral) continue;
    ar.put_vector("discriminator." + layer.name + ".sn_u", layer.spectral->u);
    ar.put_vector("discriminator." + layer.name + ".sn_v", layer.spectral->v);
  }
  if (!ema_.empty()) {
    const auto params = generator_.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
      ar.put(std::string("generator_ema.") + params[i].name,
             Tensor<float>(params[i].var.shape(), ema_[i]));
    }
  }
  opt_g_.save(ar, "adam_g");
  opt_d_.save(ar, "adam_d");
  fs::create_directories(path.parent_path().empty() ? fs::path(".") : path.parent_path());
  ar.save(path);
}

void Trainer::load_checkpoint(const fs::path& path) {
  const TensorArchive ar = TensorArchive::load(path);
  if (ar.metadata.value("format", "") != kCheckpointFormat) {
    throw ConfigError(path.string() + " is not a training checkpoint");
  }
  const json& saved = ar.metadata.at("config");
  if (!(generator_config_from_json(saved.at("generator")) == cfg_.generator) ||
      !(discriminator_config_from_json(saved.at("discriminator")) == cfg_.discriminator)) {
    throw ConfigError("checkpoint " + path.string() +
                      " was written for a different generator/discriminator config");
  }
  load_params(ar, "generator", generator_.parameters());
  load_params(ar, "discriminator", discriminator_.parameters());
  for (auto& layer : discriminator_.layers()) {
    if (!layer.spectral) continue;
    layer.spectral->u = ar.get_vector<float>("discriminator." + layer.name + ".sn_u");
    layer.spectral->v = ar.get_vector<float>("discriminator." + layer.name + ".sn_v");
  }
  if (!ema_.empty()) {
    const auto params = generator_.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
      const std::string key = "generator_ema." + params[i].name;
      ema_[i] = ar.contains(key) ? ar.get_vector<float>(key)
                                 : std::vector<float>(params[i].var.value().values().begin(),
                                                      params[i].var.value().values().end());
    }
  }
  opt_g_.load(ar, "adam_g");
  opt_d_.load(ar, "adam_d");
  rng_.restore(ar.metadata.at("rng_state").get<std::string>());
  iteration_ = ar.metadata.at("iteration").get<std::int64_t>();
  history_.clear();
  for (const auto& r : ar.metadata.at("loss_history")) history_.push_back(record_from_json(r));
}

std::optional<fs::path> latest_checkpoint(const fs::path& run_dir) {
  const fs::path dir = run_dir / "checkpoints";
  if (!fs::is_directory(dir)) return std::nullopt;
  static const std::regex pattern(R"(iter_(\d+)\.ckpt)");
  std::optional<fs::path> best;
  long long best_iter = -1;
  for (const auto& e : fs::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = e.path().filename().string();
    if (std::regex_match(name, m, pattern)) {
      const long long it = std::stoll(m[1].str());
      if (it > best_iter) {
        best_iter = it;
        best = e.path();
      }
    }
  }
  return best;
}

TrainOutcome train(const RunConfig& cfg, const fs::path& data_dir, const fs::path& run_dir,
                   const std::optional<fs::path>& resume) {
  cfg.validate();
  const DatasetManifest manifest = DatasetManifest::load(data_dir / "manifest.json");
  const std::vector<SliceRef> train_slices = manifest.slices(Split::kTrain);
  if (train_slices.empty()) throw ConfigError("the dataset has no train slices");

  fs::create_directories(run_dir / "checkpoints");
  std::shared_ptr<const FeatureExtractor<float>> extractor;
  if (cfg.train.loss_weights.perceptual > 0.0) extractor = make_feature_extractor(cfg);

  Trainer trainer(cfg, extractor);
  if (resume) {
    trainer.load_checkpoint(*resume);
    log::info("resumed from {} at iteration {}", resume->string(), trainer.iteration());
  }

  {
    json snapshot = {{"config", cfg.to_json()},
                     {"run",
                      {{"data_dir", data_dir.generic_string()},
                       {"train_slices", train_slices.size()},
                       {"optimizer", "adam (bias-corrected, no weight decay, constant lr)"},
                       {"sampler", "uniform with replacement"},
                       {"update_order", "generator then discriminator"},
                       {"perceptual_taps", "conv1_2,conv2_2,conv3_4,conv4_4,conv5_4 pre-activation"},
                       {"perceptual_tap_weights", {0.1, 0.1, 1.0, 1.0, 1.0}},
                       {"perceptual_backbone", extractor ? extractor->weights_source() : "none"},
                       {"resumed_from", resume ? resume->generic_string() : ""}}}};
    const std::string weights = cfg.resolved_vgg_weights();
    if (extractor && !weights.empty()) snapshot["run"]["perceptual_weights_hash"] = file_fingerprint(weights);
    std::ofstream out(run_dir / "config.json", std::ios::trunc);
    if (!out) throw IoError("cannot write " + (run_dir / "config.json").string());
    out << snapshot.dump(2) << '\n';
  }

  // The loss log always mirrors the trainer history, so a resumed run starts
  // by rewriting the rows carried in the checkpoint.
  const fs::path log_path = run_dir / "loss_log.csv";
  {
    std::ofstream out(log_path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + log_path.string());
    out << kCsvHeader;
    for (const auto& r : trainer.history()) out << csv_row(r);
  }
  std::ofstream log_out(log_path, std::ios::app);

  const std::int64_t total = cfg.train.iterations;
  fs::path last_ckpt;
  try {
    while (trainer.iteration() < total) {
      std::vector<SlicePair> pairs;
      for (int b = 0; b < cfg.train.batch_size; ++b) {
        const SliceRef& ref = train_slices[trainer.rng().index(train_slices.size())];
        pairs.push_back(load_slice_pair(data_dir, manifest, ref));
      }
      const Batch batch = make_batch(pairs, cfg.train.hr_crop, trainer.rng());
      const LossRecord rec = trainer.step(batch);
      log_out << csv_row(rec);
      log_out.flush();
      if (rec.iteration % cfg.train.log_every == 0 || rec.iteration == total) {
        log::info("iter {:>7}  pixel {:.5f}  perceptual {:.5f}  adv_g {:.5f}  adv_d {:.5f}  total {:.5f}",
                  rec.iteration, rec.pixel, rec.perceptual, rec.adversarial_g, rec.adversarial_d,
                  rec.total_g);
      }
      if (rec.iteration % cfg.train.checkpoint_every == 0 || rec.iteration == total) {
        last_ckpt = run_dir / "checkpoints" / fmt::format("iter_{}.ckpt", rec.iteration);
        trainer.save_checkpoint(last_ckpt);
      }
    }
  } catch (const TrainingDiverged& e) {
    std::ofstream out(run_dir / "divergence.json", std::ios::trunc);
    out << e.snapshot().dump(2) << '\n';
    throw;
  }
  if (last_ckpt.empty()) {
    // Already at the target iteration; still leave a final checkpoint behind.
    last_ckpt = run_dir / "checkpoints" / fmt::format("iter_{}.ckpt", trainer.iteration());
    trainer.save_checkpoint(last_ckpt);
  }
  return {last_ckpt, trainer.iteration(), trainer.history()};
}

Generator<float> load_generator(const fs::path& checkpoint) {
  const TensorArchive ar = TensorArchive::load(checkpoint);
  if (ar.metadata.value("format", "") != kCheckpointFormat) {
    throw ConfigError(checkpoint.string() + " is not a training checkpoint");
  }
  const GeneratorConfig gcfg = generator_config_from_json(ar.metadata.at("config").at("generator"));
  Generator<float> g(gcfg, 0);
  const auto params = g.parameters();
  const bool ema = !params.empty() && ar.contains("generator_ema." + params.front().name);
  load_params(ar, ema ? "generator_ema" : "generator", params);
  return g;
}

Image infer(const Generator<float>& generator, const Image& lr) {
  if (lr.empty()) throw ShapeError("empty input image");
  for (float v : lr.values()) {
    if (!std::isfinite(v)) throw NumericError("input image contains non-finite values");
  }
  const Tensor<float> x({1, 1, lr.rows(), lr.cols()}, std::vector<float>(lr.values().begin(), lr.values().end()));
  const Tensor<float> y = generator.infer(x);
  Image out(y.h(), y.w());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.data()[i] = std::clamp(y.data()[i], 0.0f, 1.0f);
  }
  return out;
}

}  // namespace mrsr

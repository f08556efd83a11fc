// mrsr: command-line front end for data preparation, training, inference,
// evaluation and comparison montages.

#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <fmt/core.h>

#include "CLI11.hpp"
#include "mrsr/config.hpp"
#include "mrsr/data_pipeline.hpp"
#include "mrsr/errors.hpp"
#include "mrsr/evaluator.hpp"
#include "mrsr/log.hpp"
#include "mrsr/png_io.hpp"
#include "mrsr/trainer.hpp"

namespace fs = std::filesystem;
using namespace mrsr;

namespace {

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  int verbose = 0;
};

RunConfig effective_config(const Globals& g) {
  RunConfig cfg = g.config_path.empty() ? RunConfig{} : RunConfig::load(g.config_path);
  if (g.seed) cfg.set_seed(*g.seed);
  cfg.validate();
  return cfg;
}

int cmd_prepare_data(const Globals& g, const std::string& input, const std::string& output,
                     std::optional<double> fraction, const std::string& grade) {
  RunConfig cfg = effective_config(g);
  if (fraction) cfg.data.split_fraction = *fraction;
  cfg.data.validate();
  const std::vector<fs::path> paths = discover_volumes(input);
  if (paths.empty()) throw ConfigError("no volumes found in " + input);

  DatasetOptions opts;
  opts.seed = cfg.data.seed;
  opts.split_fraction = cfg.data.split_fraction;
  opts.scale = cfg.data.scale;
  opts.pad_to = cfg.data.pad_to;
  opts.expected_shape = cfg.data.expected_shape;
  if (!grade.empty()) opts.grade = parse_grade(grade);
  const DatasetManifest m = build_dataset(paths, output, opts);

  int train_volumes = 0;
  for (const auto& v : m.volumes) train_volumes += v.split == Split::kTrain;
  fmt::print("volumes:  {} ({} train / {} test)\n", m.volumes.size(), train_volumes,
             m.volumes.size() - train_volumes);
  fmt::print("slices:   {} included, {} excluded\n", m.included.size(), m.excluded.size());
  fmt::print("train:    {} slices\ntest:     {} slices\n", m.train_slices, m.test_slices);
  fmt::print("manifest: {}\n", (fs::path(output) / "manifest.json").string());
  return 0;
}

int cmd_train(const Globals& g, const std::string& data, const std::string& run,
              bool resume_flag, const std::string& resume_path, std::optional<std::int64_t> iterations) {
  RunConfig cfg = effective_config(g);
  if (iterations) {
    cfg.train.iterations = *iterations;
    cfg.validate();
  }
  std::optional<fs::path> resume;
  if (resume_flag) {
    resume = resume_path.empty() ? latest_checkpoint(run) : std::optional<fs::path>(resume_path);
    if (!resume) throw IoError("--resume given but no checkpoint found under " + run);
  }
  const TrainOutcome out = train(cfg, data, run, resume);
  fmt::print("trained to iteration {}\n", out.iteration);
  if (!out.history.empty()) {
    const LossRecord& r = out.history.back();
    fmt::print("last losses: pixel {:.6f} perceptual {:.6f} adv_g {:.6f} adv_d {:.6f} total {:.6f}\n",
               r.pixel, r.perceptual, r.adversarial_g, r.adversarial_d, r.total_g);
  }
  fmt::print("checkpoint: {}\n", out.final_checkpoint.string());
  return 0;
}

int cmd_infer(const std::string& checkpoint, const std::string& input, const std::string& output) {
  const Generator<float> gen = load_generator(checkpoint);
  const Image lr = read_png(input);
  const Image sr = infer(gen, lr);
  write_png16(output, sr);
  fmt::print("{}x{} -> {}x{}: {}\n", lr.cols(), lr.rows(), sr.cols(), sr.rows(), output);
  return 0;
}

int cmd_evaluate(const std::string& data, const std::string& checkpoint, const std::string& out) {
  const DatasetManifest m = DatasetManifest::load(fs::path(data) / "manifest.json");
  std::optional<Generator<float>> gen;
  if (!checkpoint.empty()) gen.emplace(load_generator(checkpoint));
  const auto reports = evaluate_split(data, m, gen ? &*gen : nullptr);
  write_reports(reports, out);
  fmt::print("{} test images\n{}", reports.front().per_image.size(), format_summary_table(reports));
  fmt::print("summary: {}\n", (fs::path(out) / "summary.json").string());
  return 0;
}

int cmd_compare(const std::string& data, const std::string& checkpoint,
                const std::vector<std::string>& ids, const std::string& out) {
  const DatasetManifest m = DatasetManifest::load(fs::path(data) / "manifest.json");
  const auto test = m.slices(Split::kTest);
  const Generator<float> gen = load_generator(checkpoint);
  std::vector<MontageRow> rows;
  for (const auto& id : ids) {
    const SliceRef ref = parse_slice_id(id);
    if (std::find(test.begin(), test.end(), ref) == test.end()) {
      throw ConfigError("unknown image id '" + id + "' (not in the test split)");
    }
    const SlicePair p = load_slice_pair(data, m, ref);
    rows.push_back({p.hr, p.lr, infer(gen, p.lr)});
  }
  const Image montage = assemble_montage(rows);
  write_png16(out, montage);
  fmt::print("montage {}x{} ({} rows: ground truth | LR | model | bilinear | bicubic): {}\n",
             montage.cols(), montage.rows(), rows.size(), out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Grayscale x4 MR super-resolution toolkit"};
  app.require_subcommand(1);
  Globals g;
  std::uint64_t seed = 0;
  app.add_option("--config", g.config_path, "JSON run configuration")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed, "Seed for every random component");
  app.add_flag("-v,--verbose", g.verbose, "More logging (repeat for debug output)");

  std::string input, output, grade, data, run, checkpoint, out, resume_path;
  std::optional<double> fraction;
  std::optional<std::int64_t> iterations;
  std::vector<std::string> ids;

  auto* prep = app.add_subcommand("prepare-data", "Build HR/LR slice pairs from NIfTI volumes");
  prep->add_option("--input", input, "Directory of .nii/.nii.gz volumes")->required();
  prep->add_option("--output", output, "Dataset output directory")->required();
  prep->add_option("--split-fraction", fraction, "Fraction of volumes assigned to train");
  prep->add_option("--grade", grade, "Grade for every volume (HGG or LGG)");

  auto* tr = app.add_subcommand("train", "Train the generator/discriminator pair");
  tr->add_option("--data", data, "Prepared dataset directory")->required();
  tr->add_option("--run", run, "Run directory")->required();
  auto* resume_opt = tr->add_option("--resume", resume_path,
                                    "Resume from a checkpoint (default: latest in the run directory)")
                         ->expected(0, 1);
  tr->add_option("--iterations", iterations, "Override train.iterations");

  auto* inf = app.add_subcommand("infer", "x4 super-resolve one PNG image");
  inf->add_option("--checkpoint", checkpoint, "Training checkpoint")->required();
  inf->add_option("--input", input, "Input grayscale PNG")->required();
  inf->add_option("--output", output, "Output 16-bit PNG")->required();

  auto* ev = app.add_subcommand("evaluate", "Metrics for baselines and (optionally) a model");
  ev->add_option("--data", data, "Prepared dataset directory")->required();
  ev->add_option("--checkpoint", checkpoint, "Training checkpoint");
  ev->add_option("--out", out, "Report directory")->required();

  auto* cmp = app.add_subcommand("compare", "Side-by-side montage for test images");
  cmp->add_option("--data", data, "Prepared dataset directory")->required();
  cmp->add_option("--checkpoint", checkpoint, "Training checkpoint")->required();
  cmp->add_option("--ids", ids, "Image ids <subject>_<slice>")->required()->delimiter(',');
  cmp->add_option("--out", out, "Output PNG")->required();

  CLI11_PARSE(app, argc, argv);
  if (seed_opt->count() > 0) g.seed = seed;
  log::set_level(g.verbose >= 2 ? log::Level::kDebug : g.verbose == 1 ? log::Level::kInfo : log::Level::kWarn);

  try {
    if (prep->parsed()) return cmd_prepare_data(g, input, output, fraction, grade);
    if (tr->parsed()) return cmd_train(g, data, run, resume_opt->count() > 0, resume_path, iterations);
    if (inf->parsed()) return cmd_infer(checkpoint, input, output);
    if (ev->parsed()) return cmd_evaluate(data, checkpoint, out);
    if (cmp->parsed()) return cmd_compare(data, checkpoint, ids, out);
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
  return 2;
}

#include "mrsr/evaluator.hpp"

#include <cmath>
#include <exception>
#include <fstream>

#include <fmt/core.h>

#include "mrsr/errors.hpp"
#include "mrsr/metrics.hpp"
#include "mrsr/trainer.hpp"

namespace mrsr {

namespace fs = std::filesystem;
using nlohmann::json;

MeanStd mean_std(const std::vector<double>& values) {
  if (values.empty()) return {};
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / static_cast<double>(values.size());
  double sq = 0.0;
  for (double v : values) sq += (v - mean) * (v - mean);
  return {mean, std::sqrt(sq / static_cast<double>(values.size()))};
}

void MetricsReport::finalize() {
  std::vector<double> s, n, m, v;
  for (const auto& r : per_image) {
    s.push_back(r.ssim);
    n.push_back(r.nrmse);
    m.push_back(r.mae);
    v.push_back(r.vif);
  }
  aggregate = {{"ssim", mean_std(s)}, {"nrmse", mean_std(n)}, {"mae", mean_std(m)}, {"vif", mean_std(v)}};
}

ImageMetrics evaluate_image(const std::string& id, const Image& gt, const Image& pred) {
  return {id, ssim(gt, pred), nrmse(gt, pred), mae(gt, pred), vif(gt, pred)};
}

Image baseline_upscale(const Image& lr, UpscaleMethod method) {
  if (method == UpscaleMethod::kNearest) {
    throw ConfigError("baseline method must be bilinear or bicubic");
  }
  return upscale(lr, 4, method);
}

Image baseline_upscale(const Image& lr, const std::string& method) {
  return baseline_upscale(lr, parse_upscale_method(method));
}

std::vector<MetricsReport> evaluate_split(const fs::path& data_dir, const DatasetManifest& manifest,
                                          const Generator<float>* generator) {
  const std::vector<SliceRef> test = manifest.slices(Split::kTest);
  if (test.empty()) throw ConfigError("the test split is empty");

  const std::vector<std::string> methods = generator
                                               ? std::vector<std::string>{"bilinear", "bicubic", "model"}
                                               : std::vector<std::string>{"bilinear", "bicubic"};
  std::vector<MetricsReport> reports(methods.size());
  for (std::size_t m = 0; m < methods.size(); ++m) {
    reports[m].method = methods[m];
    reports[m].per_image.resize(test.size());
  }

  // Images are independent; metric kernels run serially inside each worker.
  const int n = static_cast<int>(test.size());
  std::vector<std::exception_ptr> errors(n);
#pragma omp parallel for schedule(dynamic, 1)
  for (int i = 0; i < n; ++i) {
    try {
      const SlicePair pair = load_slice_pair(data_dir, manifest, test[i]);
      const std::string id = pair.id();
      reports[0].per_image[i] = evaluate_image(id, pair.hr, baseline_upscale(pair.lr, UpscaleMethod::kBilinear));
      reports[1].per_image[i] = evaluate_image(id, pair.hr, baseline_upscale(pair.lr, UpscaleMethod::kBicubic));
      if (generator) reports[2].per_image[i] = evaluate_image(id, pair.hr, infer(*generator, pair.lr));
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  for (auto& r : reports) r.finalize();
  return reports;
}

namespace {

std::string cell(const MeanStd& ms, int decimals) {
  return fmt::format("{:.{}f}±{:.{}f}", ms.mean, decimals, ms.std, decimals);
}

int decimals_for(const std::string& metric) { return metric == "mae" ? 3 : 2; }

}  // namespace

json summary_json(const std::vector<MetricsReport>& reports) {
  json methods = json::object();
  for (const auto& r : reports) {
    json entry = {{"images", r.per_image.size()}};
    for (const char* name : kMetricNames) {
      const MeanStd& ms = r.aggregate.at(name);
      entry[name] = {{"mean", ms.mean}, {"std", ms.std}, {"formatted", cell(ms, decimals_for(name))}};
    }
    methods[r.method] = entry;
  }
  json order = json::array();
  for (const auto& r : reports) order.push_back(r.method);
  return {{"methods", methods},
          {"method_order", order},
          {"metrics", {"ssim", "nrmse", "mae", "vif"}},
          {"std_convention", "population"}};
}

void write_reports(const std::vector<MetricsReport>& reports, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  for (const auto& r : reports) {
    const fs::path path = out_dir / ("metrics_" + r.method + ".csv");
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << "image_id,ssim,nrmse,mae,vif\n";
    for (const auto& m : r.per_image) {
      out << fmt::format("{},{:.17g},{:.17g},{:.17g},{:.17g}\n", m.image_id, m.ssim, m.nrmse, m.mae, m.vif);
    }
    if (!out) throw IoError("write failed for " + path.string());
  }
  const fs::path summary = out_dir / "summary.json";
  std::ofstream out(summary, std::ios::trunc);
  if (!out) throw IoError("cannot write " + summary.string());
  out << summary_json(reports).dump(2) << '\n';
  if (!out) throw IoError("write failed for " + summary.string());
}

std::string format_summary_table(const std::vector<MetricsReport>& reports) {
  std::string s = fmt::format("{:<10} {:>12} {:>12} {:>14} {:>12}\n", "method", "SSIM", "NRMSE", "MAE", "VIF");
  for (const auto& r : reports) {
    s += fmt::format("{:<10} {:>13} {:>13} {:>15} {:>13}\n", r.method,
                     cell(r.aggregate.at("ssim"), 2), cell(r.aggregate.at("nrmse"), 2),
                     cell(r.aggregate.at("mae"), 3), cell(r.aggregate.at("vif"), 2));
  }
  return s;
}

Image assemble_montage(const std::vector<MontageRow>& rows) {
  if (rows.empty()) throw ConfigError("montage needs at least one image");
  const int h = rows[0].ground_truth.rows();
  const int w = rows[0].ground_truth.cols();
  Image out(h * static_cast<int>(rows.size()), w * kMontagePanels);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const MontageRow& row = rows[i];
    const Image panels[kMontagePanels] = {row.ground_truth, upscale(row.lr, 4, UpscaleMethod::kNearest),
                                          row.model, baseline_upscale(row.lr, UpscaleMethod::kBilinear),
                                          baseline_upscale(row.lr, UpscaleMethod::kBicubic)};
    for (int p = 0; p < kMontagePanels; ++p) {
      if (panels[p].rows() != h || panels[p].cols() != w) {
        throw ShapeError("montage panel " + std::to_string(p) + " is " +
                         shape_str(panels[p].rows(), panels[p].cols()) + ", expected " + shape_str(h, w));
      }
      for (int r = 0; r < h; ++r) {
        std::copy(panels[p].row(r), panels[p].row(r) + w,
                  out.row(static_cast<int>(i) * h + r) + p * w);
      }
    }
  }
  return out;
}

}  // namespace mrsr

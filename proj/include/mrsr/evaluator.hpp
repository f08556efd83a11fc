#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mrsr/data_pipeline.hpp"
#include "mrsr/image.hpp"
#include "mrsr/models.hpp"
#include "mrsr/resample.hpp"

namespace mrsr {

struct ImageMetrics {
  std::string image_id;
  double ssim = 0.0;
  double nrmse = 0.0;
  double mae = 0.0;
  double vif = 0.0;
};

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
};

inline constexpr const char* kMetricNames[] = {"ssim", "nrmse", "mae", "vif"};

struct MetricsReport {
  std::string method;  // "bilinear" | "bicubic" | "model"
  std::vector<ImageMetrics> per_image;
  std::map<std::string, MeanStd> aggregate;

  // Recomputes aggregate from per_image.
  void finalize();
};

MeanStd mean_std(const std::vector<double>& values);

// All four metrics of pred against gt.
ImageMetrics evaluate_image(const std::string& id, const Image& gt, const Image& pred);

// x4 upscale with the named baseline kernel; bicubic output clamped to [0, 1].
Image baseline_upscale(const Image& lr, UpscaleMethod method);
Image baseline_upscale(const Image& lr, const std::string& method);

// Evaluates every test slice of a prepared dataset with the bilinear and
// bicubic baselines and, when given, the generator. Reports come back in the
// order bilinear, bicubic, model.
std::vector<MetricsReport> evaluate_split(const std::filesystem::path& data_dir,
                                          const DatasetManifest& manifest,
                                          const Generator<float>* generator);

// metrics_<method>.csv per report plus summary.json.
void write_reports(const std::vector<MetricsReport>& reports, const std::filesystem::path& out_dir);
nlohmann::json summary_json(const std::vector<MetricsReport>& reports);
// Table with one row per method and "mean±std" cells.
std::string format_summary_table(const std::vector<MetricsReport>& reports);

// Panels per row: ground truth | LR (nearest x4) | model | bilinear | bicubic.
inline constexpr int kMontagePanels = 5;

struct MontageRow {
  Image ground_truth;
  Image lr;
  Image model;
};

// Builds the montage rows; the LR panel is nearest-neighbour enlarged and the
// baseline panels are recomputed from lr.
Image assemble_montage(const std::vector<MontageRow>& rows);

}  // namespace mrsr

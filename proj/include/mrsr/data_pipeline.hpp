#pragma once

// 3D volumes -> normalised, padded HR/LR slice pairs plus a manifest.
//
// Output directory layout:
//
//   <out>/manifest.json
//   <out>/slices/<subject>_<slice:03d>_hr.f32   pad_to x pad_to float32, little-endian
//   <out>/slices/<subject>_<slice:03d>_lr.f32   (pad_to/scale)^2 float32

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mrsr/image.hpp"
#include "mrsr/nifti.hpp"

namespace mrsr {

enum class Grade { kHGG, kLGG };
enum class Split { kTrain, kTest };

std::string to_string(Grade g);
std::string to_string(Split s);
Grade parse_grade(const std::string& s);
Split parse_split(const std::string& s);

inline constexpr std::array<int, 3> kBratsShape{240, 240, 155};

struct VolumeRecord {
  std::string subject_id;
  Grade grade = Grade::kHGG;
  std::string modality = "T1";
  std::filesystem::path source;
  Volume volume;  // raw intensities until normalize_volume
  std::optional<Split> split;
};

struct IngestOptions {
  std::array<int, 3> expected_shape = kBratsShape;
  // When unset the grade is taken from an HGG/LGG path component.
  std::optional<Grade> grade;
};

// Subject id from a file name: extension and a trailing "_t1" are dropped.
std::string subject_id_from_path(const std::filesystem::path& path);
// Nearest enclosing directory named HGG or LGG, if any.
std::optional<Grade> grade_from_path(const std::filesystem::path& path);

// Throws IoError for unreadable files and ShapeError for wrong shapes.
VolumeRecord ingest_volume(const std::filesystem::path& path, const IngestOptions& opts = {});

// True iff every value is exactly zero.
bool is_blank(const Image& slice);

// Per-volume min-max scaling to [0, 1]. Throws DegenerateInputError when the
// volume is constant.
void normalize_volume(Volume& volume);

// Centres the slice on a zero canvas of extent pad_to. A slice already of
// that size is returned unchanged.
Image pad_slice(const Image& slice, int pad_to = 256);

// Antialiased bilinear x`factor` shrink (see resample.hpp for the weights).
Image degrade(const Image& hr, int factor = 4);

// Ordering key of a subject for a given seed. Subjects sorted by key, the
// first round(fraction * N) go to train.
std::uint64_t split_key(const std::string& subject_id, std::uint64_t seed);
std::vector<Split> assign_splits(const std::vector<std::string>& subject_ids, std::uint64_t seed,
                                 double train_fraction);

struct SliceRef {
  std::string volume_id;
  int slice_index = 0;
  bool operator==(const SliceRef&) const = default;
};

struct ExcludedSlice {
  std::string volume_id;
  int slice_index = 0;
  std::string reason;  // "blank" | "degenerate_volume"
};

struct VolumeSummary {
  std::string subject_id;
  Grade grade = Grade::kHGG;
  std::string modality = "T1";
  std::string source;
  std::array<int, 3> shape{};
  Split split = Split::kTrain;
  double intensity_min = 0.0;
  double intensity_max = 0.0;
  int included = 0;
  int excluded = 0;
};

struct DatasetManifest {
  std::uint64_t seed = 0;
  double split_fraction = 0.8;
  int scale = 4;
  int pad_to = 256;
  std::string blank_rule = "all_zero";
  std::vector<VolumeSummary> volumes;
  std::vector<SliceRef> included;
  std::vector<ExcludedSlice> excluded;
  int train_slices = 0;
  int test_slices = 0;

  int lr_extent() const { return pad_to / scale; }
  const VolumeSummary& volume(const std::string& id) const;
  Split split_of(const std::string& volume_id) const;
  // Included slices of one split, in manifest order.
  std::vector<SliceRef> slices(Split split) const;

  nlohmann::json to_json() const;
  static DatasetManifest from_json(const nlohmann::json& j);
  // Pretty-printed JSON with a trailing newline; byte-stable for equal manifests.
  void save(const std::filesystem::path& path) const;
  static DatasetManifest load(const std::filesystem::path& path);
};

struct DatasetOptions {
  std::uint64_t seed = 0;
  double split_fraction = 0.8;
  int scale = 4;
  int pad_to = 256;
  std::array<int, 3> expected_shape = kBratsShape;
  std::optional<Grade> grade;
};

// Paired sample loaded from a prepared dataset.
struct SlicePair {
  std::string volume_id;
  int slice_index = 0;
  Image hr;
  Image lr;

  std::string id() const;
};

std::string slice_stem(const std::string& volume_id, int slice_index);
// Accepts "<subject>_<slice>" and returns the parsed reference.
SliceRef parse_slice_id(const std::string& id);

// .nii / .nii.gz files under dir (recursive), sorted, skipping files whose
// names mark another modality or a segmentation (_t1ce, _t2, _flair, _seg).
std::vector<std::filesystem::path> discover_volumes(const std::filesystem::path& dir);

// Runs the full pipeline, writing slices and manifest.json under out_dir.
// Volumes are processed in parallel; the manifest is assembled in input order.
DatasetManifest build_dataset(const std::vector<std::filesystem::path>& volume_paths,
                              const std::filesystem::path& out_dir, const DatasetOptions& opts);

SlicePair load_slice_pair(const std::filesystem::path& data_dir, const DatasetManifest& manifest,
                          const SliceRef& ref);

void write_f32(const std::filesystem::path& path, const Image& image);
Image read_f32(const std::filesystem::path& path, int rows, int cols);

}  // namespace mrsr

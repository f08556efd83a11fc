#include "mrsr/data_pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

#include <fmt/core.h>

#include "mrsr/errors.hpp"
#include "mrsr/log.hpp"
#include "mrsr/resample.hpp"
#include "mrsr/rng.hpp"

namespace mrsr {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Grade g) { return g == Grade::kHGG ? "HGG" : "LGG"; }
std::string to_string(Split s) { return s == Split::kTrain ? "train" : "test"; }

Grade parse_grade(const std::string& s) {
  if (s == "HGG" || s == "hgg") return Grade::kHGG;
  if (s == "LGG" || s == "lgg") return Grade::kLGG;
  throw ConfigError("unknown grade '" + s + "' (expected HGG or LGG)");
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "test") return Split::kTest;
  throw ConfigError("unknown split '" + s + "'");
}

namespace {

std::string shape3_str(const std::array<int, 3>& s) {
  return fmt::format("({},{},{})", s[0], s[1], s[2]);
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::string strip_nifti_extension(std::string name) {
  for (const char* ext : {".nii.gz", ".nii"}) {
    if (ends_with(name, ext)) return name.substr(0, name.size() - std::char_traits<char>::length(ext));
  }
  return name;
}

}  // namespace

std::string subject_id_from_path(const fs::path& path) {
  std::string stem = strip_nifti_extension(path.filename().string());
  if (ends_with(stem, "_t1")) stem.resize(stem.size() - 3);
  return stem;
}

std::optional<Grade> grade_from_path(const fs::path& path) {
  std::optional<Grade> found;
  for (const auto& part : path.parent_path()) {
    if (part == "HGG") found = Grade::kHGG;
    if (part == "LGG") found = Grade::kLGG;
  }
  return found;
}

VolumeRecord ingest_volume(const fs::path& path, const IngestOptions& opts) {
  VolumeRecord rec;
  rec.source = path;
  rec.subject_id = subject_id_from_path(path);
  const auto grade = opts.grade ? opts.grade : grade_from_path(path);
  if (!grade) {
    throw ConfigError("cannot infer the grade of " + path.string() +
                      " (no HGG/LGG directory); pass a grade override");
  }
  rec.grade = *grade;
  try {
    rec.volume = read_nifti(path);
  } catch (const ShapeError&) {
    throw;
  } catch (const std::exception& e) {
    throw IoError("failed to ingest " + path.string() + ": " + e.what());
  }
  const std::array<int, 3> shape{rec.volume.nx, rec.volume.ny, rec.volume.nz};
  if (shape != opts.expected_shape) {
    throw ShapeError(path.string() + ": volume shape " + shape3_str(shape) + ", expected " +
                     shape3_str(opts.expected_shape));
  }
  return rec;
}

bool is_blank(const Image& slice) {
  return std::all_of(slice.values().begin(), slice.values().end(),
                     [](float v) { return v == 0.0f; });
}

void normalize_volume(Volume& volume) {
  if (volume.voxels.empty()) throw DegenerateInputError("empty volume");
  const auto [lo_it, hi_it] = std::minmax_element(volume.voxels.begin(), volume.voxels.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  if (!std::isfinite(lo) || !std::isfinite(hi)) {
    throw DegenerateInputError("volume contains non-finite intensities");
  }
  if (hi == lo) {
    throw DegenerateInputError(fmt::format("constant volume (all voxels = {})", lo));
  }
  const double range = hi - lo;
  for (float& v : volume.voxels) {
    v = static_cast<float>(std::clamp((v - lo) / range, 0.0, 1.0));
  }
}

Image pad_slice(const Image& slice, int pad_to) {
  if (slice.rows() == pad_to && slice.cols() == pad_to) return slice;
  if (slice.rows() > pad_to || slice.cols() > pad_to) {
    throw ShapeError("slice " + shape_str(slice.rows(), slice.cols()) + " exceeds pad size " +
                     std::to_string(pad_to));
  }
  Image out(pad_to, pad_to, 0.0f);
  const int top = (pad_to - slice.rows()) / 2;
  const int left = (pad_to - slice.cols()) / 2;
  for (int r = 0; r < slice.rows(); ++r) {
    std::copy(slice.row(r), slice.row(r) + slice.cols(), out.row(top + r) + left);
  }
  return out;
}

Image degrade(const Image& hr, int factor) { return downsample(hr, factor); }

std::uint64_t split_key(const std::string& subject_id, std::uint64_t seed) {
  return splitmix64(fnv1a64(subject_id) ^ splitmix64(seed));
}

std::vector<Split> assign_splits(const std::vector<std::string>& subject_ids, std::uint64_t seed,
                                 double train_fraction) {
  if (!(train_fraction >= 0.0 && train_fraction <= 1.0)) {
    throw ConfigError("split_fraction must lie in [0, 1]");
  }
  const std::size_t n = subject_ids.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<std::uint64_t> keys(n);
  for (std::size_t i = 0; i < n; ++i) keys[i] = split_key(subject_ids[i], seed);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return keys[a] != keys[b] ? keys[a] < keys[b] : subject_ids[a] < subject_ids[b];
  });
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  std::vector<Split> out(n, Split::kTest);
  for (std::size_t k = 0; k < n_train; ++k) out[order[k]] = Split::kTrain;
  return out;
}

const VolumeSummary& DatasetManifest::volume(const std::string& id) const {
  for (const auto& v : volumes) {
    if (v.subject_id == id) return v;
  }
  throw ConfigError("volume '" + id + "' is not in the manifest");
}

Split DatasetManifest::split_of(const std::string& volume_id) const {
  return volume(volume_id).split;
}

std::vector<SliceRef> DatasetManifest::slices(Split split) const {
  std::map<std::string, Split> by_id;
  for (const auto& v : volumes) by_id[v.subject_id] = v.split;
  std::vector<SliceRef> out;
  for (const auto& s : included) {
    if (by_id.at(s.volume_id) == split) out.push_back(s);
  }
  return out;
}

json DatasetManifest::to_json() const {
  json vols = json::array();
  for (const auto& v : volumes) {
    vols.push_back({{"subject_id", v.subject_id},
                    {"grade", to_string(v.grade)},
                    {"modality", v.modality},
                    {"source", v.source},
                    {"shape", v.shape},
                    {"split", to_string(v.split)},
                    {"intensity_min", v.intensity_min},
                    {"intensity_max", v.intensity_max},
                    {"included_slices", v.included},
                    {"excluded_slices", v.excluded}});
  }
  json inc = json::array();
  for (const auto& s : included) inc.push_back({s.volume_id, s.slice_index});
  json exc = json::array();
  for (const auto& s : excluded) exc.push_back({s.volume_id, s.slice_index, s.reason});
  return {{"seed", seed},
          {"split_fraction", split_fraction},
          {"scale", scale},
          {"pad_to", pad_to},
          {"hr_shape", {pad_to, pad_to}},
          {"lr_shape", {lr_extent(), lr_extent()}},
          {"blank_rule", blank_rule},
          {"slice_format", "float32-le"},
          {"volumes", vols},
          {"included_slices", inc},
          {"excluded_slices", exc},
          {"counts",
           {{"volumes", volumes.size()},
            {"included", included.size()},
            {"excluded", excluded.size()},
            {"train_slices", train_slices},
            {"test_slices", test_slices}}}};
}

DatasetManifest DatasetManifest::from_json(const json& j) {
  try {
    DatasetManifest m;
    m.seed = j.at("seed").get<std::uint64_t>();
    m.split_fraction = j.at("split_fraction").get<double>();
    m.scale = j.at("scale").get<int>();
    m.pad_to = j.at("pad_to").get<int>();
    m.blank_rule = j.at("blank_rule").get<std::string>();
    for (const auto& v : j.at("volumes")) {
      VolumeSummary s;
      s.subject_id = v.at("subject_id").get<std::string>();
      s.grade = parse_grade(v.at("grade").get<std::string>());
      s.modality = v.at("modality").get<std::string>();
      s.source = v.at("source").get<std::string>();
      s.shape = v.at("shape").get<std::array<int, 3>>();
      s.split = parse_split(v.at("split").get<std::string>());
      s.intensity_min = v.at("intensity_min").get<double>();
      s.intensity_max = v.at("intensity_max").get<double>();
      s.included = v.at("included_slices").get<int>();
      s.excluded = v.at("excluded_slices").get<int>();
      m.volumes.push_back(std::move(s));
    }
    for (const auto& s : j.at("included_slices")) {
      m.included.push_back({s.at(0).get<std::string>(), s.at(1).get<int>()});
    }
    for (const auto& s : j.at("excluded_slices")) {
      m.excluded.push_back({s.at(0).get<std::string>(), s.at(1).get<int>(), s.at(2).get<std::string>()});
    }
    m.train_slices = j.at("counts").at("train_slices").get<int>();
    m.test_slices = j.at("counts").at("test_slices").get<int>();
    return m;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed manifest: ") + e.what());
  }
}

void DatasetManifest::save(const fs::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write manifest " + path.string());
  out << to_json().dump(2) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

DatasetManifest DatasetManifest::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read manifest " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("manifest " + path.string() + " is not valid JSON: " + e.what());
  }
  return from_json(j);
}

std::string slice_stem(const std::string& volume_id, int slice_index) {
  return fmt::format("{}_{:03d}", volume_id, slice_index);
}

std::string SlicePair::id() const { return slice_stem(volume_id, slice_index); }

SliceRef parse_slice_id(const std::string& id) {
  const auto pos = id.rfind('_');
  if (pos == std::string::npos || pos == 0 || pos + 1 == id.size()) {
    throw ConfigError("malformed image id '" + id + "' (expected <subject>_<slice>)");
  }
  const std::string idx = id.substr(pos + 1);
  if (!std::all_of(idx.begin(), idx.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    throw ConfigError("malformed image id '" + id + "' (slice index is not a number)");
  }
  return {id.substr(0, pos), std::stoi(idx)};
}

std::vector<fs::path> discover_volumes(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("input directory not found: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    if (!ends_with(name, ".nii") && !ends_with(name, ".nii.gz")) continue;
    const std::string stem = strip_nifti_extension(name);
    bool other = false;
    for (const char* tag : {"_t1ce", "_t2", "_flair", "_seg"}) other = other || ends_with(stem, tag);
    if (!other) out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

void write_f32(const fs::path& path, const Image& image) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(image.data()),
            static_cast<std::streamsize>(image.size() * sizeof(float)));
  if (!out) throw IoError("write failed for " + path.string());
}

Image read_f32(const fs::path& path, int rows, int cols) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("missing slice file " + path.string());
  Image img(rows, cols);
  in.read(reinterpret_cast<char*>(img.data()), static_cast<std::streamsize>(img.size() * sizeof(float)));
  if (in.gcount() != static_cast<std::streamsize>(img.size() * sizeof(float)) || in.peek() != EOF) {
    throw IoError("slice file " + path.string() + " does not hold " + shape_str(rows, cols) +
                  " float32 values");
  }
  return img;
}

SlicePair load_slice_pair(const fs::path& data_dir, const DatasetManifest& manifest,
                          const SliceRef& ref) {
  const fs::path base = data_dir / "slices" / slice_stem(ref.volume_id, ref.slice_index);
  SlicePair p;
  p.volume_id = ref.volume_id;
  p.slice_index = ref.slice_index;
  p.hr = read_f32(base.string() + "_hr.f32", manifest.pad_to, manifest.pad_to);
  p.lr = read_f32(base.string() + "_lr.f32", manifest.lr_extent(), manifest.lr_extent());
  return p;
}

namespace {

struct VolumeResult {
  VolumeSummary summary;
  std::vector<SliceRef> included;
  std::vector<ExcludedSlice> excluded;
};

VolumeResult process_volume(const fs::path& path, Split split, const fs::path& slice_dir,
                            const DatasetOptions& opts) {
  VolumeRecord rec = ingest_volume(path, {opts.expected_shape, opts.grade});
  VolumeResult res;
  VolumeSummary& s = res.summary;
  s.subject_id = rec.subject_id;
  s.grade = rec.grade;
  s.modality = rec.modality;
  s.source = path.generic_string();
  s.shape = {rec.volume.nx, rec.volume.ny, rec.volume.nz};
  s.split = split;
  const auto [lo, hi] = std::minmax_element(rec.volume.voxels.begin(), rec.volume.voxels.end());
  s.intensity_min = *lo;
  s.intensity_max = *hi;

  std::vector<bool> blank(rec.volume.nz);
  for (int z = 0; z < rec.volume.nz; ++z) blank[z] = is_blank(rec.volume.slice(z));

  bool degenerate = false;
  try {
    normalize_volume(rec.volume);
  } catch (const DegenerateInputError& e) {
    log::warn("excluding volume {}: {}", rec.subject_id, e.what());
    degenerate = true;
  }

  for (int z = 0; z < rec.volume.nz; ++z) {
    if (degenerate) {
      res.excluded.push_back({rec.subject_id, z, "degenerate_volume"});
      continue;
    }
    if (blank[z]) {
      res.excluded.push_back({rec.subject_id, z, "blank"});
      continue;
    }
    const Image hr = pad_slice(rec.volume.slice(z), opts.pad_to);
    const Image lr = degrade(hr, opts.scale);
    const std::string stem = slice_stem(rec.subject_id, z);
    write_f32(slice_dir / (stem + "_hr.f32"), hr);
    write_f32(slice_dir / (stem + "_lr.f32"), lr);
    res.included.push_back({rec.subject_id, z});
  }
  s.included = static_cast<int>(res.included.size());
  s.excluded = static_cast<int>(res.excluded.size());
  return res;
}

}  // namespace

DatasetManifest build_dataset(const std::vector<fs::path>& volume_paths, const fs::path& out_dir,
                              const DatasetOptions& opts) {
  if (volume_paths.empty()) throw ConfigError("no volumes found");
  if (opts.scale != 4) throw ConfigError("scale is fixed at 4");
  if (opts.pad_to <= 0 || opts.pad_to % opts.scale != 0) {
    throw ConfigError("pad_to must be a positive multiple of the scale");
  }

  std::vector<std::string> ids;
  std::set<std::string> seen;
  for (const auto& p : volume_paths) {
    ids.push_back(subject_id_from_path(p));
    if (!seen.insert(ids.back()).second) {
      throw ConfigError("duplicate subject_id '" + ids.back() + "' (" + p.string() + ")");
    }
  }
  const std::vector<Split> splits = assign_splits(ids, opts.seed, opts.split_fraction);

  const fs::path slice_dir = out_dir / "slices";
  fs::create_directories(slice_dir);

  const int n = static_cast<int>(volume_paths.size());
  std::vector<VolumeResult> results(n);
  std::vector<std::exception_ptr> errors(n);
#pragma omp parallel for schedule(dynamic, 1)
  for (int i = 0; i < n; ++i) {
    try {
      results[i] = process_volume(volume_paths[i], splits[i], slice_dir, opts);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  DatasetManifest m;
  m.seed = opts.seed;
  m.split_fraction = opts.split_fraction;
  m.scale = opts.scale;
  m.pad_to = opts.pad_to;
  for (auto& r : results) {
    const int count = static_cast<int>(r.included.size());
    (r.summary.split == Split::kTrain ? m.train_slices : m.test_slices) += count;
    m.volumes.push_back(r.summary);
    m.included.insert(m.included.end(), r.included.begin(), r.included.end());
    m.excluded.insert(m.excluded.end(), r.excluded.begin(), r.excluded.end());
  }

  // Reference counts for the BraTS 2018 T1 set under the all-zero rule.
  if (n == 285 && (m.train_slices != 31322 || m.test_slices != 7823)) {
    log::warn("slice counts train={} test={} differ from the reference 31322/7823", m.train_slices,
              m.test_slices);
  }
  m.save(out_dir / "manifest.json");
  return m;
}

}  // namespace mrsr

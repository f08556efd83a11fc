#pragma once

// Tensor archive: the on-disk container for checkpoints and backbone weights.
//
// Layout (all integers little-endian):
//
//   bytes 0..7    magic "MRSRARCH"
//   bytes 8..11   uint32 format version (1)
//   bytes 12..19  uint64 header length L
//   next L bytes  UTF-8 JSON header:
//                   { "metadata": {...},
//                     "tensors": [ {"name", "dtype": "f32"|"f64", "shape": [...],
//                                   "offset", "nbytes"}, ... ] }
//   remainder     tensor payloads, row-major, offsets relative to the payload start
//
// tools/tensor_archive.py reads and writes the same layout.

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "mrsr/tensor.hpp"

namespace mrsr {

class TensorArchive {
 public:
  nlohmann::json metadata = nlohmann::json::object();

  template <typename T>
  void put(const std::string& name, const Tensor<T>& t) {
    const Shape4& s = t.shape();
    put_raw(name, {s.n, s.c, s.h, s.w}, t.values());
  }
  template <typename T>
  void put_vector(const std::string& name, const std::vector<T>& v) {
    put_raw(name, {static_cast<std::int64_t>(v.size())}, std::span<const T>(v));
  }

  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  std::vector<std::string> names() const;
  std::vector<std::int64_t> shape_of(const std::string& name) const;

  // Values are converted to T when the stored dtype differs.
  template <typename T>
  std::vector<T> get_vector(const std::string& name) const;
  // Rank < 4 shapes are widened: (C) -> (C,1,1,1), (A,B) -> (A,B,1,1).
  template <typename T>
  Tensor<T> get_tensor(const std::string& name) const;

  // Writes to a sibling temp file and renames it into place.
  void save(const std::filesystem::path& path) const;
  static TensorArchive load(const std::filesystem::path& path);

 private:
  struct Entry {
    std::string dtype;
    std::vector<std::int64_t> shape;
    std::vector<std::uint8_t> bytes;
  };

  template <typename T>
  void put_raw(const std::string& name, std::vector<std::int64_t> shape, std::span<const T> values);

  const Entry& entry(const std::string& name) const;

  std::map<std::string, Entry> entries_;
};

// FNV-1a 64 content fingerprint of a file, recorded in run logs.
std::string file_fingerprint(const std::filesystem::path& path);

}  // namespace mrsr

#pragma once

// Shared synthetic data for the test binaries.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "mrsr/image.hpp"
#include "mrsr/nifti.hpp"
#include "mrsr/rng.hpp"
#include "mrsr/tensor.hpp"

namespace mrsr::test {

// Unique directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("mrsr_" + tag + "_" + std::to_string(rd()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

inline Image random_image(int rows, int cols, std::uint64_t seed, float lo = 0.0f, float hi = 1.0f) {
  Rng rng(seed);
  Image img(rows, cols);
  for (float& v : img.values()) v = static_cast<float>(rng.uniform(lo, hi));
  return img;
}

template <typename T>
Tensor<T> random_tensor(Shape4 s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  Tensor<T> t(s);
  for (T& v : t.values()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

// Smooth brain-like phantom: nested ellipses with soft edges, a few
// high-frequency stripes and bright blobs, in [0, 1] on a zero background.
inline Image phantom(int size, std::uint64_t seed) {
  Rng rng(seed);
  Image img(size, size, 0.0f);
  const double cx = size / 2.0 + rng.uniform(-size * 0.05, size * 0.05);
  const double cy = size / 2.0 + rng.uniform(-size * 0.05, size * 0.05);
  const double ax = size * rng.uniform(0.30, 0.40);
  const double ay = size * rng.uniform(0.35, 0.44);
  const double freq = rng.uniform(0.15, 0.45);
  const double phase = rng.uniform(0.0, 6.28);
  struct Blob { double x, y, r, a; };
  Blob blobs[4];
  for (auto& b : blobs) {
    b = {cx + rng.uniform(-ax / 2, ax / 2), cy + rng.uniform(-ay / 2, ay / 2),
         size * rng.uniform(0.02, 0.08), rng.uniform(0.2, 0.5)};
  }
  for (int r = 0; r < size; ++r) {
    for (int c = 0; c < size; ++c) {
      const double dx = (c + 0.5 - cx) / ax;
      const double dy = (r + 0.5 - cy) / ay;
      const double rho = std::sqrt(dx * dx + dy * dy);
      if (rho >= 1.0) continue;
      double v = 0.35 + 0.25 * (rho > 0.85 ? 1.0 : 0.0);
      v += 0.12 * std::sin(freq * c + phase) * std::cos(freq * 0.7 * r);
      for (const auto& b : blobs) {
        const double d2 = ((c - b.x) * (c - b.x) + (r - b.y) * (r - b.y)) / (b.r * b.r);
        v += b.a * std::exp(-d2);
      }
      img(r, c) = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return img;
}

// Volume with positive content everywhere except the listed blank planes.
inline Volume synthetic_volume(int nx, int ny, int nz, std::uint64_t seed,
                               const std::vector<int>& blank_planes, float scale = 1000.0f) {
  Volume v(nx, ny, nz);
  for (int z = 0; z < nz; ++z) {
    const bool blank = std::find(blank_planes.begin(), blank_planes.end(), z) != blank_planes.end();
    if (blank) continue;
    const Image p = phantom(std::max(nx, ny), seed * 131 + static_cast<std::uint64_t>(z));
    for (int y = 0; y < ny; ++y)
      for (int x = 0; x < nx; ++x) v.at(x, y, z) = scale * p(y, x);
    v.at(nx / 2, ny / 2, z) += scale * 0.5f;  // never all zero
  }
  return v;
}

}  // namespace mrsr::test

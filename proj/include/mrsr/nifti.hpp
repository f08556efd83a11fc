#pragma once

#include <array>
#include <filesystem>
#include <vector>

#include "mrsr/image.hpp"

namespace mrsr {

// Scalar 3D volume, x fastest, then y, then z (NIfTI voxel order).
struct Volume {
  int nx = 0;
  int ny = 0;
  int nz = 0;
  std::vector<float> voxels;
  std::array<float, 3> spacing{1.0f, 1.0f, 1.0f};

  Volume() = default;
  Volume(int x, int y, int z) : nx(x), ny(y), nz(z), voxels(static_cast<std::size_t>(x) * y * z) {}

  float& at(int x, int y, int z) {
    return voxels[(static_cast<std::size_t>(z) * ny + y) * nx + x];
  }
  float at(int x, int y, int z) const {
    return voxels[(static_cast<std::size_t>(z) * ny + y) * nx + x];
  }
  // Axial plane z as an ny x nx image.
  Image slice(int z) const;
};

// Reads .nii or .nii.gz (gzip detected from content). Integer and float
// datatypes are widened to float; scl_slope/scl_inter are applied when set.
// A 4D file with a singleton 4th dimension is accepted as 3D.
Volume read_nifti(const std::filesystem::path& path);

// Writes a float32 NIfTI-1 single file; gzip-compressed when the name ends in .gz.
void write_nifti(const std::filesystem::path& path, const Volume& volume);

// Writes a 2D float32 NIfTI file (used to exercise dimensionality checks).
void write_nifti_2d(const std::filesystem::path& path, const Image& image);

}  // namespace mrsr

#include "mrsr/nifti.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <memory>
#include <string>

#include "mrsr/errors.hpp"

namespace mrsr {

namespace {

constexpr int kHeaderSize = 348;
constexpr int kDataOffset = 352;

enum NiftiType : std::int16_t {
  kUint8 = 2,
  kInt16 = 4,
  kInt32 = 8,
  kFloat32 = 16,
  kFloat64 = 64,
  kInt8 = 256,
  kUint16 = 512,
  kUint32 = 768,
};

std::vector<std::uint8_t> read_all(const std::filesystem::path& path) {
  // gzread passes uncompressed files through unchanged.
  std::unique_ptr<gzFile_s, decltype(&gzclose)> f(gzopen(path.c_str(), "rb"), &gzclose);
  if (!f) throw IoError("cannot open NIfTI file " + path.string());
  std::vector<std::uint8_t> buf;
  std::uint8_t chunk[1 << 16];
  for (;;) {
    const int n = gzread(f.get(), chunk, sizeof(chunk));
    if (n < 0) throw IoError("failed to decode NIfTI file " + path.string());
    if (n == 0) break;
    buf.insert(buf.end(), chunk, chunk + n);
  }
  return buf;
}

template <typename T>
T load(const std::uint8_t* p, bool swap) {
  std::uint8_t tmp[sizeof(T)];
  std::memcpy(tmp, p, sizeof(T));
  if (swap) std::reverse(tmp, tmp + sizeof(T));
  T v;
  std::memcpy(&v, tmp, sizeof(T));
  return v;
}

template <typename T>
void store(std::vector<std::uint8_t>& buf, std::size_t offset, T v) {
  std::memcpy(buf.data() + offset, &v, sizeof(T));
}

template <typename T>
void widen(const std::uint8_t* src, std::size_t count, bool swap, float* dst) {
  for (std::size_t i = 0; i < count; ++i) dst[i] = static_cast<float>(load<T>(src + i * sizeof(T), swap));
}

std::string dims_str(const std::vector<int>& dims) {
  std::string s = "(";
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(dims[i]);
  }
  return s + ")";
}

std::vector<std::uint8_t> make_header(const std::vector<int>& dims, const std::array<float, 3>& spacing) {
  std::vector<std::uint8_t> hdr(kDataOffset, 0);
  store<std::int32_t>(hdr, 0, kHeaderSize);
  store<std::int16_t>(hdr, 40, static_cast<std::int16_t>(dims.size()));
  for (std::size_t i = 0; i < dims.size(); ++i) {
    store<std::int16_t>(hdr, 42 + 2 * i, static_cast<std::int16_t>(dims[i]));
  }
  for (std::size_t i = dims.size(); i < 7; ++i) store<std::int16_t>(hdr, 42 + 2 * i, 1);
  store<std::int16_t>(hdr, 70, kFloat32);
  store<std::int16_t>(hdr, 72, 32);
  store<float>(hdr, 76, 1.0f);
  for (std::size_t i = 0; i < 3; ++i) store<float>(hdr, 80 + 4 * i, spacing[i]);
  store<float>(hdr, 108, static_cast<float>(kDataOffset));
  store<float>(hdr, 112, 0.0f);
  std::memcpy(hdr.data() + 344, "n+1\0", 4);
  return hdr;
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& hdr,
                const float* data, std::size_t count) {
  const std::size_t bytes = count * sizeof(float);
  if (path.extension() == ".gz") {
    std::unique_ptr<gzFile_s, decltype(&gzclose)> f(gzopen(path.c_str(), "wb6"), &gzclose);
    if (!f) throw IoError("cannot open " + path.string() + " for writing");
    if (gzwrite(f.get(), hdr.data(), static_cast<unsigned>(hdr.size())) != static_cast<int>(hdr.size())) {
      throw IoError("write failed for " + path.string());
    }
    const auto* p = reinterpret_cast<const char*>(data);
    std::size_t done = 0;
    while (done < bytes) {
      const unsigned n = static_cast<unsigned>(std::min<std::size_t>(bytes - done, 1u << 24));
      if (gzwrite(f.get(), p + done, n) != static_cast<int>(n)) {
        throw IoError("write failed for " + path.string());
      }
      done += n;
    }
  } else {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(hdr.data()), static_cast<std::streamsize>(hdr.size()));
    out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(bytes));
    if (!out) throw IoError("write failed for " + path.string());
  }
}

}  // namespace

Image Volume::slice(int z) const {
  if (z < 0 || z >= nz) throw ShapeError("slice index " + std::to_string(z) + " out of range");
  const std::size_t plane = static_cast<std::size_t>(nx) * ny;
  std::vector<float> v(voxels.begin() + static_cast<std::ptrdiff_t>(plane * z),
                       voxels.begin() + static_cast<std::ptrdiff_t>(plane * (z + 1)));
  return Image(ny, nx, std::move(v));
}

Volume read_nifti(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("NIfTI file not found: " + path.string());
  const std::vector<std::uint8_t> buf = read_all(path);
  if (buf.size() < kHeaderSize) throw IoError(path.string() + ": too short for a NIfTI header");

  bool swap = false;
  const auto sizeof_hdr = load<std::int32_t>(buf.data(), false);
  if (sizeof_hdr != kHeaderSize) {
    if (load<std::int32_t>(buf.data(), true) != kHeaderSize) {
      throw IoError(path.string() + ": not a NIfTI-1 file");
    }
    swap = true;
  }
  if (std::memcmp(buf.data() + 344, "n+1", 3) != 0) {
    throw IoError(path.string() + ": only single-file NIfTI-1 (n+1) is supported");
  }

  const int rank = load<std::int16_t>(buf.data() + 40, swap);
  if (rank < 1 || rank > 7) throw IoError(path.string() + ": invalid dim[0] = " + std::to_string(rank));
  std::vector<int> dims;
  for (int i = 0; i < rank; ++i) dims.push_back(load<std::int16_t>(buf.data() + 42 + 2 * i, swap));
  // Trailing singleton dimensions do not change the dimensionality.
  while (dims.size() > 3 && dims.back() == 1) dims.pop_back();
  if (dims.size() != 3) {
    throw ShapeError(path.string() + ": expected a 3D scalar volume, got shape " + dims_str(dims));
  }
  for (int d : dims) {
    if (d <= 0) throw ShapeError(path.string() + ": non-positive extent in shape " + dims_str(dims));
  }

  const auto datatype = load<std::int16_t>(buf.data() + 70, swap);
  const auto vox_offset = static_cast<std::size_t>(load<float>(buf.data() + 108, swap));
  const float slope = load<float>(buf.data() + 112, swap);
  const float inter = load<float>(buf.data() + 116, swap);

  Volume vol(dims[0], dims[1], dims[2]);
  for (int i = 0; i < 3; ++i) vol.spacing[i] = load<float>(buf.data() + 80 + 4 * i, swap);
  const std::size_t count = vol.voxels.size();

  std::size_t width = 0;
  switch (datatype) {
    case kUint8: case kInt8: width = 1; break;
    case kInt16: case kUint16: width = 2; break;
    case kInt32: case kUint32: case kFloat32: width = 4; break;
    case kFloat64: width = 8; break;
    default:
      throw IoError(path.string() + ": unsupported NIfTI datatype " + std::to_string(datatype));
  }
  if (vox_offset < kHeaderSize || buf.size() < vox_offset + count * width) {
    throw IoError(path.string() + ": truncated voxel data");
  }
  const std::uint8_t* src = buf.data() + vox_offset;
  float* dst = vol.voxels.data();
  switch (datatype) {
    case kUint8: widen<std::uint8_t>(src, count, false, dst); break;
    case kInt8: widen<std::int8_t>(src, count, false, dst); break;
    case kInt16: widen<std::int16_t>(src, count, swap, dst); break;
    case kUint16: widen<std::uint16_t>(src, count, swap, dst); break;
    case kInt32: widen<std::int32_t>(src, count, swap, dst); break;
    case kUint32: widen<std::uint32_t>(src, count, swap, dst); break;
    case kFloat32: widen<float>(src, count, swap, dst); break;
    case kFloat64: widen<double>(src, count, swap, dst); break;
    default: break;
  }
  if (slope != 0.0f && std::isfinite(slope) && !(slope == 1.0f && inter == 0.0f)) {
    for (float& v : vol.voxels) v = v * slope + inter;
  }
  return vol;
}

void write_nifti(const std::filesystem::path& path, const Volume& volume) {
  if (volume.voxels.size() != static_cast<std::size_t>(volume.nx) * volume.ny * volume.nz) {
    throw ShapeError("volume voxel count does not match its extents");
  }
  write_file(path, make_header({volume.nx, volume.ny, volume.nz}, volume.spacing),
             volume.voxels.data(), volume.voxels.size());
}

void write_nifti_2d(const std::filesystem::path& path, const Image& image) {
  write_file(path, make_header({image.cols(), image.rows()}, {1.0f, 1.0f, 1.0f}), image.data(),
             image.size());
}

}  // namespace mrsr

#include "mrsr/png_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <memory>
#include <vector>

#include "mrsr/errors.hpp"

namespace mrsr {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

void write_png16(const std::filesystem::path& path, const Image& image) {
  if (image.empty()) throw ShapeError("cannot write an empty image to " + path.string());
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw IoError("cannot open " + path.string() + " for writing");

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng initialisation failed");
  }

  // Big-endian 16-bit rows as PNG stores them.
  std::vector<png_byte> rows(static_cast<std::size_t>(image.rows()) * image.cols() * 2);
  for (std::size_t i = 0; i < image.size(); ++i) {
    const float v = std::clamp(image.data()[i], 0.0f, 1.0f);
    const auto q = static_cast<unsigned>(std::lround(v * 65535.0f));
    rows[2 * i] = static_cast<png_byte>(q >> 8);
    rows[2 * i + 1] = static_cast<png_byte>(q & 0xff);
  }
  std::vector<png_bytep> row_ptrs(image.rows());
  for (int r = 0; r < image.rows(); ++r) {
    row_ptrs[r] = rows.data() + static_cast<std::size_t>(r) * image.cols() * 2;
  }

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng failed writing " + path.string());
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.cols()),
               static_cast<png_uint_32>(image.rows()), 16, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, row_ptrs.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Image read_png(const std::filesystem::path& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw IoError("cannot open image " + path.string());
  png_byte sig[8];
  if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw IoError(path.string() + " is not a PNG file");
  }

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng initialisation failed");
  }
  std::vector<png_byte> data;
  std::vector<png_bytep> row_ptrs;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng failed reading " + path.string());
  }
  png_init_io(png, f.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA ||
      color == PNG_COLOR_TYPE_PALETTE) {
    png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  }
  png_read_update_info(png, info);

  const auto width = static_cast<int>(png_get_image_width(png, info));
  const auto height = static_cast<int>(png_get_image_height(png, info));
  const int out_depth = png_get_bit_depth(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  data.resize(rowbytes * height);
  row_ptrs.resize(height);
  for (int r = 0; r < height; ++r) row_ptrs[r] = data.data() + rowbytes * r;
  png_read_image(png, row_ptrs.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Image img(height, width);
  for (int r = 0; r < height; ++r) {
    const png_byte* row = row_ptrs[r];
    for (int c = 0; c < width; ++c) {
      img(r, c) = out_depth == 16
                      ? static_cast<float>((row[2 * c] << 8) | row[2 * c + 1]) / 65535.0f
                      : static_cast<float>(row[c]) / 255.0f;
    }
  }
  return img;
}

}  // namespace mrsr

#pragma once

#include <filesystem>

#include "mrsr/image.hpp"

namespace mrsr {

// Writes a 16-bit grayscale PNG; values are clamped to [0, 1] and mapped
// to 0..65535 with rounding.
void write_png16(const std::filesystem::path& path, const Image& image);

// Reads an 8- or 16-bit grayscale PNG (RGB is converted to luma) into [0, 1].
Image read_png(const std::filesystem::path& path);

}  // namespace mrsr

#pragma once

#include <filesystem>

#include "her2/imaging.hpp"

namespace her2 {

/// Reads an 8-bit RGB PNG or TIFF. Grayscale and alpha inputs are
/// rejected. Throws InputError on unreadable or unsupported files.
RasterImage load_image(const std::filesystem::path& path);

/// Writes a PNG via temp file + rename.
void save_png(const std::filesystem::path& path, const RasterImage& image);

/// True for extensions load_image accepts (.png, .tif, .tiff; any case).
bool is_supported_image(const std::filesystem::path& path);

}  // namespace her2

#pragma once

#include <filesystem>

#include "lfcal/raw_image.hpp"

namespace lfcal {

/// Reads binary PGM (P5, 8 or 16 bit) or grayscale PNG (8 or 16 bit),
/// chosen by file extension. Throws Error(Io) on anything else.
RawImage read_image(const std::filesystem::path& path);

/// Writes 16-bit PGM or PNG by extension.
void write_image(const std::filesystem::path& path, const RawImage& img);

RawImage read_pgm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const RawImage& img, int max_value = 65535);

RawImage read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const RawImage& img, int bit_depth = 16);

}  // namespace lfcal

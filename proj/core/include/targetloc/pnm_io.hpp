#pragma once

#include <array>
#include <filesystem>
#include <string>

#include "targetloc/image.hpp"

namespace targetloc {

/// Binary PGM (P5) loader. 8-bit (maxval <= 255) and 16-bit (maxval <= 65535,
/// big-endian) rasters are accepted; values come back scaled to [0, 1] by the
/// declared maxval. Throws UnreadableRaster / UnsupportedBitDepth.
ImageF read_pgm(const std::filesystem::path& path);

/// Writes a binary PGM (P5). bits must be 8 or 16; values are clamped to
/// [0, 1] and quantized to the full range of the chosen depth.
void write_pgm(const std::filesystem::path& path, const ImageF& img, int bits = 16);

struct Rgb8 {
    std::uint8_t r = 0, g = 0, b = 0;
    bool operator==(const Rgb8&) const = default;
};

/// Binary PPM (P6), 8-bit per channel.
void write_ppm(const std::filesystem::path& path, const Image2D<Rgb8>& img);

} // namespace targetloc

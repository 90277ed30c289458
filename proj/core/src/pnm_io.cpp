#include "targetloc/pnm_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace targetloc {

namespace {

// Skips whitespace and '#' comment lines, then reads one unsigned integer.
bool next_pnm_int(std::istream& in, long& out) {
    int c = in.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
        } else if (!std::isspace(c)) {
            break;
        }
        c = in.get();
    }
    if (c == EOF || !std::isdigit(c)) return false;
    long v = 0;
    while (c != EOF && std::isdigit(c)) {
        v = v * 10 + (c - '0');
        c = in.get();
    }
    // the single whitespace byte after the header token has been consumed
    out = v;
    return true;
}

} // namespace

ImageF read_pgm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw UnreadableRaster("cannot open raster: " + path.string());

    char m0 = 0, m1 = 0;
    in.get(m0);
    in.get(m1);
    if (m0 != 'P' || m1 != '5')
        throw UnreadableRaster("not a binary PGM (P5): " + path.string());

    long w = 0, h = 0, maxval = 0;
    if (!next_pnm_int(in, w) || !next_pnm_int(in, h) || !next_pnm_int(in, maxval))
        throw UnreadableRaster("truncated PGM header: " + path.string());
    if (w <= 0 || h <= 0)
        throw UnreadableRaster("bad PGM dimensions: " + path.string());
    if (maxval <= 0 || maxval > 65535)
        throw UnsupportedBitDepth("PGM maxval " + std::to_string(maxval) +
                                  " unsupported: " + path.string());

    const bool wide = maxval > 255;
    const std::size_t n = static_cast<std::size_t>(w) * h;
    std::vector<unsigned char> raw(n * (wide ? 2 : 1));
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(in.gcount()) != raw.size())
        throw UnreadableRaster("truncated PGM pixel data: " + path.string());

    ImageF img(static_cast<int>(w), static_cast<int>(h));
    const float scale = 1.0f / static_cast<float>(maxval);
    float* dst = img.data();
    if (wide) {
        for (std::size_t i = 0; i < n; ++i) {
            unsigned v = (static_cast<unsigned>(raw[2 * i]) << 8) | raw[2 * i + 1];
            dst[i] = static_cast<float>(v) * scale;
        }
    } else {
        for (std::size_t i = 0; i < n; ++i)
            dst[i] = static_cast<float>(raw[i]) * scale;
    }
    return img;
}

void write_pgm(const std::filesystem::path& path, const ImageF& img, int bits) {
    if (bits != 8 && bits != 16)
        throw InvalidArgument("write_pgm: bits must be 8 or 16");
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw WriteFailure("cannot open for writing: " + path.string());

    const long maxval = bits == 8 ? 255 : 65535;
    out << "P5\n" << img.width() << " " << img.height() << "\n" << maxval << "\n";

    const std::size_t n = img.size();
    const float* src = img.data();
    std::vector<unsigned char> raw(n * (bits == 16 ? 2 : 1));
    for (std::size_t i = 0; i < n; ++i) {
        float v = std::clamp(src[i], 0.0f, 1.0f);
        long q = std::lround(static_cast<double>(v) * maxval);
        if (bits == 16) {
            raw[2 * i] = static_cast<unsigned char>((q >> 8) & 0xFF);
            raw[2 * i + 1] = static_cast<unsigned char>(q & 0xFF);
        } else {
            raw[i] = static_cast<unsigned char>(q);
        }
    }
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!out)
        throw WriteFailure("short write: " + path.string());
}

void write_ppm(const std::filesystem::path& path, const Image2D<Rgb8>& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw WriteFailure("cannot open for writing: " + path.string());
    out << "P6\n" << img.width() << " " << img.height() << "\n255\n";
    static_assert(sizeof(Rgb8) == 3);
    out.write(reinterpret_cast<const char*>(img.data()),
              static_cast<std::streamsize>(img.size() * 3));
    if (!out)
        throw WriteFailure("short write: " + path.string());
}

} // namespace targetloc

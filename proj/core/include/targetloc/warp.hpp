#pragma once

#include "targetloc/geo_image.hpp"
#include "targetloc/homography.hpp"

namespace targetloc {

struct WarpResult {
    ImageF image;         // view_size x view_size, zero where unsampled
    Image2D<std::uint8_t> valid; // 1 where the full bilinear support was in bounds
};

/// Resamples src through t: out[i, j] = bilinear(src, H * (i, j, 1)). Samples
/// whose bilinear support leaves the source get zero fill and a cleared
/// validity bit. Pure function of (src, t).
WarpResult warp(const ImageF& src, const ViewTransform& t);

inline WarpResult warp(const GeoImage& src, const ViewTransform& t) {
    return warp(src.pixels, t);
}

} // namespace targetloc

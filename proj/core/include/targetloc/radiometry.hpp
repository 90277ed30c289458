#pragma once

#include "targetloc/geo_image.hpp"

namespace targetloc {

struct RadiometryResult {
    GeoImage image;
    bool degenerate_range = false; // constant input, output forced to all zeros
};

/// Percentile clip + gamma correction. Values at or below the clip_percentile
/// quantile map to 0, at or above the (1 - clip_percentile) quantile map to 1,
/// linear in between, then raised to gamma. Quantiles are computed by linear
/// interpolation on the sorted pixel multiset. Monotone non-decreasing in the
/// input; output always within [0, 1].
///
/// Defaults follow the processing applied to the satellite stacks this tool
/// targets: clip at the 0.2th percentile per side, gamma 0.5.
RadiometryResult preprocess_radiometry(const GeoImage& img,
                                       double clip_percentile = 0.002,
                                       double gamma = 0.5);

/// Quantile of the pixel multiset by linear interpolation, q in [0, 1].
float pixel_quantile(const ImageF& img, double q);

} // namespace targetloc

#include "targetloc/radiometry.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace targetloc {

float pixel_quantile(const ImageF& img, double q) {
    std::vector<float> sorted(img.pixels());
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();
    if (n == 1) return sorted[0];
    const double pos = q * static_cast<double>(n - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, n - 1);
    const double frac = pos - static_cast<double>(lo);
    return static_cast<float>(sorted[lo] * (1.0 - frac) + sorted[hi] * frac);
}

RadiometryResult preprocess_radiometry(const GeoImage& img,
                                       double clip_percentile,
                                       double gamma) {
    if (clip_percentile < 0.0 || clip_percentile >= 0.5)
        throw InvalidArgument("clip_percentile must be in [0, 0.5)");
    if (!(gamma > 0.0))
        throw InvalidArgument("gamma must be positive");

    RadiometryResult res;
    res.image = img;

    const float lo = pixel_quantile(img.pixels, clip_percentile);
    const float hi = pixel_quantile(img.pixels, 1.0 - clip_percentile);
    if (!(hi > lo)) {
        std::fill(res.image.pixels.pixels().begin(), res.image.pixels.pixels().end(), 0.0f);
        res.degenerate_range = true;
        return res;
    }

    const double inv = 1.0 / (static_cast<double>(hi) - static_cast<double>(lo));
    for (float& v : res.image.pixels.pixels()) {
        double t = (static_cast<double>(v) - lo) * inv;
        t = std::clamp(t, 0.0, 1.0);
        v = static_cast<float>(std::pow(t, gamma));
    }
    return res;
}

} // namespace targetloc

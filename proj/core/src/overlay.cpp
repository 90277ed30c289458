#include "targetloc/overlay.hpp"

#include <algorithm>
#include <cmath>

#include "targetloc/pnm_io.hpp"

namespace targetloc {

void render_overlay(const ImageF& image, std::span<const float> likelihood, int grid,
                    PixelPoint truth_px, const std::filesystem::path& out_path) {
    if (grid <= 0 || static_cast<int>(likelihood.size()) != grid * grid)
        throw InvalidArgument("render_overlay: likelihood size != grid^2");
    if (image.width() != image.height() || image.width() % grid != 0)
        throw InvalidArgument("render_overlay: grid must divide the square image size");

    const int n = image.width();
    const int cell = n / grid;

    float mx = 0.0f;
    for (float v : likelihood) mx = std::max(mx, v);
    const float scale = mx > 0.0f ? 1.0f / mx : 0.0f;

    Image2D<Rgb8> out(n, n);
    for (int y = 0; y < n; ++y) {
        const int cv = y / cell;
        for (int x = 0; x < n; ++x) {
            const int cu = x / cell;
            const float a = mx > 0.0f
                                ? likelihood[static_cast<std::size_t>(cv) * grid + cu] * scale
                                : 1.0f; // all-zero field renders as a uniform tint
            const float g = std::clamp(image.at(x, y), 0.0f, 1.0f);
            const float t = 0.55f * a;
            const float r = g * (1.0f - t) + 1.00f * t;
            const float gg = g * (1.0f - t) + 0.85f * t;
            const float b = g * (1.0f - t) + 0.10f * t;
            out.at(x, y) = {static_cast<std::uint8_t>(std::lround(r * 255.0f)),
                            static_cast<std::uint8_t>(std::lround(gg * 255.0f)),
                            static_cast<std::uint8_t>(std::lround(b * 255.0f))};
        }
    }

    // truth marker: filled red disc, radius 3 px
    const int cx = static_cast<int>(std::lround(truth_px.u));
    const int cy = static_cast<int>(std::lround(truth_px.v));
    for (int dy = -3; dy <= 3; ++dy)
        for (int dx = -3; dx <= 3; ++dx) {
            if (dx * dx + dy * dy > 9) continue;
            const int x = cx + dx, y = cy + dy;
            if (out.contains(x, y)) out.at(x, y) = {230, 20, 20};
        }

    write_ppm(out_path, out);
}

} // namespace targetloc

#include "targetloc/warp.hpp"

#include <cmath>

namespace targetloc {

WarpResult warp(const ImageF& src, const ViewTransform& t) {
    if (std::abs(t.H.det()) <= 1e-12)
        throw SingularTransform("warp: view transform is singular");

    const int n = t.view_size;
    WarpResult res{ImageF(n, n, 0.0f), Image2D<std::uint8_t>(n, n, 0)};

    const auto& h = t.H.m;
    const int w = src.width(), hh = src.height();
    const float* sp = src.data();

    for (int j = 0; j < n; ++j) {
        float* orow = res.image.data() + static_cast<std::size_t>(j) * n;
        std::uint8_t* vrow = res.valid.data() + static_cast<std::size_t>(j) * n;
        for (int i = 0; i < n; ++i) {
            const double hw = h[6] * i + h[7] * j + h[8];
            if (std::abs(hw) < 1e-12) continue;
            const double x = (h[0] * i + h[1] * j + h[2]) / hw;
            const double y = (h[3] * i + h[4] * j + h[5]) / hw;

            const double xf = std::floor(x), yf = std::floor(y);
            const int x0 = static_cast<int>(xf), y0 = static_cast<int>(yf);
            const float fx = static_cast<float>(x - xf), fy = static_cast<float>(y - yf);

            auto tap = [&](int xx, int yy) -> float {
                return (xx >= 0 && xx < w && yy >= 0 && yy < hh)
                           ? sp[static_cast<std::size_t>(yy) * w + xx]
                           : 0.0f;
            };
            const float v00 = tap(x0, y0), v10 = tap(x0 + 1, y0);
            const float v01 = tap(x0, y0 + 1), v11 = tap(x0 + 1, y0 + 1);
            orow[i] = (1.0f - fy) * ((1.0f - fx) * v00 + fx * v10) +
                      fy * ((1.0f - fx) * v01 + fx * v11);
            vrow[i] = (x >= 0.0 && x <= w - 1 && y >= 0.0 && y <= hh - 1) ? 1 : 0;
        }
    }
    return res;
}

} // namespace targetloc

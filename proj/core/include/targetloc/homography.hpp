#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "targetloc/error.hpp"
#include "targetloc/geo.hpp"

namespace targetloc {

/// Row-major 3x3 matrix acting on homogeneous pixel coordinates (x, y, 1)
/// with x the column index.
struct Mat3 {
    std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

    static Mat3 identity() { return {}; }
    static Mat3 translation(double tx, double ty);
    static Mat3 rotation(double radians); // counter-clockwise in (x, y)
    static Mat3 scale(double s);

    double& operator()(int r, int c) { return m[r * 3 + c]; }
    double operator()(int r, int c) const { return m[r * 3 + c]; }

    Mat3 operator*(const Mat3& o) const;
    double det() const;
    Mat3 inverse() const; // throws SingularTransform

    /// Applies to (x, y, 1) and divides by the homogeneous coordinate.
    /// Throws PointAtInfinity when |w| < 1e-12 relative to the point scale.
    PixelPoint apply(PixelPoint p) const;

    bool operator==(const Mat3&) const = default;
};

/// Plane-projective link between synthesized-view pixels and reference-stack
/// pixels: H maps view (i, j, 1) to reference (u, v, w). Planar by
/// construction; no parallax is modeled.
struct ViewTransform {
    Mat3 H;
    std::string source_image_id;
    std::uint64_t seed = 0;
    int view_size = 256;

    /// Position of a reference-image point in view coordinates (H^-1).
    PixelPoint project_target(PixelPoint reference_px) const;
};

} // namespace targetloc

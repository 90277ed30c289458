#include "targetloc/homography.hpp"

#include <cmath>

namespace targetloc {

Mat3 Mat3::translation(double tx, double ty) {
    Mat3 t;
    t(0, 2) = tx;
    t(1, 2) = ty;
    return t;
}

Mat3 Mat3::rotation(double radians) {
    Mat3 r;
    const double c = std::cos(radians), s = std::sin(radians);
    r(0, 0) = c;
    r(0, 1) = -s;
    r(1, 0) = s;
    r(1, 1) = c;
    return r;
}

Mat3 Mat3::scale(double s) {
    Mat3 m;
    m(0, 0) = s;
    m(1, 1) = s;
    return m;
}

Mat3 Mat3::operator*(const Mat3& o) const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double acc = 0.0;
            for (int k = 0; k < 3; ++k) acc += (*this)(i, k) * o(k, j);
            r(i, j) = acc;
        }
    return r;
}

double Mat3::det() const {
    const auto& a = m;
    return a[0] * (a[4] * a[8] - a[5] * a[7]) - a[1] * (a[3] * a[8] - a[5] * a[6]) +
           a[2] * (a[3] * a[7] - a[4] * a[6]);
}

Mat3 Mat3::inverse() const {
    const double d = det();
    if (!std::isfinite(d) || std::abs(d) <= 1e-12)
        throw SingularTransform("3x3 matrix is singular (|det| <= 1e-12)");
    const auto& a = m;
    Mat3 r;
    r.m = {(a[4] * a[8] - a[5] * a[7]) / d, (a[2] * a[7] - a[1] * a[8]) / d,
           (a[1] * a[5] - a[2] * a[4]) / d, (a[5] * a[6] - a[3] * a[8]) / d,
           (a[0] * a[8] - a[2] * a[6]) / d, (a[2] * a[3] - a[0] * a[5]) / d,
           (a[3] * a[7] - a[4] * a[6]) / d, (a[1] * a[6] - a[0] * a[7]) / d,
           (a[0] * a[4] - a[1] * a[3]) / d};
    return r;
}

PixelPoint Mat3::apply(PixelPoint p) const {
    const double x = m[0] * p.u + m[1] * p.v + m[2];
    const double y = m[3] * p.u + m[4] * p.v + m[5];
    const double w = m[6] * p.u + m[7] * p.v + m[8];
    if (std::abs(w) < 1e-12)
        throw PointAtInfinity("homogeneous coordinate vanished");
    return {x / w, y / w};
}

PixelPoint ViewTransform::project_target(PixelPoint reference_px) const {
    return H.inverse().apply(reference_px);
}

} // namespace targetloc

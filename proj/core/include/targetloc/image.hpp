#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "targetloc/error.hpp"

namespace targetloc {

/// Dense single-channel raster, row-major. Coordinates are (x, y) with x the
/// column index; the sample point of pixel (x, y) sits at continuous
/// coordinate (x, y), so a W x H image spans [-0.5, W-0.5] x [-0.5, H-0.5].
template <class T>
class Image2D {
public:
    Image2D() = default;
    Image2D(int width, int height, T fill = T{})
        : width_(width), height_(height),
          data_(static_cast<std::size_t>(width) * height, fill) {
        if (width <= 0 || height <= 0)
            throw InvalidArgument("Image2D: non-positive dimensions");
    }

    int width() const { return width_; }
    int height() const { return height_; }
    std::size_t size() const { return data_.size(); }

    T& at(int x, int y) { return data_[static_cast<std::size_t>(y) * width_ + x]; }
    const T& at(int x, int y) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }

    bool contains(int x, int y) const {
        return x >= 0 && x < width_ && y >= 0 && y < height_;
    }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::vector<T>& pixels() { return data_; }
    const std::vector<T>& pixels() const { return data_; }

    bool operator==(const Image2D&) const = default;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<T> data_;
};

using ImageF = Image2D<float>;
using ImageU8 = Image2D<std::uint8_t>;

} // namespace targetloc

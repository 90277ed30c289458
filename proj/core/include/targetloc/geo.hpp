#pragma once

#include <filesystem>
#include <utility>

#include "targetloc/error.hpp"

namespace targetloc {

struct WorldPoint {
    double easting = 0.0;
    double northing = 0.0;
};

struct PixelPoint {
    double u = 0.0; // column
    double v = 0.0; // row
};

/// Six-parameter affine between pixel (u, v) and world (easting, northing):
///
///   easting  = origin_easting  + pixel_width  * u + col_rotation * v
///   northing = origin_northing + row_rotation * u + pixel_height * v
///
/// Pixel (0, 0) maps to the origin, matching the plain-text world file
/// convention (the origin names the first pixel's sample point).
struct GeoTransform {
    double origin_easting = 0.0;
    double origin_northing = 0.0;
    double pixel_width = 1.0;
    double pixel_height = -1.0; // negative for north-up rasters
    double row_rotation = 0.0;
    double col_rotation = 0.0;

    double det() const { return pixel_width * pixel_height - col_rotation * row_rotation; }
    bool invertible() const;

    WorldPoint pixel_to_world(PixelPoint p) const;
    PixelPoint world_to_pixel(WorldPoint w) const; // throws SingularGeoTransform

    bool operator==(const GeoTransform&) const = default;
};

/// Reads a classic 6-line ASCII world file. Line order: pixel_width,
/// row_rotation, col_rotation, pixel_height, origin_easting, origin_northing.
/// Throws MalformedWorldFile on parse failure or a singular linear part.
GeoTransform read_world_file(const std::filesystem::path& path);

void write_world_file(const std::filesystem::path& path, const GeoTransform& geo);

} // namespace targetloc

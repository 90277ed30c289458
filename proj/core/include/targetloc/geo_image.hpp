#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "targetloc/geo.hpp"
#include "targetloc/image.hpp"

namespace targetloc {

/// A georeferenced luminance raster. Pixel values live in [0, 1].
struct GeoImage {
    ImageF pixels;
    GeoTransform geo;
    std::string image_id;
    std::string mode_tag; // free-form ("snow", "no-snow", ...)

    int width() const { return pixels.width(); }
    int height() const { return pixels.height(); }
};

/// Known target: one world position plus its pixel coordinates in every
/// stack image.
struct TargetAnnotation {
    WorldPoint world_position;
    std::map<std::string, PixelPoint> per_image_pixel;

    const PixelPoint& pixel_in(const std::string& image_id) const;
};

/// Loads a raster + world file pair. Rasters smaller than 64 px on a side are
/// rejected (too small to synthesize views from).
GeoImage load_geo_image(const std::filesystem::path& raster_path,
                        const std::filesystem::path& world_file_path,
                        const std::string& mode_tag = "",
                        const std::string& image_id = "");

struct Stack {
    std::vector<GeoImage> images;
    TargetAnnotation target;

    const GeoImage& by_id(const std::string& image_id) const;
};

/// Stack manifest: JSON file listing per-image (raster, world_file, mode)
/// entries and the target world position. Relative paths resolve against the
/// manifest's directory. The target must project inside every image; the
/// offending image is named otherwise.
Stack load_stack(const std::filesystem::path& manifest_path);

void write_stack_manifest(const std::filesystem::path& manifest_path,
                          const std::vector<std::array<std::string, 3>>& entries,
                          WorldPoint target);

} // namespace targetloc

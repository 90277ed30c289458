#include "targetloc/geo.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace targetloc {

bool GeoTransform::invertible() const {
    const double d = det();
    const double scale = std::abs(pixel_width) + std::abs(pixel_height) +
                         std::abs(row_rotation) + std::abs(col_rotation);
    return std::isfinite(d) && std::abs(d) > 1e-15 * scale * scale;
}

WorldPoint GeoTransform::pixel_to_world(PixelPoint p) const {
    return {origin_easting + pixel_width * p.u + col_rotation * p.v,
            origin_northing + row_rotation * p.u + pixel_height * p.v};
}

PixelPoint GeoTransform::world_to_pixel(WorldPoint w) const {
    if (!invertible())
        throw SingularGeoTransform("geotransform linear part is singular");
    const double dx = w.easting - origin_easting;
    const double dy = w.northing - origin_northing;
    const double d = det();
    return {(dx * pixel_height - dy * col_rotation) / d,
            (dy * pixel_width - dx * row_rotation) / d};
}

GeoTransform read_world_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw MalformedWorldFile("cannot open world file: " + path.string());

    double vals[6];
    for (int i = 0; i < 6; ++i) {
        std::string line;
        // tolerate blank lines between values
        do {
            if (!std::getline(in, line))
                throw MalformedWorldFile("world file has fewer than 6 values: " + path.string());
        } while (line.find_first_not_of(" \t\r\n") == std::string::npos);
        std::istringstream ls(line);
        if (!(ls >> vals[i]) || !std::isfinite(vals[i]))
            throw MalformedWorldFile("world file line " + std::to_string(i + 1) +
                                     " is not a number: " + path.string());
    }

    GeoTransform g;
    g.pixel_width = vals[0];
    g.row_rotation = vals[1];
    g.col_rotation = vals[2];
    g.pixel_height = vals[3];
    g.origin_easting = vals[4];
    g.origin_northing = vals[5];
    if (!g.invertible())
        throw MalformedWorldFile("world file affine is degenerate: " + path.string());
    return g;
}

void write_world_file(const std::filesystem::path& path, const GeoTransform& geo) {
    std::ofstream out(path);
    if (!out)
        throw WriteFailure("cannot open for writing: " + path.string());
    char buf[64];
    const double vals[6] = {geo.pixel_width, geo.row_rotation, geo.col_rotation,
                            geo.pixel_height, geo.origin_easting, geo.origin_northing};
    for (double v : vals) {
        std::snprintf(buf, sizeof buf, "%.17g\n", v);
        out << buf;
    }
    if (!out)
        throw WriteFailure("short write: " + path.string());
}

} // namespace targetloc

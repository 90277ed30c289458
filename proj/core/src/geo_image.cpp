#include "targetloc/geo_image.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "targetloc/pnm_io.hpp"

namespace targetloc {

using nlohmann::ordered_json;

const PixelPoint& TargetAnnotation::pixel_in(const std::string& image_id) const {
    auto it = per_image_pixel.find(image_id);
    if (it == per_image_pixel.end())
        throw InvalidArgument("target not annotated in image '" + image_id + "'");
    return it->second;
}

GeoImage load_geo_image(const std::filesystem::path& raster_path,
                        const std::filesystem::path& world_file_path,
                        const std::string& mode_tag,
                        const std::string& image_id) {
    GeoImage img;
    img.pixels = read_pgm(raster_path);
    img.geo = read_world_file(world_file_path);
    img.mode_tag = mode_tag;
    img.image_id = image_id.empty() ? raster_path.stem().string() : image_id;
    if (img.width() < 64 || img.height() < 64)
        throw UnreadableRaster("raster below 64x64 minimum: " + raster_path.string());
    return img;
}

const GeoImage& Stack::by_id(const std::string& image_id) const {
    for (const auto& img : images)
        if (img.image_id == image_id) return img;
    throw InvalidArgument("no image '" + image_id + "' in stack");
}

Stack load_stack(const std::filesystem::path& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in)
        throw BadStackManifest("cannot open stack manifest: " + manifest_path.string());

    ordered_json doc;
    try {
        doc = ordered_json::parse(in);
    } catch (const std::exception& e) {
        throw BadStackManifest("stack manifest is not valid JSON: " + std::string(e.what()));
    }
    if (!doc.contains("target_world") || !doc.contains("images"))
        throw BadStackManifest("stack manifest needs 'target_world' and 'images'");

    const auto base = manifest_path.parent_path();
    auto resolve = [&](const std::string& p) {
        std::filesystem::path fp(p);
        return fp.is_absolute() ? fp : base / fp;
    };

    Stack stack;
    stack.target.world_position = {doc["target_world"].at(0).get<double>(),
                                   doc["target_world"].at(1).get<double>()};

    for (const auto& e : doc["images"]) {
        GeoImage img = load_geo_image(resolve(e.at("raster").get<std::string>()),
                                      resolve(e.at("world_file").get<std::string>()),
                                      e.value("mode", ""),
                                      e.value("id", ""));
        PixelPoint p = img.geo.world_to_pixel(stack.target.world_position);
        if (p.u < 0 || p.u > img.width() - 1 || p.v < 0 || p.v > img.height() - 1)
            throw TargetOutsideImage("target world position falls outside image '" +
                                     img.image_id + "'");
        stack.target.per_image_pixel[img.image_id] = p;
        stack.images.push_back(std::move(img));
    }
    if (stack.images.empty())
        throw BadStackManifest("stack manifest lists no images");
    return stack;
}

void write_stack_manifest(const std::filesystem::path& manifest_path,
                          const std::vector<std::array<std::string, 3>>& entries,
                          WorldPoint target) {
    ordered_json doc;
    doc["target_world"] = {target.easting, target.northing};
    doc["images"] = ordered_json::array();
    for (const auto& [raster, world_file, mode] : entries) {
        ordered_json e;
        e["id"] = std::filesystem::path(raster).stem().string();
        e["raster"] = raster;
        e["world_file"] = world_file;
        e["mode"] = mode;
        doc["images"].push_back(e);
    }
    std::ofstream out(manifest_path);
    if (!out)
        throw WriteFailure("cannot open for writing: " + manifest_path.string());
    out << doc.dump(2) << "\n";
}

} // namespace targetloc

#pragma once

#include <filesystem>
#include <span>

#include "targetloc/geo.hpp"
#include "targetloc/image.hpp"

namespace targetloc {

/// Writes a color overlay: the grayscale view as base, each prediction-grid
/// cell tinted yellow with strength proportional to its likelihood (relative
/// to the maximum), and a red disc at the ground-truth target. likelihood is
/// row-major grid x grid and its grid must divide the image size.
/// Deterministic for identical inputs.
void render_overlay(const ImageF& image, std::span<const float> likelihood, int grid,
                    PixelPoint truth_px, const std::filesystem::path& out_path);

} // namespace targetloc

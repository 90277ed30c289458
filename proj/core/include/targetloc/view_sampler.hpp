#pragma once

#include <optional>
#include <vector>

#include "targetloc/geo_image.hpp"
#include "targetloc/homography.hpp"
#include "targetloc/rng.hpp"

namespace targetloc {

/// Ranges for random view sampling. yaw is drawn uniformly from
/// [-yaw_range/2, +yaw_range/2], zoom log-uniformly from [zoom_min, zoom_max]
/// (reference pixels per view pixel), the two tilts uniformly from
/// [-tilt_max, +tilt_max] each.
struct SamplerConfig {
    double yaw_range = 6.283185307179586; // full circle
    double zoom_min = 0.5;
    double zoom_max = 8.0;
    double tilt_max = 0.17453292519943295; // 10 degrees
    double jitter_translation = 96.0;      // px around the view center
    int view_size = 256;
    double target_in_view_margin = 16.0;

    void validate() const; // throws InvalidArgument
};

/// View geometry in explicit parameters. The homography is composed as
///
///   H = T(p_ref) * S(zoom) * R(yaw) * Ktilt(tilt_a, tilt_b) * T(-target_in_view)
///
/// read right to left on a view point: recenter on the target's view
/// position, apply the projective tilts, rotate by yaw, scale to reference
/// resolution, land on the target's reference position. Ktilt is the nadir
/// pinhole approximation K Rx(a) Ry(b) K^-1 with focal length f = view_size
/// in view pixel units, recentred so the origin is a fixed point; R is
/// counter-clockwise in (x, y). With this composition the target projects
/// exactly to target_in_view.
struct ViewParams {
    double yaw = 0.0;
    double zoom = 1.0;
    double tilt_a = 0.0;
    double tilt_b = 0.0;
    PixelPoint target_in_view;   // where the target lands in the view
    PixelPoint target_reference; // p_k in the source image
    int view_size = 256;
};

Mat3 compose_view(const ViewParams& p);

/// Draws one view transform. Draw order (fixed): source image index, then per
/// attempt jitter u, jitter v, yaw, zoom, tilt_a, tilt_b. An attempt is
/// rejected when the jittered target position leaves the margin box
/// [margin, view_size - margin]^2; after 1000 rejections the configuration is
/// deemed infeasible (RejectionOverflow).
ViewTransform sample_view(CounterRng& rng, const SamplerConfig& cfg,
                          const Stack& stack,
                          const std::vector<std::string>& allowed_ids = {});

} // namespace targetloc

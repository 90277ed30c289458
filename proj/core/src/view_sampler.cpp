#include "targetloc/view_sampler.hpp"

#include <cmath>

namespace targetloc {

void SamplerConfig::validate() const {
    if (!(zoom_min > 0.0) || zoom_min > zoom_max)
        throw InvalidArgument("sampler: need 0 < zoom_min <= zoom_max");
    if (tilt_max < 0.0 || tilt_max >= 0.7853981633974483)
        throw InvalidArgument("sampler: tilt_max must be in [0, pi/4)");
    if (view_size < 16 || view_size % 8 != 0)
        throw InvalidArgument("sampler: view_size must be a positive multiple of 8");
    if (yaw_range < 0.0 || jitter_translation < 0.0 || target_in_view_margin < 0.0)
        throw InvalidArgument("sampler: negative range");
    if (2.0 * target_in_view_margin >= view_size)
        throw InvalidArgument("sampler: margin leaves no admissible target box");
}

Mat3 compose_view(const ViewParams& p) {
    const double f = static_cast<double>(p.view_size);

    // K Rx(a) Ry(b) K^-1 for a camera rotated slightly off nadir, recentred
    // so the rotation pivots about the target instead of the principal point.
    const double ca = std::cos(p.tilt_a), sa = std::sin(p.tilt_a);
    const double cb = std::cos(p.tilt_b), sb = std::sin(p.tilt_b);
    Mat3 tilt;
    tilt.m = {cb, 0.0, f * sb,
              sa * sb, ca, -f * sa * cb,
              -ca * sb / f, sa / f, ca * cb};
    const PixelPoint drift = tilt.apply({0.0, 0.0});
    tilt = Mat3::translation(-drift.u, -drift.v) * tilt;

    Mat3 h = Mat3::translation(p.target_reference.u, p.target_reference.v) *
             Mat3::scale(p.zoom) * Mat3::rotation(p.yaw) * tilt *
             Mat3::translation(-p.target_in_view.u, -p.target_in_view.v);

    // normalize so the bottom-right entry is 1 (it stays near cos*cos here)
    const double w = h(2, 2);
    if (std::abs(w) < 1e-12)
        throw SingularTransform("view composition degenerated");
    for (double& v : h.m) v /= w;
    return h;
}

ViewTransform sample_view(CounterRng& rng, const SamplerConfig& cfg,
                          const Stack& stack,
                          const std::vector<std::string>& allowed_ids) {
    cfg.validate();
    if (stack.images.empty())
        throw InvalidArgument("sample_view: empty stack");

    std::vector<const GeoImage*> pool;
    if (allowed_ids.empty()) {
        for (const auto& img : stack.images) pool.push_back(&img);
    } else {
        for (const auto& id : allowed_ids) pool.push_back(&stack.by_id(id));
    }

    const GeoImage& src = *pool[rng.below(pool.size())];
    const PixelPoint p_ref = stack.target.pixel_in(src.image_id);

    const double half = cfg.view_size / 2.0;
    const double lo = cfg.target_in_view_margin;
    const double hi = cfg.view_size - cfg.target_in_view_margin;

    for (int attempt = 0; attempt < 1000; ++attempt) {
        ViewParams p;
        p.view_size = cfg.view_size;
        p.target_reference = p_ref;
        p.target_in_view = {half + rng.uniform(-cfg.jitter_translation, cfg.jitter_translation),
                            half + rng.uniform(-cfg.jitter_translation, cfg.jitter_translation)};
        p.yaw = rng.uniform(-cfg.yaw_range / 2.0, cfg.yaw_range / 2.0);
        p.zoom = std::exp(rng.uniform(std::log(cfg.zoom_min), std::log(cfg.zoom_max)));
        p.tilt_a = rng.uniform(-cfg.tilt_max, cfg.tilt_max);
        p.tilt_b = rng.uniform(-cfg.tilt_max, cfg.tilt_max);

        if (p.target_in_view.u < lo || p.target_in_view.u > hi ||
            p.target_in_view.v < lo || p.target_in_view.v > hi)
            continue;

        ViewTransform t;
        t.H = compose_view(p);
        t.source_image_id = src.image_id;
        t.seed = rng.key();
        t.view_size = cfg.view_size;
        return t;
    }
    throw RejectionOverflow("sample_view: target never landed in the margin box "
                            "after 1000 attempts");
}

} // namespace targetloc

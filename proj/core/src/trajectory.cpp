#include "targetloc/trajectory.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace targetloc {

void TrajectoryConfig::validate() const {
    if (frames < 8)
        throw InvalidArgument("trajectory: need at least 8 frames");
    if (!(zoom_end > 0.0) || zoom_start < zoom_end)
        throw InvalidArgument("trajectory: need zoom_start >= zoom_end > 0 (approach)");
    if (view_size < 16 || view_size % 8 != 0)
        throw InvalidArgument("trajectory: view_size must be a positive multiple of 8");
    if (roll_jitter < 0.0 || tilt_jitter < 0.0 || lateral_offset_start < 0.0)
        throw InvalidArgument("trajectory: negative jitter");
}

Trajectory simulate_trajectory(const TrajectoryConfig& cfg, const Stack& stack,
                               int trajectory_index) {
    cfg.validate();
    if (stack.images.empty())
        throw InvalidArgument("simulate_trajectory: empty stack");

    CounterRng rng(derive_key(derive_key(cfg.seed, "trajectory"),
                              static_cast<std::uint64_t>(trajectory_index)));

    const GeoImage& src = stack.images[rng.below(stack.images.size())];
    const PixelPoint p_ref = stack.target.pixel_in(src.image_id);

    const double roll0 = rng.uniform(0.0, 6.283185307179586);
    const double offset_dir = rng.uniform(0.0, 6.283185307179586);
    const double half = cfg.view_size / 2.0;

    Trajectory traj;
    traj.index = trajectory_index;
    traj.frames.reserve(cfg.frames);
    traj.truth_px.reserve(cfg.frames);

    const double lz0 = std::log(cfg.zoom_start), lz1 = std::log(cfg.zoom_end);
    for (int t = 0; t < cfg.frames; ++t) {
        const double a = cfg.frames > 1 ? static_cast<double>(t) / (cfg.frames - 1) : 0.0;
        ViewParams p;
        p.view_size = cfg.view_size;
        p.target_reference = p_ref;
        p.zoom = std::exp(lz0 + (lz1 - lz0) * a);
        p.yaw = roll0 + cfg.roll_rate * t + cfg.roll_jitter * rng.normal();
        const double off = cfg.lateral_offset_start * (1.0 - a);
        p.target_in_view = {half + off * std::cos(offset_dir),
                            half + off * std::sin(offset_dir)};
        p.tilt_a = cfg.tilt_jitter * rng.normal();
        p.tilt_b = cfg.tilt_jitter * rng.normal();

        ViewTransform vt;
        vt.H = compose_view(p);
        vt.source_image_id = src.image_id;
        vt.seed = rng.key();
        vt.view_size = cfg.view_size;
        traj.truth_px.push_back(p.target_in_view);
        traj.frames.push_back(std::move(vt));
    }
    return traj;
}

TrajectoryVerdict judge_trajectory(const std::vector<double>& errors_px,
                                   double threshold_px, double min_fraction,
                                   int max_consecutive) {
    if (errors_px.empty())
        throw EmptyTrajectory("judge_trajectory: no frames");

    TrajectoryVerdict v;
    v.errors_px = errors_px;
    int good = 0, run = 0, worst_run = 0;
    for (double e : errors_px) {
        const bool ok = e < threshold_px; // exactly at threshold counts as wrong
        if (ok) {
            ++good;
            run = 0;
        } else {
            ++run;
            worst_run = std::max(worst_run, run);
        }
    }
    const int total = static_cast<int>(errors_px.size());
    v.fraction_within = static_cast<double>(good) / total;
    v.longest_failure_run = worst_run;
    v.success = v.fraction_within >= min_fraction && worst_run < max_consecutive;
    return v;
}

void save_trajectories(const std::filesystem::path& path,
                       const std::vector<Trajectory>& trajectories) {
    std::ofstream out(path);
    if (!out)
        throw WriteFailure("cannot open for writing: " + path.string());
    out << "targetloc-trajectories 1\n";
    char buf[4096];
    for (const auto& traj : trajectories) {
        out << "trajectory " << traj.index << " "
            << (traj.frames.empty() ? "-" : traj.frames.front().source_image_id) << " "
            << traj.frames.size() << "\n";
        for (std::size_t t = 0; t < traj.frames.size(); ++t) {
            const auto& h = traj.frames[t].H.m;
            std::snprintf(buf, sizeof buf,
                          "frame %zu %.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g "
                          "%.17g %.17g\n",
                          t, h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8],
                          traj.truth_px[t].u, traj.truth_px[t].v);
            out << buf;
        }
    }
    if (!out)
        throw WriteFailure("short write: " + path.string());
}

std::vector<Trajectory> load_trajectories(const std::filesystem::path& path,
                                          int view_size) {
    std::ifstream in(path);
    if (!in)
        throw Error("cannot open trajectories file: " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != "targetloc-trajectories 1")
        throw Error("bad magic in " + path.string());

    std::vector<Trajectory> out;
    std::string source;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string kind;
        ls >> kind;
        if (kind == "trajectory") {
            Trajectory t;
            std::size_t nframes = 0;
            ls >> t.index >> source >> nframes;
            out.push_back(std::move(t));
        } else if (kind == "frame") {
            if (out.empty())
                throw Error("frame before trajectory header in " + path.string());
            std::size_t idx;
            ViewTransform vt;
            PixelPoint truth;
            ls >> idx;
            for (double& v : vt.H.m) ls >> v;
            ls >> truth.u >> truth.v;
            if (!ls)
                throw Error("malformed frame line: " + line);
            vt.source_image_id = source;
            vt.view_size = view_size;
            out.back().frames.push_back(std::move(vt));
            out.back().truth_px.push_back(truth);
        } else {
            throw Error("unknown record '" + kind + "' in " + path.string());
        }
    }
    return out;
}

} // namespace targetloc

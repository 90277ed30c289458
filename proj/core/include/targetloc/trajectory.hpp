#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "targetloc/view_sampler.hpp"

namespace targetloc {

/// Simulated approach: zoom interpolates log-linearly from zoom_start down to
/// zoom_end, the camera rolls at roll_rate with per-frame jitter, the target
/// starts laterally offset and recenters linearly, small tilts jitter every
/// frame. Loosely shaped like a spinning platform closing on the target; not
/// a kinematic model.
struct TrajectoryConfig {
    int frames = 24;
    double zoom_start = 4.0;
    double zoom_end = 1.0;
    double roll_rate = 0.1;      // radians per frame
    double roll_jitter = 0.02;   // stddev, radians
    double lateral_offset_start = 64.0; // px, decays to 0
    double tilt_jitter = 0.02;   // stddev, radians
    int view_size = 256;
    std::uint64_t seed = 0;

    void validate() const;
};

struct Trajectory {
    int index = 0;
    std::vector<ViewTransform> frames;
    std::vector<PixelPoint> truth_px; // target position per frame
};

/// Frame t of T: zoom = exp(lerp(log zoom_start, log zoom_end, t/(T-1))),
/// roll = roll0 + roll_rate*t + jitter, lateral offset decays linearly to the
/// view center along a fixed random direction. Source image drawn once per
/// trajectory. Deterministic per (cfg.seed, trajectory_index).
Trajectory simulate_trajectory(const TrajectoryConfig& cfg, const Stack& stack,
                               int trajectory_index);

struct TrajectoryVerdict {
    std::vector<double> errors_px;
    double fraction_within = 0.0;
    int longest_failure_run = 0;
    bool success = false;
};

/// Success iff at least min_fraction of the frames have error strictly below
/// threshold_px AND no run of max_consecutive or more failing frames exists.
/// A frame exactly at the threshold counts as wrong; failed predictions carry
/// +inf error.
TrajectoryVerdict judge_trajectory(const std::vector<double>& errors_px,
                                   double threshold_px = 10.0,
                                   double min_fraction = 2.0 / 3.0,
                                   int max_consecutive = 4);

/// Per-frame records (frame index, 9 row-major H entries, truth px), one
/// trajectory block per "trajectory" header line. 17 significant digits.
void save_trajectories(const std::filesystem::path& path,
                       const std::vector<Trajectory>& trajectories);
std::vector<Trajectory> load_trajectories(const std::filesystem::path& path,
                                          int view_size);

} // namespace targetloc

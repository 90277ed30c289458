#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "targetloc/geo.hpp"
#include "targetloc/trajectory.hpp"

namespace targetloc {

struct FrameResult {
    std::string frame_id;
    std::string method; // "learned" | "baseline"
    std::optional<PixelPoint> predicted_px;
    PixelPoint truth_px;
    double error_px = 0.0; // +inf when the prediction failed
    std::string failure_reason;

    static FrameResult success(std::string frame_id, std::string method,
                               PixelPoint predicted, PixelPoint truth);
    static FrameResult failure(std::string frame_id, std::string method,
                               PixelPoint truth, std::string reason);
};

struct MethodAggregate {
    std::string method;
    int n = 0;
    int failures = 0;
    // mean Euclidean pixel error over frames with a finite error; absent when
    // every frame failed
    std::optional<double> mean_px_error;
    // failures stay in this denominator
    double pct_within_10px = 0.0;
};

struct EvalReport {
    std::vector<MethodAggregate> methods; // ordered by method name
    std::vector<TrajectoryVerdict> trajectory_verdicts;
    std::map<std::string, std::string> provenance; // input name -> hash/config
};

/// Aggregates per method: mean px error over non-failed frames and the
/// percentage of all frames with error < 10 px. Throws EmptyResults.
EvalReport compute_metrics(const std::vector<FrameResult>& results);

/// Table in the two-column report layout (px-error | frames<10px), one row
/// per method.
std::string format_report_table(const EvalReport& report);

/// Machine-readable report (JSON): per-method aggregates, verdicts,
/// provenance.
void save_report_json(const std::filesystem::path& path, const EvalReport& report);

// frame_id,method,pred_u,pred_v,truth_u,truth_v,error_px,failure_reason
void save_frame_results(const std::filesystem::path& path,
                        const std::vector<FrameResult>& results);
std::vector<FrameResult> load_frame_results(const std::filesystem::path& path);

} // namespace targetloc

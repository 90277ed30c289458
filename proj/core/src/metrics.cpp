#include "targetloc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

namespace targetloc {

using nlohmann::ordered_json;

FrameResult FrameResult::success(std::string frame_id, std::string method,
                                 PixelPoint predicted, PixelPoint truth) {
    FrameResult r;
    r.frame_id = std::move(frame_id);
    r.method = std::move(method);
    r.predicted_px = predicted;
    r.truth_px = truth;
    r.error_px = std::hypot(predicted.u - truth.u, predicted.v - truth.v);
    return r;
}

FrameResult FrameResult::failure(std::string frame_id, std::string method,
                                 PixelPoint truth, std::string reason) {
    FrameResult r;
    r.frame_id = std::move(frame_id);
    r.method = std::move(method);
    r.truth_px = truth;
    r.error_px = std::numeric_limits<double>::infinity();
    r.failure_reason = std::move(reason);
    return r;
}

EvalReport compute_metrics(const std::vector<FrameResult>& results) {
    if (results.empty())
        throw EmptyResults("compute_metrics: no frame results");

    std::map<std::string, std::vector<const FrameResult*>> by_method;
    for (const auto& r : results) by_method[r.method].push_back(&r);

    EvalReport report;
    for (const auto& [method, frames] : by_method) {
        MethodAggregate agg;
        agg.method = method;
        agg.n = static_cast<int>(frames.size());
        double err_sum = 0.0;
        int finite = 0, within = 0;
        for (const auto* f : frames) {
            if (std::isfinite(f->error_px)) {
                err_sum += f->error_px;
                ++finite;
                if (f->error_px < 10.0) ++within;
            } else {
                ++agg.failures;
            }
        }
        if (finite > 0) agg.mean_px_error = err_sum / finite;
        agg.pct_within_10px = 100.0 * within / agg.n;
        report.methods.push_back(std::move(agg));
    }
    return report;
}

std::string format_report_table(const EvalReport& report) {
    std::ostringstream os;
    os << "method          | px-error | frames<10px\n";
    os << "----------------+----------+------------\n";
    char buf[128];
    for (const auto& m : report.methods) {
        if (m.mean_px_error) {
            std::snprintf(buf, sizeof buf, "%-15s | %7.2f  | %.1f%%\n", m.method.c_str(),
                          *m.mean_px_error, m.pct_within_10px);
        } else {
            std::snprintf(buf, sizeof buf, "%-15s | %7s  | %.1f%%\n", m.method.c_str(),
                          "n/a", m.pct_within_10px);
        }
        os << buf;
    }
    if (!report.trajectory_verdicts.empty()) {
        int ok = 0;
        for (const auto& v : report.trajectory_verdicts) ok += v.success ? 1 : 0;
        os << "trajectories: " << ok << "/" << report.trajectory_verdicts.size()
           << " successful\n";
    }
    return os.str();
}

void save_report_json(const std::filesystem::path& path, const EvalReport& report) {
    ordered_json doc;
    doc["methods"] = ordered_json::array();
    for (const auto& m : report.methods) {
        ordered_json jm;
        jm["method"] = m.method;
        if (m.mean_px_error)
            jm["mean_px_error"] = *m.mean_px_error;
        else
            jm["mean_px_error"] = nullptr;
        jm["pct_within_10px"] = m.pct_within_10px;
        jm["n"] = m.n;
        jm["failures"] = m.failures;
        doc["methods"].push_back(jm);
    }
    if (!report.trajectory_verdicts.empty()) {
        doc["trajectories"] = ordered_json::array();
        for (const auto& v : report.trajectory_verdicts) {
            ordered_json jv;
            jv["success"] = v.success;
            jv["fraction_within"] = v.fraction_within;
            jv["longest_failure_run"] = v.longest_failure_run;
            jv["frames"] = v.errors_px.size();
            doc["trajectories"].push_back(jv);
        }
    }
    if (!report.provenance.empty()) {
        ordered_json jp;
        for (const auto& [k, v] : report.provenance) jp[k] = v;
        doc["provenance"] = jp;
    }
    std::ofstream out(path);
    if (!out)
        throw WriteFailure("cannot open for writing: " + path.string());
    out << doc.dump(2) << "\n";
    if (!out)
        throw WriteFailure("short write: " + path.string());
}

void save_frame_results(const std::filesystem::path& path,
                        const std::vector<FrameResult>& results) {
    std::ofstream out(path);
    if (!out)
        throw WriteFailure("cannot open for writing: " + path.string());
    out << "frame_id,method,pred_u,pred_v,truth_u,truth_v,error_px,failure_reason\n";
    char buf[512];
    for (const auto& r : results) {
        if (r.predicted_px) {
            std::snprintf(buf, sizeof buf, "%s,%s,%.17g,%.17g,%.17g,%.17g,%.17g,\n",
                          r.frame_id.c_str(), r.method.c_str(), r.predicted_px->u,
                          r.predicted_px->v, r.truth_px.u, r.truth_px.v, r.error_px);
        } else {
            std::snprintf(buf, sizeof buf, "%s,%s,,,%.17g,%.17g,inf,%s\n",
                          r.frame_id.c_str(), r.method.c_str(), r.truth_px.u,
                          r.truth_px.v, r.failure_reason.c_str());
        }
        out << buf;
    }
    if (!out)
        throw WriteFailure("short write: " + path.string());
}

std::vector<FrameResult> load_frame_results(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw Error("cannot open frame results: " + path.string());
    std::string line;
    if (!std::getline(in, line) || line.rfind("frame_id,method,", 0) != 0)
        throw Error("bad frame results header in " + path.string());

    std::vector<FrameResult> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::size_t start = 0;
        for (int k = 0; k < 7; ++k) {
            const auto comma = line.find(',', start);
            if (comma == std::string::npos)
                throw Error("malformed frame results line: " + line);
            f.push_back(line.substr(start, comma - start));
            start = comma + 1;
        }
        f.push_back(line.substr(start));

        FrameResult r;
        r.frame_id = f[0];
        r.method = f[1];
        r.truth_px = {std::stod(f[4]), std::stod(f[5])};
        if (!f[2].empty()) {
            r.predicted_px = PixelPoint{std::stod(f[2]), std::stod(f[3])};
            r.error_px = std::stod(f[6]);
        } else {
            r.error_px = std::numeric_limits<double>::infinity();
            r.failure_reason = f[7];
        }
        out.push_back(std::move(r));
    }
    return out;
}

} // namespace targetloc

#pragma once

#include <filesystem>
#include <vector>

#include "targetloc/dataset.hpp"
#include "targetloc/net.hpp"

namespace targetloc::net {

struct HeadOnlySchedule {
    int steps = 100;
    double lr = 3e-3;
};
struct SgdSchedule {
    int steps = 100;
    double lr = 1e-2;
    double momentum = 0.9;
};
struct AdamSchedule {
    int steps = 1500;
    double lr = 1.5e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Three-stage schedule: (1) head parameters only, adaptive updates with
/// default moments, (2) all parameters with plain SGD + momentum at a small
/// learning rate, (3) all parameters with the adaptive optimizer. Any stage
/// may be skipped by setting its step count to zero.
struct TrainConfig {
    HeadOnlySchedule head_only;
    SgdSchedule sgd_warm;
    AdamSchedule adaptive;
    int batch_size = 16;
    std::uint64_t seed = 1;
    LossKind loss = LossKind::selection;
    int threads = 1;

    void validate() const;
};

struct TrainingExample {
    std::vector<float> image;
    PixelPoint target_px;
};

struct CurvePoint {
    int step = 0; // cumulative across stages
    TrainingStage stage = TrainingStage::init;
    double loss = 0.0;
};

/// Renders one split of the manifest into memory (images re-synthesized from
/// the stack, not reread from sample files).
std::vector<TrainingExample> render_examples(const Stack& stack,
                                             const DatasetManifest& manifest,
                                             Split split, int threads = 1);

/// Runs the staged schedule in place. Deterministic for a fixed seed: batch
/// indices come from per-stage derived streams and gradients are reduced in
/// sample order, so the result is independent of the thread count. Throws
/// DivergedLoss when a step produces a non-finite loss.
template <class S>
std::vector<CurvePoint> train(Network<S>& net, const std::vector<TrainingExample>& data,
                              const TrainConfig& cfg);

/// step,stage,loss as comma-separated text.
void save_loss_curve(const std::filesystem::path& path,
                     const std::vector<CurvePoint>& curve);

} // namespace targetloc::net

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "targetloc/error.hpp"
#include "targetloc/geo.hpp"

namespace targetloc::net {

enum class Head { selection, regression, both };
enum class PaddingMode { zero, periodic }; // periodic exists for equivariance probes
enum class TrainingStage { init, head_only, sgd_warm, adaptive };

const char* to_string(Head h);
const char* to_string(TrainingStage s);
Head head_from_string(const std::string& s);
TrainingStage stage_from_string(const std::string& s);

/// Reduced-width ConvNeXt-style backbone: stem (stem_stride x stem_stride
/// conv, stride stem_stride, then channel layernorm), stages of residual
/// blocks (depthwise dw_kernel^2 -> layernorm -> 1x1 expand -> GELU -> 1x1
/// project -> add), a layernorm + 2x2/2 conv between stages. Heads sit on a
/// final channel layernorm: selection = 1x1 conv to one logit per cell,
/// regression = global average pool + affine to 2 normalized coordinates.
struct NetConfig {
    int input_size = 256;
    int stem_stride = 4;
    std::vector<int> stage_widths = {24, 48};
    std::vector<int> blocks_per_stage = {2, 2};
    int output_stride = 8;
    Head head = Head::selection;
    int dw_kernel = 7;
    int expansion_ratio = 4;
    PaddingMode padding = PaddingMode::zero;

    int grid() const { return input_size / output_stride; }
    int stages() const { return static_cast<int>(stage_widths.size()); }
    void validate() const; // throws InvalidArgument

    bool operator==(const NetConfig&) const = default;
};

template <class S>
struct LnParams {
    std::vector<S> g, b;
};

template <class S>
struct ConvParams {
    std::vector<S> w, b;
};

template <class S>
struct BlockParams {
    ConvParams<S> dw;  // w laid out (ky, kx, c)
    LnParams<S> ln;
    ConvParams<S> pw1; // w laid out (cin, cout)
    ConvParams<S> pw2;
};

/// All learnable tensors. Enumeration (and serialization) order is fixed:
/// stem, stem_ln, then per stage its blocks followed by its down_ln/down
/// pair, then head_ln and the configured heads.
template <class S>
struct NetParams {
    ConvParams<S> stem; // w laid out (ky, kx, cin, cout)
    LnParams<S> stem_ln;
    std::vector<std::vector<BlockParams<S>>> stages;
    std::vector<LnParams<S>> down_ln;
    std::vector<ConvParams<S>> down; // w laid out (ky, kx, cin, cout)
    LnParams<S> head_ln;
    ConvParams<S> sel; // 1x1, w laid out (cin, 1)
    ConvParams<S> reg; // affine after pool, w laid out (cin, 2)

    static NetParams zeros(const NetConfig& cfg);

    /// Visits every allocated tensor as fn(name, vector). Head tensors are
    /// only visited when the config allocated them.
    template <class Fn>
    void for_each(Fn&& fn) {
        fn("stem.w", stem.w);
        fn("stem.b", stem.b);
        fn("stem_ln.g", stem_ln.g);
        fn("stem_ln.b", stem_ln.b);
        for (std::size_t s = 0; s < stages.size(); ++s) {
            const std::string sp = "s" + std::to_string(s) + ".";
            for (std::size_t b = 0; b < stages[s].size(); ++b) {
                const std::string bp = sp + "b" + std::to_string(b) + ".";
                auto& blk = stages[s][b];
                fn(bp + "dw.w", blk.dw.w);
                fn(bp + "dw.b", blk.dw.b);
                fn(bp + "ln.g", blk.ln.g);
                fn(bp + "ln.b", blk.ln.b);
                fn(bp + "pw1.w", blk.pw1.w);
                fn(bp + "pw1.b", blk.pw1.b);
                fn(bp + "pw2.w", blk.pw2.w);
                fn(bp + "pw2.b", blk.pw2.b);
            }
            if (s < down.size()) {
                fn(sp + "down_ln.g", down_ln[s].g);
                fn(sp + "down_ln.b", down_ln[s].b);
                fn(sp + "down.w", down[s].w);
                fn(sp + "down.b", down[s].b);
            }
        }
        fn("head_ln.g", head_ln.g);
        fn("head_ln.b", head_ln.b);
        if (!sel.w.empty()) {
            fn("head.sel.w", sel.w);
            fn("head.sel.b", sel.b);
        }
        if (!reg.w.empty()) {
            fn("head.reg.w", reg.w);
            fn("head.reg.b", reg.b);
        }
    }
    template <class Fn>
    void for_each(Fn&& fn) const {
        const_cast<NetParams*>(this)->for_each(
            [&](const std::string& n, std::vector<S>& t) {
                fn(n, static_cast<const std::vector<S>&>(t));
            });
    }

    void fill(S value);
    bool all_finite() const;
};

template <class S>
struct Prediction {
    int grid = 0;
    std::vector<S> heatmap; // pre-softmax logits, row-major (cell_v, cell_u); empty without a selection head
    bool has_coords = false;
    double coord_u = 0.0; // px, regression head
    double coord_v = 0.0;
};

/// Scratch + stored activations for one forward/backward pair. Reusable
/// across calls; sized lazily to the network it is used with.
template <class S>
struct ForwardCache {
    // stem
    std::vector<S> stem_patches, stem_out, stem_mu, stem_rstd;
    // per stage/block intermediates, indexed [stage][block]
    struct BlockCache {
        std::vector<S> in, dw_out, mu, rstd, ln_out, pw1_out, gelu_out;
    };
    std::vector<std::vector<BlockCache>> blocks;
    struct DownCache {
        std::vector<S> in, mu, rstd, ln_out, patches, out;
    };
    std::vector<DownCache> downs;
    // head
    std::vector<S> feat_in, feat_mu, feat_rstd, feat; // feat = head_ln output
    std::vector<S> logits;  // selection head
    std::vector<S> pooled;  // regression head input
    S coord_norm[2] = {S(0), S(0)};
    // backward scratch
    std::vector<S> ga, gb, gc, gd, ge;
};

enum class LossKind { selection, regression, both_sum };

template <class S>
class Network {
public:
    explicit Network(const NetConfig& cfg);            // zero weights
    Network(const NetConfig& cfg, std::uint64_t seed); // fan-in scaled uniform init

    const NetConfig& config() const { return cfg_; }
    NetParams<S>& params() { return p_; }
    const NetParams<S>& params() const { return p_; }
    TrainingStage training_stage = TrainingStage::init;

    /// image must hold input_size^2 values in [0, 1] (row-major).
    void forward(std::span<const S> image, ForwardCache<S>& cache) const;
    Prediction<S> predict(std::span<const S> image) const;
    Prediction<S> prediction_from(const ForwardCache<S>& cache) const;

    /// Backbone feature map after head_ln: grid*grid positions x last width.
    static const std::vector<S>& features(const ForwardCache<S>& cache) { return cache.feat; }

    /// Computes the loss for the cached forward pass and accumulates exact
    /// reverse-mode parameter gradients into grads (which must have this
    /// network's shape). Returns the loss value.
    S loss_and_backward(ForwardCache<S>& cache, PixelPoint target_px, LossKind kind,
                        NetParams<S>& grads) const;

private:
    NetConfig cfg_;
    NetParams<S> p_;
};

// --- losses (shared by training and the public API) ---

/// Squared Euclidean distance between prediction and target after dividing
/// both by input_size. Zero iff exact.
double loss_regression(PixelPoint pred_px, PixelPoint target_px, double input_size);
/// d(loss)/d(pred_px).
PixelPoint loss_regression_grad(PixelPoint pred_px, PixelPoint target_px, double input_size);

/// Cross-entropy of the softmax over grid cells against the cell containing
/// target_px (cell = floor(px / output_stride)). Throws TargetOutOfGrid.
template <class S>
double loss_selection(std::span<const S> logits, int grid, PixelPoint target_px,
                      int output_stride);
template <class S>
std::vector<double> loss_selection_grad(std::span<const S> logits, int grid,
                                        PixelPoint target_px, int output_stride);

template <class S>
std::vector<S> softmax_grid(std::span<const S> logits);

// --- prediction ---

struct TargetEstimate {
    PixelPoint px;
    double confidence = 0.0; // softmax mass of the argmax cell; 1.0 for pure regression
    bool from_selection = false;
};

/// Selection head wins when present: argmax cell (ties to the lowest
/// (row, col)), reported at the cell center, which bounds the quantization
/// error by half the cell diagonal. Regression output is denormalized to px.
template <class S>
TargetEstimate predict_target(const Network<S>& net, std::span<const S> image);
template <class S>
TargetEstimate estimate_from_prediction(const Prediction<S>& pred, const NetConfig& cfg);

// --- serialization ---

/// Text header (format version, config, tensor directory) followed by raw
/// little-endian float32 tensors in declared order. Byte-exact round-trip.
template <class S>
void save_weights(const std::filesystem::path& path, const Network<S>& net);
template <class S>
Network<S> load_weights(const std::filesystem::path& path);

} // namespace targetloc::net

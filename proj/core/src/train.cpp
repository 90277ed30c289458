#include "targetloc/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <span>

#include "targetloc/rng.hpp"
#include "targetloc/util.hpp"

namespace targetloc::net {

void TrainConfig::validate() const {
    if (head_only.steps < 0 || sgd_warm.steps < 0 || adaptive.steps < 0)
        throw InvalidArgument("train: negative step count");
    if ((head_only.steps > 0 && !(head_only.lr > 0)) ||
        (sgd_warm.steps > 0 && !(sgd_warm.lr > 0)) ||
        (adaptive.steps > 0 && !(adaptive.lr > 0)))
        throw InvalidArgument("train: learning rates must be positive");
    if (batch_size <= 0) throw InvalidArgument("train: batch_size must be positive");
    if (threads <= 0) throw InvalidArgument("train: threads must be positive");
}

std::vector<TrainingExample> render_examples(const Stack& stack,
                                             const DatasetManifest& manifest,
                                             Split split, int threads) {
    std::vector<const SampleRecord*> recs = manifest.split_samples(split);
    std::vector<TrainingExample> out(recs.size());
    parallel_for(static_cast<int>(recs.size()), threads, [&](int i) {
        WarpResult wr = render_sample(stack, *recs[i]);
        out[i].image = std::move(wr.image.pixels());
        out[i].target_px = recs[i]->target_px;
    });
    return out;
}

namespace {

template <class S>
struct TensorRefs {
    std::vector<std::string> names;
    std::vector<std::vector<S>*> tensors;

    explicit TensorRefs(NetParams<S>& p) {
        p.for_each([&](const std::string& n, std::vector<S>& t) {
            names.push_back(n);
            tensors.push_back(&t);
        });
    }
};

bool is_head_tensor(const std::string& name) { return name.rfind("head", 0) == 0; }

template <class S>
class AdamState {
public:
    AdamState(const NetConfig& cfg, double lr, double b1, double b2, double eps)
        : m_(NetParams<S>::zeros(cfg)), v_(NetParams<S>::zeros(cfg)),
          lr_(lr), b1_(b1), b2_(b2), eps_(eps) {}

    void step(TensorRefs<S>& params, TensorRefs<S>& grads, TensorRefs<S>& m,
              TensorRefs<S>& v, bool head_only) {
        ++t_;
        const double bc1 = 1.0 - std::pow(b1_, t_);
        const double bc2 = 1.0 - std::pow(b2_, t_);
        for (std::size_t k = 0; k < params.tensors.size(); ++k) {
            if (head_only && !is_head_tensor(params.names[k])) continue;
            auto& w = *params.tensors[k];
            auto& g = *grads.tensors[k];
            auto& mk = *m.tensors[k];
            auto& vk = *v.tensors[k];
            for (std::size_t i = 0; i < w.size(); ++i) {
                const double gi = static_cast<double>(g[i]);
                const double mi = b1_ * static_cast<double>(mk[i]) + (1.0 - b1_) * gi;
                const double vi = b2_ * static_cast<double>(vk[i]) + (1.0 - b2_) * gi * gi;
                mk[i] = static_cast<S>(mi);
                vk[i] = static_cast<S>(vi);
                w[i] -= static_cast<S>(lr_ * (mi / bc1) / (std::sqrt(vi / bc2) + eps_));
            }
        }
    }

    NetParams<S>& m() { return m_; }
    NetParams<S>& v() { return v_; }

private:
    NetParams<S> m_, v_;
    double lr_, b1_, b2_, eps_;
    long t_ = 0;
};

} // namespace

template <class S>
std::vector<CurvePoint> train(Network<S>& net, const std::vector<TrainingExample>& data,
                              const TrainConfig& cfg) {
    cfg.validate();
    if (data.empty())
        throw InvalidArgument("train: empty training set");

    const NetConfig& ncfg = net.config();
    const int batch = cfg.batch_size;
    const int workers = std::min(cfg.threads, batch);

    TensorRefs<S> params(net.params());
    NetParams<S> grads = NetParams<S>::zeros(ncfg);
    TensorRefs<S> grad_refs(grads);

    std::vector<NetParams<S>> slot_grads;
    std::vector<TensorRefs<S>> slot_refs;
    slot_grads.reserve(batch);
    for (int i = 0; i < batch; ++i) slot_grads.push_back(NetParams<S>::zeros(ncfg));
    for (int i = 0; i < batch; ++i) slot_refs.emplace_back(slot_grads[i]);

    std::vector<ForwardCache<S>> caches(workers);
    std::vector<std::vector<S>> image_scratch(workers);
    std::vector<double> losses(batch);
    std::vector<int> indices(batch);

    std::vector<CurvePoint> curve;
    int global_step = 0;

    auto run_batch = [&](CounterRng& rng) -> double {
        const std::size_t n = data.size();
        for (int i = 0; i < batch; ++i)
            indices[i] = static_cast<int>(rng.below(n));
        parallel_for_workers(batch, workers, [&](int i, int w) {
            const TrainingExample& ex = data[indices[i]];
            std::span<const S> img;
            if constexpr (std::is_same_v<S, float>) {
                img = std::span<const S>(ex.image.data(), ex.image.size());
            } else {
                auto& scratch = image_scratch[w];
                scratch.resize(ex.image.size());
                for (std::size_t k = 0; k < ex.image.size(); ++k)
                    scratch[k] = static_cast<S>(ex.image[k]);
                img = std::span<const S>(scratch.data(), scratch.size());
            }
            for (auto* t : slot_refs[i].tensors) std::fill(t->begin(), t->end(), S(0));
            net.forward(img, caches[w]);
            losses[i] = static_cast<double>(net.loss_and_backward(
                caches[w], ex.target_px, cfg.loss, slot_grads[i]));
        });
        // sum per-sample gradients in sample order, then average
        double loss_sum = 0.0;
        for (int i = 0; i < batch; ++i) loss_sum += losses[i];
        const S inv_b = S(1) / S(batch);
        for (std::size_t k = 0; k < grad_refs.tensors.size(); ++k) {
            auto& g = *grad_refs.tensors[k];
            std::fill(g.begin(), g.end(), S(0));
            for (int i = 0; i < batch; ++i) {
                const auto& sg = *slot_refs[i].tensors[k];
                for (std::size_t j = 0; j < g.size(); ++j) g[j] += sg[j];
            }
            for (S& v : g) v *= inv_b;
        }
        return loss_sum / batch;
    };

    auto check_step = [&](double loss, TrainingStage stage, int step_in_stage) {
        if (!std::isfinite(loss))
            throw DivergedLoss(std::string("loss diverged in stage ") + to_string(stage) +
                               " at step " + std::to_string(step_in_stage));
        if (!grads.all_finite())
            throw NonFiniteGradient(std::string("non-finite gradient in stage ") +
                                    to_string(stage) + " at step " +
                                    std::to_string(step_in_stage));
    };

    // stage 1: align the head (adaptive updates, default moments)
    if (cfg.head_only.steps > 0) {
        AdamState<S> opt(ncfg, cfg.head_only.lr, 0.9, 0.999, 1e-8);
        TensorRefs<S> m(opt.m()), v(opt.v());
        CounterRng rng(derive_key(cfg.seed, "stage:head_only"));
        for (int s = 0; s < cfg.head_only.steps; ++s) {
            const double loss = run_batch(rng);
            check_step(loss, TrainingStage::head_only, s);
            opt.step(params, grad_refs, m, v, /*head_only=*/true);
            curve.push_back({global_step++, TrainingStage::head_only, loss});
        }
        net.training_stage = TrainingStage::head_only;
    }

    // stage 2: whole network, plain SGD with momentum
    if (cfg.sgd_warm.steps > 0) {
        NetParams<S> vel = NetParams<S>::zeros(ncfg);
        TensorRefs<S> vel_refs(vel);
        CounterRng rng(derive_key(cfg.seed, "stage:sgd_warm"));
        for (int s = 0; s < cfg.sgd_warm.steps; ++s) {
            const double loss = run_batch(rng);
            check_step(loss, TrainingStage::sgd_warm, s);
            for (std::size_t k = 0; k < params.tensors.size(); ++k) {
                auto& w = *params.tensors[k];
                auto& g = *grad_refs.tensors[k];
                auto& vk = *vel_refs.tensors[k];
                const S mu = static_cast<S>(cfg.sgd_warm.momentum);
                const S lr = static_cast<S>(cfg.sgd_warm.lr);
                for (std::size_t i = 0; i < w.size(); ++i) {
                    vk[i] = mu * vk[i] + g[i];
                    w[i] -= lr * vk[i];
                }
            }
            curve.push_back({global_step++, TrainingStage::sgd_warm, loss});
        }
        net.training_stage = TrainingStage::sgd_warm;
    }

    // stage 3: whole network, adaptive optimizer
    if (cfg.adaptive.steps > 0) {
        AdamState<S> opt(ncfg, cfg.adaptive.lr, cfg.adaptive.beta1, cfg.adaptive.beta2,
                         cfg.adaptive.eps);
        TensorRefs<S> m(opt.m()), v(opt.v());
        CounterRng rng(derive_key(cfg.seed, "stage:adaptive"));
        for (int s = 0; s < cfg.adaptive.steps; ++s) {
            const double loss = run_batch(rng);
            check_step(loss, TrainingStage::adaptive, s);
            opt.step(params, grad_refs, m, v, /*head_only=*/false);
            curve.push_back({global_step++, TrainingStage::adaptive, loss});
        }
        net.training_stage = TrainingStage::adaptive;
    }

    return curve;
}

void save_loss_curve(const std::filesystem::path& path,
                     const std::vector<CurvePoint>& curve) {
    std::ofstream out(path);
    if (!out)
        throw WriteFailure("cannot open for writing: " + path.string());
    out << "step,stage,loss\n";
    char buf[128];
    for (const auto& p : curve) {
        std::snprintf(buf, sizeof buf, "%d,%s,%.9g\n", p.step, to_string(p.stage), p.loss);
        out << buf;
    }
    if (!out)
        throw WriteFailure("short write: " + path.string());
}

template std::vector<CurvePoint> train<float>(Network<float>&,
                                              const std::vector<TrainingExample>&,
                                              const TrainConfig&);
template std::vector<CurvePoint> train<double>(Network<double>&,
                                               const std::vector<TrainingExample>&,
                                               const TrainConfig&);

} // namespace targetloc::net

#include "targetloc/net.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include <Eigen/Core>

#include "targetloc/rng.hpp"

namespace targetloc::net {

namespace {

template <class S>
using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class S>
using MapMat = Eigen::Map<RowMat<S>>;
template <class S>
using MapConst = Eigen::Map<const RowMat<S>>;

constexpr double kLnEps = 1e-6;

template <class S>
void pointwise_forward(const std::vector<S>& in, int positions, int cin,
                       const ConvParams<S>& pw, int cout, std::vector<S>& out) {
    out.resize(static_cast<std::size_t>(positions) * cout);
    MapConst<S> x(in.data(), positions, cin);
    MapConst<S> w(pw.w.data(), cin, cout);
    MapMat<S> y(out.data(), positions, cout);
    y.noalias() = x * w;
    for (int p = 0; p < positions; ++p)
        for (int c = 0; c < cout; ++c) out[static_cast<std::size_t>(p) * cout + c] += pw.b[c];
}

// dIn (resized) = dOut * W^T; dW += In^T * dOut; db += colsum(dOut)
template <class S>
void pointwise_backward(const std::vector<S>& in, const std::vector<S>& dout,
                        int positions, int cin, int cout, const ConvParams<S>& pw,
                        ConvParams<S>& grad, std::vector<S>& din) {
    din.resize(static_cast<std::size_t>(positions) * cin);
    MapConst<S> x(in.data(), positions, cin);
    MapConst<S> dy(dout.data(), positions, cout);
    MapConst<S> w(pw.w.data(), cin, cout);
    MapMat<S> dx(din.data(), positions, cin);
    MapMat<S> dw(grad.w.data(), cin, cout);
    dx.noalias() = dy * w.transpose();
    dw.noalias() += x.transpose() * dy;
    for (int p = 0; p < positions; ++p)
        for (int c = 0; c < cout; ++c) grad.b[c] += dout[static_cast<std::size_t>(p) * cout + c];
}

template <class S>
void layernorm_forward(const std::vector<S>& in, int positions, int c,
                       const LnParams<S>& ln, std::vector<S>& mu, std::vector<S>& rstd,
                       std::vector<S>& out) {
    mu.resize(positions);
    rstd.resize(positions);
    out.resize(in.size());
    const S invc = S(1) / S(c);
    for (int p = 0; p < positions; ++p) {
        const S* x = in.data() + static_cast<std::size_t>(p) * c;
        S* y = out.data() + static_cast<std::size_t>(p) * c;
        S m = 0;
        for (int i = 0; i < c; ++i) m += x[i];
        m *= invc;
        S v = 0;
        for (int i = 0; i < c; ++i) {
            const S d = x[i] - m;
            v += d * d;
        }
        v *= invc;
        const S r = S(1) / std::sqrt(v + S(kLnEps));
        mu[p] = m;
        rstd[p] = r;
        for (int i = 0; i < c; ++i) y[i] = (x[i] - m) * r * ln.g[i] + ln.b[i];
    }
}

// din may alias dout (positions are processed independently)
template <class S>
void layernorm_backward(const std::vector<S>& in, const std::vector<S>& mu,
                        const std::vector<S>& rstd, const std::vector<S>& dout,
                        int positions, int c, const LnParams<S>& ln, LnParams<S>& grad,
                        std::vector<S>& din) {
    din.resize(in.size());
    const S invc = S(1) / S(c);
    for (int p = 0; p < positions; ++p) {
        const S* x = in.data() + static_cast<std::size_t>(p) * c;
        const S* dy = dout.data() + static_cast<std::size_t>(p) * c;
        S* dx = din.data() + static_cast<std::size_t>(p) * c;
        const S m = mu[p], r = rstd[p];
        S m1 = 0, m2 = 0;
        for (int i = 0; i < c; ++i) {
            const S xh = (x[i] - m) * r;
            const S g = dy[i] * ln.g[i];
            grad.g[i] += dy[i] * xh;
            grad.b[i] += dy[i];
            m1 += g;
            m2 += g * xh;
        }
        m1 *= invc;
        m2 *= invc;
        for (int i = 0; i < c; ++i) {
            const S xh = (x[i] - m) * r;
            const S g = dy[i] * ln.g[i];
            dx[i] = r * (g - m1 - xh * m2);
        }
    }
}

template <class S>
S gelu(S x) {
    return S(0.5) * x * (S(1) + std::erf(x * S(0.7071067811865476)));
}

template <class S>
S gelu_grad(S x) {
    const S phi = std::exp(S(-0.5) * x * x) * S(0.3989422804014327);
    return S(0.5) * (S(1) + std::erf(x * S(0.7071067811865476))) + x * phi;
}

// strided im2col, no padding (kernel == stride): out rows = output positions
template <class S>
void im2col_tiled(const S* in, int h, int w, int cin, int k, std::vector<S>& patches) {
    const int oh = h / k, ow = w / k;
    patches.resize(static_cast<std::size_t>(oh) * ow * k * k * cin);
    S* dst = patches.data();
    for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox)
            for (int ky = 0; ky < k; ++ky)
                for (int kx = 0; kx < k; ++kx) {
                    const S* src = in + (static_cast<std::size_t>(oy * k + ky) * w +
                                         (ox * k + kx)) * cin;
                    for (int c = 0; c < cin; ++c) *dst++ = src[c];
                }
}

template <class S>
void col2im_tiled(const std::vector<S>& dpatches, int h, int w, int cin, int k,
                  std::vector<S>& din) {
    const int oh = h / k, ow = w / k;
    din.assign(static_cast<std::size_t>(h) * w * cin, S(0));
    const S* src = dpatches.data();
    for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox)
            for (int ky = 0; ky < k; ++ky)
                for (int kx = 0; kx < k; ++kx) {
                    S* dst = din.data() + (static_cast<std::size_t>(oy * k + ky) * w +
                                           (ox * k + kx)) * cin;
                    for (int c = 0; c < cin; ++c) dst[c] += *src++;
                }
}

template <class S>
void depthwise_forward(const std::vector<S>& in, int h, int w, int c, int k,
                       PaddingMode pad, const ConvParams<S>& dw, std::vector<S>& out) {
    const int p = k / 2;
    out.resize(in.size());
    for (int y = 0; y < h; ++y) {
        S* orow = out.data() + static_cast<std::size_t>(y) * w * c;
        for (int x = 0; x < w; ++x)
            for (int i = 0; i < c; ++i) orow[x * c + i] = dw.b[i];
    }
    if (pad == PaddingMode::zero) {
        for (int ky = 0; ky < k; ++ky) {
            const int y0 = std::max(0, p - ky), y1 = std::min(h, h + p - ky);
            for (int kx = 0; kx < k; ++kx) {
                const int x0 = std::max(0, p - kx), x1 = std::min(w, w + p - kx);
                const S* wk = dw.w.data() + static_cast<std::size_t>(ky * k + kx) * c;
                for (int y = y0; y < y1; ++y) {
                    const S* irow = in.data() +
                                    (static_cast<std::size_t>(y + ky - p) * w + (kx - p)) * c;
                    S* orow = out.data() + static_cast<std::size_t>(y) * w * c;
                    for (int x = x0; x < x1; ++x) {
                        const S* iv = irow + static_cast<std::size_t>(x) * c;
                        S* ov = orow + static_cast<std::size_t>(x) * c;
                        for (int i = 0; i < c; ++i) ov[i] += wk[i] * iv[i];
                    }
                }
            }
        }
    } else {
        for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
                const S* wk = dw.w.data() + static_cast<std::size_t>(ky * k + kx) * c;
                for (int y = 0; y < h; ++y) {
                    const int iy = ((y + ky - p) % h + h) % h;
                    S* ov = out.data() + static_cast<std::size_t>(y) * w * c;
                    for (int x = 0; x < w; ++x) {
                        const int ix = ((x + kx - p) % w + w) % w;
                        const S* iv = in.data() +
                                      (static_cast<std::size_t>(iy) * w + ix) * c;
                        for (int i = 0; i < c; ++i) ov[x * c + i] += wk[i] * iv[i];
                    }
                }
            }
    }
}

template <class S>
void depthwise_backward(const std::vector<S>& in, const std::vector<S>& dout, int h,
                        int w, int c, int k, PaddingMode pad, const ConvParams<S>& dw,
                        ConvParams<S>& grad, std::vector<S>& din) {
    const int p = k / 2;
    din.assign(in.size(), S(0));
    for (std::size_t pos = 0; pos < static_cast<std::size_t>(h) * w; ++pos)
        for (int i = 0; i < c; ++i) grad.b[i] += dout[pos * c + i];

    if (pad == PaddingMode::zero) {
        for (int ky = 0; ky < k; ++ky) {
            const int y0 = std::max(0, p - ky), y1 = std::min(h, h + p - ky);
            for (int kx = 0; kx < k; ++kx) {
                const int x0 = std::max(0, p - kx), x1 = std::min(w, w + p - kx);
                const S* wk = dw.w.data() + static_cast<std::size_t>(ky * k + kx) * c;
                S* gk = grad.w.data() + static_cast<std::size_t>(ky * k + kx) * c;
                for (int y = y0; y < y1; ++y) {
                    const std::size_t ioff =
                        (static_cast<std::size_t>(y + ky - p) * w + (kx - p)) * c;
                    const std::size_t ooff = static_cast<std::size_t>(y) * w * c;
                    for (int x = x0; x < x1; ++x) {
                        const S* iv = in.data() + ioff + static_cast<std::size_t>(x) * c;
                        S* dv = din.data() + ioff + static_cast<std::size_t>(x) * c;
                        const S* gov = dout.data() + ooff + static_cast<std::size_t>(x) * c;
                        for (int i = 0; i < c; ++i) {
                            dv[i] += wk[i] * gov[i];
                            gk[i] += iv[i] * gov[i];
                        }
                    }
                }
            }
        }
    } else {
        for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
                const S* wk = dw.w.data() + static_cast<std::size_t>(ky * k + kx) * c;
                S* gk = grad.w.data() + static_cast<std::size_t>(ky * k + kx) * c;
                for (int y = 0; y < h; ++y) {
                    const int iy = ((y + ky - p) % h + h) % h;
                    for (int x = 0; x < w; ++x) {
                        const int ix = ((x + kx - p) % w + w) % w;
                        const S* iv = in.data() + (static_cast<std::size_t>(iy) * w + ix) * c;
                        S* dv = din.data() + (static_cast<std::size_t>(iy) * w + ix) * c;
                        const S* gov = dout.data() + (static_cast<std::size_t>(y) * w + x) * c;
                        for (int i = 0; i < c; ++i) {
                            dv[i] += wk[i] * gov[i];
                            gk[i] += iv[i] * gov[i];
                        }
                    }
                }
            }
    }
}

template <class S>
bool finite_all(const std::vector<S>& v) {
    for (S x : v)
        if (!std::isfinite(static_cast<double>(x))) return false;
    return true;
}

} // namespace

const char* to_string(Head h) {
    switch (h) {
        case Head::selection: return "selection";
        case Head::regression: return "regression";
        default: return "both";
    }
}

const char* to_string(TrainingStage s) {
    switch (s) {
        case TrainingStage::init: return "init";
        case TrainingStage::head_only: return "head_only";
        case TrainingStage::sgd_warm: return "sgd_warm";
        default: return "adaptive";
    }
}

Head head_from_string(const std::string& s) {
    if (s == "selection") return Head::selection;
    if (s == "regression") return Head::regression;
    if (s == "both") return Head::both;
    throw InvalidArgument("unknown head '" + s + "'");
}

TrainingStage stage_from_string(const std::string& s) {
    if (s == "init") return TrainingStage::init;
    if (s == "head_only") return TrainingStage::head_only;
    if (s == "sgd_warm") return TrainingStage::sgd_warm;
    if (s == "adaptive") return TrainingStage::adaptive;
    throw InvalidArgument("unknown training stage '" + s + "'");
}

void NetConfig::validate() const {
    if (stage_widths.empty() || stage_widths.size() != blocks_per_stage.size())
        throw InvalidArgument("net: stage_widths and blocks_per_stage must match and be nonempty");
    for (int wdt : stage_widths)
        if (wdt <= 0) throw InvalidArgument("net: non-positive stage width");
    for (int b : blocks_per_stage)
        if (b <= 0) throw InvalidArgument("net: non-positive block count");
    if (stem_stride < 1) throw InvalidArgument("net: stem_stride must be >= 1");
    const int implied = stem_stride << (static_cast<int>(stage_widths.size()) - 1);
    if (implied != output_stride)
        throw InvalidArgument("net: output_stride must equal stem_stride * 2^(stages-1)");
    if (input_size <= 0 || input_size % output_stride != 0)
        throw InvalidArgument("net: input_size must be a positive multiple of output_stride");
    if (dw_kernel < 1 || dw_kernel % 2 == 0)
        throw InvalidArgument("net: dw_kernel must be odd");
    if (expansion_ratio < 1) throw InvalidArgument("net: expansion_ratio must be >= 1");
}

template <class S>
NetParams<S> NetParams<S>::zeros(const NetConfig& cfg) {
    cfg.validate();
    NetParams<S> p;
    const int c0 = cfg.stage_widths[0];
    p.stem.w.assign(static_cast<std::size_t>(cfg.stem_stride) * cfg.stem_stride * c0, S(0));
    p.stem.b.assign(c0, S(0));
    p.stem_ln.g.assign(c0, S(0));
    p.stem_ln.b.assign(c0, S(0));
    const int nstages = cfg.stages();
    p.stages.resize(nstages);
    for (int s = 0; s < nstages; ++s) {
        const int c = cfg.stage_widths[s];
        const int ec = c * cfg.expansion_ratio;
        p.stages[s].resize(cfg.blocks_per_stage[s]);
        for (auto& blk : p.stages[s]) {
            blk.dw.w.assign(static_cast<std::size_t>(cfg.dw_kernel) * cfg.dw_kernel * c, S(0));
            blk.dw.b.assign(c, S(0));
            blk.ln.g.assign(c, S(0));
            blk.ln.b.assign(c, S(0));
            blk.pw1.w.assign(static_cast<std::size_t>(c) * ec, S(0));
            blk.pw1.b.assign(ec, S(0));
            blk.pw2.w.assign(static_cast<std::size_t>(ec) * c, S(0));
            blk.pw2.b.assign(c, S(0));
        }
        if (s + 1 < nstages) {
            const int cn = cfg.stage_widths[s + 1];
            LnParams<S> ln;
            ln.g.assign(c, S(0));
            ln.b.assign(c, S(0));
            p.down_ln.push_back(std::move(ln));
            ConvParams<S> dc;
            dc.w.assign(static_cast<std::size_t>(4) * c * cn, S(0));
            dc.b.assign(cn, S(0));
            p.down.push_back(std::move(dc));
        }
    }
    const int cl = cfg.stage_widths.back();
    p.head_ln.g.assign(cl, S(0));
    p.head_ln.b.assign(cl, S(0));
    if (cfg.head != Head::regression) {
        p.sel.w.assign(cl, S(0));
        p.sel.b.assign(1, S(0));
    }
    if (cfg.head != Head::selection) {
        p.reg.w.assign(static_cast<std::size_t>(cl) * 2, S(0));
        p.reg.b.assign(2, S(0));
    }
    return p;
}

template <class S>
void NetParams<S>::fill(S value) {
    for_each([&](const std::string&, std::vector<S>& t) {
        std::fill(t.begin(), t.end(), value);
    });
}

template <class S>
bool NetParams<S>::all_finite() const {
    bool ok = true;
    for_each([&](const std::string&, const std::vector<S>& t) {
        if (ok && !finite_all(t)) ok = false;
    });
    return ok;
}

template <class S>
Network<S>::Network(const NetConfig& cfg) : cfg_(cfg), p_(NetParams<S>::zeros(cfg)) {}

template <class S>
Network<S>::Network(const NetConfig& cfg, std::uint64_t seed) : Network(cfg) {
    const std::uint64_t base = derive_key(seed, "init");
    auto init_conv = [&](const std::string& name, ConvParams<S>& conv, int fan_in) {
        CounterRng r(derive_key(base, name));
        const double bound = std::sqrt(3.0 / fan_in);
        for (S& v : conv.w) v = static_cast<S>(r.uniform(-bound, bound));
        // biases stay zero
    };
    auto init_ln = [&](LnParams<S>& ln) {
        std::fill(ln.g.begin(), ln.g.end(), S(1));
        std::fill(ln.b.begin(), ln.b.end(), S(0));
    };
    init_conv("stem.w", p_.stem, cfg_.stem_stride * cfg_.stem_stride);
    init_ln(p_.stem_ln);
    for (std::size_t s = 0; s < p_.stages.size(); ++s) {
        const int c = cfg_.stage_widths[s];
        const int ec = c * cfg_.expansion_ratio;
        for (std::size_t b = 0; b < p_.stages[s].size(); ++b) {
            const std::string bp = "s" + std::to_string(s) + ".b" + std::to_string(b) + ".";
            auto& blk = p_.stages[s][b];
            init_conv(bp + "dw.w", blk.dw, cfg_.dw_kernel * cfg_.dw_kernel);
            init_ln(blk.ln);
            init_conv(bp + "pw1.w", blk.pw1, c);
            init_conv(bp + "pw2.w", blk.pw2, ec);
        }
        if (s < p_.down.size()) {
            init_ln(p_.down_ln[s]);
            init_conv("s" + std::to_string(s) + ".down.w", p_.down[s], 4 * c);
        }
    }
    init_ln(p_.head_ln);
    const int cl = cfg_.stage_widths.back();
    if (!p_.sel.w.empty()) init_conv("head.sel.w", p_.sel, cl);
    if (!p_.reg.w.empty()) init_conv("head.reg.w", p_.reg, cl);
}

template <class S>
void Network<S>::forward(std::span<const S> image, ForwardCache<S>& cache) const {
    const int n = cfg_.input_size;
    if (static_cast<int>(image.size()) != n * n)
        throw ShapeMismatch("forward: expected " + std::to_string(n * n) + " pixels, got " +
                            std::to_string(image.size()));

    const int nstages = cfg_.stages();
    cache.blocks.resize(nstages);
    for (int s = 0; s < nstages; ++s) cache.blocks[s].resize(cfg_.blocks_per_stage[s]);
    cache.downs.resize(nstages - 1);

    // stem: tiled conv as one GEMM
    const int ss = cfg_.stem_stride;
    const int h0 = n / ss;
    const int c0 = cfg_.stage_widths[0];
    im2col_tiled(image.data(), n, n, 1, ss, cache.stem_patches);
    pointwise_forward(cache.stem_patches, h0 * h0, ss * ss,
                      p_.stem, c0, cache.stem_out);
    layernorm_forward(cache.stem_out, h0 * h0, c0, p_.stem_ln, cache.stem_mu,
                      cache.stem_rstd, cache.blocks[0][0].in);

    int h = h0;
    for (int s = 0; s < nstages; ++s) {
        const int c = cfg_.stage_widths[s];
        const int ec = c * cfg_.expansion_ratio;
        const int positions = h * h;
        const int nblocks = cfg_.blocks_per_stage[s];
        for (int b = 0; b < nblocks; ++b) {
            auto& bc = cache.blocks[s][b];
            const auto& blk = p_.stages[s][b];
            std::vector<S>& out = (b + 1 < nblocks) ? cache.blocks[s][b + 1].in
                                  : (s + 1 < nstages) ? cache.downs[s].in
                                                      : cache.feat_in;
            depthwise_forward(bc.in, h, h, c, cfg_.dw_kernel, cfg_.padding, blk.dw,
                              bc.dw_out);
            layernorm_forward(bc.dw_out, positions, c, blk.ln, bc.mu, bc.rstd, bc.ln_out);
            pointwise_forward(bc.ln_out, positions, c, blk.pw1, ec, bc.pw1_out);
            bc.gelu_out.resize(bc.pw1_out.size());
            for (std::size_t i = 0; i < bc.pw1_out.size(); ++i)
                bc.gelu_out[i] = gelu(bc.pw1_out[i]);
            pointwise_forward(bc.gelu_out, positions, ec, blk.pw2, c, out);
            for (std::size_t i = 0; i < out.size(); ++i) out[i] += bc.in[i];
        }
        if (s + 1 < nstages) {
            auto& dc = cache.downs[s];
            const int cn = cfg_.stage_widths[s + 1];
            layernorm_forward(dc.in, positions, c, p_.down_ln[s], dc.mu, dc.rstd,
                              dc.ln_out);
            im2col_tiled(dc.ln_out.data(), h, h, c, 2, dc.patches);
            h /= 2;
            pointwise_forward(dc.patches, h * h, 4 * c, p_.down[s], cn,
                              cache.blocks[s + 1][0].in);
        }
    }

    // head layernorm + heads
    const int grid = cfg_.grid();
    const int cl = cfg_.stage_widths.back();
    layernorm_forward(cache.feat_in, grid * grid, cl, p_.head_ln, cache.feat_mu,
                      cache.feat_rstd, cache.feat);
    if (!p_.sel.w.empty()) {
        pointwise_forward(cache.feat, grid * grid, cl, p_.sel, 1, cache.logits);
        if (!finite_all(cache.logits))
            throw NonFiniteActivation("forward: non-finite selection logits");
    } else {
        cache.logits.clear();
    }
    if (!p_.reg.w.empty()) {
        cache.pooled.assign(cl, S(0));
        const S invp = S(1) / S(grid * grid);
        for (int p = 0; p < grid * grid; ++p)
            for (int i = 0; i < cl; ++i)
                cache.pooled[i] += cache.feat[static_cast<std::size_t>(p) * cl + i];
        for (int i = 0; i < cl; ++i) cache.pooled[i] *= invp;
        for (int k = 0; k < 2; ++k) {
            S acc = p_.reg.b[k];
            for (int i = 0; i < cl; ++i) acc += cache.pooled[i] * p_.reg.w[i * 2 + k];
            cache.coord_norm[k] = acc;
        }
        if (!std::isfinite(static_cast<double>(cache.coord_norm[0])) ||
            !std::isfinite(static_cast<double>(cache.coord_norm[1])))
            throw NonFiniteActivation("forward: non-finite regression output");
    } else {
        cache.pooled.clear();
    }
}

template <class S>
Prediction<S> Network<S>::prediction_from(const ForwardCache<S>& cache) const {
    Prediction<S> pred;
    pred.grid = cfg_.grid();
    if (!p_.sel.w.empty()) pred.heatmap = cache.logits;
    if (!p_.reg.w.empty()) {
        pred.has_coords = true;
        pred.coord_u = static_cast<double>(cache.coord_norm[0]) * cfg_.input_size;
        pred.coord_v = static_cast<double>(cache.coord_norm[1]) * cfg_.input_size;
    }
    return pred;
}

template <class S>
Prediction<S> Network<S>::predict(std::span<const S> image) const {
    ForwardCache<S> cache;
    forward(image, cache);
    return prediction_from(cache);
}

template <class S>
S Network<S>::loss_and_backward(ForwardCache<S>& cache, PixelPoint target_px,
                                LossKind kind, NetParams<S>& grads) const {
    const int grid = cfg_.grid();
    const int cl = cfg_.stage_widths.back();
    const int pl = grid * grid;

    double loss = 0.0;
    std::vector<S>& dfeat = cache.ga;
    dfeat.assign(static_cast<std::size_t>(pl) * cl, S(0));

    if (kind != LossKind::regression) {
        if (p_.sel.w.empty())
            throw InvalidArgument("selection loss requested without a selection head");
        auto dlogits = loss_selection_grad<S>(
            std::span<const S>(cache.logits.data(), cache.logits.size()), grid, target_px,
            cfg_.output_stride);
        loss += loss_selection<S>(std::span<const S>(cache.logits.data(),
                                                     cache.logits.size()),
                                  grid, target_px, cfg_.output_stride);
        // dfeat += dlogits * sel.w^T ; dsel.w += feat^T * dlogits
        for (int p = 0; p < pl; ++p) {
            const S dl = static_cast<S>(dlogits[p]);
            grads.sel.b[0] += dl;
            const S* f = cache.feat.data() + static_cast<std::size_t>(p) * cl;
            S* df = dfeat.data() + static_cast<std::size_t>(p) * cl;
            for (int i = 0; i < cl; ++i) {
                df[i] += dl * p_.sel.w[i];
                grads.sel.w[i] += dl * f[i];
            }
        }
    }
    if (kind != LossKind::selection) {
        if (p_.reg.w.empty())
            throw InvalidArgument("regression loss requested without a regression head");
        const double n = cfg_.input_size;
        const PixelPoint pred{static_cast<double>(cache.coord_norm[0]) * n,
                              static_cast<double>(cache.coord_norm[1]) * n};
        loss += loss_regression(pred, target_px, n);
        const PixelPoint gpx = loss_regression_grad(pred, target_px, n);
        const S dc[2] = {static_cast<S>(gpx.u * n), static_cast<S>(gpx.v * n)};
        // chain rule back through the denormalization: d/dcoord_norm = d/dpx * n
        std::vector<S> dpooled(cl, S(0));
        for (int k = 0; k < 2; ++k) {
            grads.reg.b[k] += dc[k];
            for (int i = 0; i < cl; ++i) {
                grads.reg.w[i * 2 + k] += cache.pooled[i] * dc[k];
                dpooled[i] += p_.reg.w[i * 2 + k] * dc[k];
            }
        }
        const S invp = S(1) / S(pl);
        for (int p = 0; p < pl; ++p) {
            S* df = dfeat.data() + static_cast<std::size_t>(p) * cl;
            for (int i = 0; i < cl; ++i) df[i] += dpooled[i] * invp;
        }
    }

    // head layernorm
    std::vector<S>& dcur = cache.gb;
    layernorm_backward(cache.feat_in, cache.feat_mu, cache.feat_rstd, dfeat, pl, cl,
                       p_.head_ln, grads.head_ln, dcur);

    // stages in reverse
    const int nstages = cfg_.stages();
    int h = cfg_.input_size / cfg_.output_stride;
    for (int s = nstages - 1; s >= 0; --s) {
        const int c = cfg_.stage_widths[s];
        const int ec = c * cfg_.expansion_ratio;
        const int positions = h * h;
        for (int b = cfg_.blocks_per_stage[s] - 1; b >= 0; --b) {
            auto& bc = cache.blocks[s][b];
            const auto& blk = p_.stages[s][b];
            auto& gblk = grads.stages[s][b];
            // dcur holds d(block output) = d(residual) + path gradient
            std::vector<S>& dgelu = cache.gc;
            pointwise_backward(bc.gelu_out, dcur, positions, ec, c, blk.pw2, gblk.pw2,
                               dgelu);
            for (std::size_t i = 0; i < dgelu.size(); ++i)
                dgelu[i] *= gelu_grad(bc.pw1_out[i]);
            std::vector<S>& dln = cache.gd;
            pointwise_backward(bc.ln_out, dgelu, positions, c, ec, blk.pw1, gblk.pw1, dln);
            layernorm_backward(bc.dw_out, bc.mu, bc.rstd, dln, positions, c, blk.ln,
                               gblk.ln, dln);
            std::vector<S>& ddw_in = cache.ge;
            depthwise_backward(bc.in, dln, h, h, c, cfg_.dw_kernel, cfg_.padding, blk.dw,
                               gblk.dw, ddw_in);
            for (std::size_t i = 0; i < dcur.size(); ++i) dcur[i] += ddw_in[i];
        }
        if (s > 0) {
            auto& dc = cache.downs[s - 1];
            const int cp = cfg_.stage_widths[s - 1];
            const int hp = h * 2;
            // conv backward
            std::vector<S>& dpatches = cache.gc;
            pointwise_backward(dc.patches, dcur, h * h, 4 * cp, c, p_.down[s - 1],
                               grads.down[s - 1], dpatches);
            std::vector<S>& dln_out = cache.gd;
            col2im_tiled(dpatches, hp, hp, cp, 2, dln_out);
            layernorm_backward(dc.in, dc.mu, dc.rstd, dln_out, hp * hp, cp,
                               p_.down_ln[s - 1], grads.down_ln[s - 1], dcur);
            h = hp;
        }
    }

    // stem layernorm + conv (no input gradient needed)
    const int h0 = cfg_.input_size / cfg_.stem_stride;
    const int c0 = cfg_.stage_widths[0];
    std::vector<S>& dstem = cache.gc;
    layernorm_backward(cache.stem_out, cache.stem_mu, cache.stem_rstd, dcur, h0 * h0, c0,
                       p_.stem_ln, grads.stem_ln, dstem);
    {
        const int m = h0 * h0, k = cfg_.stem_stride * cfg_.stem_stride;
        MapConst<S> x(cache.stem_patches.data(), m, k);
        MapConst<S> dy(dstem.data(), m, c0);
        MapMat<S> dw(grads.stem.w.data(), k, c0);
        dw.noalias() += x.transpose() * dy;
        for (int p = 0; p < m; ++p)
            for (int i = 0; i < c0; ++i)
                grads.stem.b[i] += dstem[static_cast<std::size_t>(p) * c0 + i];
    }

    return static_cast<S>(loss);
}

// --- losses ---

double loss_regression(PixelPoint pred_px, PixelPoint target_px, double input_size) {
    const double du = (pred_px.u - target_px.u) / input_size;
    const double dv = (pred_px.v - target_px.v) / input_size;
    return du * du + dv * dv;
}

PixelPoint loss_regression_grad(PixelPoint pred_px, PixelPoint target_px,
                                double input_size) {
    return {2.0 * (pred_px.u - target_px.u) / (input_size * input_size),
            2.0 * (pred_px.v - target_px.v) / (input_size * input_size)};
}

namespace {
int target_cell_index(int grid, PixelPoint target_px, int output_stride) {
    const int cu = static_cast<int>(std::floor(target_px.u / output_stride));
    const int cv = static_cast<int>(std::floor(target_px.v / output_stride));
    if (cu < 0 || cu >= grid || cv < 0 || cv >= grid)
        throw TargetOutOfGrid("target (" + std::to_string(target_px.u) + ", " +
                              std::to_string(target_px.v) + ") outside the " +
                              std::to_string(grid) + "x" + std::to_string(grid) + " grid");
    return cv * grid + cu;
}
} // namespace

template <class S>
double loss_selection(std::span<const S> logits, int grid, PixelPoint target_px,
                      int output_stride) {
    if (static_cast<int>(logits.size()) != grid * grid)
        throw ShapeMismatch("loss_selection: logits size != grid^2");
    const int t = target_cell_index(grid, target_px, output_stride);
    double mx = -std::numeric_limits<double>::infinity();
    for (S v : logits) mx = std::max(mx, static_cast<double>(v));
    double sum = 0.0;
    for (S v : logits) sum += std::exp(static_cast<double>(v) - mx);
    return mx + std::log(sum) - static_cast<double>(logits[t]);
}

template <class S>
std::vector<double> loss_selection_grad(std::span<const S> logits, int grid,
                                        PixelPoint target_px, int output_stride) {
    const int t = target_cell_index(grid, target_px, output_stride);
    double mx = -std::numeric_limits<double>::infinity();
    for (S v : logits) mx = std::max(mx, static_cast<double>(v));
    double sum = 0.0;
    std::vector<double> g(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
        g[i] = std::exp(static_cast<double>(logits[i]) - mx);
        sum += g[i];
    }
    for (double& v : g) v /= sum;
    g[t] -= 1.0;
    return g;
}

template <class S>
std::vector<S> softmax_grid(std::span<const S> logits) {
    std::vector<S> p(logits.size());
    if (logits.empty()) return p;
    double mx = -std::numeric_limits<double>::infinity();
    for (S v : logits) mx = std::max(mx, static_cast<double>(v));
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const double e = std::exp(static_cast<double>(logits[i]) - mx);
        p[i] = static_cast<S>(e);
        sum += e;
    }
    for (S& v : p) v = static_cast<S>(static_cast<double>(v) / sum);
    return p;
}

// --- prediction ---

template <class S>
TargetEstimate estimate_from_prediction(const Prediction<S>& pred, const NetConfig& cfg) {
    TargetEstimate est;
    if (!pred.heatmap.empty()) {
        int best = 0;
        for (int i = 1; i < static_cast<int>(pred.heatmap.size()); ++i)
            if (pred.heatmap[i] > pred.heatmap[best]) best = i; // first max wins ties
        const int cu = best % pred.grid, cv = best / pred.grid;
        const double half = cfg.output_stride / 2.0;
        est.px = {cu * static_cast<double>(cfg.output_stride) + half,
                  cv * static_cast<double>(cfg.output_stride) + half};
        auto probs = softmax_grid<S>(
            std::span<const S>(pred.heatmap.data(), pred.heatmap.size()));
        est.confidence = static_cast<double>(probs[best]);
        est.from_selection = true;
    } else if (pred.has_coords) {
        est.px = {pred.coord_u, pred.coord_v};
        est.confidence = 1.0;
        est.from_selection = false;
    } else {
        throw InvalidArgument("prediction carries no head output");
    }
    return est;
}

template <class S>
TargetEstimate predict_target(const Network<S>& net, std::span<const S> image) {
    return estimate_from_prediction(net.predict(image), net.config());
}

// --- serialization ---

template <class S>
void save_weights(const std::filesystem::path& path, const Network<S>& net) {
    static_assert(std::endian::native == std::endian::little,
                  "weights files are little-endian");
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw WriteFailure("cannot open for writing: " + path.string());
    const NetConfig& cfg = net.config();
    out << "targetloc-weights 1\n";
    out << "input_size " << cfg.input_size << "\n";
    out << "stem_stride " << cfg.stem_stride << "\n";
    out << "stage_widths";
    for (int w : cfg.stage_widths) out << " " << w;
    out << "\nblocks_per_stage";
    for (int b : cfg.blocks_per_stage) out << " " << b;
    out << "\noutput_stride " << cfg.output_stride << "\n";
    out << "head " << to_string(cfg.head) << "\n";
    out << "dw_kernel " << cfg.dw_kernel << "\n";
    out << "expansion_ratio " << cfg.expansion_ratio << "\n";
    out << "training_stage " << to_string(net.training_stage) << "\n";

    std::size_t count = 0;
    net.params().for_each([&](const std::string&, const std::vector<S>&) { ++count; });
    out << "tensors " << count << "\n";
    net.params().for_each([&](const std::string& name, const std::vector<S>& t) {
        out << name << " " << t.size() << "\n";
    });
    out << "DATA\n";
    net.params().for_each([&](const std::string&, const std::vector<S>& t) {
        std::vector<float> f32(t.size());
        for (std::size_t i = 0; i < t.size(); ++i) f32[i] = static_cast<float>(t[i]);
        out.write(reinterpret_cast<const char*>(f32.data()),
                  static_cast<std::streamsize>(f32.size() * sizeof(float)));
    });
    if (!out)
        throw WriteFailure("short write: " + path.string());
}

namespace {
std::string expect_key(std::istream& in, const std::string& key) {
    std::string line;
    if (!std::getline(in, line) || line.rfind(key + " ", 0) != 0)
        throw BadWeightsFile("weights header: expected '" + key + "' line");
    return line.substr(key.size() + 1);
}
std::vector<int> parse_ints(const std::string& s) {
    std::istringstream is(s);
    std::vector<int> out;
    int v;
    while (is >> v) out.push_back(v);
    return out;
}
} // namespace

template <class S>
Network<S> load_weights(const std::filesystem::path& path) {
    static_assert(std::endian::native == std::endian::little,
                  "weights files are little-endian");
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw BadWeightsFile("cannot open weights file: " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != "targetloc-weights 1")
        throw BadWeightsFile("bad magic in " + path.string());

    NetConfig cfg;
    cfg.input_size = std::stoi(expect_key(in, "input_size"));
    cfg.stem_stride = std::stoi(expect_key(in, "stem_stride"));
    cfg.stage_widths = parse_ints(expect_key(in, "stage_widths"));
    cfg.blocks_per_stage = parse_ints(expect_key(in, "blocks_per_stage"));
    cfg.output_stride = std::stoi(expect_key(in, "output_stride"));
    cfg.head = head_from_string(expect_key(in, "head"));
    cfg.dw_kernel = std::stoi(expect_key(in, "dw_kernel"));
    cfg.expansion_ratio = std::stoi(expect_key(in, "expansion_ratio"));
    const TrainingStage stage = stage_from_string(expect_key(in, "training_stage"));

    const std::size_t count = std::stoul(expect_key(in, "tensors"));
    std::vector<std::pair<std::string, std::size_t>> directory;
    for (std::size_t i = 0; i < count; ++i) {
        if (!std::getline(in, line)) throw BadWeightsFile("truncated tensor directory");
        std::istringstream ls(line);
        std::string name;
        std::size_t sz;
        if (!(ls >> name >> sz)) throw BadWeightsFile("bad tensor directory line: " + line);
        directory.emplace_back(name, sz);
    }
    if (!std::getline(in, line) || line != "DATA")
        throw BadWeightsFile("missing DATA separator");

    Network<S> net(cfg);
    net.training_stage = stage;
    std::size_t idx = 0;
    bool ok = true;
    net.params().for_each([&](const std::string& name, std::vector<S>& t) {
        if (!ok) return;
        if (idx >= directory.size() || directory[idx].first != name ||
            directory[idx].second != t.size()) {
            ok = false;
            return;
        }
        ++idx;
        std::vector<float> f32(t.size());
        in.read(reinterpret_cast<char*>(f32.data()),
                static_cast<std::streamsize>(f32.size() * sizeof(float)));
        if (static_cast<std::size_t>(in.gcount()) != f32.size() * sizeof(float)) {
            ok = false;
            return;
        }
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<S>(f32[i]);
    });
    if (!ok || idx != directory.size())
        throw BadWeightsFile("tensor directory does not match the declared config: " +
                             path.string());
    if (!net.params().all_finite())
        throw BadWeightsFile("weights contain non-finite values: " + path.string());
    return net;
}

// --- explicit instantiations ---

template struct NetParams<float>;
template struct NetParams<double>;
template struct Prediction<float>;
template struct Prediction<double>;
template class Network<float>;
template class Network<double>;

template double loss_selection<float>(std::span<const float>, int, PixelPoint, int);
template double loss_selection<double>(std::span<const double>, int, PixelPoint, int);
template std::vector<double> loss_selection_grad<float>(std::span<const float>, int,
                                                        PixelPoint, int);
template std::vector<double> loss_selection_grad<double>(std::span<const double>, int,
                                                         PixelPoint, int);
template std::vector<float> softmax_grid<float>(std::span<const float>);
template std::vector<double> softmax_grid<double>(std::span<const double>);
template TargetEstimate estimate_from_prediction<float>(const Prediction<float>&,
                                                        const NetConfig&);
template TargetEstimate estimate_from_prediction<double>(const Prediction<double>&,
                                                         const NetConfig&);
template TargetEstimate predict_target<float>(const Network<float>&,
                                              std::span<const float>);
template TargetEstimate predict_target<double>(const Network<double>&,
                                               std::span<const double>);
template void save_weights<float>(const std::filesystem::path&, const Network<float>&);
template void save_weights<double>(const std::filesystem::path&, const Network<double>&);
template Network<float> load_weights<float>(const std::filesystem::path&);
template Network<double> load_weights<double>(const std::filesystem::path&);

} // namespace targetloc::net

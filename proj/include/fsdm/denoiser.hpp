#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fsdm/autodiff.hpp"
#include "fsdm/rng.hpp"
#include "fsdm/schedule.hpp"
#include "fsdm/tensor.hpp"

namespace fsdm {

enum class DataMode { image, point };

/// Architecture hyperparameters for the fusion-augmented noise predictor.
/// Image mode is a small UNet: stem, two stride-2 stages, bottleneck, a
/// 3-convolution fusion merge, and two transposed-conv up stages with skip
/// connections; the time embedding enters as per-channel scale-and-shift.
/// Point mode is a fully connected analogue with a 3-layer core.
struct DenoiserConfig {
    DataMode mode = DataMode::image;
    // image mode
    int c_in = 1, h = 16, w = 16;
    int w1 = 8, w2 = 16;
    // point mode
    int dim = 2, hidden = 32;
    int temb_dim = 16;

    void validate() const {
        if (temb_dim < 2 || temb_dim % 2 != 0)
            throw std::invalid_argument("DenoiserConfig: temb_dim must be even and >= 2");
        if (mode == DataMode::image) {
            if (c_in < 1 || w1 < 1 || w2 < 1) throw std::invalid_argument("DenoiserConfig: widths must be positive");
            if (h % 4 != 0 || w % 4 != 0 || h < 4 || w < 4)
                throw std::invalid_argument("DenoiserConfig: image extents must be divisible by 4");
        } else {
            if (dim < 1 || hidden < 1) throw std::invalid_argument("DenoiserConfig: widths must be positive");
        }
    }

    Shape input_shape() const { return mode == DataMode::image ? Shape{c_in, h, w} : Shape{dim}; }
    Shape bottleneck_shape() const { return mode == DataMode::image ? Shape{w2, h / 4, w / 4} : Shape{hidden}; }
};

/// One named slice of the flat parameter vector. fan_in drives the seeded
/// uniform init; 0 marks a bias (initialized to zero).
struct ParamView {
    std::string name;
    Shape shape;
    std::int64_t offset = 0;
    int fan_in = 0;
};

inline std::vector<ParamView> param_layout(const DenoiserConfig& cfg) {
    cfg.validate();
    std::vector<ParamView> views;
    std::int64_t off = 0;
    auto push = [&](const std::string& name, Shape shape, int fan_in) {
        std::int64_t n = shape_numel(shape);
        views.push_back(ParamView{name, std::move(shape), off, fan_in});
        off += n;
    };
    auto conv = [&](const std::string& name, int co, int ci, int k) {
        push(name + ".w", {co, ci, k, k}, ci * k * k);
        push(name + ".b", {co}, 0);
    };
    auto tconv = [&](const std::string& name, int ci, int co, int k) {
        push(name + ".w", {ci, co, k, k}, ci * k * k);
        push(name + ".b", {co}, 0);
    };
    auto fc = [&](const std::string& name, int dout, int din) {
        push(name + ".w", {dout, din}, din);
        push(name + ".b", {dout}, 0);
    };
    auto film_heads = [&](const std::string& name, int c) {
        fc(name + ".scale", c, cfg.temb_dim);
        fc(name + ".shift", c, cfg.temb_dim);
    };

    if (cfg.mode == DataMode::image) {
        conv("stem", cfg.w1, cfg.c_in, 3);
        conv("down1", cfg.w1, cfg.w1, 3);
        conv("down2", cfg.w2, cfg.w1, 3);
        conv("bott", cfg.w2, cfg.w2, 3);
        conv("merge1", cfg.w2, 2 * cfg.w2, 3);
        film_heads("merge1", cfg.w2);
        conv("merge2", cfg.w2, cfg.w2, 3);
        film_heads("merge2", cfg.w2);
        conv("merge3", cfg.w2, cfg.w2, 3);
        tconv("up1.t", cfg.w2, cfg.w1, 4);
        film_heads("up1", cfg.w1);
        conv("up1.c", cfg.w1, 2 * cfg.w1, 3);
        tconv("up2.t", cfg.w1, cfg.w1, 4);
        film_heads("up2", cfg.w1);
        conv("up2.c", cfg.w1, 2 * cfg.w1, 3);
        conv("head", cfg.c_in, cfg.w1, 3);
    } else {
        fc("enc1", cfg.hidden, cfg.dim);
        fc("enc2", cfg.hidden, cfg.hidden);
        fc("merge1", cfg.hidden, 2 * cfg.hidden + cfg.temb_dim);
        fc("merge2", cfg.hidden, cfg.hidden);
        fc("head", cfg.dim, cfg.hidden);
    }
    return views;
}

inline std::int64_t param_count(const std::vector<ParamView>& layout) {
    const ParamView& last = layout.back();
    return last.offset + shape_numel(last.shape);
}

/// The trainable state: a flat 64-bit vector plus the layout describing its
/// named views. Views tile the vector exactly by construction.
struct DenoiserParams {
    DenoiserConfig cfg;
    std::vector<ParamView> layout;
    std::vector<double> flat;

    const ParamView& find(const std::string& name) const {
        for (const ParamView& v : layout)
            if (v.name == name) return v;
        throw std::invalid_argument("DenoiserParams: no view named " + name);
    }

    Tensor view(const std::string& name) const {
        const ParamView& v = find(name);
        std::vector<double> d(flat.begin() + v.offset, flat.begin() + v.offset + shape_numel(v.shape));
        return Tensor(v.shape, std::move(d));
    }

    void set_view(const std::string& name, const Tensor& t) {
        const ParamView& v = find(name);
        if (t.shape != v.shape) throw std::invalid_argument("DenoiserParams: shape mismatch for " + name);
        std::copy(t.data.begin(), t.data.end(), flat.begin() + v.offset);
    }
};

/// Fan-in-scaled uniform init, seeded: weights ~ U(-sqrt(1/fan_in), +sqrt(1/fan_in)),
/// biases zero.
inline DenoiserParams init_params(const DenoiserConfig& cfg, std::uint64_t seed) {
    DenoiserParams p;
    p.cfg = cfg;
    p.layout = param_layout(cfg);
    p.flat.assign(param_count(p.layout), 0.0);
    RngStream rng(seed, 0xDE);
    for (const ParamView& v : p.layout) {
        if (v.fan_in == 0) continue;  // bias
        const double bound = std::sqrt(1.0 / v.fan_in);
        const std::int64_t n = shape_numel(v.shape);
        for (std::int64_t i = 0; i < n; ++i) p.flat[v.offset + i] = (2.0 * rng.next_unit() - 1.0) * bound;
    }
    return p;
}

/// Parameter views registered as tape leaves; index-aligned with the layout.
struct BoundParams {
    const DenoiserParams* params = nullptr;
    std::vector<int> ids;

    int id(const std::string& name) const {
        const std::vector<ParamView>& layout = params->layout;
        for (std::size_t i = 0; i < layout.size(); ++i)
            if (layout[i].name == name) return ids[i];
        throw std::invalid_argument("BoundParams: no view named " + name);
    }
};

inline BoundParams bind_params(Tape& tape, const DenoiserParams& params, bool requires_grad) {
    BoundParams bound;
    bound.params = &params;
    bound.ids.reserve(params.layout.size());
    for (const ParamView& v : params.layout) {
        std::vector<double> d(params.flat.begin() + v.offset, params.flat.begin() + v.offset + shape_numel(v.shape));
        bound.ids.push_back(tape.leaf(Tensor(v.shape, std::move(d)), requires_grad));
    }
    return bound;
}

/// Flat gradient vector for the bound parameters after Tape::backward.
inline std::vector<double> collect_param_grads(Tape& tape, const BoundParams& bound) {
    const std::vector<ParamView>& layout = bound.params->layout;
    std::vector<double> g(param_count(layout), 0.0);
    for (std::size_t i = 0; i < layout.size(); ++i) {
        const Tensor& gi = tape.grad(bound.ids[i]);
        std::copy(gi.data.begin(), gi.data.end(), g.begin() + layout[i].offset);
    }
    return g;
}

/// Standard transformer-style sinusoidal embedding of the step index.
inline Tensor sinusoidal_time_embedding(int t, int dim) {
    if (dim < 2 || dim % 2 != 0) throw std::invalid_argument("sinusoidal_time_embedding: dim must be even and >= 2");
    const int half = dim / 2;
    Tensor e = Tensor::zeros({dim});
    for (int i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * (half == 1 ? 0.0 : double(i) / (half - 1)));
        e[i] = std::sin(t * freq);
        e[half + i] = std::cos(t * freq);
    }
    return e;
}

/// Phasic content fusion: E_hat = m(t) * content + (1 - m(t)) * z.
inline Tensor fuse_content(const Tensor& content_feat, const Tensor& z, double t, const PhasicConfig& cfg) {
    require_same_shape(content_feat, z, "fuse_content");
    const double m = phasic_gate(t, cfg);
    return blend(content_feat, z, m, 1.0 - m);
}

/// Per-stage features of the time-free encoder; the last stage is the
/// bottleneck used for fusion and as the flat embedding.
struct EncodeNodes {
    std::vector<int> stages;
    int bottleneck = -1;
};

inline EncodeNodes encode_graph(Tape& tape, const DenoiserConfig& cfg, const BoundParams& bp, int x_id) {
    EncodeNodes out;
    if (cfg.mode == DataMode::image) {
        int s0 = ops::silu(tape, ops::conv2d(tape, x_id, bp.id("stem.w"), bp.id("stem.b"), 1, 1));
        int f1 = ops::silu(tape, ops::instance_norm(tape, ops::conv2d(tape, s0, bp.id("down1.w"), bp.id("down1.b"), 2, 1)));
        int f2 = ops::silu(tape, ops::instance_norm(tape, ops::conv2d(tape, f1, bp.id("down2.w"), bp.id("down2.b"), 2, 1)));
        int b = ops::silu(tape, ops::conv2d(tape, f2, bp.id("bott.w"), bp.id("bott.b"), 1, 1));
        out.stages = {s0, f1, f2, b};
        out.bottleneck = b;
    } else {
        int h1 = ops::silu(tape, ops::linear(tape, x_id, bp.id("enc1.w"), bp.id("enc1.b")));
        int b = ops::linear(tape, h1, bp.id("enc2.w"), bp.id("enc2.b"));
        out.stages = {h1, b};
        out.bottleneck = b;
    }
    return out;
}

/// Plain-tensor feature stack (no gradients).
struct FeatureStack {
    std::vector<Tensor> stages;
    const Tensor& bottleneck() const { return stages.back(); }
};

inline FeatureStack encode(const Tensor& x, const DenoiserParams& params) {
    if (x.shape != params.cfg.input_shape())
        throw std::invalid_argument("encode: input shape does not match the configured mode");
    Tape tape;
    BoundParams bp = bind_params(tape, params, false);
    EncodeNodes nodes = encode_graph(tape, params.cfg, bp, tape.leaf(x, false));
    FeatureStack fs;
    for (int id : nodes.stages) fs.stages.push_back(tape.val(id));
    return fs;
}

struct PredictNodes {
    int eps = -1;          // predicted noise, same shape as the input
    EncodeNodes xt_enc;    // encoder stages of x_t (skip connections)
};

/// Build the full noise-prediction graph. content_bottleneck < 0 runs the
/// no-content path: the fusion gate on content is forced to 0, so the merge
/// sees the pure z draw. Supplying z explicitly keeps training and sampling
/// on one code path and makes the gate-equivalence property literal.
inline PredictNodes predict_noise_graph(Tape& tape, const DenoiserConfig& cfg, const BoundParams& bp, int xt_id,
                                        int t, int content_bottleneck, const Tensor& z,
                                        const PhasicConfig& phasic) {
    if (z.shape != cfg.bottleneck_shape()) throw std::invalid_argument("predict_noise_graph: z shape mismatch");
    PredictNodes out;
    out.xt_enc = encode_graph(tape, cfg, bp, xt_id);

    const int z_id = tape.leaf(z, false);
    int fused;
    if (content_bottleneck >= 0) {
        const double m = phasic_gate(double(t), phasic);
        fused = ops::blend(tape, content_bottleneck, z_id, m, 1.0 - m);
    } else {
        fused = z_id;
    }

    const int temb = tape.leaf(sinusoidal_time_embedding(t, cfg.temb_dim), false);
    auto film_of = [&](int x, const std::string& name) {
        int sc = ops::linear(tape, temb, bp.id(name + ".scale.w"), bp.id(name + ".scale.b"));
        int sh = ops::linear(tape, temb, bp.id(name + ".shift.w"), bp.id(name + ".shift.b"));
        return ops::film(tape, x, sc, sh);
    };

    if (cfg.mode == DataMode::image) {
        int cat = ops::concat(tape, fused, out.xt_enc.bottleneck);
        int m1 = ops::silu(tape, film_of(ops::conv2d(tape, cat, bp.id("merge1.w"), bp.id("merge1.b"), 1, 1), "merge1"));
        int m2 = ops::silu(tape, film_of(ops::conv2d(tape, m1, bp.id("merge2.w"), bp.id("merge2.b"), 1, 1), "merge2"));
        int m3 = ops::conv2d(tape, m2, bp.id("merge3.w"), bp.id("merge3.b"), 1, 1);

        int u1 = ops::silu(tape, film_of(ops::conv2d_transpose(tape, m3, bp.id("up1.t.w"), bp.id("up1.t.b"), 2, 1), "up1"));
        int r1 = ops::silu(tape, ops::conv2d(tape, ops::concat(tape, u1, out.xt_enc.stages[1]), bp.id("up1.c.w"),
                                             bp.id("up1.c.b"), 1, 1));
        int u2 = ops::silu(tape, film_of(ops::conv2d_transpose(tape, r1, bp.id("up2.t.w"), bp.id("up2.t.b"), 2, 1), "up2"));
        int r2 = ops::silu(tape, ops::conv2d(tape, ops::concat(tape, u2, out.xt_enc.stages[0]), bp.id("up2.c.w"),
                                             bp.id("up2.c.b"), 1, 1));
        out.eps = ops::conv2d(tape, r2, bp.id("head.w"), bp.id("head.b"), 1, 1);
    } else {
        int cat = ops::concat(tape, ops::concat(tape, fused, out.xt_enc.bottleneck), temb);
        int m1 = ops::silu(tape, ops::linear(tape, cat, bp.id("merge1.w"), bp.id("merge1.b")));
        int m2 = ops::silu(tape, ops::linear(tape, m1, bp.id("merge2.w"), bp.id("merge2.b")));
        out.eps = ops::linear(tape, m2, bp.id("head.w"), bp.id("head.b"));
    }
    return out;
}

/// Evaluation entry point. Draws the fusion z from rng (one draw regardless
/// of content presence so the two paths stay comparable), runs the graph
/// without gradients, and returns the predicted noise.
inline Tensor predict_noise(const Tensor& xt, int t, const Tensor* content, const DenoiserParams& params,
                            RngStream& rng, const PhasicConfig& phasic) {
    if (xt.shape != params.cfg.input_shape())
        throw std::invalid_argument("predict_noise: input shape does not match the configured mode");
    Tensor z = gaussian_draw(rng, params.cfg.bottleneck_shape());
    Tape tape;
    BoundParams bp = bind_params(tape, params, false);
    int xt_id = tape.leaf(xt, false);
    int content_b = -1;
    if (content != nullptr) {
        if (content->shape != params.cfg.input_shape())
            throw std::invalid_argument("predict_noise: content shape does not match the configured mode");
        content_b = encode_graph(tape, params.cfg, bp, tape.leaf(*content, false)).bottleneck;
    }
    PredictNodes nodes = predict_noise_graph(tape, params.cfg, bp, xt_id, t, content_b, z, phasic);
    return tape.val(nodes.eps);
}

/// Bias-corrected Adam.
struct AdamState {
    std::vector<double> m, v;
    std::uint64_t step = 0;
    double lr = 1e-4, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

    static AdamState make(std::size_t n, double lr_) {
        AdamState s;
        s.m.assign(n, 0.0);
        s.v.assign(n, 0.0);
        s.lr = lr_;
        return s;
    }
};

inline void adam_step(std::vector<double>& params, const std::vector<double>& grads, AdamState& st) {
    if (params.size() != grads.size() || params.size() != st.m.size() || params.size() != st.v.size())
        throw std::invalid_argument("adam_step: length mismatch");
    for (std::size_t i = 0; i < grads.size(); ++i)
        if (!std::isfinite(grads[i]))
            throw std::runtime_error("adam_step: non-finite gradient at coordinate " + std::to_string(i));
    st.step += 1;
    const double bc1 = 1.0 - std::pow(st.beta1, double(st.step));
    const double bc2 = 1.0 - std::pow(st.beta2, double(st.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        st.m[i] = st.beta1 * st.m[i] + (1.0 - st.beta1) * grads[i];
        st.v[i] = st.beta2 * st.v[i] + (1.0 - st.beta2) * grads[i] * grads[i];
        const double mhat = st.m[i] / bc1;
        const double vhat = st.v[i] / bc2;
        params[i] -= st.lr * mhat / (std::sqrt(vhat) + st.eps);
    }
}

}  // namespace fsdm

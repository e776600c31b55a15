#pragma once

#include <memory>
#include <stdexcept>
#include <vector>

#include "fsdm/autodiff.hpp"
#include "fsdm/denoiser.hpp"
#include "fsdm/rng.hpp"
#include "fsdm/tensor.hpp"

namespace fsdm {

/// A fixed (never trained while in use) feature map with two faces: a flat
/// embedding vector for direction/consistency losses and metrics, and a stack
/// of spatial feature maps for Gram-based style losses. Implementations build
/// tape graphs so gradients can flow through the encoder into its input; the
/// encoder's own parameters enter as constant leaves.
struct FeatureEncoder {
    virtual ~FeatureEncoder() = default;
    virtual int embed_dim() const = 0;
    virtual int n_style_layers() const = 0;
    virtual int embed_node(Tape& tape, int x_id) const = 0;
    virtual std::vector<int> style_nodes(Tape& tape, int x_id) const = 0;

    Tensor embed(const Tensor& x) const {
        Tape tape;
        return tape.val(embed_node(tape, tape.leaf(x, false)));
    }
    std::vector<Tensor> style_maps(const Tensor& x) const {
        Tape tape;
        std::vector<Tensor> out;
        for (int id : style_nodes(tape, tape.leaf(x, false))) out.push_back(tape.val(id));
        return out;
    }
};

/// Embedding = the input itself, flattened. The style stack is the same data
/// as a single 1-channel map.
struct IdentityEncoder : FeatureEncoder {
    int dim;
    explicit IdentityEncoder(int d) : dim(d) {
        if (d < 1) throw std::invalid_argument("IdentityEncoder: dimension must be positive");
    }
    int embed_dim() const override { return dim; }
    int n_style_layers() const override { return 1; }
    int embed_node(Tape& tape, int x_id) const override {
        if (tape.val(x_id).numel() != dim) throw std::invalid_argument("IdentityEncoder: input size mismatch");
        return ops::flatten(tape, x_id);
    }
    std::vector<int> style_nodes(Tape& tape, int x_id) const override {
        return {ops::reshape(tape, x_id, {1, 1, dim})};
    }
};

/// Wraps a frozen copy of denoiser parameters (typically the source-pretrained
/// model): embedding = flattened bottleneck feature, style stack = all encoder
/// stages.
struct FrozenSourceEncoder : FeatureEncoder {
    DenoiserParams params;

    explicit FrozenSourceEncoder(DenoiserParams p) : params(std::move(p)) {}

    int embed_dim() const override { return static_cast<int>(shape_numel(params.cfg.bottleneck_shape())); }
    int n_style_layers() const override { return params.cfg.mode == DataMode::image ? 4 : 2; }
    int embed_node(Tape& tape, int x_id) const override {
        BoundParams bp = bind_params(tape, params, false);
        return ops::flatten(tape, encode_graph(tape, params.cfg, bp, x_id).bottleneck);
    }
    std::vector<int> style_nodes(Tape& tape, int x_id) const override {
        BoundParams bp = bind_params(tape, params, false);
        EncodeNodes enc = encode_graph(tape, params.cfg, bp, x_id);
        std::vector<int> out = enc.stages;
        if (params.cfg.mode == DataMode::point)
            for (int& id : out) id = ops::reshape(tape, id, {1, 1, static_cast<int>(tape.val(id).numel())});
        return out;
    }
};

/// A seeded, fixed 3-layer convolution stack over C x H x W images; the
/// deterministic stand-in feature source for style Grams.
struct RandomConvEncoder : FeatureEncoder {
    int c_in;
    Tensor w1, b1, w2, b2, w3, b3;

    RandomConvEncoder(int c_in_, std::uint64_t seed, int c1 = 8, int c2 = 16, int c3 = 16) : c_in(c_in_) {
        RngStream rng(seed, 0xEC);
        auto draw = [&](Shape s, int fan_in) {
            Tensor t = Tensor::zeros(std::move(s));
            const double bound = std::sqrt(1.0 / fan_in);
            for (double& v : t.data) v = (2.0 * rng.next_unit() - 1.0) * bound;
            return t;
        };
        w1 = draw({c1, c_in, 3, 3}, c_in * 9);
        b1 = Tensor::zeros({c1});
        w2 = draw({c2, c1, 3, 3}, c1 * 9);
        b2 = Tensor::zeros({c2});
        w3 = draw({c3, c2, 3, 3}, c2 * 9);
        b3 = Tensor::zeros({c3});
    }

    int embed_dim() const override { return -1; }  // sized by the input; use embed(x).numel()
    int n_style_layers() const override { return 3; }

    std::vector<int> style_nodes(Tape& tape, int x_id) const override {
        auto layer = [&](int x, const Tensor& w, const Tensor& b, int stride) {
            return ops::silu(tape, ops::conv2d(tape, x, tape.leaf(w, false), tape.leaf(b, false), stride, 1));
        };
        int m1 = layer(x_id, w1, b1, 1);
        int m2 = layer(m1, w2, b2, 2);
        int m3 = layer(m2, w3, b3, 2);
        return {m1, m2, m3};
    }
    int embed_node(Tape& tape, int x_id) const override {
        return ops::flatten(tape, style_nodes(tape, x_id).back());
    }
};

}  // namespace fsdm

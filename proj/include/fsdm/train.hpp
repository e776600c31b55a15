#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fsdm/autodiff.hpp"
#include "fsdm/config.hpp"
#include "fsdm/dataset.hpp"
#include "fsdm/denoiser.hpp"
#include "fsdm/diffusion.hpp"
#include "fsdm/encoders.hpp"
#include "fsdm/io.hpp"
#include "fsdm/losses.hpp"
#include "fsdm/metrics.hpp"
#include "fsdm/rng.hpp"
#include "fsdm/sampler.hpp"

namespace fsdm {

namespace detail {

/// Mean diffusion loss over one drawn batch, built as a tape subgraph.
/// Per item the draws are: dataset index, forward noise, fusion z — in that
/// order, each from its dedicated stream, so sibling paths can be skipped
/// without disturbing one another.
inline int dif_batch_node(Tape& tape, const RunConfig& cfg, const NoiseSchedule& sched, const BoundParams& bp,
                          const std::vector<Tensor>& items, int t, bool with_content, RngStream& idx_rng,
                          RngStream& noise_rng, RngStream& z_rng) {
    std::vector<int> nodes;
    std::vector<double> coefs(cfg.batch, 1.0 / cfg.batch);
    for (int b = 0; b < cfg.batch; ++b) {
        const Tensor& x0 = items[idx_rng.next_int(0, static_cast<std::int64_t>(items.size()) - 1)];
        Tensor eps = gaussian_draw(noise_rng, x0.shape);
        Tensor xt = forward_sample(sched, x0, t, eps);
        Tensor z = gaussian_draw(z_rng, cfg.denoiser.bottleneck_shape());
        const int xt_id = tape.leaf(std::move(xt), false);
        int content_b = -1;
        if (with_content)
            content_b = encode_graph(tape, cfg.denoiser, bp, tape.leaf(x0, false)).bottleneck;
        PredictNodes pn = predict_noise_graph(tape, cfg.denoiser, bp, xt_id, t, content_b, z, cfg.phasic);
        nodes.push_back(diffusion_loss_node(tape, pn.eps, std::move(eps)));
    }
    return ops::combine(tape, nodes, coefs);
}

}  // namespace detail

struct PretrainResult {
    DenoiserParams params;
    AdamState adam;
    std::vector<double> loss_per_iter;  // L_dif per iteration, both stages
    std::vector<MetricsRow> rows;       // loss rows at the metrics cadence
};

/// Source-domain pretraining. Stage 1 trains the base denoiser with the plain
/// noise-matching objective and the content pathway off; stage 2 (the warm-up)
/// keeps the same objective but routes each sample through the content fusion
/// path, conditioning on the clean sample itself.
inline PretrainResult pretrain(const RunConfig& cfg, const DomainDataset& source) {
    cfg.validate();
    if (source.items.empty()) throw std::invalid_argument("pretrain: source dataset is empty");
    if (source.items[0].shape != cfg.denoiser.input_shape())
        throw std::invalid_argument("pretrain: dataset items do not match the denoiser input shape");

    const NoiseSchedule sched = cfg.make_schedule();
    DenoiserParams params = init_params(cfg.denoiser, cfg.seed);
    AdamState adam = AdamState::make(params.flat.size(), cfg.lr);

    RngStream root(cfg.seed, 0x7121);
    RngStream t_rng = root.child(1);
    RngStream idx_rng = root.child(2);
    RngStream noise_rng = root.child(3);
    RngStream z_rng = root.child(4);

    PretrainResult out;
    const int total = cfg.pretrain_iters + cfg.warmup_iters;
    for (int it = 0; it < total; ++it) {
        const bool warm = it >= cfg.pretrain_iters;
        const int t = static_cast<int>(t_rng.next_int(1, sched.T));
        Tape tape;
        BoundParams bp = bind_params(tape, params, true);
        const int dif = detail::dif_batch_node(tape, cfg, sched, bp, source.items, t, warm, idx_rng,
                                               noise_rng, z_rng);
        const double loss = tape.val(dif)[0];
        if (!std::isfinite(loss))
            throw std::runtime_error("pretrain: non-finite loss at iteration " + std::to_string(it));
        out.loss_per_iter.push_back(loss);
        if (it % cfg.metrics_every == 0) {
            MetricsRow row;
            row.run_id = warm ? "warmup" : "pretrain";
            row.seed = cfg.seed;
            row.iteration = it;
            row.loss_dif = loss;
            out.rows.push_back(row);
        }
        tape.backward(dif);
        adam_step(params.flat, collect_param_grads(tape, bp), adam);
    }
    out.params = std::move(params);
    out.adam = std::move(adam);
    return out;
}

struct AdaptResult {
    DenoiserParams params;
    AdamState adam;
    Tensor direction;  // frozen cross-domain direction w
    std::vector<double> dif_per_iter, ddc_per_iter, style_per_iter, total_per_iter;
    std::vector<MetricsRow> rows;
};

/// Few-shot adaptation with the two-path objective. Every iteration shares one
/// uniformly drawn step t:
///   target path — noise a target batch, plain prediction (content off), L_dif;
///   source path — noise a source batch, fused prediction conditioned on the
///   clean source, estimate the translated sample from the predicted noise,
///   and score it with the directional loss (against the frozen pretrained
///   encoder) plus the Gram style loss (against the few-shot targets).
/// The two branches combine through the phasic gates into one Adam step. The
/// direction w is computed once from the pretrained encoder and never updated.
/// With both lambdas zero the source path is skipped entirely; its rng streams
/// are independent, so such a run is exactly a phasic-weighted fine-tune on
/// the target set.
inline AdaptResult adapt(const RunConfig& cfg, const DenoiserParams& pretrained, const DomainDataset& source,
                         const DomainDataset& target) {
    cfg.validate();
    if (source.items.empty() || target.items.empty())
        throw std::invalid_argument("adapt: datasets must be non-empty");
    if (pretrained.cfg.mode != cfg.mode)
        throw std::invalid_argument("adapt: pretrained checkpoint mode does not match the run mode");
    check_few_shot_count(target.items.size(), cfg.allow_large_target);

    const NoiseSchedule sched = cfg.make_schedule();
    DenoiserParams params = pretrained;
    AdamState adam = AdamState::make(params.flat.size(), cfg.lr);
    const bool source_path = cfg.weights.lambda_ddc > 0.0 || cfg.weights.lambda_style > 0.0;

    // Frozen feature sources: the pretrained bottleneck for direction and
    // geometry, a seeded random convolution stack for image style Grams (the
    // pretrained stages double as the style stack for point data).
    FrozenSourceEncoder dir_enc(pretrained);
    std::unique_ptr<FeatureEncoder> style_enc_owned;
    const FeatureEncoder* style_enc = &dir_enc;
    if (cfg.mode == DataMode::image) {
        style_enc_owned = std::make_unique<RandomConvEncoder>(cfg.denoiser.c_in, cfg.seed);
        style_enc = style_enc_owned.get();
    }

    AdaptResult out;
    out.direction = direction_vector(source.items, target.items, dir_enc);
    const std::vector<std::vector<Tensor>> tgt_grams =
        source_path ? target_style_grams(target.items, *style_enc) : std::vector<std::vector<Tensor>>{};

    RngStream root(cfg.seed, 0xADA7);
    RngStream t_rng = root.child(1);
    RngStream tgt_idx = root.child(2), tgt_noise = root.child(3), tgt_z = root.child(4);
    RngStream src_idx = root.child(5), src_noise = root.child(6), src_z = root.child(7);

    for (int it = 0; it < cfg.adapt_iters; ++it) {
        const int t = static_cast<int>(t_rng.next_int(1, sched.T));
        Tape tape;
        BoundParams bp = bind_params(tape, params, true);

        const int dif = detail::dif_batch_node(tape, cfg, sched, bp, target.items, t, false, tgt_idx,
                                               tgt_noise, tgt_z);

        int ddc_comb = -1, style_comb = -1;
        std::vector<Tensor> batch_sources, batch_generated;
        if (source_path) {
            std::vector<int> ddc_nodes, style_nodes;
            const std::vector<double> coefs(cfg.batch, 1.0 / cfg.batch);
            const double ab = sched.alpha_bar(t);
            const double inv = 1.0 / std::sqrt(ab);
            for (int b = 0; b < cfg.batch; ++b) {
                const Tensor& xa = source.items[src_idx.next_int(0, static_cast<std::int64_t>(source.items.size()) - 1)];
                Tensor eps = gaussian_draw(src_noise, xa.shape);
                Tensor xt = forward_sample(sched, xa, t, eps);
                Tensor z = gaussian_draw(src_z, cfg.denoiser.bottleneck_shape());
                const int xt_id = tape.leaf(std::move(xt), false);
                const int content_b = encode_graph(tape, cfg.denoiser, bp, tape.leaf(xa, false)).bottleneck;
                PredictNodes pn = predict_noise_graph(tape, cfg.denoiser, bp, xt_id, t, content_b, z, cfg.phasic);
                const int x0ab = ops::blend(tape, xt_id, pn.eps, inv, -std::sqrt(1.0 - ab) * inv);
                ddc_nodes.push_back(
                    ddc_loss_node(tape, x0ab, add(dir_enc.embed(xa), out.direction), dir_enc));
                style_nodes.push_back(
                    style_loss_node(tape, x0ab, tgt_grams, *style_enc, cfg.weights, cfg.allow_large_target));
                batch_sources.push_back(xa);
                batch_generated.push_back(tape.val(x0ab));
            }
            ddc_comb = ops::combine(tape, ddc_nodes, coefs);
            style_comb = ops::combine(tape, style_nodes, coefs);
        }

        const int total = total_loss_node(tape, double(t), ddc_comb, style_comb, dif, cfg.phasic, cfg.weights);
        const double total_v = tape.val(total)[0];
        if (!std::isfinite(total_v))
            throw std::runtime_error("adapt: non-finite loss at iteration " + std::to_string(it));
        out.dif_per_iter.push_back(tape.val(dif)[0]);
        out.ddc_per_iter.push_back(ddc_comb >= 0 ? tape.val(ddc_comb)[0] : 0.0);
        out.style_per_iter.push_back(style_comb >= 0 ? tape.val(style_comb)[0] : 0.0);
        out.total_per_iter.push_back(total_v);

        if (it % cfg.metrics_every == 0) {
            MetricsRow row;
            if (batch_generated.size() >= 2 && target.items.size() >= 2)
                row = evaluate_metrics(batch_generated, batch_sources, target.items, dir_enc);
            row.run_id = "adapt";
            row.seed = cfg.seed;
            row.iteration = it;
            row.loss_dif = out.dif_per_iter.back();
            row.loss_ddc = out.ddc_per_iter.back();
            row.loss_style = out.style_per_iter.back();
            out.rows.push_back(row);
        }

        tape.backward(total);
        adam_step(params.flat, collect_param_grads(tape, bp), adam);
    }
    out.params = std::move(params);
    out.adam = std::move(adam);
    return out;
}

/// Per-sample chain seed, decorrelated from neighbors.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
    return detail::mix64(seed ^ (index + 1) * RngStream::kGolden);
}

/// Translate one source sample with the trained model: noise to x_M, denoise
/// with the content-conditioned predictor, and (per the configured mode) guide
/// the chain's low-pass structure. The fusion z draws and the chain draws come
/// from separate child streams of the per-sample seed.
inline Tensor translate_source(const NoiseSchedule& sched, const DenoiserParams& params,
                               const PhasicConfig& phasic, const SamplerConfig& scfg, const Tensor& x_source,
                               std::uint64_t sample_seed) {
    RngStream root(sample_seed, 0x5A3E);
    RngStream z_rng = root.child(1);
    RngStream chain_rng = root.child(2);
    const NoisePredictor pred = [&](const Tensor& xt, int t) {
        return predict_noise(xt, t, &x_source, params, z_rng, phasic);
    };
    return icsg_sample(sched, pred, x_source, scfg, chain_rng);
}

/// Mean diffusion loss of fixed parameters over a dataset, with a
/// deterministic draw per (seed, item). The evaluation analogue of one
/// training pass; used to compare checkpoints.
inline double evaluation_loss(const RunConfig& cfg, const DenoiserParams& params,
                              const std::vector<Tensor>& items, std::uint64_t seed) {
    if (items.empty()) throw std::invalid_argument("evaluation_loss: empty dataset");
    const NoiseSchedule sched = cfg.make_schedule();
    RngStream root(seed, 0xEAA1);
    RngStream t_rng = root.child(1), noise_rng = root.child(2), z_rng = root.child(3);
    double acc = 0.0;
    for (const Tensor& x0 : items) {
        const int t = static_cast<int>(t_rng.next_int(1, sched.T));
        Tensor eps = gaussian_draw(noise_rng, x0.shape);
        Tensor xt = forward_sample(sched, x0, t, eps);
        Tensor eps_pred = predict_noise(xt, t, nullptr, params, z_rng, cfg.phasic);
        acc += diffusion_loss(eps_pred, eps);
    }
    return acc / double(items.size());
}

}  // namespace fsdm

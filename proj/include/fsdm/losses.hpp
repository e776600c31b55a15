#pragma once

#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <vector>

#include "fsdm/autodiff.hpp"
#include "fsdm/encoders.hpp"
#include "fsdm/pointset.hpp"
#include "fsdm/schedule.hpp"
#include "fsdm/tensor.hpp"

namespace fsdm {

struct LossWeights {
    double lambda_ddc = 1.0;
    double lambda_style = 1.0;
    std::vector<double> style_layer_weights;  // empty -> uniform 1/L

    void validate() const {
        if (lambda_ddc < 0.0 || lambda_style < 0.0)
            throw std::invalid_argument("LossWeights: lambdas must be nonnegative");
        for (double w : style_layer_weights)
            if (w < 0.0) throw std::invalid_argument("LossWeights: layer weights must be nonnegative");
    }

    std::vector<double> layer_weights(int L) const {
        if (style_layer_weights.empty()) return std::vector<double>(L, 1.0 / L);
        if (static_cast<int>(style_layer_weights.size()) != L)
            throw std::invalid_argument("LossWeights: layer weight count mismatch");
        return style_layer_weights;
    }
};

/// Cross-domain direction vector: mean embedding of B minus mean embedding
/// of A. Computed once per adaptation run and then frozen.
inline Tensor direction_vector(const std::vector<Tensor>& A, const std::vector<Tensor>& B,
                               const FeatureEncoder& E) {
    if (A.empty() || B.empty()) throw std::invalid_argument("direction_vector: empty sample set");
    Tensor mean_a = E.embed(A[0]);
    for (std::size_t i = 1; i < A.size(); ++i) mean_a = add(mean_a, E.embed(A[i]));
    mean_a = scale(mean_a, 1.0 / double(A.size()));
    Tensor mean_b = E.embed(B[0]);
    for (std::size_t i = 1; i < B.size(); ++i) mean_b = add(mean_b, E.embed(B[i]));
    mean_b = scale(mean_b, 1.0 / double(B.size()));
    return sub(mean_b, mean_a);
}

/// Directional consistency: || E(xA) + w - E(xAB) ||^2, summed over embedding
/// dimensions.
inline double ddc_loss(const Tensor& xA, const Tensor& xAB, const Tensor& w, const FeatureEncoder& E) {
    Tensor target = add(E.embed(xA), w);
    return sum_sq_diff(target, E.embed(xAB));
}

/// Batch form: mean of the per-sample losses.
inline double ddc_loss(const std::vector<Tensor>& xA, const std::vector<Tensor>& xAB, const Tensor& w,
                       const FeatureEncoder& E) {
    if (xA.size() != xAB.size() || xA.empty()) throw std::invalid_argument("ddc_loss: batch size mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < xA.size(); ++i) acc += ddc_loss(xA[i], xAB[i], w, E);
    return acc / double(xA.size());
}

/// Gram matrix of a C x H x W feature map: G = F F^T / (H*W).
inline Tensor gram_matrix(const Tensor& fmap) {
    if (fmap.rank() != 3) throw std::invalid_argument("gram_matrix: feature map must be C x H x W");
    const int c = fmap.shape[0], hw = fmap.shape[1] * fmap.shape[2];
    Tensor g = Tensor::zeros({c, c});
    for (int i = 0; i < c; ++i)
        for (int j = i; j < c; ++j) {
            double acc = 0.0;
            const double* fi = fmap.data.data() + static_cast<std::size_t>(i) * hw;
            const double* fj = fmap.data.data() + static_cast<std::size_t>(j) * hw;
            for (int k = 0; k < hw; ++k) acc += fi[k] * fj[k];
            acc /= hw;
            g.data[static_cast<std::size_t>(i) * c + j] = acc;
            g.data[static_cast<std::size_t>(j) * c + i] = acc;
        }
    return g;
}

/// Per-layer Gram matrices of every target, precomputed once per run.
inline std::vector<std::vector<Tensor>> target_style_grams(const std::vector<Tensor>& targets,
                                                           const FeatureEncoder& E) {
    std::vector<std::vector<Tensor>> out;
    for (const Tensor& t : targets) {
        std::vector<Tensor> grams;
        for (const Tensor& m : E.style_maps(t)) grams.push_back(gram_matrix(m));
        out.push_back(std::move(grams));
    }
    return out;
}

inline void check_few_shot_count(std::size_t m, bool allow_large) {
    if (m == 0) throw std::invalid_argument("style_loss: target set must not be empty");
    if (m > 10) {
        if (!allow_large) throw std::invalid_argument("style_loss: few-shot target sets are limited to 10 samples");
        std::fprintf(stderr, "warning: style loss running with %zu targets, beyond the few-shot limit of 10\n", m);
    }
}

/// Gram-matrix style loss: (1/m) sum_i sum_l w_l * ||G_l(x) - G_l(target_i)||^2,
/// with the squared norm averaged over Gram entries.
inline double style_loss(const Tensor& xAB, const std::vector<Tensor>& targets, const FeatureEncoder& E,
                         const LossWeights& weights, bool allow_large = false) {
    check_few_shot_count(targets.size(), allow_large);
    std::vector<Tensor> maps = E.style_maps(xAB);
    std::vector<double> wl = weights.layer_weights(static_cast<int>(maps.size()));
    std::vector<Tensor> grams;
    for (const Tensor& m : maps) grams.push_back(gram_matrix(m));
    double acc = 0.0;
    for (const Tensor& target : targets) {
        std::vector<Tensor> tmaps = E.style_maps(target);
        for (std::size_t l = 0; l < grams.size(); ++l)
            acc += wl[l] * mean_sq_diff(grams[l], gram_matrix(tmaps[l]));
    }
    return acc / double(targets.size());
}

/// Plain denoising objective: mean squared error between predicted and true noise.
inline double diffusion_loss(const Tensor& eps_pred, const Tensor& eps) { return mean_sq_diff(eps_pred, eps); }

/// Phasic total: m(t) * (1 - w(t)) * (lambda_ddc * L_ddc + lambda_style * L_style) + w(t) * L_dif.
inline double total_loss(double t, double ddc, double style, double dif, const PhasicConfig& cfg,
                         const LossWeights& weights) {
    const double m = phasic_gate(t, cfg);
    const double w = phasic_weight(t, cfg);
    return m * (1.0 - w) * (weights.lambda_ddc * ddc + weights.lambda_style * style) + w * dif;
}

enum class SimKind { cosine, distance };

/// IDC-style pairwise consistency: mean over pairs i<j of
/// (sim(src_i, src_j) - sim(gen_i, gen_j))^2. Both similarity choices are
/// invariant under rotations about the origin applied to one whole set.
inline double pairwise_consistency_loss(const PointSet& src, const PointSet& gen, SimKind kind) {
    if (src.size() != gen.size()) throw std::invalid_argument("pairwise_consistency_loss: size mismatch");
    if (src.size() < 2) throw std::invalid_argument("pairwise_consistency_loss: need at least 2 points");
    if (src.dim != gen.dim) throw std::invalid_argument("pairwise_consistency_loss: dimension mismatch");
    const int n = src.size(), d = src.dim;
    auto sim = [&](const PointSet& p, int i, int j) {
        double dot = 0.0, ni = 0.0, nj = 0.0;
        for (int k = 0; k < d; ++k) {
            const double a = p.coord(i, k), b = p.coord(j, k);
            dot += a * b;
            ni += a * a;
            nj += b * b;
        }
        if (kind == SimKind::cosine) return dot / std::sqrt(ni * nj);
        return std::sqrt(ni + nj - 2.0 * dot);
    };
    double acc = 0.0;
    int pairs = 0;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            const double diff = sim(src, i, j) - sim(gen, i, j);
            acc += diff * diff;
            ++pairs;
        }
    return acc / pairs;
}

// ---- taped variants (training-time graphs) ----

/// Per-sample directional loss node: sum of squared differences between the
/// embedding of the generated sample and the constant target E(xA) + w.
inline int ddc_loss_node(Tape& tape, int xab_id, const Tensor& target_embedding, const FeatureEncoder& E) {
    return ops::sumsq_vs(tape, E.embed_node(tape, xab_id), target_embedding);
}

/// Style loss node against precomputed target Grams.
inline int style_loss_node(Tape& tape, int xab_id, const std::vector<std::vector<Tensor>>& target_grams,
                           const FeatureEncoder& E, const LossWeights& weights, bool allow_large = false) {
    check_few_shot_count(target_grams.size(), allow_large);
    std::vector<int> maps = E.style_nodes(tape, xab_id);
    std::vector<double> wl = weights.layer_weights(static_cast<int>(maps.size()));
    std::vector<int> grams;
    for (int m : maps) grams.push_back(ops::gram(tape, m));
    std::vector<int> terms;
    std::vector<double> coefs;
    for (const std::vector<Tensor>& tg : target_grams) {
        if (tg.size() != grams.size()) throw std::invalid_argument("style_loss_node: layer count mismatch");
        for (std::size_t l = 0; l < grams.size(); ++l) {
            terms.push_back(ops::mse_vs(tape, grams[l], tg[l]));
            coefs.push_back(wl[l] / double(target_grams.size()));
        }
    }
    return ops::combine(tape, terms, coefs);
}

inline int diffusion_loss_node(Tape& tape, int eps_pred_id, Tensor eps_true) {
    return ops::mse_vs(tape, eps_pred_id, std::move(eps_true));
}

/// Phasic combination of already-built scalar loss nodes. Pass -1 for a
/// missing branch (its weight must then not matter, e.g. gated to zero).
inline int total_loss_node(Tape& tape, double t, int ddc_id, int style_id, int dif_id, const PhasicConfig& cfg,
                           const LossWeights& weights) {
    const double m = phasic_gate(t, cfg);
    const double w = phasic_weight(t, cfg);
    std::vector<int> ids;
    std::vector<double> coefs;
    if (ddc_id >= 0) {
        ids.push_back(ddc_id);
        coefs.push_back(m * (1.0 - w) * weights.lambda_ddc);
    }
    if (style_id >= 0) {
        ids.push_back(style_id);
        coefs.push_back(m * (1.0 - w) * weights.lambda_style);
    }
    if (dif_id >= 0) {
        ids.push_back(dif_id);
        coefs.push_back(w);
    }
    if (ids.empty()) throw std::invalid_argument("total_loss_node: no loss branches supplied");
    return ops::combine(tape, ids, coefs);
}

}  // namespace fsdm

#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "fsdm/encoders.hpp"
#include "fsdm/geolab.hpp"
#include "fsdm/io.hpp"
#include "fsdm/pointset.hpp"
#include "fsdm/tensor.hpp"

namespace fsdm {

/// Sobel gradient-magnitude map of a single-channel image (1 x H x W or
/// H x W), with replicated borders; output is H x W.
inline Tensor sobel_magnitude(const Tensor& img) {
    int h = 0, w = 0;
    if (img.rank() == 2) {
        h = img.shape[0];
        w = img.shape[1];
    } else if (img.rank() == 3 && img.shape[0] == 1) {
        h = img.shape[1];
        w = img.shape[2];
    } else {
        throw std::invalid_argument("sobel_magnitude: expects a single-channel image, got " + shape_str(img.shape));
    }
    auto px = [&](int y, int x) {
        y = std::min(std::max(y, 0), h - 1);
        x = std::min(std::max(x, 0), w - 1);
        return img[static_cast<std::int64_t>(y) * w + x];
    };
    Tensor mag = Tensor::zeros({h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double gx = (px(y - 1, x + 1) + 2.0 * px(y, x + 1) + px(y + 1, x + 1)) -
                              (px(y - 1, x - 1) + 2.0 * px(y, x - 1) + px(y + 1, x - 1));
            const double gy = (px(y + 1, x - 1) + 2.0 * px(y + 1, x) + px(y + 1, x + 1)) -
                              (px(y - 1, x - 1) + 2.0 * px(y - 1, x) + px(y - 1, x + 1));
            mag[static_cast<std::int64_t>(y) * w + x] = std::sqrt(gx * gx + gy * gy);
        }
    return mag;
}

/// Cosine similarity of two flattened maps; two all-zero maps count as
/// identical (1), a single all-zero map as orthogonal (0).
inline double cosine_similarity(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "cosine_similarity");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::int64_t i = 0; i < a.numel(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 && nb == 0.0) return 1.0;
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / std::sqrt(na * nb);
}

/// Structural-consistency proxy: mean cosine similarity between the Sobel
/// gradient-magnitude maps of paired source and generated images.
inline double scs_proxy(const std::vector<Tensor>& generated, const std::vector<Tensor>& sources) {
    if (generated.empty() || generated.size() != sources.size())
        throw std::invalid_argument("scs_proxy: need equally sized, non-empty paired sets");
    double acc = 0.0;
    for (std::size_t i = 0; i < generated.size(); ++i)
        acc += cosine_similarity(sobel_magnitude(generated[i]), sobel_magnitude(sources[i]));
    return acc / double(generated.size());
}

inline std::vector<Tensor> embed_all(const std::vector<Tensor>& items, const FeatureEncoder& E) {
    std::vector<Tensor> out;
    out.reserve(items.size());
    for (const Tensor& x : items) out.push_back(E.embed(x));
    return out;
}

inline PointSet embeddings_to_points(const std::vector<Tensor>& embs) {
    if (embs.empty()) throw std::invalid_argument("embeddings_to_points: empty set");
    PointSet ps(static_cast<int>(embs[0].numel()));
    for (const Tensor& e : embs) ps.add(std::vector<double>(e.data.begin(), e.data.end()));
    return ps;
}

inline double mean_pairwise_distance(const std::vector<Tensor>& embs) {
    if (embs.size() < 2) throw std::invalid_argument("mean_pairwise_distance: need at least 2 samples");
    double acc = 0.0;
    int pairs = 0;
    for (std::size_t i = 0; i < embs.size(); ++i)
        for (std::size_t j = i + 1; j < embs.size(); ++j) {
            acc += std::sqrt(sum_sq_diff(embs[i], embs[j]));
            ++pairs;
        }
    return acc / pairs;
}

/// Mean over the first set of the distance to the nearest member of the
/// second; zero exactly when every sample coincides with some reference.
inline double mean_nearest_distance(const std::vector<Tensor>& embs, const std::vector<Tensor>& refs) {
    if (embs.empty() || refs.empty()) throw std::invalid_argument("mean_nearest_distance: empty set");
    double acc = 0.0;
    for (const Tensor& e : embs) {
        double best = std::numeric_limits<double>::infinity();
        for (const Tensor& r : refs) best = std::min(best, std::sqrt(sum_sq_diff(e, r)));
        acc += best;
    }
    return acc / double(embs.size());
}

/// Diversity proxy: mean pairwise embedding distance among generated samples
/// divided by the same statistic among the target samples. 1 means "as spread
/// out as the few-shot set"; near 0 flags mode collapse onto single outputs.
inline double diversity_proxy(const std::vector<Tensor>& gen_embs, const std::vector<Tensor>& tgt_embs) {
    const double tgt_spread = mean_pairwise_distance(tgt_embs);
    if (tgt_spread == 0.0) throw std::invalid_argument("diversity_proxy: target set has zero spread");
    return mean_pairwise_distance(gen_embs) / tgt_spread;
}

/// In-plane rotation of the generated set against the paired source set,
/// measured after projecting both embedding clouds onto the top-2 principal
/// plane of their union.
inline ProcrustesResult embedding_rotation(const std::vector<Tensor>& src_embs,
                                           const std::vector<Tensor>& gen_embs) {
    if (src_embs.size() != gen_embs.size() || src_embs.size() < 2)
        throw std::invalid_argument("embedding_rotation: need >= 2 paired embeddings");
    const int d = static_cast<int>(src_embs[0].numel());
    const int n = static_cast<int>(src_embs.size());
    Eigen::MatrixXd all(2 * n, d);
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < d; ++k) {
            all(i, k) = src_embs[i][k];
            all(n + i, k) = gen_embs[i][k];
        }
    const Eigen::RowVectorXd mean = all.colwise().mean();
    all.rowwise() -= mean;
    const Eigen::MatrixXd cov = all.transpose() * all / double(2 * n);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    // top-2 principal directions (eigenvalues ascend)
    Eigen::MatrixXd basis(d, 2);
    basis.col(0) = eig.eigenvectors().col(d - 1);
    basis.col(1) = d >= 2 ? eig.eigenvectors().col(d - 2) : eig.eigenvectors().col(d - 1);
    const Eigen::MatrixXd proj = all * basis;
    PointSet src2(2), gen2(2);
    for (int i = 0; i < n; ++i) {
        src2.add({proj(i, 0), proj(i, 1)});
        gen2.add({proj(n + i, 0), proj(n + i, 1)});
    }
    return orthogonal_procrustes(src2.centered(), gen2.centered());
}

/// Proxy metric panel over one batch of generated samples. Sources are paired
/// 1:1 with the generated samples (each generated item is a translation of its
/// source); targets are the few-shot style set. Geometry fields live in the
/// encoder's embedding space. scs_proxy applies to images only and is reported
/// as 0 for point data. Loss and identification fields are left for the caller.
inline MetricsRow evaluate_metrics(const std::vector<Tensor>& generated, const std::vector<Tensor>& sources,
                                   const std::vector<Tensor>& targets, const FeatureEncoder& E) {
    if (generated.size() < 2) throw std::invalid_argument("evaluate_metrics: need at least 2 generated samples");
    if (sources.size() != generated.size())
        throw std::invalid_argument("evaluate_metrics: sources must pair 1:1 with generated samples");
    if (targets.size() < 2) throw std::invalid_argument("evaluate_metrics: need at least 2 target samples");

    const std::vector<Tensor> eg = embed_all(generated, E);
    const std::vector<Tensor> es = embed_all(sources, E);
    const std::vector<Tensor> et = embed_all(targets, E);

    MetricsRow row;
    row.center_drift = center_drift(embeddings_to_points(eg), embeddings_to_points(et));
    if (generated.size() >= 3) {
        const StructureScore sc = structure_score(embeddings_to_points(eg), embeddings_to_points(es));
        row.structure_corr = sc.defined ? sc.corr : 0.0;
    }
    row.rotation_deg = embedding_rotation(es, eg).rotation_deg;
    row.scs_proxy = generated[0].rank() == 3 ? scs_proxy(generated, sources) : 0.0;
    row.diversity = diversity_proxy(eg, et);
    return row;
}

}  // namespace fsdm

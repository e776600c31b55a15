#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "fsdm/pointset.hpp"
#include "fsdm/rng.hpp"
#include "fsdm/tensor.hpp"

namespace fsdm {

enum class SourceKind { two_moons, gaussian_ring, grid };
enum class LabLoss { ddc, pairwise_cos, pairwise_dist };
enum class LabInit { source, optimum, rotated_optimum };

inline const char* source_kind_name(SourceKind k) {
    switch (k) {
        case SourceKind::two_moons: return "two-moons";
        case SourceKind::gaussian_ring: return "gaussian-ring";
        case SourceKind::grid: return "grid";
    }
    throw std::invalid_argument("source_kind_name: unknown kind");
}

inline SourceKind parse_source_kind(const std::string& name) {
    if (name == "two-moons") return SourceKind::two_moons;
    if (name == "gaussian-ring") return SourceKind::gaussian_ring;
    if (name == "grid") return SourceKind::grid;
    throw std::invalid_argument("source kind must be two-moons, gaussian-ring or grid, got '" + name + "'");
}

inline const char* lab_loss_name(LabLoss l) {
    switch (l) {
        case LabLoss::ddc: return "ddc";
        case LabLoss::pairwise_cos: return "pairwise-cos";
        case LabLoss::pairwise_dist: return "pairwise-dist";
    }
    throw std::invalid_argument("lab_loss_name: unknown loss");
}

inline LabLoss parse_lab_loss(const std::string& name) {
    if (name == "ddc") return LabLoss::ddc;
    if (name == "pairwise-cos") return LabLoss::pairwise_cos;
    if (name == "pairwise-dist") return LabLoss::pairwise_dist;
    throw std::invalid_argument("lab loss must be ddc, pairwise-cos or pairwise-dist, got '" + name + "'");
}

inline const char* lab_init_name(LabInit i) {
    switch (i) {
        case LabInit::source: return "source";
        case LabInit::optimum: return "optimum";
        case LabInit::rotated_optimum: return "rotated-optimum";
    }
    throw std::invalid_argument("lab_init_name: unknown init");
}

inline LabInit parse_lab_init(const std::string& name) {
    if (name == "source") return LabInit::source;
    if (name == "optimum") return LabInit::optimum;
    if (name == "rotated-optimum") return LabInit::rotated_optimum;
    throw std::invalid_argument("lab init must be source, optimum or rotated-optimum, got '" + name + "'");
}

/// Rigid-plus-scale map applied to fresh generator draws to form the target
/// few-shot set: p -> scale * R(rotate_deg) * p + shift.
struct TargetTransform {
    double shift_x = 3.0;
    double shift_y = -2.0;
    double rotate_deg = 0.0;
    double scale = 1.0;
};

struct LabConfig {
    SourceKind source = SourceKind::two_moons;
    int n_source = 256;
    int m_target = 10;
    TargetTransform transform;
    LabLoss loss = LabLoss::ddc;
    LabInit init = LabInit::source;
    double init_rotation_deg = 45.0;  // used by the rotated-optimum init
    int steps = 2000;
    double lr = 1.0;
    double center_weight = 1.0;  // pull toward the target centroid (pairwise arms only)
    std::uint64_t seed = 7;

    void validate() const {
        if (m_target < 1 || m_target > 10)
            throw std::invalid_argument("LabConfig: m_target must lie in [1, 10]");
        if (n_source < 2 * m_target)
            throw std::invalid_argument("LabConfig: n_source must be >= 2 * m_target");
        if (steps < 1) throw std::invalid_argument("LabConfig: steps must be >= 1");
        if (!(lr > 0.0)) throw std::invalid_argument("LabConfig: lr must be > 0");
        if (center_weight < 0.0) throw std::invalid_argument("LabConfig: center_weight must be >= 0");
        if (transform.scale == 0.0) throw std::invalid_argument("LabConfig: transform scale must be nonzero");
    }
};

struct GeometryReport {
    double center_drift = 0.0;
    double rotation_deg = 0.0;
    bool rotation_degenerate = false;
    double structure_corr = 0.0;
    bool structure_defined = true;
    double scale_ratio = 1.0;  // generated / source spread; reported, not asserted
    std::vector<double> loss_per_iter;
};

inline PointSet generate_source(SourceKind kind, int n, RngStream& rng) {
    if (n < 1) throw std::invalid_argument("generate_source: n must be >= 1");
    PointSet out(2);
    switch (kind) {
        case SourceKind::two_moons:
            for (int i = 0; i < n; ++i) {
                const double t = M_PI * rng.next_unit();
                double x, y;
                if (i < (n + 1) / 2) {
                    x = std::cos(t);
                    y = std::sin(t);
                } else {
                    x = 1.0 - std::cos(t);
                    y = 0.5 - std::sin(t);
                }
                out.add({x + 0.05 * rng.next_normal(), y + 0.05 * rng.next_normal()});
            }
            break;
        case SourceKind::gaussian_ring:
            for (int i = 0; i < n; ++i) {
                const double theta = 2.0 * M_PI * rng.next_unit();
                const double r = 1.0 + 0.05 * rng.next_normal();
                out.add({r * std::cos(theta), r * std::sin(theta)});
            }
            break;
        case SourceKind::grid: {
            int k = 1;
            while (k * k < n) ++k;
            for (int i = 0; i < n; ++i) {
                const int a = i % k, b = i / k;
                const double step = k > 1 ? 2.0 / (k - 1) : 0.0;
                out.add({-1.0 + a * step, -1.0 + b * step});
            }
            break;
        }
    }
    return out;
}

inline PointSet apply_transform(const PointSet& p, const TargetTransform& tf) {
    if (p.dim != 2) throw std::invalid_argument("apply_transform: expects 2-D points");
    const double rad = tf.rotate_deg * M_PI / 180.0;
    const double c = std::cos(rad), s = std::sin(rad);
    PointSet out(2);
    for (int i = 0; i < p.size(); ++i) {
        const double x = p.coord(i, 0), y = p.coord(i, 1);
        out.add({tf.scale * (c * x - s * y) + tf.shift_x, tf.scale * (s * x + c * y) + tf.shift_y});
    }
    return out;
}

struct StructureScore {
    double corr = 0.0;
    bool defined = true;
};

/// Pearson correlation of the upper-triangle pairwise-distance vectors of two
/// equally sized sets. A zero-variance distance vector on either side makes
/// the correlation undefined, reported through the flag.
inline StructureScore structure_score(const PointSet& gen, const PointSet& src) {
    if (gen.size() != src.size()) throw std::invalid_argument("structure_score: sizes must match");
    if (gen.size() < 3) throw std::invalid_argument("structure_score: need at least 3 points");
    std::vector<double> a, b;
    Tensor da = pairwise_distances(gen), db = pairwise_distances(src);
    const int n = gen.size();
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            a.push_back(da[static_cast<std::size_t>(i) * n + j]);
            b.push_back(db[static_cast<std::size_t>(i) * n + j]);
        }
    const double p = static_cast<double>(a.size());
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i] / p;
        mb += b[i] / p;
    }
    double cov = 0, va = 0, vb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        cov += (a[i] - ma) * (b[i] - mb);
        va += (a[i] - ma) * (a[i] - ma);
        vb += (b[i] - mb) * (b[i] - mb);
    }
    StructureScore out;
    if (va == 0.0 || vb == 0.0) {
        out.defined = false;
        return out;
    }
    out.corr = std::clamp(cov / std::sqrt(va * vb), -1.0, 1.0);
    return out;
}

/// Distance between centroids, normalized by the target's centered RMS spread
/// (falls back to the raw distance when the target has no spread).
inline double center_drift(const PointSet& gen, const PointSet& target) {
    std::vector<double> cg = gen.centroid(), ct = target.centroid();
    double acc = 0.0;
    for (std::size_t k = 0; k < cg.size(); ++k) acc += (cg[k] - ct[k]) * (cg[k] - ct[k]);
    const double dist = std::sqrt(acc);
    const double scale = target.centered().rms_norm();
    return scale == 0.0 ? dist : dist / scale;
}

/// The lab's optimization objective over generated point positions, with the
/// source-side quantities cached. Arms:
///   ddc           — mean_i ||src_i + w - gen_i||^2 (identity embeddings, paired)
///   pairwise-*    — mean over pairs of squared similarity mismatch against the
///                   source, plus center_weight * ||centroid(gen) - centroid(target)||^2
class LabObjective {
  public:
    LabObjective(const PointSet& src, const PointSet& target, LabLoss arm, double center_weight)
        : src_(src), arm_(arm), center_weight_(center_weight) {
        if (src.dim != 2 || target.dim != 2) throw std::invalid_argument("LabObjective: expects 2-D sets");
        if (src.size() < 2) throw std::invalid_argument("LabObjective: need at least 2 source points");
        target_centroid_ = target.centroid();
        std::vector<double> sc = src.centroid(), tc = target_centroid_;
        w_ = {tc[0] - sc[0], tc[1] - sc[1]};
        if (arm_ != LabLoss::ddc) {
            const int n = src.size();
            src_sim_.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
            for (int i = 0; i < n; ++i)
                for (int j = i + 1; j < n; ++j) src_sim_.push_back(similarity(src, i, j));
        }
    }

    const std::vector<double>& direction() const { return w_; }

    /// Loss at gen; when grad is non-null it is resized to 2 * n and filled
    /// with d loss / d gen in point-major order.
    double eval(const PointSet& gen, std::vector<double>* grad) const {
        if (gen.dim != 2 || gen.size() != src_.size())
            throw std::invalid_argument("LabObjective: generated set must match the source in size");
        const int n = gen.size();
        if (grad) grad->assign(static_cast<std::size_t>(n) * 2, 0.0);
        return arm_ == LabLoss::ddc ? eval_ddc(gen, grad) : eval_pairwise(gen, grad);
    }

  private:
    double similarity(const PointSet& p, int i, int j) const {
        const double xi = p.coord(i, 0), yi = p.coord(i, 1);
        const double xj = p.coord(j, 0), yj = p.coord(j, 1);
        if (arm_ == LabLoss::pairwise_dist) return std::hypot(xi - xj, yi - yj);
        const double ri = std::hypot(xi, yi), rj = std::hypot(xj, yj);
        if (ri == 0.0 || rj == 0.0) return 0.0;
        return (xi * xj + yi * yj) / (ri * rj);
    }

    double eval_ddc(const PointSet& gen, std::vector<double>* grad) const {
        const int n = gen.size();
        double loss = 0.0;
        for (int i = 0; i < n; ++i)
            for (int k = 0; k < 2; ++k) {
                const double r = gen.coord(i, k) - src_.coord(i, k) - w_[k];
                loss += r * r / n;
                if (grad) (*grad)[static_cast<std::size_t>(i) * 2 + k] = 2.0 * r / n;
            }
        return loss;
    }

    double eval_pairwise(const PointSet& gen, std::vector<double>* grad) const {
        const int n = gen.size();
        const double pairs = static_cast<double>(n) * (n - 1) / 2.0;
        double loss = 0.0;
        std::size_t idx = 0;
        for (int i = 0; i < n; ++i) {
            for (int j = i + 1; j < n; ++j, ++idx) {
                const double s = similarity(gen, i, j);
                const double diff = s - src_sim_[idx];
                loss += diff * diff / pairs;
                if (!grad) continue;
                const double dls = 2.0 * diff / pairs;
                const double xi = gen.coord(i, 0), yi = gen.coord(i, 1);
                const double xj = gen.coord(j, 0), yj = gen.coord(j, 1);
                if (arm_ == LabLoss::pairwise_dist) {
                    const double d = std::hypot(xi - xj, yi - yj);
                    if (d == 0.0) continue;  // flat direction: keep the zero subgradient
                    const double gx = (xi - xj) / d, gy = (yi - yj) / d;
                    (*grad)[static_cast<std::size_t>(i) * 2 + 0] += dls * gx;
                    (*grad)[static_cast<std::size_t>(i) * 2 + 1] += dls * gy;
                    (*grad)[static_cast<std::size_t>(j) * 2 + 0] -= dls * gx;
                    (*grad)[static_cast<std::size_t>(j) * 2 + 1] -= dls * gy;
                } else {
                    const double ri = std::hypot(xi, yi), rj = std::hypot(xj, yj);
                    if (ri == 0.0 || rj == 0.0) continue;
                    const double inv = 1.0 / (ri * rj);
                    (*grad)[static_cast<std::size_t>(i) * 2 + 0] += dls * (xj * inv - s * xi / (ri * ri));
                    (*grad)[static_cast<std::size_t>(i) * 2 + 1] += dls * (yj * inv - s * yi / (ri * ri));
                    (*grad)[static_cast<std::size_t>(j) * 2 + 0] += dls * (xi * inv - s * xj / (rj * rj));
                    (*grad)[static_cast<std::size_t>(j) * 2 + 1] += dls * (yi * inv - s * yj / (rj * rj));
                }
            }
        }
        // centroid pull toward the target
        std::vector<double> cg = gen.centroid();
        for (int k = 0; k < 2; ++k) {
            const double r = cg[k] - target_centroid_[k];
            loss += center_weight_ * r * r;
            if (grad)
                for (int i = 0; i < n; ++i)
                    (*grad)[static_cast<std::size_t>(i) * 2 + k] += center_weight_ * 2.0 * r / n;
        }
        return loss;
    }

    PointSet src_;
    LabLoss arm_;
    double center_weight_;
    std::vector<double> target_centroid_;
    std::vector<double> w_;
    std::vector<double> src_sim_;
};

/// Gradient descent on generated point positions under the selected arm,
/// followed by the geometry metrics against source and target.
inline GeometryReport run_adaptation_2d(const LabConfig& cfg) {
    cfg.validate();
    RngStream root(cfg.seed, 0x6E0);
    RngStream src_rng = root.child(1);
    RngStream tgt_rng = root.child(2);
    PointSet src = generate_source(cfg.source, cfg.n_source, src_rng);
    PointSet target = apply_transform(generate_source(cfg.source, cfg.m_target, tgt_rng), cfg.transform);

    LabObjective objective(src, target, cfg.loss, cfg.center_weight);
    const std::vector<double>& w = objective.direction();

    PointSet gen(2);
    if (cfg.init == LabInit::source) {
        gen = src;
    } else {
        for (int i = 0; i < src.size(); ++i)
            gen.add({src.coord(i, 0) + w[0], src.coord(i, 1) + w[1]});
        if (cfg.init == LabInit::rotated_optimum) {
            std::vector<double> c = target.centroid();
            const double rad = cfg.init_rotation_deg * M_PI / 180.0;
            const double co = std::cos(rad), si = std::sin(rad);
            for (int i = 0; i < gen.size(); ++i) {
                const double x = gen.coord(i, 0) - c[0], y = gen.coord(i, 1) - c[1];
                gen.coord(i, 0) = co * x - si * y + c[0];
                gen.coord(i, 1) = si * x + co * y + c[1];
            }
        }
    }

    GeometryReport report;
    report.loss_per_iter.reserve(cfg.steps);
    std::vector<double> grad;
    for (int step = 0; step < cfg.steps; ++step) {
        const double loss = objective.eval(gen, &grad);
        if (!std::isfinite(loss))
            throw std::runtime_error("run_adaptation_2d: non-finite loss at iteration " +
                                     std::to_string(step));
        report.loss_per_iter.push_back(loss);
        for (int i = 0; i < gen.size(); ++i)
            for (int k = 0; k < 2; ++k)
                gen.coord(i, k) -= cfg.lr * grad[static_cast<std::size_t>(i) * 2 + k];
    }

    report.center_drift = center_drift(gen, target);
    ProcrustesResult pr = orthogonal_procrustes(src.centered(), gen.centered());
    report.rotation_deg = pr.rotation_deg;
    report.rotation_degenerate = pr.degenerate;
    StructureScore sc = structure_score(gen, src);
    report.structure_corr = sc.corr;
    report.structure_defined = sc.defined;
    const double src_scale = src.centered().rms_norm();
    const double gen_scale = gen.centered().rms_norm();
    report.scale_ratio = src_scale == 0.0 ? 1.0 : gen_scale / src_scale;
    return report;
}

}  // namespace fsdm

#pragma once

#include <stdexcept>
#include <string>
#include <utility>

#include "fsdm/diffusion.hpp"
#include "fsdm/lowpass.hpp"
#include "fsdm/rng.hpp"
#include "fsdm/schedule.hpp"
#include "fsdm/tensor.hpp"

namespace fsdm {

enum class SampleMode { plain, ilvr, icsg };

inline const char* sample_mode_name(SampleMode mode) {
    switch (mode) {
        case SampleMode::plain: return "plain";
        case SampleMode::ilvr: return "ilvr";
        case SampleMode::icsg: return "icsg";
    }
    throw std::invalid_argument("sample_mode_name: unknown mode");
}

inline SampleMode parse_sample_mode(const std::string& name) {
    if (name == "plain") return SampleMode::plain;
    if (name == "ilvr") return SampleMode::ilvr;
    if (name == "icsg") return SampleMode::icsg;
    throw std::invalid_argument("sample mode must be plain, ilvr or icsg, got '" + name + "'");
}

/// Knobs of the guided sampler. Guidance applies while t >= t_stop; a t_stop
/// above M therefore disables it and leaves the plain noising-denoising chain.
struct SamplerConfig {
    SampleMode mode = SampleMode::icsg;
    int M = 800;       // start step: the source is noised to x_M before denoising
    int t_stop = 500;  // last guided step of the chain
    int K = 1;         // style-enhancement repeats per guided step
    int N = 8;         // low-pass block factor of phi_N

    void validate(int T) const {
        if (M < 0 || M > T) throw std::invalid_argument("SamplerConfig: M must lie in [0, T]");
        if (t_stop < 1) throw std::invalid_argument("SamplerConfig: t_stop must be >= 1");
        if (K < 0) throw std::invalid_argument("SamplerConfig: K must be >= 0");
        if (N < 1) throw std::invalid_argument("SamplerConfig: N must be >= 1");
    }
};

/// Style enhancement: K rounds of re-estimating the clean sample with the
/// adapted denoiser and re-noising the estimate back to the same step t with
/// fresh noise. Each round pulls the guide deeper into the learned domain
/// while keeping its noise level.
inline Tensor style_enhance(const NoiseSchedule& sched, const NoisePredictor& predictor, Tensor y_t, int t,
                            int K, RngStream& rng) {
    if (K < 0) throw std::invalid_argument("style_enhance: K must be >= 0");
    for (int i = 0; i < K; ++i) {
        Tensor y0_hat = predict_x0(sched, y_t, t, predictor(y_t, t));
        y_t = forward_sample(sched, y0_hat, t, gaussian_draw(rng, y_t.shape));
    }
    return y_t;
}

/// x' + phi_N(guide) - phi_N(x'), evaluated as (x' - phi_N(x')) + phi_N(guide)
/// so that N = 1 reduces to the guide exactly. Because phi_N is an idempotent
/// projection, phi_N(result) = phi_N(guide) up to rounding.
inline Tensor lowpass_correct(const Tensor& x_prev, const Tensor& guide_prev, int n) {
    require_same_shape(x_prev, guide_prev, "lowpass_correct");
    Tensor lx = low_pass(x_prev, n);
    Tensor lg = low_pass(guide_prev, n);
    Tensor out = x_prev;
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = (out[i] - lx[i]) + lg[i];
    return out;
}

/// One guided reverse step: denoise x_t by one ancestral step, then snap its
/// low-pass component to that of the already-translated guide y^B_{t-1}.
inline Tensor icsg_step(const NoiseSchedule& sched, const NoisePredictor& predictor, const Tensor& x_t,
                        const Tensor& y_prev_b, int t, int n, RngStream& rng) {
    require_same_shape(x_t, y_prev_b, "icsg_step");
    Tensor eps_pred = predictor(x_t, t);
    Tensor z = sched.sigma(t) == 0.0 ? Tensor::zeros(x_t.shape) : gaussian_draw(rng, x_t.shape);
    return lowpass_correct(reverse_step(sched, x_t, t, eps_pred, z), y_prev_b, n);
}

/// Baseline guided step: identical correction, but the guide is the merely
/// forward-noised source (no domain translation, no style enhancement).
/// Draw order: reverse-step noise z first (when sigma_t > 0), then the guide's
/// forward noise (skipped at t = 1, where the guide is the source itself).
inline Tensor ilvr_step(const NoiseSchedule& sched, const NoisePredictor& predictor, const Tensor& x_t,
                        const Tensor& y_source, int t, int n, RngStream& rng) {
    require_same_shape(x_t, y_source, "ilvr_step");
    Tensor eps_pred = predictor(x_t, t);
    Tensor z = sched.sigma(t) == 0.0 ? Tensor::zeros(x_t.shape) : gaussian_draw(rng, x_t.shape);
    Tensor x_prev = reverse_step(sched, x_t, t, eps_pred, z);
    Tensor y_prev =
        t == 1 ? y_source : forward_sample(sched, y_source, t - 1, gaussian_draw(rng, y_source.shape));
    return lowpass_correct(x_prev, y_prev, n);
}

/// Guided ancestral chain: noise the source to x_M, denoise down to x_0, and
/// while t >= t_stop snap the low-pass structure of x to a guide — the
/// style-enhanced, domain-translated source (icsg) or the forward-noised
/// source (ilvr). Unguided steps replicate the plain chain's draw order
/// exactly, so disabling guidance reproduces the plain result bit for bit.
/// Per guided icsg step the draws are: guide forward noise, K enhancement
/// noises, guide step noise, then the x-branch step noise.
inline Tensor icsg_sample(const NoiseSchedule& sched, const NoisePredictor& predictor,
                          const Tensor& x_source, const SamplerConfig& cfg, RngStream& rng) {
    cfg.validate(sched.T);
    Tensor x = cfg.M == 0 ? x_source
                          : forward_sample(sched, x_source, cfg.M, gaussian_draw(rng, x_source.shape));
    for (int t = cfg.M; t >= 1; --t) {
        const bool guided = cfg.mode != SampleMode::plain && t >= cfg.t_stop;
        if (!guided) {
            Tensor eps_pred = predictor(x, t);
            Tensor z = sched.sigma(t) == 0.0 ? Tensor::zeros(x.shape) : gaussian_draw(rng, x.shape);
            x = reverse_step(sched, x, t, eps_pred, z);
        } else if (cfg.mode == SampleMode::ilvr) {
            x = ilvr_step(sched, predictor, x, x_source, t, cfg.N, rng);
        } else {
            Tensor y_t = forward_sample(sched, x_source, t, gaussian_draw(rng, x_source.shape));
            y_t = style_enhance(sched, predictor, std::move(y_t), t, cfg.K, rng);
            Tensor eps_y = predictor(y_t, t);
            Tensor z_y = sched.sigma(t) == 0.0 ? Tensor::zeros(x.shape) : gaussian_draw(rng, x.shape);
            Tensor y_prev_b = reverse_step(sched, y_t, t, eps_y, z_y);
            x = icsg_step(sched, predictor, x, y_prev_b, t, cfg.N, rng);
        }
    }
    return x;
}

}  // namespace fsdm

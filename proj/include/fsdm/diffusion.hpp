#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>

#include "fsdm/rng.hpp"
#include "fsdm/schedule.hpp"
#include "fsdm/tensor.hpp"

namespace fsdm {

/// Forward noising: x_t = sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * eps.
/// t = 0 is the no-op convention and returns x0 unchanged.
inline Tensor forward_sample(const NoiseSchedule& sched, const Tensor& x0, int t, const Tensor& eps) {
    if (t == 0) return x0;
    require_same_shape(x0, eps, "forward_sample");
    const double ab = sched.alpha_bar(t);
    return blend(x0, eps, std::sqrt(ab), std::sqrt(1.0 - ab));
}

/// Clean-sample estimate: x0_hat = (x_t - sqrt(1 - alpha_bar_t) * eps_pred) / sqrt(alpha_bar_t).
/// Exact algebraic inverse of forward_sample when eps_pred is the true noise.
inline Tensor predict_x0(const NoiseSchedule& sched, const Tensor& xt, int t, const Tensor& eps_pred) {
    require_same_shape(xt, eps_pred, "predict_x0");
    const double ab = sched.alpha_bar(t);
    const double inv = 1.0 / std::sqrt(ab);
    return blend(xt, eps_pred, inv, -std::sqrt(1.0 - ab) * inv);
}

/// One ancestral step toward t-1:
/// (1/sqrt(alpha_t)) * (x_t - ((1 - alpha_t)/sqrt(1 - alpha_bar_t)) * eps_pred) + sigma_t * z.
inline Tensor reverse_step(const NoiseSchedule& sched, const Tensor& xt, int t, const Tensor& eps_pred,
                           const Tensor& z) {
    require_same_shape(xt, eps_pred, "reverse_step");
    const double a = sched.alpha(t);
    const double ab = sched.alpha_bar(t);
    const double inv = 1.0 / std::sqrt(a);
    Tensor out = blend(xt, eps_pred, inv, -inv * (1.0 - a) / std::sqrt(1.0 - ab));
    const double s = sched.sigma(t);
    if (s != 0.0) {
        require_same_shape(xt, z, "reverse_step noise");
        for (std::int64_t i = 0; i < out.numel(); ++i) out[i] += s * z[i];
    }
    return out;
}

/// A noise predictor closure eps_theta(x_t, t); content conditioning and rng
/// ownership are bound by the caller.
using NoisePredictor = std::function<Tensor(const Tensor&, int)>;

/// Ancestral chain from step from_t down to 1. from_t = T starts from pure
/// noise; from_t < T noises x_init up to from_t first (x_init required);
/// from_t = 0 returns x_init unchanged.
inline Tensor ancestral_sample(const NoiseSchedule& sched, const NoisePredictor& predictor, RngStream& rng,
                               const Shape& shape, int from_t, const Tensor* x_init = nullptr) {
    if (from_t < 0 || from_t > sched.T) throw std::invalid_argument("ancestral_sample: from_t outside [0, T]");
    Tensor x;
    if (from_t == sched.T) {
        x = gaussian_draw(rng, shape);
    } else {
        if (x_init == nullptr) throw std::invalid_argument("ancestral_sample: from_t < T requires x_init");
        if (x_init->shape != shape) throw std::invalid_argument("ancestral_sample: x_init shape mismatch");
        x = from_t == 0 ? *x_init : forward_sample(sched, *x_init, from_t, gaussian_draw(rng, shape));
    }
    for (int t = from_t; t >= 1; --t) {
        Tensor eps_pred = predictor(x, t);
        Tensor z = sched.sigma(t) == 0.0 ? Tensor::zeros(shape) : gaussian_draw(rng, shape);
        x = reverse_step(sched, x, t, eps_pred, z);
    }
    return x;
}

}  // namespace fsdm

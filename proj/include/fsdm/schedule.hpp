#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

namespace fsdm {

enum class SigmaMode {
    posterior,  // sigma_t = sqrt(beta_t * (1 - alpha_bar_{t-1}) / (1 - alpha_bar_t)); sigma_1 = 0
    large,      // sigma_t = sqrt(beta_t)
};

/// Diffusion noise schedule over steps t = 1..T. alpha_bar is maintained as a
/// reassociation-free running product of the per-step alphas, with
/// alpha_bar(0) = 1.
struct NoiseSchedule {
    int T = 0;
    SigmaMode sigma_mode = SigmaMode::posterior;
    std::vector<double> beta_;       // [0..T], index 0 unused
    std::vector<double> alpha_;      // [0..T], index 0 unused
    std::vector<double> alpha_bar_;  // [0..T]
    std::vector<double> sigma_;      // [0..T], index 0 unused
    // q(x_{t-1} | x_t, x_0) = N(c_x0 * x_0 + c_xt * x_t, post_var * I)
    std::vector<double> post_coef_x0_;  // [0..T], index 0 unused
    std::vector<double> post_coef_xt_;  // [0..T], index 0 unused
    std::vector<double> post_var_;      // [0..T], index 0 unused

    double beta(int t) const { return at(beta_, t); }
    double alpha(int t) const { return at(alpha_, t); }
    double sigma(int t) const { return at(sigma_, t); }
    double post_coef_x0(int t) const { return at(post_coef_x0_, t); }
    double post_coef_xt(int t) const { return at(post_coef_xt_, t); }
    double post_var(int t) const { return at(post_var_, t); }

    double alpha_bar(int t) const {
        if (t < 0 || t > T) throw std::out_of_range("NoiseSchedule: t out of range");
        return alpha_bar_[static_cast<std::size_t>(t)];
    }

  private:
    double at(const std::vector<double>& v, int t) const {
        if (t < 1 || t > T) throw std::out_of_range("NoiseSchedule: t out of range");
        return v[static_cast<std::size_t>(t)];
    }
};

namespace detail {

// Fill alpha, alpha_bar, sigma, and posterior coefficients from beta[1..T].
inline void finish_schedule(NoiseSchedule& s) {
    const int T = s.T;
    s.alpha_.assign(T + 1, 0.0);
    s.alpha_bar_.assign(T + 1, 0.0);
    s.sigma_.assign(T + 1, 0.0);
    s.post_coef_x0_.assign(T + 1, 0.0);
    s.post_coef_xt_.assign(T + 1, 0.0);
    s.post_var_.assign(T + 1, 0.0);

    s.alpha_bar_[0] = 1.0;
    for (int t = 1; t <= T; ++t) {
        const double b = s.beta_[t];
        if (!(b > 0.0 && b < 1.0)) throw std::invalid_argument("NoiseSchedule: beta_t must lie in (0, 1)");
        s.alpha_[t] = 1.0 - b;
        s.alpha_bar_[t] = s.alpha_bar_[t - 1] * s.alpha_[t];

        const double ab_prev = s.alpha_bar_[t - 1];
        const double ab = s.alpha_bar_[t];
        const double denom = 1.0 - ab;
        s.post_var_[t] = b * (1.0 - ab_prev) / denom;
        s.post_coef_x0_[t] = std::sqrt(ab_prev) * b / denom;
        s.post_coef_xt_[t] = std::sqrt(s.alpha_[t]) * (1.0 - ab_prev) / denom;
        s.sigma_[t] = s.sigma_mode == SigmaMode::large ? std::sqrt(b) : std::sqrt(s.post_var_[t]);
    }
}

}  // namespace detail

/// Linear beta schedule, inclusive of both endpoints.
inline NoiseSchedule make_linear_schedule(int T, double beta_start = 1e-4, double beta_end = 0.02,
                                          SigmaMode mode = SigmaMode::posterior) {
    if (T < 1) throw std::invalid_argument("make_linear_schedule: T must be >= 1");
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
        throw std::invalid_argument("make_linear_schedule: need 0 < beta_start <= beta_end < 1");
    NoiseSchedule s;
    s.T = T;
    s.sigma_mode = mode;
    s.beta_.assign(T + 1, 0.0);
    for (int t = 1; t <= T; ++t)
        s.beta_[t] = T == 1 ? beta_start : beta_start + (beta_end - beta_start) * (t - 1) / double(T - 1);
    detail::finish_schedule(s);
    return s;
}

/// Squared-cosine alpha_bar profile: f(t) = cos^2(((t/T + s)/(1 + s)) * pi/2)
/// with s = 0.008; beta_t = 1 - f(t)/f(t-1), clipped to <= 0.999. alpha_bar is
/// then rebuilt as the running product of the clipped alphas.
inline NoiseSchedule make_cosine_schedule(int T, SigmaMode mode = SigmaMode::posterior) {
    if (T < 1) throw std::invalid_argument("make_cosine_schedule: T must be >= 1");
    const double shift = 0.008;
    auto f = [&](double t) {
        double c = std::cos(((t / T + shift) / (1.0 + shift)) * M_PI / 2.0);
        return c * c;
    };
    NoiseSchedule s;
    s.T = T;
    s.sigma_mode = mode;
    s.beta_.assign(T + 1, 0.0);
    double f_prev = f(0.0);
    for (int t = 1; t <= T; ++t) {
        double f_t = f(double(t));
        s.beta_[t] = std::min(1.0 - f_t / f_prev, 0.999);
        f_prev = f_t;
    }
    detail::finish_schedule(s);
    return s;
}

/// Phasic gating parameters: m(t) switches the content pathway on for large t,
/// w(t) fades the plain denoising objective out as t grows.
struct PhasicConfig {
    double T_s = 300.0;   // sigmoid shift of m(t)
    double alpha_w = 3.0; // exponent of w(t)
    int T = 1000;         // total diffusion steps

    void validate() const {
        if (T < 1) throw std::invalid_argument("PhasicConfig: T must be >= 1");
        if (!(T_s >= 0.0 && T_s <= double(T))) throw std::invalid_argument("PhasicConfig: need 0 <= T_s <= T");
        if (!(alpha_w > 0.0)) throw std::invalid_argument("PhasicConfig: alpha_w must be > 0");
    }
};

/// m(t) = 1 / (1 + e^{-(t - T_s)}), evaluated overflow-free.
inline double phasic_gate(double t, const PhasicConfig& cfg) {
    const double x = t - cfg.T_s;
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

/// w(t) = 1 - (t/T)^alpha_w; w(0) = 1 and w(T) = 0 exactly.
inline double phasic_weight(double t, const PhasicConfig& cfg) {
    return 1.0 - std::pow(t / cfg.T, cfg.alpha_w);
}

}  // namespace fsdm

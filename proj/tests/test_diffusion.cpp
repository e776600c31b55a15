#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "fsdm/diffusion.hpp"
#include "fsdm/rng.hpp"

using Catch::Approx;
using namespace fsdm;

namespace {

// One-step schedule with an exactly chosen alpha_bar.
NoiseSchedule single_step(double beta) {
    NoiseSchedule s;
    s.T = 1;
    s.beta_.assign(2, 0.0);
    s.beta_[1] = beta;
    detail::finish_schedule(s);
    return s;
}

Tensor vec2(double a, double b) {
    Tensor t = Tensor::zeros({2});
    t[0] = a;
    t[1] = b;
    return t;
}

}  // namespace

TEST_CASE("Forward noising", "[diffusion]") {
    SECTION("closed form at alpha_bar = 0.25") {
        NoiseSchedule s = single_step(0.75);
        REQUIRE(s.alpha_bar(1) == 0.25);
        Tensor xt = forward_sample(s, vec2(2, 0), 1, vec2(0, 2));
        REQUIRE(xt[0] == Approx(1.0).margin(1e-15));
        REQUIRE(xt[1] == Approx(std::sqrt(3.0)).margin(1e-12));
    }
    SECTION("t = 0 is a no-op") {
        NoiseSchedule s = make_linear_schedule(100);
        Tensor x0 = vec2(0.3, -0.8);
        Tensor out = forward_sample(s, x0, 0, vec2(5, 5));
        REQUIRE(out[0] == x0[0]);
        REQUIRE(out[1] == x0[1]);
    }
    SECTION("zero noise shrinks deterministically") {
        NoiseSchedule s = make_linear_schedule(100);
        Tensor out = forward_sample(s, vec2(1, -1), 40, Tensor::zeros({2}));
        const double r = std::sqrt(s.alpha_bar(40));
        REQUIRE(out[0] == Approx(r).margin(1e-15));
        REQUIRE(out[1] == Approx(-r).margin(1e-15));
    }
    SECTION("shape mismatch is rejected") {
        NoiseSchedule s = make_linear_schedule(10);
        REQUIRE_THROWS_AS(forward_sample(s, Tensor::zeros({2}), 1, Tensor::zeros({3})), std::invalid_argument);
    }
}

TEST_CASE("Clean-sample estimate inverts forward noising", "[diffusion]") {
    NoiseSchedule s = make_linear_schedule(1000, 1e-4, 0.02);
    RngStream rng(5, 0);

    SECTION("inversion identity holds for every step") {
        Tensor x0 = gaussian_draw(rng, {3, 4, 4});
        for (int t = 1; t <= 1000; ++t) {
            Tensor eps = gaussian_draw(rng, {3, 4, 4});
            Tensor back = predict_x0(s, forward_sample(s, x0, t, eps), t, eps);
            for (int i = 0; i < x0.numel(); ++i) REQUIRE(back[i] == Approx(x0[i]).margin(1e-9));
        }
    }
    SECTION("zero predicted noise rescales the input") {
        Tensor xt = vec2(0.5, -0.25);
        Tensor out = predict_x0(s, xt, 100, Tensor::zeros({2}));
        const double inv = 1.0 / std::sqrt(s.alpha_bar(100));
        REQUIRE(out[0] == Approx(0.5 * inv).margin(1e-15));
        REQUIRE(out[1] == Approx(-0.25 * inv).margin(1e-15));
    }
    SECTION("recovers the worked forward example") {
        NoiseSchedule one = single_step(0.75);
        Tensor out = predict_x0(one, vec2(1.0, std::sqrt(3.0)), 1, vec2(0, 2));
        REQUIRE(out[0] == Approx(2.0).margin(1e-12));
        REQUIRE(out[1] == Approx(0.0).margin(1e-12));
    }
}

TEST_CASE("Single reverse step", "[diffusion]") {
    SECTION("closed form with zero noise prediction") {
        NoiseSchedule s = single_step(0.01);  // alpha_1 = 0.99, sigma_1 = 0
        REQUIRE(s.sigma(1) == 0.0);
        Tensor one = Tensor::full({1}, 1.0);
        Tensor out = reverse_step(s, one, 1, Tensor::zeros({1}), Tensor::zeros({1}));
        REQUIRE(out[0] == Approx(1.0 / std::sqrt(0.99)).margin(1e-12));
        REQUIRE(out[0] == Approx(1.0050378152592121).margin(1e-12));
    }
    SECTION("equals the posterior mean when fed the true noise") {
        NoiseSchedule s = make_linear_schedule(500);
        RngStream rng(11, 0);
        for (int t : {1, 2, 57, 250, 500}) {
            Tensor x0 = gaussian_draw(rng, {6});
            Tensor eps = gaussian_draw(rng, {6});
            Tensor xt = forward_sample(s, x0, t, eps);
            Tensor stepped = reverse_step(s, xt, t, eps, Tensor::zeros({6}));
            Tensor posterior = blend(x0, xt, s.post_coef_x0(t), s.post_coef_xt(t));
            for (int i = 0; i < 6; ++i) REQUIRE(stepped[i] == Approx(posterior[i]).margin(1e-9));
        }
    }
    SECTION("replaying a trajectory with the implied true noise lands on x0") {
        NoiseSchedule s = make_linear_schedule(50);
        RngStream rng(13, 0);
        Tensor x0 = Tensor::full({1}, 0.7);
        Tensor x = forward_sample(s, x0, 50, gaussian_draw(rng, {1}));
        for (int t = 50; t >= 1; --t) {
            const double ab = s.alpha_bar(t);
            Tensor implied = scale(sub(x, scale(x0, std::sqrt(ab))), 1.0 / std::sqrt(1.0 - ab));
            x = reverse_step(s, x, t, implied, Tensor::zeros({1}));
        }
        REQUIRE(x[0] == Approx(0.7).margin(1e-6));
    }
}

TEST_CASE("Ancestral sampling chain", "[diffusion]") {
    NoiseSchedule s = make_linear_schedule(100);
    NoisePredictor zero_pred = [](const Tensor& x, int) { return Tensor::zeros(x.shape); };

    SECTION("from_t = 0 returns the start unchanged") {
        RngStream rng(3, 0);
        Tensor init = vec2(0.1, 0.9);
        Tensor out = ancestral_sample(s, zero_pred, rng, {2}, 0, &init);
        REQUIRE(out[0] == init[0]);
        REQUIRE(out[1] == init[1]);
    }
    SECTION("from_t = 1 is exactly one reverse step") {
        RngStream a(4, 0), b(4, 0);
        Tensor init = vec2(-0.4, 0.6);
        Tensor chained = ancestral_sample(s, zero_pred, a, {2}, 1, &init);
        Tensor xt = forward_sample(s, init, 1, gaussian_draw(b, {2}));
        Tensor manual = reverse_step(s, xt, 1, Tensor::zeros({2}), Tensor::zeros({2}));
        REQUIRE(chained[0] == manual[0]);
        REQUIRE(chained[1] == manual[1]);
    }
    SECTION("same seed gives identical chains") {
        RngStream a(9, 2), b(9, 2);
        Tensor xa = ancestral_sample(s, zero_pred, a, {2, 4, 4}, 100);
        Tensor xb = ancestral_sample(s, zero_pred, b, {2, 4, 4}, 100);
        for (int i = 0; i < xa.numel(); ++i) REQUIRE(xa[i] == xb[i]);
        REQUIRE(xa.shape == Shape{2, 4, 4});
    }
    SECTION("invalid starts are rejected") {
        RngStream rng(1, 0);
        REQUIRE_THROWS_AS(ancestral_sample(s, zero_pred, rng, {2}, 101), std::invalid_argument);
        REQUIRE_THROWS_AS(ancestral_sample(s, zero_pred, rng, {2}, -1), std::invalid_argument);
        REQUIRE_THROWS_AS(ancestral_sample(s, zero_pred, rng, {2}, 50, nullptr), std::invalid_argument);
    }
}

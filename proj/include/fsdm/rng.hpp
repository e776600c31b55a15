#pragma once

#include <cmath>
#include <cstdint>

#include "fsdm/tensor.hpp"

namespace fsdm {

namespace detail {
inline std::uint64_t mix64(std::uint64_t z) {
    // SplitMix64 finalizer
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}
}  // namespace detail

/// Deterministic SplitMix64 stream. Streams are identified by (state, stream_id);
/// stream_id 0 advances with the standard golden-ratio increment, other ids get a
/// distinct odd increment derived from the id, so two streams can never share a
/// state trajectory.
struct RngStream {
    std::uint64_t state = 0;
    std::uint64_t stream_id = 0;

    static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

    RngStream() = default;
    RngStream(std::uint64_t seed, std::uint64_t id)
        : state(detail::mix64(seed ^ (id * 0xD1B54A32D192ED03ULL))), stream_id(id) {}

    std::uint64_t increment() const {
        return stream_id == 0 ? kGolden : (detail::mix64(stream_id) | 1ULL);
    }

    std::uint64_t next_u64() {
        state += increment();
        return detail::mix64(state);
    }

    /// uniform in [0, 1)
    double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// uniform in (0, 1]; safe as a log argument
    double next_unit_pos() {
        return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    }

    /// uniform integer in [lo, hi] inclusive
    std::int64_t next_int(std::int64_t lo, std::int64_t hi) {
        std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<std::int64_t>(next_u64() % span);
    }

    /// one standard normal draw (Box-Muller, cosine branch; the sine twin is discarded
    /// so each draw consumes exactly two uniforms)
    double next_normal() {
        double u1 = next_unit_pos();
        double u2 = next_unit();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    /// Derive an independent child stream; the child's id and state mix in this
    /// stream's position so repeated derivations differ.
    RngStream child(std::uint64_t purpose) {
        return RngStream(next_u64(), detail::mix64(stream_id ^ (purpose * kGolden)) | 1ULL);
    }
};

/// i.i.d. standard normal tensor; advances rng deterministically.
inline Tensor gaussian_draw(RngStream& rng, Shape shape) {
    Tensor out = Tensor::zeros(std::move(shape));
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = rng.next_normal();
    return out;
}

/// mean + sigma * N(0, I). sigma == 0 returns the mean exactly without
/// consuming any draws.
inline Tensor gaussian_draw(RngStream& rng, Shape shape, double mean, double sigma) {
    if (sigma == 0.0) return Tensor::full(std::move(shape), mean);
    Tensor out = gaussian_draw(rng, std::move(shape));
    for (double& v : out.data) v = mean + sigma * v;
    return out;
}

/// Tensor-mean variant of the above.
inline Tensor gaussian_draw(RngStream& rng, const Tensor& mean, double sigma) {
    if (sigma == 0.0) return mean;
    Tensor out = gaussian_draw(rng, mean.shape);
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = mean[i] + sigma * out[i];
    return out;
}

}  // namespace fsdm

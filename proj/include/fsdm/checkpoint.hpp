#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fsdm/config.hpp"
#include "fsdm/denoiser.hpp"
#include "fsdm/io.hpp"

namespace fsdm {

// The on-disk encoding is little-endian and written as raw words.
static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// A trained model snapshot: the run configuration it was produced under
/// (kept as the exact JSON bytes so a round-trip preserves them), the flat
/// parameter vector, and optionally the Adam moments for resuming.
///
/// File layout: "FSDM" | version u32 | config byte length u32 | config JSON |
/// params f64[count] | [adam step u64 | m f64[count] | v f64[count]].
/// The parameter count is derived from the embedded config; the Adam block's
/// presence is determined by the remaining byte count.
struct Checkpoint {
    RunConfig cfg;
    std::string config_json;
    std::vector<double> params;
    bool has_adam = false;
    std::uint64_t adam_step = 0;
    std::vector<double> adam_m, adam_v;

    static Checkpoint fresh(const RunConfig& cfg, std::vector<double> params) {
        Checkpoint ck;
        ck.cfg = cfg;
        ck.config_json = to_json(cfg).dump();
        ck.params = std::move(params);
        return ck;
    }
};

namespace detail {

template <typename T>
inline void write_word(std::ofstream& f, T v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
inline T read_word(std::ifstream& f, const std::string& path) {
    T v{};
    f.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!f) throw std::runtime_error("checkpoint: truncated file: " + path);
    return v;
}

inline void read_doubles(std::ifstream& f, std::vector<double>& out, std::size_t n, const std::string& path) {
    out.resize(n);
    f.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(n * sizeof(double)));
    if (!f) throw std::runtime_error("checkpoint: truncated parameter data: " + path);
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
    std::ofstream f = open_out(path, std::ios::binary);
    f.write("FSDM", 4);
    detail::write_word(f, kCheckpointVersion);
    detail::write_word(f, static_cast<std::uint32_t>(ck.config_json.size()));
    f.write(ck.config_json.data(), static_cast<std::streamsize>(ck.config_json.size()));
    f.write(reinterpret_cast<const char*>(ck.params.data()),
            static_cast<std::streamsize>(ck.params.size() * sizeof(double)));
    if (ck.has_adam) {
        if (ck.adam_m.size() != ck.params.size() || ck.adam_v.size() != ck.params.size())
            throw std::invalid_argument("save_checkpoint: Adam moment sizes must match the parameter count");
        detail::write_word(f, ck.adam_step);
        f.write(reinterpret_cast<const char*>(ck.adam_m.data()),
                static_cast<std::streamsize>(ck.adam_m.size() * sizeof(double)));
        f.write(reinterpret_cast<const char*>(ck.adam_v.data()),
                static_cast<std::streamsize>(ck.adam_v.size() * sizeof(double)));
    }
    if (!f) throw std::runtime_error("checkpoint: write failed: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f = open_in(path, std::ios::binary | std::ios::ate);
    const std::uint64_t file_size = static_cast<std::uint64_t>(f.tellg());
    f.seekg(0);

    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, "FSDM", 4) != 0)
        throw std::runtime_error("checkpoint: bad magic, not a checkpoint file: " + path);
    const auto version = detail::read_word<std::uint32_t>(f, path);
    if (version != kCheckpointVersion)
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version) + ": " + path);
    const auto json_len = detail::read_word<std::uint32_t>(f, path);

    Checkpoint ck;
    ck.config_json.resize(json_len);
    f.read(ck.config_json.data(), json_len);
    if (!f) throw std::runtime_error("checkpoint: truncated config: " + path);
    ck.cfg = run_config_from_json(nlohmann::json::parse(ck.config_json));

    const std::size_t count = static_cast<std::size_t>(param_count(param_layout(ck.cfg.denoiser)));
    detail::read_doubles(f, ck.params, count, path);

    const std::uint64_t header = 4 + 4 + 4 + json_len;
    const std::uint64_t remaining = file_size - header - count * sizeof(double);
    if (remaining == 0) return ck;
    if (remaining != 8 + 2 * count * sizeof(double))
        throw std::runtime_error("checkpoint: unexpected trailing bytes: " + path);
    ck.has_adam = true;
    ck.adam_step = detail::read_word<std::uint64_t>(f, path);
    detail::read_doubles(f, ck.adam_m, count, path);
    detail::read_doubles(f, ck.adam_v, count, path);
    return ck;
}

}  // namespace fsdm

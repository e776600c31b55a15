#pragma once

#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "fsdm/dataset.hpp"
#include "fsdm/denoiser.hpp"
#include "fsdm/geolab.hpp"
#include "fsdm/losses.hpp"
#include "fsdm/sampler.hpp"
#include "fsdm/schedule.hpp"

namespace fsdm {

inline const char* data_mode_name(DataMode m) { return m == DataMode::image ? "image" : "point"; }

inline DataMode parse_data_mode(const std::string& name) {
    if (name == "image") return DataMode::image;
    if (name == "point") return DataMode::point;
    throw std::invalid_argument("mode must be image or point, got '" + name + "'");
}

inline const char* sigma_mode_name(SigmaMode m) { return m == SigmaMode::posterior ? "posterior" : "large"; }

inline SigmaMode parse_sigma_mode(const std::string& name) {
    if (name == "posterior") return SigmaMode::posterior;
    if (name == "large") return SigmaMode::large;
    throw std::invalid_argument("sigma mode must be posterior or large, got '" + name + "'");
}

enum class ScheduleKind { cosine, linear };

inline const char* schedule_kind_name(ScheduleKind k) { return k == ScheduleKind::cosine ? "cosine" : "linear"; }

inline ScheduleKind parse_schedule_kind(const std::string& name) {
    if (name == "cosine") return ScheduleKind::cosine;
    if (name == "linear") return ScheduleKind::linear;
    throw std::invalid_argument("schedule kind must be cosine or linear, got '" + name + "'");
}

/// Everything a run needs, mirrored 1:1 by the JSON config file. The phasic
/// horizon is tied to the schedule's T, so the file carries T only once.
struct RunConfig {
    DataMode mode = DataMode::image;

    // dataset
    DatasetKind dataset_kind = DatasetKind::shapes;
    int n_source = 1000;
    int m_target = 10;
    bool allow_large_target = false;

    // schedule
    ScheduleKind schedule_kind = ScheduleKind::cosine;
    int T = 1000;
    SigmaMode sigma_mode = SigmaMode::posterior;
    double beta_start = 1e-4, beta_end = 0.02;  // linear schedule only

    DenoiserConfig denoiser;  // mode is forced to match `mode`
    PhasicConfig phasic;      // T is forced to match `T`
    LossWeights weights;

    // training
    int batch = 8;
    double lr = 1e-4;
    int pretrain_iters = 3000;
    int warmup_iters = 1000;
    int adapt_iters = 2000;
    int metrics_every = 200;

    SamplerConfig sampler;
    int sample_count = 8;  // sources translated by the sample subcommand

    LabConfig lab;

    bool seed_set = false;
    std::uint64_t seed = 0;

    NoiseSchedule make_schedule() const {
        return schedule_kind == ScheduleKind::cosine
                   ? make_cosine_schedule(T, sigma_mode)
                   : make_linear_schedule(T, beta_start, beta_end, sigma_mode);
    }

    void validate() const {
        if (!seed_set) throw std::invalid_argument("RunConfig: seed is mandatory (config file or --seed)");
        if (T < 1) throw std::invalid_argument("RunConfig: T must be >= 1");
        if (n_source < 1 || m_target < 1) throw std::invalid_argument("RunConfig: dataset counts must be >= 1");
        if (m_target > 10 && !allow_large_target)
            throw std::invalid_argument("RunConfig: m_target is limited to 10 without allow_large_target");
        if (batch < 1) throw std::invalid_argument("RunConfig: batch must be >= 1");
        if (!(lr > 0.0)) throw std::invalid_argument("RunConfig: lr must be > 0");
        if (pretrain_iters < 1 || warmup_iters < 0 || adapt_iters < 1)
            throw std::invalid_argument("RunConfig: iteration counts must be positive (warmup may be 0)");
        if (metrics_every < 1) throw std::invalid_argument("RunConfig: metrics_every must be >= 1");
        if (sample_count < 1) throw std::invalid_argument("RunConfig: sample_count must be >= 1");
        if (mode == DataMode::image) {
            if (dataset_kind != DatasetKind::shapes)
                throw std::invalid_argument("RunConfig: image mode requires the shapes dataset");
            if (denoiser.c_in != 1 || denoiser.h != 16 || denoiser.w != 16)
                throw std::invalid_argument("RunConfig: shapes images are 1 x 16 x 16");
        } else {
            if (dataset_kind != DatasetKind::moons)
                throw std::invalid_argument("RunConfig: point mode requires the moons dataset");
            if (denoiser.dim != 2) throw std::invalid_argument("RunConfig: moons points are 2-D");
        }
        if (denoiser.mode != mode) throw std::invalid_argument("RunConfig: denoiser mode must match run mode");
        if (phasic.T != T) throw std::invalid_argument("RunConfig: phasic horizon must match schedule T");
        denoiser.validate();
        phasic.validate();
        weights.validate();
        sampler.validate(T);
        // The library accepts t_stop > M as "guidance disabled"; a config file
        // asking for that is almost certainly a typo, so reject it here.
        if (sampler.t_stop > sampler.M)
            throw std::invalid_argument("RunConfig: t_stop must not exceed M (empty guidance window)");
        lab.validate();
    }
};

namespace detail {

inline void check_keys(const nlohmann::json& j, const std::string& section,
                       std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw std::invalid_argument("config: section '" + section + "' must be an object");
    for (const auto& item : j.items()) {
        bool known = false;
        for (const char* k : allowed)
            if (item.key() == k) {
                known = true;
                break;
            }
        if (!known)
            throw std::invalid_argument("config: unknown key '" + item.key() + "' in section '" + section + "'");
    }
}

}  // namespace detail

inline nlohmann::json to_json(const RunConfig& c) {
    nlohmann::json j;
    j["mode"] = data_mode_name(c.mode);
    if (c.seed_set) j["seed"] = c.seed;
    j["dataset"] = {{"kind", dataset_kind_name(c.dataset_kind)},
                    {"n_source", c.n_source},
                    {"m_target", c.m_target},
                    {"allow_large_target", c.allow_large_target}};
    j["schedule"] = {{"kind", schedule_kind_name(c.schedule_kind)},
                     {"T", c.T},
                     {"sigma", sigma_mode_name(c.sigma_mode)},
                     {"beta_start", c.beta_start},
                     {"beta_end", c.beta_end}};
    j["denoiser"] = {{"c_in", c.denoiser.c_in}, {"h", c.denoiser.h},           {"w", c.denoiser.w},
                     {"w1", c.denoiser.w1},     {"w2", c.denoiser.w2},         {"dim", c.denoiser.dim},
                     {"hidden", c.denoiser.hidden}, {"temb_dim", c.denoiser.temb_dim}};
    j["phasic"] = {{"T_s", c.phasic.T_s}, {"alpha_w", c.phasic.alpha_w}};
    j["weights"] = {{"lambda_ddc", c.weights.lambda_ddc}, {"lambda_style", c.weights.lambda_style}};
    j["train"] = {{"batch", c.batch},
                  {"lr", c.lr},
                  {"pretrain_iters", c.pretrain_iters},
                  {"warmup_iters", c.warmup_iters},
                  {"adapt_iters", c.adapt_iters},
                  {"metrics_every", c.metrics_every}};
    j["sampler"] = {{"mode", sample_mode_name(c.sampler.mode)},
                    {"M", c.sampler.M},
                    {"t_stop", c.sampler.t_stop},
                    {"K", c.sampler.K},
                    {"N", c.sampler.N},
                    {"count", c.sample_count}};
    j["lab"] = {{"source", source_kind_name(c.lab.source)},
                {"n_source", c.lab.n_source},
                {"m_target", c.lab.m_target},
                {"shift_x", c.lab.transform.shift_x},
                {"shift_y", c.lab.transform.shift_y},
                {"rotate_deg", c.lab.transform.rotate_deg},
                {"scale", c.lab.transform.scale},
                {"loss", lab_loss_name(c.lab.loss)},
                {"init", lab_init_name(c.lab.init)},
                {"init_rotation_deg", c.lab.init_rotation_deg},
                {"steps", c.lab.steps},
                {"lr", c.lab.lr},
                {"center_weight", c.lab.center_weight}};
    return j;
}

inline RunConfig run_config_from_json(const nlohmann::json& j) {
    RunConfig c;
    detail::check_keys(j, "(root)", {"mode", "seed", "dataset", "schedule", "denoiser", "phasic", "weights",
                                     "train", "sampler", "lab"});
    if (j.contains("mode")) c.mode = parse_data_mode(j.at("mode").get<std::string>());
    if (j.contains("seed")) {
        c.seed = j.at("seed").get<std::uint64_t>();
        c.seed_set = true;
    }
    if (j.contains("dataset")) {
        const auto& d = j.at("dataset");
        detail::check_keys(d, "dataset", {"kind", "n_source", "m_target", "allow_large_target"});
        if (d.contains("kind")) c.dataset_kind = parse_dataset_kind(d.at("kind").get<std::string>());
        if (d.contains("n_source")) c.n_source = d.at("n_source").get<int>();
        if (d.contains("m_target")) c.m_target = d.at("m_target").get<int>();
        if (d.contains("allow_large_target")) c.allow_large_target = d.at("allow_large_target").get<bool>();
    }
    if (j.contains("schedule")) {
        const auto& s = j.at("schedule");
        detail::check_keys(s, "schedule", {"kind", "T", "sigma", "beta_start", "beta_end"});
        if (s.contains("kind")) c.schedule_kind = parse_schedule_kind(s.at("kind").get<std::string>());
        if (s.contains("T")) c.T = s.at("T").get<int>();
        if (s.contains("sigma")) c.sigma_mode = parse_sigma_mode(s.at("sigma").get<std::string>());
        if (s.contains("beta_start")) c.beta_start = s.at("beta_start").get<double>();
        if (s.contains("beta_end")) c.beta_end = s.at("beta_end").get<double>();
    }
    if (j.contains("denoiser")) {
        const auto& d = j.at("denoiser");
        detail::check_keys(d, "denoiser", {"c_in", "h", "w", "w1", "w2", "dim", "hidden", "temb_dim"});
        if (d.contains("c_in")) c.denoiser.c_in = d.at("c_in").get<int>();
        if (d.contains("h")) c.denoiser.h = d.at("h").get<int>();
        if (d.contains("w")) c.denoiser.w = d.at("w").get<int>();
        if (d.contains("w1")) c.denoiser.w1 = d.at("w1").get<int>();
        if (d.contains("w2")) c.denoiser.w2 = d.at("w2").get<int>();
        if (d.contains("dim")) c.denoiser.dim = d.at("dim").get<int>();
        if (d.contains("hidden")) c.denoiser.hidden = d.at("hidden").get<int>();
        if (d.contains("temb_dim")) c.denoiser.temb_dim = d.at("temb_dim").get<int>();
    }
    if (j.contains("phasic")) {
        const auto& p = j.at("phasic");
        detail::check_keys(p, "phasic", {"T_s", "alpha_w"});
        if (p.contains("T_s")) c.phasic.T_s = p.at("T_s").get<double>();
        if (p.contains("alpha_w")) c.phasic.alpha_w = p.at("alpha_w").get<double>();
    }
    if (j.contains("weights")) {
        const auto& w = j.at("weights");
        detail::check_keys(w, "weights", {"lambda_ddc", "lambda_style"});
        if (w.contains("lambda_ddc")) c.weights.lambda_ddc = w.at("lambda_ddc").get<double>();
        if (w.contains("lambda_style")) c.weights.lambda_style = w.at("lambda_style").get<double>();
    }
    if (j.contains("train")) {
        const auto& t = j.at("train");
        detail::check_keys(t, "train",
                           {"batch", "lr", "pretrain_iters", "warmup_iters", "adapt_iters", "metrics_every"});
        if (t.contains("batch")) c.batch = t.at("batch").get<int>();
        if (t.contains("lr")) c.lr = t.at("lr").get<double>();
        if (t.contains("pretrain_iters")) c.pretrain_iters = t.at("pretrain_iters").get<int>();
        if (t.contains("warmup_iters")) c.warmup_iters = t.at("warmup_iters").get<int>();
        if (t.contains("adapt_iters")) c.adapt_iters = t.at("adapt_iters").get<int>();
        if (t.contains("metrics_every")) c.metrics_every = t.at("metrics_every").get<int>();
    }
    if (j.contains("sampler")) {
        const auto& s = j.at("sampler");
        detail::check_keys(s, "sampler", {"mode", "M", "t_stop", "K", "N", "count"});
        if (s.contains("mode")) c.sampler.mode = parse_sample_mode(s.at("mode").get<std::string>());
        if (s.contains("M")) c.sampler.M = s.at("M").get<int>();
        if (s.contains("t_stop")) c.sampler.t_stop = s.at("t_stop").get<int>();
        if (s.contains("K")) c.sampler.K = s.at("K").get<int>();
        if (s.contains("N")) c.sampler.N = s.at("N").get<int>();
        if (s.contains("count")) c.sample_count = s.at("count").get<int>();
    }
    if (j.contains("lab")) {
        const auto& l = j.at("lab");
        detail::check_keys(l, "lab",
                           {"source", "n_source", "m_target", "shift_x", "shift_y", "rotate_deg", "scale",
                            "loss", "init", "init_rotation_deg", "steps", "lr", "center_weight"});
        if (l.contains("source")) c.lab.source = parse_source_kind(l.at("source").get<std::string>());
        if (l.contains("n_source")) c.lab.n_source = l.at("n_source").get<int>();
        if (l.contains("m_target")) c.lab.m_target = l.at("m_target").get<int>();
        if (l.contains("shift_x")) c.lab.transform.shift_x = l.at("shift_x").get<double>();
        if (l.contains("shift_y")) c.lab.transform.shift_y = l.at("shift_y").get<double>();
        if (l.contains("rotate_deg")) c.lab.transform.rotate_deg = l.at("rotate_deg").get<double>();
        if (l.contains("scale")) c.lab.transform.scale = l.at("scale").get<double>();
        if (l.contains("loss")) c.lab.loss = parse_lab_loss(l.at("loss").get<std::string>());
        if (l.contains("init")) c.lab.init = parse_lab_init(l.at("init").get<std::string>());
        if (l.contains("init_rotation_deg")) c.lab.init_rotation_deg = l.at("init_rotation_deg").get<double>();
        if (l.contains("steps")) c.lab.steps = l.at("steps").get<int>();
        if (l.contains("lr")) c.lab.lr = l.at("lr").get<double>();
        if (l.contains("center_weight")) c.lab.center_weight = l.at("center_weight").get<double>();
    }
    c.denoiser.mode = c.mode;
    c.phasic.T = c.T;
    if (c.seed_set) c.lab.seed = c.seed;
    return c;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config file: " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument("config: " + path + " is not valid JSON: " + e.what());
    }
    return run_config_from_json(j);
}

}  // namespace fsdm

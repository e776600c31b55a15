// Command-line front end: dataset generation, the pretrain/adapt training
// stages, guided sampling, the 2-D geometry lab, and the proxy metric panel.
// Every subcommand reads a JSON config and an optional --seed override; all
// run state flows through flags and the config file.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fsdm/checkpoint.hpp"
#include "fsdm/config.hpp"
#include "fsdm/dataset.hpp"
#include "fsdm/geolab.hpp"
#include "fsdm/io.hpp"
#include "fsdm/metrics.hpp"
#include "fsdm/train.hpp"

namespace {

using namespace fsdm;

std::string item_path(const std::string& dir, const std::string& stem, int i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s_%04d.pgm", stem.c_str(), i);
    return dir + "/" + buf;
}

PointSet items_to_points(const std::vector<Tensor>& items) {
    PointSet ps(2);
    for (const Tensor& t : items) ps.add({t[0], t[1]});
    return ps;
}

void write_items(const RunConfig& cfg, const std::vector<Tensor>& items, const std::string& dir,
                 const std::string& stem) {
    if (cfg.mode == DataMode::image) {
        for (std::size_t i = 0; i < items.size(); ++i)
            write_pgm(item_path(dir, stem, static_cast<int>(i)), items[i]);
    } else {
        write_points_csv(dir + "/" + stem + ".csv", items_to_points(items));
    }
}

void require_matching_architecture(const Checkpoint& ck, const RunConfig& cfg) {
    if (to_json(ck.cfg)["denoiser"] != to_json(cfg)["denoiser"] || ck.cfg.mode != cfg.mode)
        throw std::invalid_argument("checkpoint denoiser architecture does not match the config");
}

DenoiserParams params_from_checkpoint(const Checkpoint& ck) {
    DenoiserParams p;
    p.cfg = ck.cfg.denoiser;
    p.layout = param_layout(p.cfg);
    p.flat = ck.params;
    return p;
}

void write_rows(const std::string& path, const std::vector<MetricsRow>& rows) {
    MetricsWriter w(path);
    for (const MetricsRow& r : rows) w.append(r);
}

double window_mean(const std::vector<double>& v, std::size_t begin, std::size_t count) {
    double acc = 0.0;
    for (std::size_t i = begin; i < begin + count; ++i) acc += v[i];
    return acc / double(count);
}

int cmd_gen_data(const RunConfig& cfg, const std::string& out_dir) {
    auto [src, tgt] =
        gen_toy_domains(cfg.dataset_kind, cfg.seed, cfg.n_source, cfg.m_target, cfg.allow_large_target);
    std::filesystem::create_directories(out_dir);
    write_items(cfg, src.items, out_dir, "source");
    write_items(cfg, tgt.items, out_dir, "target");
    std::printf("source: %zu items, checksum %016llx\n", src.items.size(),
                static_cast<unsigned long long>(dataset_checksum(src)));
    std::printf("target: %zu items, checksum %016llx\n", tgt.items.size(),
                static_cast<unsigned long long>(dataset_checksum(tgt)));
    return 0;
}

int cmd_pretrain(const RunConfig& cfg, const std::string& out_ckpt, std::string metrics_path) {
    auto [src, tgt] =
        gen_toy_domains(cfg.dataset_kind, cfg.seed, cfg.n_source, cfg.m_target, cfg.allow_large_target);
    (void)tgt;
    PretrainResult res = pretrain(cfg, src);

    Checkpoint ck = Checkpoint::fresh(cfg, std::move(res.params.flat));
    ck.has_adam = true;
    ck.adam_step = res.adam.step;
    ck.adam_m = std::move(res.adam.m);
    ck.adam_v = std::move(res.adam.v);
    save_checkpoint(out_ckpt, ck);

    if (metrics_path.empty()) metrics_path = out_ckpt + ".metrics.csv";
    write_rows(metrics_path, res.rows);

    const std::size_t w = std::min<std::size_t>(100, res.loss_per_iter.size());
    std::printf("pretrain: %zu iterations, loss %.6f -> %.6f (first/last window of %zu)\n",
                res.loss_per_iter.size(), window_mean(res.loss_per_iter, 0, w),
                window_mean(res.loss_per_iter, res.loss_per_iter.size() - w, w), w);
    std::printf("checkpoint: %s\nmetrics: %s\n", out_ckpt.c_str(), metrics_path.c_str());
    return 0;
}

int cmd_adapt(const RunConfig& cfg, const std::string& in_ckpt, const std::string& out_ckpt,
              std::string metrics_path) {
    Checkpoint pre = load_checkpoint(in_ckpt);
    require_matching_architecture(pre, cfg);
    auto [src, tgt] =
        gen_toy_domains(cfg.dataset_kind, cfg.seed, cfg.n_source, cfg.m_target, cfg.allow_large_target);
    AdaptResult res = adapt(cfg, params_from_checkpoint(pre), src, tgt);

    Checkpoint ck = Checkpoint::fresh(cfg, std::move(res.params.flat));
    ck.has_adam = true;
    ck.adam_step = res.adam.step;
    ck.adam_m = std::move(res.adam.m);
    ck.adam_v = std::move(res.adam.v);
    save_checkpoint(out_ckpt, ck);

    if (metrics_path.empty()) metrics_path = out_ckpt + ".metrics.csv";
    write_rows(metrics_path, res.rows);

    const std::size_t w = std::min<std::size_t>(100, res.dif_per_iter.size());
    std::printf("adapt: %zu iterations, target diffusion loss %.6f -> %.6f, directional loss %.6f -> %.6f\n",
                res.dif_per_iter.size(), window_mean(res.dif_per_iter, 0, w),
                window_mean(res.dif_per_iter, res.dif_per_iter.size() - w, w),
                window_mean(res.ddc_per_iter, 0, w),
                window_mean(res.ddc_per_iter, res.ddc_per_iter.size() - w, w));
    std::printf("checkpoint: %s\nmetrics: %s\n", out_ckpt.c_str(), metrics_path.c_str());
    return 0;
}

int cmd_sample(const RunConfig& cfg, const std::string& in_ckpt, const std::string& out_dir, int count) {
    Checkpoint ck = load_checkpoint(in_ckpt);
    require_matching_architecture(ck, cfg);
    const DenoiserParams params = params_from_checkpoint(ck);
    auto [src, tgt] =
        gen_toy_domains(cfg.dataset_kind, cfg.seed, cfg.n_source, cfg.m_target, cfg.allow_large_target);
    (void)tgt;
    if (count > static_cast<int>(src.items.size()))
        throw std::invalid_argument("sample: count exceeds the number of source items");

    const NoiseSchedule sched = cfg.make_schedule();
    std::filesystem::create_directories(out_dir);
    std::vector<Tensor> outputs;
    for (int i = 0; i < count; ++i)
        outputs.push_back(translate_source(sched, params, cfg.phasic, cfg.sampler, src.items[i],
                                           derive_seed(cfg.seed, static_cast<std::uint64_t>(i))));
    write_items(cfg, outputs, out_dir, "sample");
    std::printf("sample: %d %s translations (%s mode) -> %s\n", count,
                cfg.mode == DataMode::image ? "image" : "point", sample_mode_name(cfg.sampler.mode),
                out_dir.c_str());
    return 0;
}

int cmd_geolab(const RunConfig& cfg, const std::string& out_csv, const std::string& trajectory_csv) {
    GeometryReport rep = run_adaptation_2d(cfg.lab);
    std::ofstream f = open_out(out_csv);
    f << "arm,init,seed,steps,final_loss,center_drift,rotation_deg,rotation_degenerate,"
         "structure_corr,structure_defined,scale_ratio\n";
    f << lab_loss_name(cfg.lab.loss) << "," << lab_init_name(cfg.lab.init) << "," << cfg.lab.seed << ","
      << cfg.lab.steps << "," << fmt_double(rep.loss_per_iter.back()) << ","
      << fmt_double(rep.center_drift) << "," << fmt_double(rep.rotation_deg) << ","
      << (rep.rotation_degenerate ? 1 : 0) << "," << fmt_double(rep.structure_corr) << ","
      << (rep.structure_defined ? 1 : 0) << "," << fmt_double(rep.scale_ratio) << "\n";
    if (!f) throw std::runtime_error("write failed: " + out_csv);
    if (!trajectory_csv.empty()) {
        std::ofstream tf = open_out(trajectory_csv);
        tf << "iteration,loss\n";
        for (std::size_t i = 0; i < rep.loss_per_iter.size(); ++i)
            tf << i << "," << fmt_double(rep.loss_per_iter[i]) << "\n";
        if (!tf) throw std::runtime_error("write failed: " + trajectory_csv);
    }
    std::printf("geolab: arm %s, center_drift %.6f, rotation %.3f deg, structure_corr %.6f -> %s\n",
                lab_loss_name(cfg.lab.loss), rep.center_drift, rep.rotation_deg, rep.structure_corr,
                out_csv.c_str());
    return 0;
}

std::vector<Tensor> read_generated(const RunConfig& cfg, const std::string& dir) {
    std::vector<Tensor> out;
    if (cfg.mode == DataMode::image) {
        std::vector<std::string> paths;
        for (const auto& entry : std::filesystem::directory_iterator(dir))
            if (entry.path().extension() == ".pgm") paths.push_back(entry.path().string());
        std::sort(paths.begin(), paths.end());
        for (const std::string& p : paths) out.push_back(read_pgm(p));
    } else {
        PointSet ps = read_points_csv(dir + "/sample.csv");
        for (int i = 0; i < ps.size(); ++i) out.push_back(Tensor({2}, {ps.coord(i, 0), ps.coord(i, 1)}));
    }
    return out;
}

int cmd_metrics(const RunConfig& cfg, const std::string& in_ckpt, const std::string& generated_dir,
                const std::string& out_csv) {
    auto [src, tgt] =
        gen_toy_domains(cfg.dataset_kind, cfg.seed, cfg.n_source, cfg.m_target, cfg.allow_large_target);
    std::vector<Tensor> generated = read_generated(cfg, generated_dir);
    if (generated.size() < 2)
        throw std::invalid_argument("metrics: need at least 2 generated samples in " + generated_dir);
    if (generated.size() > src.items.size())
        throw std::invalid_argument("metrics: more generated samples than sources to pair them with");
    const std::vector<Tensor> sources(src.items.begin(), src.items.begin() + generated.size());

    // Images are embedded with the checkpoint's frozen bottleneck features —
    // the same space the adaptation's direction vector lives in. Point runs
    // stay in plain 2-D coordinates so the geometry columns read directly.
    std::unique_ptr<FeatureEncoder> enc;
    if (cfg.mode == DataMode::image) {
        Checkpoint ck = load_checkpoint(in_ckpt);
        require_matching_architecture(ck, cfg);
        enc = std::make_unique<FrozenSourceEncoder>(params_from_checkpoint(ck));
    } else {
        enc = std::make_unique<IdentityEncoder>(2);
    }

    MetricsRow row = evaluate_metrics(generated, sources, tgt.items, *enc);
    row.run_id = "metrics";
    row.seed = cfg.seed;
    write_rows(out_csv, {row});
    std::printf("metrics: %zu samples, scs_proxy %.6f, diversity %.6f, center_drift %.6f -> %s\n",
                generated.size(), row.scs_proxy, row.diversity, row.center_drift, out_csv.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"few-shot diffusion domain adaptation toolkit"};
    app.require_subcommand(1);

    std::string config_path, out_path, ckpt_path, metrics_path, generated_dir, trajectory_path, mode_name;
    std::uint64_t seed = 0;
    int count = 0, K = 0, N = 0, t_stop = 0, M = 0;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON run configuration")->required();
        sub->add_option("--seed", seed, "seed override (mandatory here or in the config)");
    };

    CLI::App* gen = app.add_subcommand("gen-data", "generate the procedural source/target datasets");
    add_common(gen);
    gen->add_option("--out", out_path, "output directory")->required();

    CLI::App* pre = app.add_subcommand("pretrain", "train the base denoiser on the source domain");
    add_common(pre);
    pre->add_option("--out", out_path, "output checkpoint path")->required();
    pre->add_option("--metrics", metrics_path, "metrics CSV path (default: <out>.metrics.csv)");

    CLI::App* ada = app.add_subcommand("adapt", "few-shot adaptation from a pretrained checkpoint");
    add_common(ada);
    ada->add_option("--ckpt", ckpt_path, "pretrained checkpoint")->required();
    ada->add_option("--out", out_path, "output checkpoint path")->required();
    ada->add_option("--metrics", metrics_path, "metrics CSV path (default: <out>.metrics.csv)");

    CLI::App* sam = app.add_subcommand("sample", "translate source samples with a trained checkpoint");
    add_common(sam);
    sam->add_option("--ckpt", ckpt_path, "trained checkpoint")->required();
    sam->add_option("--out", out_path, "output directory")->required();
    sam->add_option("--mode", mode_name, "sampling mode: plain | ilvr | icsg");
    sam->add_option("--count", count, "number of source samples to translate");
    sam->add_option("--K", K, "style-enhancement repeats per guided step");
    sam->add_option("--N", N, "low-pass block factor");
    sam->add_option("--t-stop", t_stop, "last guided step");
    sam->add_option("--M", M, "chain start step");

    CLI::App* geo = app.add_subcommand("geolab", "run the 2-D loss-geometry laboratory");
    add_common(geo);
    geo->add_option("--out", out_path, "report CSV path")->required();
    geo->add_option("--trajectory", trajectory_path, "optional per-iteration loss CSV");

    CLI::App* met = app.add_subcommand("metrics", "proxy metric panel over generated samples");
    add_common(met);
    met->add_option("--ckpt", ckpt_path, "checkpoint providing the frozen feature encoder (image mode)");
    met->add_option("--generated", generated_dir, "directory of generated samples")->required();
    met->add_option("--out", out_path, "output CSV path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        CLI::App* sub = app.get_subcommands().front();
        RunConfig cfg = load_run_config(config_path);
        if (sub->count("--seed")) {
            cfg.seed = seed;
            cfg.seed_set = true;
            cfg.lab.seed = seed;
        }
        if (sub == sam) {
            if (sam->count("--mode")) cfg.sampler.mode = parse_sample_mode(mode_name);
            if (sam->count("--K")) cfg.sampler.K = K;
            if (sam->count("--N")) cfg.sampler.N = N;
            if (sam->count("--t-stop")) cfg.sampler.t_stop = t_stop;
            if (sam->count("--M")) cfg.sampler.M = M;
            if (sam->count("--count")) cfg.sample_count = count;
        }
        cfg.validate();

        if (sub == gen) return cmd_gen_data(cfg, out_path);
        if (sub == pre) return cmd_pretrain(cfg, out_path, metrics_path);
        if (sub == ada) return cmd_adapt(cfg, ckpt_path, out_path, metrics_path);
        if (sub == sam) return cmd_sample(cfg, ckpt_path, out_path, cfg.sample_count);
        if (sub == geo) return cmd_geolab(cfg, out_path, trajectory_path);
        if (sub == met) {
            if (cfg.mode == DataMode::image && ckpt_path.empty())
                throw std::invalid_argument("metrics: image mode needs --ckpt for the feature encoder");
            return cmd_metrics(cfg, ckpt_path, generated_dir, out_path);
        }
        throw std::logic_error("unreachable: unknown subcommand");
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}

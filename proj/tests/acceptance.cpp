// End-to-end acceptance gate. Runs seven checks — algebraic identities,
// schedule values, gradient correctness, the 2-D loss-geometry experiment,
// guided-sampling structure preservation, full-scale adaptation behavior, and
// pipeline determinism — and prints one [PASS]/[FAIL] line per criterion.
// Progress goes to stderr; the verdict lines go to stdout. The exit status is
// the number of failed criteria.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "fd_check.hpp"
#include "fsdm/checkpoint.hpp"
#include "fsdm/metrics.hpp"
#include "fsdm/train.hpp"

using namespace fsdm;
namespace fs = std::filesystem;

namespace {

struct Verdict {
    bool ok = true;
    std::string detail;

    void require(bool cond, const std::string& what) {
        if (!cond) {
            ok = false;
            detail += (detail.empty() ? "" : "; ") + what;
        }
    }
};

int g_failures = 0;

void report(int idx, const char* title, const Verdict& v) {
    if (!v.ok) ++g_failures;
    std::printf("[%s] criterion %d (%s)%s%s\n", v.ok ? "PASS" : "FAIL", idx, title,
                v.detail.empty() ? "" : ": ", v.detail.c_str());
    std::fflush(stdout);
}

// Full-scale training-trajectory checks that have no other home: they need
// the multi-minute run this binary already pays for, but they are module
// behavior, not acceptance criteria, so they get their own labeled line.
void report_module(const char* title, const Verdict& v) {
    if (!v.ok) ++g_failures;
    std::printf("[%s] module check (%s)%s%s\n", v.ok ? "PASS" : "FAIL", title,
                v.detail.empty() ? "" : ": ", v.detail.c_str());
    std::fflush(stdout);
}

void progress(const std::string& msg) { std::fprintf(stderr, "... %s\n", msg.c_str()); }

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    double m = 0.0;
    for (std::int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

double l2_diff(const Tensor& a, const Tensor& b) { return std::sqrt(sum_sq_diff(a, b)); }

// ------------------------------------------------------------ criterion 1

Verdict criterion_identities() {
    Verdict v;
    const NoiseSchedule sched = make_cosine_schedule(1000);
    RngStream rng(101, 1);
    const Tensor x0 = gaussian_draw(rng, {1, 16, 16});
    const Tensor eps = gaussian_draw(rng, {1, 16, 16});

    double worst_inv = 0.0;
    for (int t = 1; t <= 1000; ++t) {
        const Tensor xt = forward_sample(sched, x0, t, eps);
        worst_inv = std::max(worst_inv, max_abs_diff(predict_x0(sched, xt, t, eps), x0));
    }
    v.require(worst_inv < 1e-9, "noise-then-invert error " + fmt(worst_inv));

    double worst_lin = 0.0, worst_idem = 0.0;
    for (const Shape& shape : {Shape{1, 16, 16}, Shape{1, 7, 10}}) {
        Tensor a = gaussian_draw(rng, shape), b = gaussian_draw(rng, shape);
        for (int n : {1, 2, 3, 4, 8, 16}) {
            Tensor combo = a;
            for (std::int64_t i = 0; i < combo.numel(); ++i) combo[i] = a[i] + 0.37 * b[i];
            Tensor lhs = low_pass(combo, n);
            Tensor la = low_pass(a, n), lb = low_pass(b, n);
            for (std::int64_t i = 0; i < lhs.numel(); ++i)
                worst_lin = std::max(worst_lin, std::abs(lhs[i] - (la[i] + 0.37 * lb[i])));
            worst_idem = std::max(worst_idem, max_abs_diff(low_pass(la, n), la));
        }
    }
    v.require(worst_lin < 1e-12, "low-pass linearity error " + fmt(worst_lin));
    v.require(worst_idem < 1e-12, "low-pass idempotence error " + fmt(worst_idem));

    // Post-guidance equality: the low-pass of the corrected sample must equal
    // the low-pass of the guide that produced it, for both guided step kinds.
    const NoisePredictor fake = [](const Tensor& x, int) {
        Tensor e = x;
        for (double& val : e.data) val = 0.3 * val - 0.1;
        return e;
    };
    double worst_guid = 0.0;
    for (int t : {1, 2, 500, 1000}) {
        const Tensor x_t = forward_sample(sched, x0, t, eps);
        RngStream step_rng(202, t);
        Tensor y_prev_b = gaussian_draw(step_rng, x0.shape);
        Tensor out = icsg_step(sched, fake, x_t, y_prev_b, t, 4, step_rng);
        worst_guid = std::max(worst_guid, max_abs_diff(low_pass(out, 4), low_pass(y_prev_b, 4)));

        // ilvr draws its guide internally; replay the documented draw order
        RngStream ilvr_rng(303, t);
        RngStream replay = ilvr_rng;
        Tensor out2 = ilvr_step(sched, fake, x_t, x0, t, 4, ilvr_rng);
        if (sched.sigma(t) != 0.0) gaussian_draw(replay, x0.shape);  // step noise z
        Tensor y_prev = t == 1 ? x0 : forward_sample(sched, x0, t - 1, gaussian_draw(replay, x0.shape));
        worst_guid = std::max(worst_guid, max_abs_diff(low_pass(out2, 4), low_pass(y_prev, 4)));
    }
    v.require(worst_guid < 1e-12, "post-guidance low-pass mismatch " + fmt(worst_guid));
    if (v.ok)
        v.detail = "inversion " + fmt(worst_inv) + ", linearity " + fmt(worst_lin) + ", guidance " +
                   fmt(worst_guid);
    return v;
}

// ------------------------------------------------------------ criterion 2

Verdict criterion_schedule_gates() {
    Verdict v;
    PhasicConfig ph;  // T = 1000, T_s = 300, alpha_w = 3
    v.require(std::abs(phasic_gate(ph.T_s, ph) - 0.5) <= 1e-12, "m(T_s) != 0.5");
    v.require(phasic_weight(0.0, ph) == 1.0, "w(0) != 1");
    v.require(phasic_weight(double(ph.T), ph) == 0.0, "w(T) != 0");

    const NoiseSchedule sched = make_cosine_schedule(1000);
    bool decreasing = sched.alpha_bar(1) < 1.0;
    for (int t = 2; t <= sched.T; ++t)
        if (!(sched.alpha_bar(t) < sched.alpha_bar(t - 1))) decreasing = false;
    v.require(decreasing, "alpha-bar not strictly decreasing");

    LossWeights weights;  // lambda_ddc = lambda_style = 1
    bool in_range = true;
    for (int t = 0; t <= ph.T; ++t) {
        const double m = phasic_gate(double(t), ph), w = phasic_weight(double(t), ph);
        for (double c : {m * (1.0 - w) * weights.lambda_ddc, m * (1.0 - w) * weights.lambda_style, w})
            if (!(c >= 0.0 && c <= 1.0)) in_range = false;
    }
    v.require(in_range, "a combination weight left [0,1]");
    if (v.ok) v.detail = "m(300) = 0.5, w(0) = 1, w(T) = 0, alpha-bar monotone, weights in [0,1]";
    return v;
}

// ------------------------------------------------------------ criterion 3

Verdict criterion_gradients() {
    Verdict v;
    RunConfig cfg;
    cfg.seed = 5;
    cfg.seed_set = true;
    cfg.T = 60;
    cfg.phasic.T = 60;
    cfg.phasic.T_s = 18;
    cfg.denoiser.w1 = 4;
    cfg.denoiser.w2 = 8;
    cfg.denoiser.temb_dim = 8;
    const NoiseSchedule sched = cfg.make_schedule();
    auto [src, tgt] = gen_toy_domains(DatasetKind::shapes, 5, 8, 4);

    DenoiserParams params = init_params(cfg.denoiser, cfg.seed);
    const FrozenSourceEncoder enc(init_params(cfg.denoiser, 99));  // frozen, != trained
    const RandomConvEncoder style(cfg.denoiser.c_in, cfg.seed);
    const Tensor direction = direction_vector(src.items, tgt.items, enc);
    const auto tgt_grams = target_style_grams(tgt.items, style);

    const int t = 45;  // both gates clearly open at this step
    RngStream draw(404, 1);
    const Tensor x0_target = tgt.items[0];
    const Tensor xa = src.items[0];
    const Tensor eps_t = gaussian_draw(draw, x0_target.shape);
    const Tensor eps_s = gaussian_draw(draw, xa.shape);
    const Tensor z_t = gaussian_draw(draw, cfg.denoiser.bottleneck_shape());
    const Tensor z_s = gaussian_draw(draw, cfg.denoiser.bottleneck_shape());
    const Tensor target_emb = add(enc.embed(xa), direction);
    const Tensor xt_target = forward_sample(sched, x0_target, t, eps_t);
    const Tensor xt_source = forward_sample(sched, xa, t, eps_s);
    const double ab = sched.alpha_bar(t);
    const double inv = 1.0 / std::sqrt(ab);

    // graph builders; id < 0 selects the plain (content-off) path
    auto dif_node = [&](Tape& tape, const BoundParams& bp, bool fused) {
        int content = -1;
        if (fused) content = encode_graph(tape, cfg.denoiser, bp, tape.leaf(x0_target, false)).bottleneck;
        PredictNodes pn =
            predict_noise_graph(tape, cfg.denoiser, bp, tape.leaf(xt_target, false), t, content, z_t, cfg.phasic);
        return diffusion_loss_node(tape, pn.eps, eps_t);
    };
    auto x0ab_node = [&](Tape& tape, const BoundParams& bp) {
        const int xt_id = tape.leaf(xt_source, false);
        const int content = encode_graph(tape, cfg.denoiser, bp, tape.leaf(xa, false)).bottleneck;
        PredictNodes pn = predict_noise_graph(tape, cfg.denoiser, bp, xt_id, t, content, z_s, cfg.phasic);
        return ops::blend(tape, xt_id, pn.eps, inv, -std::sqrt(1.0 - ab) * inv);
    };
    using Builder = std::function<int(Tape&, const BoundParams&)>;
    const std::vector<std::pair<const char*, Builder>> heads = {
        {"dif/plain", [&](Tape& tp, const BoundParams& bp) { return dif_node(tp, bp, false); }},
        {"dif/fused", [&](Tape& tp, const BoundParams& bp) { return dif_node(tp, bp, true); }},
        {"ddc", [&](Tape& tp, const BoundParams& bp) { return ddc_loss_node(tp, x0ab_node(tp, bp), target_emb, enc); }},
        {"style",
         [&](Tape& tp, const BoundParams& bp) {
             return style_loss_node(tp, x0ab_node(tp, bp), tgt_grams, style, cfg.weights, false);
         }},
        {"total", [&](Tape& tp, const BoundParams& bp) {
             const int dif = dif_node(tp, bp, false);
             const int ddc = ddc_loss_node(tp, x0ab_node(tp, bp), target_emb, enc);
             const int sty = style_loss_node(tp, x0ab_node(tp, bp), tgt_grams, style, cfg.weights, false);
             return total_loss_node(tp, double(t), ddc, sty, dif, cfg.phasic, cfg.weights);
         }}};

    RngStream pick(505, 1);
    int total_checked = 0;
    double worst = 0.0;
    std::string worst_head;
    for (const auto& [name, build] : heads) {
        std::vector<double> analytic;
        {
            Tape tape;
            BoundParams bp = bind_params(tape, params, true);
            const int node = build(tape, bp);
            tape.backward(node);
            analytic = collect_param_grads(tape, bp);
        }
        auto eval = [&]() {
            Tape tape;
            BoundParams bp = bind_params(tape, params, true);
            return tape.val(build(tape, bp))[0];
        };
        fdtest::FdReport rep = fdtest::check_grads(params.flat.data(),
                                                   static_cast<std::int64_t>(params.flat.size()), eval,
                                                   analytic, 30, pick);
        total_checked += rep.checked;
        if (rep.worst > worst) {
            worst = rep.worst;
            worst_head = name;
        }
        progress(std::string("gradient head ") + name + ": worst score " + fmt(rep.worst));
    }
    v.require(total_checked >= 100, "only " + std::to_string(total_checked) + " coordinates checked");
    v.require(worst <= 1.0, "worst relative-error score " + fmt(worst) + " on head " + worst_head);
    if (v.ok)
        v.detail = std::to_string(total_checked) + " coordinates over 5 heads, worst score " + fmt(worst) +
                   " (" + worst_head + ")";
    return v;
}

// ------------------------------------------------------------ criterion 4

PointSet rotate_set(const PointSet& p, double deg, double cx, double cy) {
    const double rad = deg * M_PI / 180.0;
    const double c = std::cos(rad), s = std::sin(rad);
    PointSet out(2);
    for (int i = 0; i < p.size(); ++i) {
        const double x = p.coord(i, 0) - cx, y = p.coord(i, 1) - cy;
        out.add({c * x - s * y + cx, s * x + c * y + cy});
    }
    return out;
}

Verdict criterion_loss_geometry() {
    Verdict v;
    RngStream rng(606, 1);
    RngStream src_rng = rng.child(1), tgt_rng = rng.child(2);
    const PointSet src = generate_source(SourceKind::two_moons, 64, src_rng);
    TargetTransform tf;  // shift (3, -2)
    const PointSet target = apply_transform(generate_source(SourceKind::two_moons, 10, tgt_rng), tf);

    // pairwise arm: invariant under rotations about the origin
    const LabObjective pairwise(src, target, LabLoss::pairwise_cos, 0.0);
    const double base = pairwise.eval(src, nullptr);
    double worst_delta = 0.0;
    for (int k = 0; k < 20; ++k) {
        const double deg = 360.0 * rng.next_unit();
        worst_delta = std::max(worst_delta,
                               std::abs(pairwise.eval(rotate_set(src, deg, 0.0, 0.0), nullptr) - base));
    }
    v.require(worst_delta < 1e-12, "pairwise loss moved " + fmt(worst_delta) + " under rotation");

    // ddc arm: strictly increasing away from its minimizer under rotation
    const LabObjective ddc(src, target, LabLoss::ddc, 0.0);
    PointSet opt(2);
    const std::vector<double>& w = ddc.direction();
    for (int i = 0; i < src.size(); ++i) opt.add({src.coord(i, 0) + w[0], src.coord(i, 1) + w[1]});
    const double at_opt = ddc.eval(opt, nullptr);
    std::vector<double> c = opt.centroid();
    bool strictly_up = true;
    double min_gap = 1e30;
    for (int k = 0; k < 20; ++k) {
        const double deg = k < 2 ? (k == 0 ? 1.0 : -1.0) : 2.0 + 356.0 * rng.next_unit();
        const double gap = ddc.eval(rotate_set(opt, deg, c[0], c[1]), nullptr) - at_opt;
        min_gap = std::min(min_gap, gap);
        if (gap <= 1e-9) strictly_up = false;
    }
    v.require(strictly_up, "ddc loss failed to rise under a rotation (min gap " + fmt(min_gap) + ")");

    // the lab's ddc arm lands on the translated source
    LabConfig lab;  // two-moons 256/10, ddc arm, source init, 2000 steps, seed 7
    const GeometryReport rep = run_adaptation_2d(lab);
    v.require(rep.center_drift < 0.05, "ddc arm center_drift " + fmt(rep.center_drift));
    v.require(!rep.rotation_degenerate && rep.rotation_deg < 5.0,
              "ddc arm rotation " + fmt(rep.rotation_deg) + " deg");
    v.require(rep.structure_defined && rep.structure_corr > 0.99,
              "ddc arm structure_corr " + fmt(rep.structure_corr));

    // the pairwise+center arm cannot undo a planted 45-degree rotation
    LabConfig spun = lab;
    spun.loss = LabLoss::pairwise_cos;
    spun.init = LabInit::rotated_optimum;
    const GeometryReport rep2 = run_adaptation_2d(spun);
    v.require(rep2.rotation_deg > 30.0, "pairwise arm rotation fell to " + fmt(rep2.rotation_deg) + " deg");

    if (v.ok)
        v.detail = "invariance delta " + fmt(worst_delta) + "; ddc arm drift " + fmt(rep.center_drift) +
                   ", rot " + fmt(rep.rotation_deg) + " deg, corr " + fmt(rep.structure_corr) +
                   "; pairwise arm keeps " + fmt(rep2.rotation_deg) + " deg";
    return v;
}

// ------------------------------------------------------------ criteria 5 & 6 (share the trained models)

struct TrainedModels {
    RunConfig cfg;
    DomainDataset source, target;
    PretrainResult pre;
    AdaptResult ddc;      // full objective
    AdaptResult overfit;  // lambda_ddc = lambda_style = 0
};

TrainedModels train_full_scale() {
    TrainedModels m;
    m.cfg.seed = 7;
    m.cfg.seed_set = true;  // every other knob at its default full-scale value
    // Guidance factors for the 16x16 glyph scale, mirroring configs/shapes.json:
    // a factor-4 projection leaves a 4x4 grid of guided block means, and
    // guiding down to step 200 matches the lower of the two documented stop steps.
    m.cfg.sampler.N = 4;
    m.cfg.sampler.t_stop = 200;
    auto pair = gen_toy_domains(m.cfg.dataset_kind, m.cfg.seed, m.cfg.n_source, m.cfg.m_target);
    m.source = std::move(pair.first);
    m.target = std::move(pair.second);

    const auto t0 = std::chrono::steady_clock::now();
    progress("pretraining " + std::to_string(m.cfg.pretrain_iters) + "+" +
             std::to_string(m.cfg.warmup_iters) + " iterations on " +
             std::to_string(m.source.items.size()) + " glyphs");
    m.pre = pretrain(m.cfg, m.source);

    progress("adapting with the full objective (" + std::to_string(m.cfg.adapt_iters) + " iterations)");
    m.ddc = adapt(m.cfg, m.pre.params, m.source, m.target);

    progress("adapting the gate-off overfit baseline");
    RunConfig ov = m.cfg;
    ov.weights.lambda_ddc = 0.0;
    ov.weights.lambda_style = 0.0;
    m.overfit = adapt(ov, m.pre.params, m.source, m.target);

    const auto dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    progress("training done in " + fmt(dt) + " s");
    return m;
}

Verdict criterion_structure_guidance(const TrainedModels& m, std::vector<Tensor>& icsg_out) {
    Verdict v;
    const NoiseSchedule sched = m.cfg.make_schedule();
    SamplerConfig plain_cfg = m.cfg.sampler;
    plain_cfg.mode = SampleMode::plain;

    const int n = 32;
    double mean_icsg = 0.0, mean_plain = 0.0;
    std::vector<Tensor> icsg_set, plain_set, sources;
    for (int i = 0; i < n; ++i) {
        const Tensor& x_src = m.source.items[std::size_t(i)];
        const std::uint64_t s = derive_seed(m.cfg.seed, std::uint64_t(i));
        Tensor a = translate_source(sched, m.ddc.params, m.cfg.phasic, m.cfg.sampler, x_src, s);
        Tensor b = translate_source(sched, m.ddc.params, m.cfg.phasic, plain_cfg, x_src, s);
        // The structural measure is pinned to a factor-8 projection regardless
        // of the guidance factor the sampler itself runs with.
        mean_icsg += l2_diff(low_pass(a, 8), low_pass(x_src, 8)) / n;
        mean_plain += l2_diff(low_pass(b, 8), low_pass(x_src, 8)) / n;
        icsg_set.push_back(std::move(a));
        plain_set.push_back(std::move(b));
        sources.push_back(x_src);
        if ((i + 1) % 8 == 0) progress("sampled " + std::to_string(i + 1) + "/" + std::to_string(n) + " pairs");
    }
    const double scs_icsg = scs_proxy(icsg_set, sources);
    const double scs_plain = scs_proxy(plain_set, sources);
    v.require(mean_icsg < mean_plain, "low-pass distance icsg " + fmt(mean_icsg) + " !< plain " + fmt(mean_plain));
    v.require(scs_icsg > scs_plain, "scs icsg " + fmt(scs_icsg) + " !> plain " + fmt(scs_plain));
    v.detail = "low-pass distance " + fmt(mean_icsg) + " (icsg) vs " + fmt(mean_plain) + " (plain); scs " +
               fmt(scs_icsg) + " vs " + fmt(scs_plain);
    icsg_out = std::move(icsg_set);
    return v;
}

Verdict criterion_adaptation(const TrainedModels& m, const std::vector<Tensor>& icsg_samples) {
    Verdict v;
    const std::vector<double>& dif = m.ddc.dif_per_iter;
    double first = 0.0, last = 0.0;
    for (int i = 0; i < 100; ++i) {
        first += dif[std::size_t(i)] / 100.0;
        last += dif[dif.size() - 100 + std::size_t(i)] / 100.0;
    }
    v.require(last <= 0.5 * first,
              "target loss fell only " + fmt(first) + " -> " + fmt(last) + " (ratio " + fmt(last / first) + ")");

    // sample the overfit baseline on the same seeds, embed with the frozen
    // pretrained encoder, and compare the panel metrics
    const NoiseSchedule sched = m.cfg.make_schedule();
    const int n = 16;
    std::vector<Tensor> gen_ddc(icsg_samples.begin(), icsg_samples.begin() + n);
    std::vector<Tensor> gen_ov, sources;
    for (int i = 0; i < n; ++i) {
        const Tensor& x_src = m.source.items[std::size_t(i)];
        gen_ov.push_back(translate_source(sched, m.overfit.params, m.cfg.phasic, m.cfg.sampler, x_src,
                                          derive_seed(m.cfg.seed, std::uint64_t(i))));
        sources.push_back(x_src);
    }
    progress("sampled the overfit baseline");
    const FrozenSourceEncoder enc(m.pre.params);
    const MetricsRow row_ddc = evaluate_metrics(gen_ddc, sources, m.target.items, enc);
    const MetricsRow row_ov = evaluate_metrics(gen_ov, sources, m.target.items, enc);

    v.require(row_ddc.diversity > row_ov.diversity,
              "diversity " + fmt(row_ddc.diversity) + " !> overfit " + fmt(row_ov.diversity));
    const double deficit = 1.0 - row_ov.structure_corr;
    v.require(row_ddc.center_drift < deficit,
              "center_drift " + fmt(row_ddc.center_drift) + " !< overfit structure deficit " + fmt(deficit));
    v.detail = "loss " + fmt(first) + " -> " + fmt(last) + "; diversity " + fmt(row_ddc.diversity) +
               " vs " + fmt(row_ov.diversity) + "; drift " + fmt(row_ddc.center_drift) +
               " vs deficit " + fmt(deficit);
    return v;
}

double window(const std::vector<double>& v, std::size_t begin, std::size_t count) {
    double acc = 0.0;
    for (std::size_t i = begin; i < begin + count; ++i) acc += v[i];
    return acc / double(count);
}

Verdict module_trajectories(const TrainedModels& m) {
    Verdict v;
    const double p_first = window(m.pre.loss_per_iter, 0, 100);
    const double p_last = window(m.pre.loss_per_iter, m.pre.loss_per_iter.size() - 100, 100);
    v.require(p_last < 0.5 * p_first,
              "pretrain loss " + fmt(p_first) + " -> " + fmt(p_last) + " missed the halving mark");

    const std::vector<double>& ddc = m.ddc.ddc_per_iter;
    const double d_first = window(ddc, 0, 100);
    const double d_last = window(ddc, ddc.size() - 100, 100);
    v.require(d_last <= 0.7 * d_first,
              "ddc loss " + fmt(d_first) + " -> " + fmt(d_last) + " fell less than 30%");
    if (v.ok)
        v.detail = "pretrain " + fmt(p_first) + " -> " + fmt(p_last) + "; ddc " + fmt(d_first) + " -> " +
                   fmt(d_last);
    return v;
}

// ------------------------------------------------------------ criterion 7

int run_cli(const std::string& args) {
    const std::string cmd = "\"" FSDM_CLI_PATH "\" " + args + " >/dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

bool run_pipeline(const fs::path& dir, std::string& err) {
    const std::string cfg = std::string(FSDM_CONFIG_DIR) + "/smoke.json";
    const auto q = [](const fs::path& p) { return "\"" + p.string() + "\""; };
    const std::vector<std::pair<const char*, std::string>> steps = {
        {"gen-data", "gen-data --config " + cfg + " --out " + q(dir / "data")},
        {"pretrain", "pretrain --config " + cfg + " --out " + q(dir / "pre.ckpt")},
        {"adapt", "adapt --config " + cfg + " --ckpt " + q(dir / "pre.ckpt") + " --out " + q(dir / "ada.ckpt")},
        {"sample", "sample --config " + cfg + " --ckpt " + q(dir / "ada.ckpt") + " --out " + q(dir / "samples")},
        {"metrics", "metrics --config " + cfg + " --ckpt " + q(dir / "ada.ckpt") + " --generated " +
                        q(dir / "samples") + " --out " + q(dir / "metrics.csv")}};
    for (const auto& [name, args] : steps)
        if (const int rc = run_cli(args); rc != 0) {
            err = std::string(name) + " exited with " + std::to_string(rc);
            return false;
        }
    return true;
}

Verdict criterion_determinism() {
    Verdict v;
    const fs::path base = fs::temp_directory_path();
    const fs::path r1 = base / "fsdm_acceptance_run1", r2 = base / "fsdm_acceptance_run2";
    fs::remove_all(r1);
    fs::remove_all(r2);
    std::string err;
    if (!run_pipeline(r1, err) || !run_pipeline(r2, err)) {
        v.require(false, "pipeline failed: " + err);
        return v;
    }

    std::size_t files = 0;
    std::string mismatch;
    for (const auto& entry : fs::recursive_directory_iterator(r1)) {
        if (!entry.is_regular_file()) continue;
        ++files;
        const fs::path rel = fs::relative(entry.path(), r1);
        const fs::path other = r2 / rel;
        std::ifstream f1(entry.path(), std::ios::binary), f2(other, std::ios::binary);
        if (!f2.good()) {
            mismatch = rel.string() + " missing in the second run";
            break;
        }
        const std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
        const std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
        if (b1 != b2) {
            mismatch = rel.string() + " differs";
            break;
        }
    }
    std::size_t files2 = 0;
    for (const auto& entry : fs::recursive_directory_iterator(r2))
        if (entry.is_regular_file()) ++files2;

    v.require(mismatch.empty(), mismatch);
    v.require(files == files2, "file counts differ: " + std::to_string(files) + " vs " + std::to_string(files2));
    v.require(files >= 36, "unexpectedly few pipeline files: " + std::to_string(files));
    if (v.ok) v.detail = std::to_string(files) + " files byte-identical across both runs";
    return v;
}

}  // namespace

int main() {
    const auto t0 = std::chrono::steady_clock::now();
    report(1, "algebraic identities", criterion_identities());
    report(2, "schedule and gate values", criterion_schedule_gates());
    report(3, "gradient correctness", criterion_gradients());
    report(4, "loss geometry", criterion_loss_geometry());

    const TrainedModels models = train_full_scale();
    std::vector<Tensor> icsg_samples;
    Verdict c5 = criterion_structure_guidance(models, icsg_samples);
    report(5, "structure-guided sampling", c5);
    report(6, "few-shot adaptation", criterion_adaptation(models, icsg_samples));
    report(7, "pipeline determinism", criterion_determinism());
    report_module("training trajectories", module_trajectories(models));

    const auto dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::fprintf(stderr, "acceptance finished in %.1f s with %d failure(s)\n", dt, g_failures);
    return g_failures;
}

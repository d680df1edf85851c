// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.
//
// The continual-ordering, regularizer and determinism checks share one
// pretrained base model (default PretrainConfig), built once at startup.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "gradient_suite.hpp"
#include "museum/checkpoint.hpp"
#include "museum/evaluate.hpp"
#include "museum/metrics.hpp"
#include "museum/pretrain.hpp"
#include "museum/trainer.hpp"

using namespace museum;
using clk = std::chrono::steady_clock;

namespace {

int failures = 0;

double seconds_since(clk::time_point t0) { return std::chrono::duration<double>(clk::now() - t0).count(); }

void report(const std::string& name, bool pass, const std::string& detail) {
    if (!pass) ++failures;
    std::printf("%s  %-28s %s\n", pass ? "PASS" : "FAIL", name.c_str(), detail.c_str());
    std::fflush(stdout);
}

std::string fmt(const char* f, double a) {
    char buf[128];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

double kl_two_term(double p0, double p1, double q0, double q1) {
    const double zp = std::exp(p0) + std::exp(p1), zq = std::exp(q0) + std::exp(q1);
    const double a0 = std::exp(p0) / zp, a1 = std::exp(p1) / zp;
    const double b0 = std::exp(q0) / zq, b1 = std::exp(q1) / zq;
    return a0 * std::log(a0 / b0) + a1 * std::log(a1 / b1);
}

LoraState rank1(const std::vector<double>& u, const std::vector<double>& v) {
    LoraState s = LoraState::create({{"p", static_cast<int>(u.size()), static_cast<int>(v.size())}}, 1, 1.0, 0);
    s.set_factors(0, Tensor({static_cast<int>(u.size()), 1}, u), Tensor({static_cast<int>(v.size()), 1}, v));
    return s;
}

void loss_oracles() {
    const auto t0 = clk::now();
    const double kl = softmax_kl(Tensor({2}, {1.0, 0.0}), Tensor({2}, {0.0, 1.0}), 1.0);
    const double oracle = kl_two_term(1.0, 0.0, 0.0, 1.0);
    const bool kl_ok = std::abs(kl - 0.462117) < 1e-6 && std::abs(kl - oracle) < 1e-12;

    const LoraState a = rank1({1, 2}, {1, 0});
    const LoraState neg = rank1({-1, -2}, {1, 0});
    const double same = l_w(a, a).item(), opposite = l_w(a, neg).item();
    const bool lw_ok = same == 0.0 && opposite == 2.0;

    const HyperParams h;
    const bool weights_ok = h.lambda1 == 0.8 && h.lambda2 == 1.0 && h.alpha == 0.8 && h.beta == 1.5;
    const double dr = l_dr(0.5, 0.2, h);
    const double total = l_overall_step(1.0, 0.5, dr, h);
    const bool arith_ok = std::abs(dr - (0.8 * 0.5 + 1.0 * 0.2)) < 1e-12 && std::abs(total - (1.0 + 0.8 * 0.5 + 1.5 * dr)) < 1e-12;
    const double secs = seconds_since(t0);
    report("loss_oracles", kl_ok && lw_ok && weights_ok && arith_ok && secs < 1.0,
           fmt("kl=%.7f", kl) + fmt(" l_w(same)=%g", same) + fmt(" l_w(opposite)=%g", opposite) +
               fmt(" l_dr=%.12f", dr) + fmt(" l_overall=%.12f", total) + fmt(" (%.3fs)", secs));
}

void gradient_suite() {
    const auto t0 = clk::now();
    const auto errs = testing::run_gradient_suite(10, 1e-5, 2024);
    double worst = 0.0;
    std::string detail;
    for (const auto& [name, e] : errs) {
        worst = std::max(worst, e);
        detail += name + fmt("=%.2e ", e);
    }
    const double secs = seconds_since(t0);
    report("gradient_suite", worst < 1e-4 && secs < 60.0 && errs.size() == 4, detail + fmt("(%.1fs)", secs));
}

void degenerate_sdl(const DiffusionModel& base) {
    TrainConfig cfg;
    cfg.steps_per_task = 50;
    cfg.learning_rate = 5e-3;
    Museum m = make_museum(base, cfg);
    const auto specs = reference_styles();
    int steps = 0;
    double worst = 0.0;
    for (int k = 1; k <= 2; ++k) {
        const StyleTask task = synth_style_task(specs[static_cast<std::size_t>(k - 1)], 1, 7 + k, k);
        m = run_task(k, task, cfg, m, [&](int, int, int, const LossReport& r) {
            ++steps;
            worst = std::max(worst, std::abs(r.l_sdl));
        });
    }
    report("degenerate_sdl", steps == 100 && worst == 0.0,
           std::to_string(steps) + " steps over 2 one-image tasks, max |l_sdl| = " + fmt("%g", worst));
}

struct RunResult {
    Museum museum;
    ModelSnapshot after_task2;
    EvalReport eval;
    std::string ckpt_hash;
};

TrainConfig acceptance_config(TrainMode mode, std::uint64_t seed) {
    TrainConfig cfg;
    cfg.steps_per_task = 300;
    cfg.learning_rate = 5e-3;
    cfg.batch_size = 1;
    cfg.mode = mode;
    cfg.seed = seed;
    return cfg;
}

EvalOptions acceptance_eval() {
    EvalOptions eo;
    eo.seeds = {0, 1, 2, 3, 4};
    eo.only_tasks = {1, 2};
    return eo;
}

RunResult three_task_run(const DiffusionModel& base, const std::vector<StyleTask>& tasks, const TrainConfig& cfg) {
    RunResult r{make_museum(base, cfg), {}, {}, {}};
    for (int k = 1; k <= 3; ++k) {
        if (k == 3) r.after_task2 = snapshot_model(r.museum);
        r.museum = run_task(k, tasks[static_cast<std::size_t>(k - 1)], cfg, r.museum);
    }
    r.eval = evaluate_museum(r.museum, tasks, acceptance_eval());
    r.ckpt_hash = sha256_hex(serialize_checkpoint(r.museum));
    return r;
}

double avg12(const EvalReport& e) { return (e.rows[0].style_loss_x100 + e.rows[1].style_loss_x100) / 2.0; }

void parameter_budget() {
    ModelConfig mc;
    mc.codec = CodecKind::fixed;
    std::vector<StyleTask> tasks;
    for (int k = 1; k <= 10; ++k) {
        Rng rng(derive_seed(77, static_cast<std::uint64_t>(k)));
        tasks.push_back(synth_style_task(random_style_spec(rng, "style" + std::to_string(k)), 2, 300 + k, k));
    }
    bool ok = true;
    std::size_t museum_lora = 0, ub_lora = 0, museum_total = 0, ub_total = 0;
    std::size_t one_lora = 0;
    for (TrainMode mode : {TrainMode::museum, TrainMode::upper_bound}) {
        TrainConfig cfg;
        cfg.mode = mode;
        cfg.steps_per_task = 1;
        cfg.learning_rate = 1e-3;
        cfg.model = mc;
        Museum m = make_museum(DiffusionModel(mc), cfg);
        for (int k = 1; k <= 10; ++k) {
            m = run_task(k, tasks[static_cast<std::size_t>(k - 1)], cfg, m);
            if (one_lora == 0) one_lora = m.lora_parameter_count();
            const std::size_t tokens = static_cast<std::size_t>(k) * 4 * 64;
            const std::size_t expect_lora = mode == TrainMode::museum ? one_lora : static_cast<std::size_t>(k) * one_lora;
            ok = ok && m.lora_parameter_count() == expect_lora && m.learned_parameter_count() == expect_lora + tokens;
        }
        (mode == TrainMode::museum ? museum_lora : ub_lora) = m.lora_parameter_count();
        (mode == TrainMode::museum ? museum_total : ub_total) = m.learned_parameter_count();
    }
    ok = ok && one_lora == 6656 && ub_lora == 10 * museum_lora;
    report("parameter_budget", ok,
           "adapter " + std::to_string(one_lora) + ", 10 tasks: museum " + std::to_string(museum_total) +
               " (adapter " + std::to_string(museum_lora) + "), upper_bound " + std::to_string(ub_total) + " (adapter " +
               std::to_string(ub_lora) + "), adapter ratio " + fmt("%.1fx", static_cast<double>(ub_lora) / museum_lora));
}

void fid_oracle() {
    Rng rng(4242);
    std::vector<std::vector<double>> a, b;
    const double shift = 5.0;
    for (int i = 0; i < 10000; ++i) a.push_back({rng.normal()});
    for (int i = 0; i < 10000; ++i) b.push_back({rng.normal() + shift});
    const double shifted = fid(a, b), identical = fid(a, a);
    const double closed = shift * shift;
    const double rel = std::abs(shifted - closed) / closed;
    report("fid_oracle", rel < 0.02 && identical < 1e-6,
           fmt("shifted %.4f", shifted) + fmt(" vs closed form %.1f", closed) + fmt(" (rel %.4f)", rel) +
               fmt(", identical %.2e", identical));
}

void checkpoint_round_trip(const Museum& m) {
    const std::filesystem::path p = std::filesystem::temp_directory_path() / "museum_acceptance.ckpt";
    const Tensor before = generate(m, "a cat wearing sunglasses in <style>", 2, 11);
    save_checkpoint(m, p);
    const Museum back = load_checkpoint(p);
    bool same = true;
    for (int k = 1; k <= 3; ++k) {
        same = same && bitwise_equal(generate(back, "a cat wearing sunglasses in <style>", k, 11),
                                     generate(m, "a cat wearing sunglasses in <style>", k, 11));
    }
    same = same && bitwise_equal(before, generate(back, "a cat wearing sunglasses in <style>", 2, 11));
    std::filesystem::remove(p);
    report("checkpoint_round_trip", same, "generation after load equals pre-save generation for tasks 1-3");
}

}  // namespace

int main() {
    loss_oracles();
    gradient_suite();
    fid_oracle();
    parameter_budget();

    const auto t0 = clk::now();
    TrainConfig defaults;
    std::printf("pretraining base model (%d codec + %d denoiser steps)\n", defaults.pretrain.codec_steps,
                defaults.pretrain.denoiser_steps);
    std::fflush(stdout);
    const DiffusionModel base = build_base_model(defaults.model, defaults.pretrain);
    const double pretrain_secs = seconds_since(t0);
    std::printf("pretraining done in %.1fs\n", pretrain_secs);

    degenerate_sdl(base);

    const auto specs = reference_styles();
    std::vector<StyleTask> tasks;
    for (int k = 1; k <= 3; ++k) tasks.push_back(synth_style_task(specs[static_cast<std::size_t>(k - 1)], 8, 100 + k, k));

    const auto t1 = clk::now();
    std::map<TrainMode, std::vector<double>> scores;
    std::vector<RunResult> museum_runs;
    for (TrainMode mode : {TrainMode::museum, TrainMode::ft_only, TrainMode::upper_bound}) {
        for (std::uint64_t seed : {0, 1, 2}) {
            RunResult r = three_task_run(base, tasks, acceptance_config(mode, seed));
            scores[mode].push_back(avg12(r.eval));
            std::printf("  %-12s seed %lu: style loss x100 over styles 1-2 = %.3f (%.3f, %.3f)\n",
                        to_string(mode).c_str(), static_cast<unsigned long>(seed), avg12(r.eval),
                        r.eval.rows[0].style_loss_x100, r.eval.rows[1].style_loss_x100);
            std::fflush(stdout);
            if (mode == TrainMode::museum) museum_runs.push_back(std::move(r));
        }
    }
    const double ordering_secs = pretrain_secs + seconds_since(t1);
    const double mu = median(scores[TrainMode::museum]), ft = median(scores[TrainMode::ft_only]),
                 ub = median(scores[TrainMode::upper_bound]);
    const double margin_ft = (ft - mu) / ft, margin_ub = (mu - ub) / mu;
    report("continual_ordering", margin_ft > 0.05 && margin_ub > 0.05 && ordering_secs < 900.0,
           fmt("median museum %.3f", mu) + fmt(" ft_only %.3f", ft) + fmt(" upper_bound %.3f", ub) +
               fmt("; museum vs ft_only margin %.1f%%", 100 * margin_ft) +
               fmt(", upper_bound vs museum margin %.1f%%", 100 * margin_ub) + fmt(" (%.0fs incl. pretraining)", ordering_secs));

    std::vector<double> with_beta, without_beta;
    bool each_lower = true;
    for (std::uint64_t seed : {0, 1, 2}) {
        const RunResult& on = museum_runs[seed];
        TrainConfig cfg = acceptance_config(TrainMode::museum, seed);
        cfg.hp.beta = 0.0;
        Museum off = make_museum(base, cfg);
        ModelSnapshot off_snap;
        for (int k = 1; k <= 3; ++k) {
            if (k == 3) off_snap = snapshot_model(off);
            off = run_task(k, tasks[static_cast<std::size_t>(k - 1)], cfg, off);
        }
        // Each run is scored against its own snapshot taken before task 3.
        const double lf_on = evaluate_lf(on.after_task2, on.museum, 99, 32, 1.0);
        const double lf_off = evaluate_lf(off_snap, off, 99, 32, 1.0);
        with_beta.push_back(lf_on);
        without_beta.push_back(lf_off);
        each_lower = each_lower && lf_on < lf_off;
        std::printf("  seed %lu: l_f beta=1.5 %.5f, beta=0 %.5f\n", static_cast<unsigned long>(seed), lf_on, lf_off);
        std::fflush(stdout);
    }
    const double lf_margin = (median(without_beta) - median(with_beta)) / median(without_beta);
    report("forgetting_regularizer", each_lower && lf_margin > 0.10,
           fmt("median l_f beta=1.5 %.5f", median(with_beta)) + fmt(" vs beta=0 %.5f", median(without_beta)) +
               fmt(" (margin %.1f%%)", 100 * lf_margin));

    const RunResult repeat = three_task_run(base, tasks, acceptance_config(TrainMode::museum, 0));
    const bool same_hash = repeat.ckpt_hash == museum_runs[0].ckpt_hash;
    const bool same_csv = repeat.eval.to_csv() == museum_runs[0].eval.to_csv();
    report("determinism", same_hash && same_csv,
           "checkpoint sha256 " + repeat.ckpt_hash.substr(0, 16) + (same_hash ? " matches" : " differs") +
               ", evaluation CSV " + (same_csv ? "matches" : "differs"));

    checkpoint_round_trip(museum_runs[0].museum);

    std::printf("%s: %d failing criteria\n", failures ? "FAILED" : "ALL PASSED", failures);
    return failures ? 1 : 0;
}

// museum: train, sample and evaluate continual style-customization runs.
//
//   museum pretrain  --config cfg.json --out base.ckpt
//   museum synth     --style ember --n 8 --seed 1 --out tasks/ember
//   museum train     cfg.json tasks/ember tasks/glacier --mode museum --out-dir run/
//   museum generate  run/museum.ckpt --prompt "a cat, wearing sunglasses in <style>" --style ember --out cat.png
//   museum evaluate  run/museum.ckpt tasks/ember tasks/glacier --out-dir run/eval
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "museum/checkpoint.hpp"
#include "museum/errors.hpp"
#include "museum/evaluate.hpp"
#include "museum/png_io.hpp"
#include "museum/pretrain.hpp"
#include "museum/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace museum;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

json read_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot read config " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw UsageError("config " + path.string() + " is not valid JSON: " + e.what());
    }
}

void apply_seed_override(TrainConfig& cfg) {
    if (const char* s = std::getenv("MUSEUM_SEED")) {
        try {
            cfg.seed = std::stoull(s);
        } catch (const std::exception&) {
            throw UsageError(std::string("MUSEUM_SEED is not an unsigned integer: ") + s);
        }
    }
}

TrainConfig load_config(const fs::path& path) {
    TrainConfig cfg = train_config_from_json(read_json_file(path));
    apply_seed_override(cfg);
    return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("failed writing " + path.string());
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
    const fs::path probe = dir / ".museum_write_probe";
    {
        std::ofstream out(probe);
        if (!out) throw IoError("output directory " + dir.string() + " is not writable");
    }
    fs::remove(probe, ec);
}

ProgressFn stderr_progress() {
    return [](const std::string& phase, int step, double loss) {
        if (step % 200 == 0) std::fprintf(stderr, "[pretrain] %s step %d loss %.5f\n", phase.c_str(), step, loss);
    };
}

DiffusionModel obtain_base(const TrainConfig& cfg, const std::optional<fs::path>& base_path, const fs::path& cache) {
    if (base_path) return load_checkpoint(*base_path).base;
    if (fs::exists(cache)) {
        Museum cached = load_checkpoint(cache);
        if (to_json(cached.base.config()) == to_json(cfg.model) && to_json(cached.config)["pretrain"] == to_json(cfg)["pretrain"]) {
            std::fprintf(stderr, "using cached base model %s\n", cache.string().c_str());
            return cached.base;
        }
    }
    std::fprintf(stderr, "pretraining base model (no --base given)\n");
    DiffusionModel base = build_base_model(cfg.model, cfg.pretrain, stderr_progress());
    save_checkpoint(make_museum(base, cfg), cache);
    return base;
}

int cmd_pretrain(const fs::path& config_path, const fs::path& out) {
    const TrainConfig cfg = load_config(config_path);
    const DiffusionModel base = build_base_model(cfg.model, cfg.pretrain, stderr_progress());
    save_checkpoint(make_museum(base, cfg), out);
    std::cout << out.string() << "\n";
    return 0;
}

int cmd_synth(const std::string& style, int n, std::uint64_t seed, const fs::path& out, int image_size) {
    std::optional<StyleSpec> spec;
    for (const auto& s : reference_styles())
        if (s.name == style) spec = s;
    if (!spec) {
        // Any other name gets a random spec derived from the seed.
        Rng rng(derive_seed(seed, 0x5bec));
        spec = random_style_spec(rng, style);
    }
    const StyleTask task = synth_style_task(*spec, n, seed, 0, image_size);
    ensure_dir(out);
    save_style_task(task, out);
    std::cout << out.string() << "\n";
    return 0;
}

std::string run_id(const json& resolved, const std::vector<std::string>& task_dirs) {
    json j = {{"config", resolved}, {"tasks", task_dirs}};
    return sha256_hex(j.dump()).substr(0, 12);
}

int last_completed_task(const fs::path& out_dir, int total) {
    int done = 0;
    for (int k = 1; k <= total; ++k) {
        if (!fs::exists(out_dir / ("task_" + std::to_string(k) + ".ckpt"))) break;
        done = k;
    }
    return done;
}

int cmd_train(const fs::path& config_path, const std::vector<std::string>& task_dirs, const std::string& mode,
              bool resume, const fs::path& out_dir, const std::optional<fs::path>& base_path) {
    TrainConfig cfg = load_config(config_path);
    if (!mode.empty()) cfg.mode = parse_train_mode(mode);
    cfg.validate();
    ensure_dir(out_dir);

    const json resolved = to_json(cfg);
    json manifest = {{"config_path", fs::absolute(config_path).string()},
                     {"config", resolved},
                     {"tasks", task_dirs},
                     {"out_dir", fs::absolute(out_dir).string()},
                     {"base_checkpoint", base_path ? json(fs::absolute(*base_path).string()) : json(nullptr)},
                     {"run_id", run_id(resolved, task_dirs)}};
    write_text(out_dir / "run_manifest.json", manifest.dump(2) + "\n");

    const int total = static_cast<int>(task_dirs.size());
    int start = 1;
    Museum museum;
    if (resume && last_completed_task(out_dir, total) > 0) {
        const int done = last_completed_task(out_dir, total);
        museum = load_checkpoint(out_dir / ("task_" + std::to_string(done) + ".ckpt"));
        if (to_json(museum.config) != resolved) {
            throw UsageError("cannot resume: task_" + std::to_string(done) + ".ckpt was trained with a different config");
        }
        start = done + 1;
        std::fprintf(stderr, "resuming after task %d\n", done);
    } else {
        museum = make_museum(obtain_base(cfg, base_path, out_dir / "base.ckpt"), cfg);
    }

    std::ofstream log(out_dir / "train_log.jsonl", resume ? std::ios::app : std::ios::trunc);
    if (!log) throw IoError("cannot write training log");
    for (int k = start; k <= total; ++k) {
        const std::string& dir = task_dirs[static_cast<std::size_t>(k - 1)];
        try {
            const StyleTask task = load_style_task(dir, k, cfg.model.image_size);
            std::fprintf(stderr, "task %d/%d: %s (%d images)\n", k, total, task.style_name.c_str(), task.size());
            museum = run_task(k, task, cfg, std::move(museum), [&](int id, int step, int epoch, const LossReport& r) {
                log << json{{"task", id},          {"step", step},         {"epoch", epoch},
                            {"l_sd", r.l_sd},      {"l_sdl", r.l_sdl},     {"l_w", r.l_w},
                            {"l_f", r.l_f},        {"l_dr", r.l_dr},       {"l_total", r.l_total},
                            {"grad_norm_lora", r.grad_norm_lora}, {"grad_norm_tokens", r.grad_norm_tokens}}
                           .dump()
                    << "\n";
            });
            log.flush();
            save_checkpoint(museum, out_dir / ("task_" + std::to_string(k) + ".ckpt"));
        } catch (const std::exception& e) {
            std::fprintf(stderr, "error: task %d (%s) failed: %s\n", k, dir.c_str(), e.what());
            return 1;
        }
    }
    const fs::path final_path = out_dir / "museum.ckpt";
    save_checkpoint(museum, final_path);
    std::cout << final_path.string() << "\n";
    return 0;
}

int cmd_generate(const fs::path& ckpt, const std::string& prompt, const std::string& style, std::uint64_t seed,
                 int steps, const fs::path& out) {
    const std::string ph(Vocabulary::kPlaceholderText);
    const bool has_placeholder = prompt.find(ph) != std::string::npos;
    if (has_placeholder && style.empty()) throw UsageError("prompt contains " + ph + " but no --style was given");
    if (steps < 1) throw UsageError("--steps must be >= 1");
    const Museum museum = load_checkpoint(ckpt);
    if (style.empty()) throw UsageError("--style is required");
    const int task_id = museum.task_by_style(style);
    std::string shown = prompt;
    if (has_placeholder) shown.replace(shown.find(ph), ph.size(), "<" + style + ">");
    std::cout << "prompt: " << shown << "\n";
    write_png(out, generate(museum, prompt, task_id, seed, steps));
    std::cout << out.string() << "\n";
    return 0;
}

int cmd_evaluate(const fs::path& ckpt, const std::vector<std::string>& task_dirs, const fs::path& out_dir, int seeds,
                 int steps, int threads) {
    if (seeds < 1 || steps < 1) throw UsageError("--seeds and --steps must be >= 1");
    const Museum museum = load_checkpoint(ckpt);
    std::vector<StyleTask> tasks;
    for (std::size_t i = 0; i < task_dirs.size(); ++i) {
        tasks.push_back(load_style_task(task_dirs[i], static_cast<int>(i) + 1, museum.base.config().image_size));
    }
    ensure_dir(out_dir);
    EvalOptions opts;
    opts.seeds.clear();
    for (int s = 0; s < seeds; ++s) opts.seeds.push_back(static_cast<std::uint64_t>(s));
    opts.steps = steps;
    opts.threads = threads;
    const EvalReport report = evaluate_museum(museum, tasks, opts);
    write_text(out_dir / "report.csv", report.to_csv());
    write_text(out_dir / "report.json", report.to_json().dump(2) + "\n");
    write_png(out_dir / "grid.png", contact_sheet(report.grid));
    std::cout << report.to_csv();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Continual style customization for a small latent diffusion model"};
    app.require_subcommand(1);

    std::string config_path, out, mode, prompt, style, ckpt, base;
    std::vector<std::string> task_dirs;
    std::string out_dir = "out";
    bool resume = false;
    std::uint64_t seed = 0;
    int steps = 50, n = 8, image_size = 32, seeds = 10, threads = 1;

    auto* pretrain = app.add_subcommand("pretrain", "Pretrain a base model on the synthetic corpus");
    pretrain->add_option("--config", config_path, "Config JSON")->required();
    pretrain->add_option("--out", out, "Output checkpoint")->required();

    auto* synth = app.add_subcommand("synth", "Write a synthetic style task folder");
    synth->add_option("--style", style, "Reference style (ember, glacier, meadow) or any name")->required();
    synth->add_option("--n", n, "Images")->capture_default_str();
    synth->add_option("--seed", seed, "Content seed")->capture_default_str();
    synth->add_option("--image-size", image_size, "Image size")->capture_default_str();
    synth->add_option("--out", out, "Output folder")->required();

    auto* train = app.add_subcommand("train", "Train style tasks in order");
    train->add_option("config", config_path, "Config JSON")->required();
    train->add_option("task_dirs", task_dirs, "Task folders, in training order")->required();
    train->add_option("--mode", mode, "museum | ft_only | no_sdl | no_ttl | upper_bound");
    train->add_flag("--resume", resume, "Continue after the last task checkpoint in --out-dir");
    train->add_option("--out-dir", out_dir, "Output folder")->capture_default_str();
    train->add_option("--base", base, "Pretrained base checkpoint");

    auto* gen = app.add_subcommand("generate", "Sample one image in a learned style");
    gen->add_option("checkpoint", ckpt, "Museum checkpoint")->required();
    gen->add_option("--prompt", prompt, "Prompt; <style> marks the style token")->required();
    gen->add_option("--style", style, "Registered style name");
    gen->add_option("--seed", seed, "Sampling seed")->capture_default_str();
    gen->add_option("--steps", steps, "DDIM steps")->capture_default_str();
    gen->add_option("--out", out, "Output PNG")->required();

    auto* eval = app.add_subcommand("evaluate", "Score every learned style");
    eval->add_option("checkpoint", ckpt, "Museum checkpoint")->required();
    eval->add_option("task_dirs", task_dirs, "Task folders, in training order")->required();
    eval->add_option("--out-dir", out_dir, "Output folder")->capture_default_str();
    eval->add_option("--seeds", seeds, "Seeds per prompt")->capture_default_str();
    eval->add_option("--steps", steps, "DDIM steps")->capture_default_str();
    eval->add_option("--threads", threads, "Generation threads")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*pretrain) return cmd_pretrain(config_path, out);
        if (*synth) return cmd_synth(style, n, seed, out, image_size);
        if (*train) {
            return cmd_train(config_path, task_dirs, mode, resume, out_dir,
                             base.empty() ? std::nullopt : std::optional<fs::path>(base));
        }
        if (*gen) return cmd_generate(ckpt, prompt, style, seed, steps, out);
        if (*eval) return cmd_evaluate(ckpt, task_dirs, out_dir, seeds, steps, threads);
    } catch (const UsageError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 2;
}

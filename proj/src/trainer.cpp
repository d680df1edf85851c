#include "museum/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>

#include "museum/errors.hpp"
#include "museum/optimizer.hpp"

namespace museum {

namespace {

const LoraState* select_lora(bool per_task, const LoraState& shared, const std::map<int, LoraState>& per_task_loras,
                             int task_id) {
    if (per_task) {
        auto it = per_task_loras.find(task_id);
        return it == per_task_loras.end() ? nullptr : &it->second;
    }
    return shared.layer_count() ? &shared : nullptr;
}

ag::Var zero_scalar() { return ag::constant(Tensor::scalar(0.0)); }

std::vector<std::string> unique_templates(const std::vector<std::string>& prompts) {
    std::vector<std::string> out;
    for (const auto& p : prompts)
        if (std::find(out.begin(), out.end(), p) == out.end()) out.push_back(p);
    return out;
}

// Runs the first `stop` DDIM updates of a `steps`-step schedule from x.
Tensor ddim_prefix(const DiffusionModel& model, Tensor x, const std::vector<int>& ts, int stop, const Conditioning& cond,
                   const LoraState* lora) {
    const NoiseSchedule& sched = model.schedule();
    for (int i = 0; i < stop; ++i) {
        const int t = ts[static_cast<std::size_t>(i)];
        const double ab = sched.alpha_bar(t);
        const double ab_prev = sched.alpha_bar(ts[static_cast<std::size_t>(i + 1)]);
        const Tensor eps = model.predict_noise(x, t, cond, lora);
        const double sa = std::sqrt(ab), sb = std::sqrt(1.0 - ab);
        const double pa = std::sqrt(ab_prev), pb = std::sqrt(1.0 - ab_prev);
        for (std::size_t j = 0; j < x.size(); ++j) x[j] = pa * (x[j] - sb * eps[j]) / sa + pb * eps[j];
    }
    return x;
}

}  // namespace

const LoraState* ModelSnapshot::lora_for(int task_id) const {
    return select_lora(traits(mode).per_task_lora, lora, task_loras, task_id);
}

ModelSnapshot snapshot_model(const Museum& museum) {
    if (museum.task_count() == 0) throw StateError("cannot snapshot a museum with no learned tasks");
    ModelSnapshot s;
    s.base = museum.base;
    if (museum.lora.layer_count()) s.lora = museum.lora.clone_frozen();
    for (const auto& [id, l] : museum.task_loras) s.task_loras.emplace(id, l.clone_frozen());
    s.bank = museum.bank.frozen_copy();
    s.past_tasks = museum.tasks;
    s.mode = museum.config.mode;
    return s;
}

ModelSnapshot snapshot_model(const ModelSnapshot& snapshot) { return snapshot; }

PseudoNoisePairs pseudo_noise_pass(const ModelSnapshot& snap, const Museum& live, std::uint64_t shared_seed,
                                   const PseudoNoiseOptions& opts) {
    if (snap.past_tasks.empty()) throw InputError("pseudo-noise pass needs at least one past task");
    if (opts.batch < 1) throw InputError("pseudo-noise batch must be >= 1");
    const DiffusionModel& past_model = snap.base;
    const int T = past_model.schedule().steps();
    Rng rng(shared_seed);
    PseudoNoisePairs out;
    for (const TaskRecord& rec : snap.past_tasks) {
        if (rec.prompt_templates.empty()) {
            throw InputError("past task " + std::to_string(rec.task_id) + " has no prompt templates");
        }
        std::vector<ag::Var> past, cur;
        std::vector<int> ts;
        for (int b = 0; b < opts.batch; ++b) {
            const int pick = rng.uniform_int(0, static_cast<int>(rec.prompt_templates.size()) - 1);
            const std::vector<int> ids = past_model.vocab().tokenize(rec.prompt_templates[static_cast<std::size_t>(pick)]);
            const Conditioning past_cond = past_model.encode_prompt(ids, &snap.bank, rec.task_id);
            const Conditioning cur_cond = live.base.encode_prompt(ids, &live.bank, rec.task_id);
            const LoraState* past_lora = snap.lora_for(rec.task_id);
            Tensor z;
            int t = 0;
            if (opts.mode == LfMode::onestep) {
                t = rng.uniform_int(0, T - 1);
                z = rng.normal_tensor(past_model.latent_shape());
            } else {
                const std::vector<int> sched = ddim_timesteps(T, opts.rollout_steps);
                const int stop = rng.uniform_int(0, opts.rollout_steps - 1);
                z = ddim_prefix(past_model, rng.normal_tensor(past_model.latent_shape()), sched, stop, past_cond, past_lora);
                t = sched[static_cast<std::size_t>(stop)];
            }
            const ag::Var zt = ag::constant(z);
            past.push_back(ag::constant(past_model.predict_noise(zt, t, past_cond, past_lora).value()));
            cur.push_back(live.base.predict_noise(zt, t, cur_cond, live.lora_for(rec.task_id)));
            ts.push_back(t);
        }
        out.past.push_back(std::move(past));
        out.cur.push_back(std::move(cur));
        out.timesteps.push_back(std::move(ts));
    }
    return out;
}

Museum run_task(int k, const StyleTask& task, const TrainConfig& cfg, Museum museum, const StepLogger& log) {
    cfg.validate();
    task.validate();
    if (k != museum.task_count() + 1) {
        if (k > 1 && museum.task_count() == 0) {
            throw StateError("task " + std::to_string(k) + " needs the checkpoint of task " + std::to_string(k - 1) +
                             "; the museum has no learned tasks");
        }
        throw StateError("tasks must run in order: expected task " + std::to_string(museum.task_count() + 1) +
                         ", got " + std::to_string(k));
    }
    if (k > 1 && cfg.mode != museum.config.mode) {
        throw ConfigError("mode " + to_string(cfg.mode) + " does not match the museum's mode " +
                          to_string(museum.config.mode));
    }
    const int S = museum.base.config().image_size;
    if (task.images[0].shape != std::vector<int>{3, S, S}) {
        throw InputError("task images have shape " + shape_str(task.images[0].shape) + ", model expects " +
                         shape_str({3, S, S}));
    }

    const ModeTraits tr = traits(cfg.mode);
    museum.config = cfg;
    const bool dual_reg = tr.dual_reg && k > 1;
    std::optional<ModelSnapshot> snap;
    LoraState prev;
    if (dual_reg) {
        snap = snapshot_model(museum);
        prev = snap->lora;
    }

    // LoRA: fresh on the first task, carried over (as new trainable handles) afterwards.
    const std::uint64_t lora_seed = derive_seed(cfg.seed, 0x10a, static_cast<std::uint64_t>(tr.per_task_lora ? k : 1));
    LoraState* lora = nullptr;
    if (tr.per_task_lora) {
        museum.task_loras[k] = LoraState::create(museum.base.unet().adapted_projections(), cfg.lora_rank,
                                                 cfg.lora_scale, lora_seed);
        museum.base.unet().mark_lora_attached();
        lora = &museum.task_loras[k];
    } else {
        if (k == 1) {
            museum.lora = attach_lora(museum.base.unet(), cfg.lora_rank, lora_seed, cfg.lora_scale);
        } else {
            museum.lora = museum.lora.clone_trainable();
        }
        lora = &museum.lora;
    }

    const DiffusionModel& model = museum.base;
    const Vocabulary& vocab = model.vocab();
    const int L = model.cross_attention_layers();
    const int d = model.config().d_cond;
    if (tr.task_tokens) {
        museum.bank.init_task_tokens(k, L, d, TokenInit::default_for(vocab, derive_seed(cfg.seed, 0x70c, k)),
                                     model.text_encoder(), task.style_name);
    } else {
        museum.bank.init_task_tokens(k, L, d, TokenInit::word(vocab.id("art")), model.text_encoder(), task.style_name);
        museum.bank.freeze_task(k);
    }

    std::vector<Tensor> latents;
    std::vector<std::vector<int>> prompt_ids;
    for (int i = 0; i < task.size(); ++i) {
        latents.push_back(model.encode_image(task.images[static_cast<std::size_t>(i)]));
        prompt_ids.push_back(vocab.tokenize(task.prompts[static_cast<std::size_t>(i)]));
    }
    const Tensor z_mean = mean_latent(latents);

    std::vector<ag::Var> params = lora->trainable();
    const std::size_t n_lora = params.size();
    if (tr.task_tokens) {
        for (const auto& v : museum.bank.trainable_vars(k)) params.push_back(v);
    }
    Adam opt(params, cfg.learning_rate);

    const int n = task.size();
    const int B = cfg.batch_size;
    const int T = model.schedule().steps();
    const HyperParams& hp = cfg.hp;
    std::vector<int> order(static_cast<std::size_t>(n));
    for (int step = 0; step < cfg.steps_per_task; ++step) {
        Rng rng(derive_seed(cfg.seed, 0x57e9, static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(step)));
        std::vector<int> batch;
        if (B <= n) {
            std::iota(order.begin(), order.end(), 0);
            for (int i = 0; i < B; ++i) {
                std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(rng.uniform_int(i, n - 1))]);
                batch.push_back(order[static_cast<std::size_t>(i)]);
            }
        } else {
            for (int i = 0; i < B; ++i) batch.push_back(rng.uniform_int(0, n - 1));
        }

        opt.zero_grad();
        std::vector<ag::Var> eps, pred, pred_mean;
        std::vector<Tensor> batch_latents;
        for (int idx : batch) {
            const Tensor& z0 = latents[static_cast<std::size_t>(idx)];
            const int t = rng.uniform_int(0, T - 1);
            const Tensor e = rng.normal_tensor(z0.shape);
            const Conditioning cond = model.encode_prompt(prompt_ids[static_cast<std::size_t>(idx)], &museum.bank, k);
            pred.push_back(model.predict_noise(ag::constant(model.add_noise(z0, t, e)), t, cond, lora));
            if (tr.sdl && cfg.sdl_mode == SdlMode::alg1) {
                ag::Var pm = model.predict_noise(ag::constant(model.add_noise(z_mean, t, e)), t, cond, lora);
                if (cfg.sdl_stopgrad) pm = ag::constant(pm.value());
                pred_mean.push_back(pm);
            }
            eps.push_back(ag::constant(e));
            batch_latents.push_back(z0);
        }

        const ag::Var lsd = l_sd(eps, pred);
        ag::Var lsdl = zero_scalar();
        if (tr.sdl) {
            lsdl = cfg.sdl_mode == SdlMode::alg1
                       ? l_sdl(pred, pred_mean, hp.tau)
                       : ag::constant(Tensor::scalar(l_sdl_literal(batch_latents, z_mean, hp.tau)));
        }
        ag::Var lw = zero_scalar(), lf = zero_scalar(), ldr = zero_scalar();
        if (dual_reg) {
            lw = l_w(prev, *lora);
            const PseudoNoisePairs pairs =
                pseudo_noise_pass(*snap, museum,
                                  derive_seed(cfg.seed, 0x1f, static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(step)),
                                  {B, cfg.lf_mode, cfg.lf_rollout_steps});
            lf = l_f(pairs.past, pairs.cur, hp.tau);
            ldr = l_dr(lw, lf, hp);
        }
        const ag::Var total = l_overall_step(lsd, lsdl, ldr, hp);
        if (!std::isfinite(total.item())) {
            throw NumericError("task " + std::to_string(k) + ": loss became non-finite at step " + std::to_string(step));
        }
        ag::backward(total);

        LossReport rep;
        rep.l_sd = lsd.item();
        rep.l_sdl = lsdl.item();
        rep.l_w = lw.item();
        rep.l_f = lf.item();
        rep.l_dr = ldr.item();
        rep.l_total = total.item();
        rep.grad_norm_lora = opt.grad_norm(0, n_lora);
        rep.grad_norm_tokens = opt.grad_norm(n_lora, params.size());
        opt.step();
        if (log) log(k, step, step * B / n, rep);
    }

    if (tr.task_tokens) museum.bank.freeze_task(k);
    if (tr.per_task_lora) museum.task_loras[k] = museum.task_loras[k].clone_frozen();
    museum.tasks.push_back({k, task.style_name, unique_templates(task.prompts)});
    return museum;
}

Tensor generate_latent(const Museum& museum, const std::string& prompt, int task_id, std::uint64_t seed, int steps) {
    if (!museum.has_task(task_id)) throw LookupError("task " + std::to_string(task_id) + " is not registered");
    const std::vector<int> ids = museum.base.vocab().tokenize(prompt);
    const Conditioning cond = museum.base.encode_prompt(ids, &museum.bank, task_id);
    return museum.base.ddim_sample(cond, steps, seed, museum.lora_for(task_id));
}

Tensor generate(const Museum& museum, const std::string& prompt, int task_id, std::uint64_t seed, int steps) {
    return museum.base.decode_latent(generate_latent(museum, prompt, task_id, seed, steps));
}

double evaluate_lf(const ModelSnapshot& reference, const Museum& museum, std::uint64_t seed, int draws, double tau) {
    if (draws < 1) throw InputError("evaluate_lf: draws must be >= 1");
    double acc = 0.0;
    for (int i = 0; i < draws; ++i) {
        const PseudoNoisePairs p = pseudo_noise_pass(reference, museum, derive_seed(seed, 0xe1f, static_cast<std::uint64_t>(i)));
        acc += l_f(p.past, p.cur, tau).item();
    }
    return acc / draws;
}

}  // namespace museum

#include "museum/museum.hpp"

#include "museum/errors.hpp"

namespace museum {

using nlohmann::json;

TrainMode parse_train_mode(const std::string& s) {
    if (s == "museum") return TrainMode::museum;
    if (s == "ft_only") return TrainMode::ft_only;
    if (s == "no_sdl") return TrainMode::no_sdl;
    if (s == "no_ttl") return TrainMode::no_ttl;
    if (s == "upper_bound") return TrainMode::upper_bound;
    throw ConfigError("unknown mode '" + s + "' (expected museum|ft_only|no_sdl|no_ttl|upper_bound)");
}

std::string to_string(TrainMode m) {
    switch (m) {
        case TrainMode::museum: return "museum";
        case TrainMode::ft_only: return "ft_only";
        case TrainMode::no_sdl: return "no_sdl";
        case TrainMode::no_ttl: return "no_ttl";
        case TrainMode::upper_bound: return "upper_bound";
    }
    return "?";
}

SdlMode parse_sdl_mode(const std::string& s) {
    if (s == "alg1") return SdlMode::alg1;
    if (s == "literal") return SdlMode::literal;
    throw ConfigError("unknown sdl_mode '" + s + "' (expected alg1|literal)");
}

std::string to_string(SdlMode m) { return m == SdlMode::alg1 ? "alg1" : "literal"; }

LfMode parse_lf_mode(const std::string& s) {
    if (s == "onestep") return LfMode::onestep;
    if (s == "sampled") return LfMode::sampled;
    throw ConfigError("unknown lf_mode '" + s + "' (expected onestep|sampled)");
}

std::string to_string(LfMode m) { return m == LfMode::onestep ? "onestep" : "sampled"; }

ModeTraits traits(TrainMode m) {
    switch (m) {
        case TrainMode::museum: return {true, true, true, false};
        case TrainMode::ft_only: return {false, false, false, false};
        case TrainMode::no_sdl: return {true, false, true, false};
        case TrainMode::no_ttl: return {false, true, true, false};
        case TrainMode::upper_bound: return {true, true, false, true};
    }
    return {};
}

void TrainConfig::validate() const {
    if (steps_per_task < 1) throw ConfigError("steps_per_task must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (lora_rank < 1) throw ConfigError("lora_rank must be >= 1");
    if (lf_rollout_steps < 1) throw ConfigError("lf_rollout_steps must be >= 1");
    hp.validate();
}

json to_json(const ModelConfig& c) {
    return json{{"image_size", c.image_size},       {"latent_channels", c.latent_channels},
                {"latent_size", c.latent_size},     {"base_channels", c.base_channels},
                {"mid_channels", c.mid_channels},   {"d_cond", c.d_cond},
                {"time_dim", c.time_dim},           {"seq_len", c.seq_len},
                {"train_timesteps", c.train_timesteps}, {"beta_start", c.beta_start},
                {"beta_end", c.beta_end},           {"codec", to_string(c.codec)},
                {"seed", c.seed}};
}

ModelConfig model_config_from_json(const json& j) {
    ModelConfig c;
    try {
        c.image_size = j.value("image_size", c.image_size);
        c.latent_channels = j.value("latent_channels", c.latent_channels);
        c.latent_size = j.value("latent_size", c.latent_size);
        c.base_channels = j.value("base_channels", c.base_channels);
        c.mid_channels = j.value("mid_channels", c.mid_channels);
        c.d_cond = j.value("d_cond", c.d_cond);
        c.time_dim = j.value("time_dim", c.time_dim);
        c.seq_len = j.value("seq_len", c.seq_len);
        c.train_timesteps = j.value("train_timesteps", c.train_timesteps);
        c.beta_start = j.value("beta_start", c.beta_start);
        c.beta_end = j.value("beta_end", c.beta_end);
        c.codec = parse_codec_kind(j.value("codec", to_string(c.codec)));
        c.seed = j.value("seed", c.seed);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad model config: ") + e.what());
    }
    return c;
}

json to_json(const TrainConfig& c) {
    return json{{"steps_per_task", c.steps_per_task},
                {"batch_size", c.batch_size},
                {"learning_rate", c.learning_rate},
                {"tau", c.hp.tau},
                {"lambda1", c.hp.lambda1},
                {"lambda2", c.hp.lambda2},
                {"alpha", c.hp.alpha},
                {"beta", c.hp.beta},
                {"sdl_mode", to_string(c.sdl_mode)},
                {"sdl_stopgrad", c.sdl_stopgrad},
                {"lf_mode", to_string(c.lf_mode)},
                {"lf_rollout_steps", c.lf_rollout_steps},
                {"mode", to_string(c.mode)},
                {"seed", c.seed},
                {"lora_rank", c.lora_rank},
                {"lora_scale", c.lora_scale},
                {"model", to_json(c.model)},
                {"pretrain",
                 {{"codec_steps", c.pretrain.codec_steps},
                  {"denoiser_steps", c.pretrain.denoiser_steps},
                  {"batch_size", c.pretrain.batch_size},
                  {"codec_lr", c.pretrain.codec_lr},
                  {"denoiser_lr", c.pretrain.denoiser_lr}}}};
}

TrainConfig train_config_from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    TrainConfig c;
    try {
        c.steps_per_task = j.value("steps_per_task", c.steps_per_task);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.learning_rate = j.value("learning_rate", c.learning_rate);
        c.hp.tau = j.value("tau", c.hp.tau);
        c.hp.lambda1 = j.value("lambda1", c.hp.lambda1);
        c.hp.lambda2 = j.value("lambda2", c.hp.lambda2);
        c.hp.alpha = j.value("alpha", c.hp.alpha);
        c.hp.beta = j.value("beta", c.hp.beta);
        c.sdl_mode = parse_sdl_mode(j.value("sdl_mode", to_string(c.sdl_mode)));
        c.sdl_stopgrad = j.value("sdl_stopgrad", c.sdl_stopgrad);
        c.lf_mode = parse_lf_mode(j.value("lf_mode", to_string(c.lf_mode)));
        c.lf_rollout_steps = j.value("lf_rollout_steps", c.lf_rollout_steps);
        c.mode = parse_train_mode(j.value("mode", to_string(c.mode)));
        c.seed = j.value("seed", c.seed);
        c.lora_rank = j.value("lora_rank", c.lora_rank);
        c.lora_scale = j.value("lora_scale", c.lora_scale);
        if (j.contains("model")) c.model = model_config_from_json(j.at("model"));
        if (j.contains("pretrain")) {
            const json& p = j.at("pretrain");
            c.pretrain.codec_steps = p.value("codec_steps", c.pretrain.codec_steps);
            c.pretrain.denoiser_steps = p.value("denoiser_steps", c.pretrain.denoiser_steps);
            c.pretrain.batch_size = p.value("batch_size", c.pretrain.batch_size);
            c.pretrain.codec_lr = p.value("codec_lr", c.pretrain.codec_lr);
            c.pretrain.denoiser_lr = p.value("denoiser_lr", c.pretrain.denoiser_lr);
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad config: ") + e.what());
    }
    c.validate();
    return c;
}

const TaskRecord& Museum::task(int task_id) const {
    if (!has_task(task_id)) throw LookupError("task " + std::to_string(task_id) + " is not registered");
    return tasks[static_cast<std::size_t>(task_id - 1)];
}

int Museum::task_by_style(const std::string& style) const {
    std::string known;
    for (const auto& t : tasks) {
        if (t.style_name == style) return t.task_id;
        known += (known.empty() ? "" : ", ") + t.style_name;
    }
    throw LookupError("unknown style '" + style + "'; registered styles: " + (known.empty() ? "(none)" : known));
}

const LoraState* Museum::lora_for(int task_id) const {
    if (traits(config.mode).per_task_lora) {
        auto it = task_loras.find(task_id);
        return it == task_loras.end() ? nullptr : &it->second;
    }
    return lora.layer_count() ? &lora : nullptr;
}

std::size_t Museum::lora_parameter_count() const {
    std::size_t n = lora.parameter_count();
    for (const auto& [id, l] : task_loras) n += l.parameter_count();
    return n;
}

std::size_t Museum::learned_parameter_count() const {
    std::size_t n = lora_parameter_count();
    if (traits(config.mode).task_tokens) {
        for (const auto& [id, set] : bank.sets())
            for (const auto& v : set.vectors) n += v.size();
    }
    return n;
}

Museum make_museum(DiffusionModel base, const TrainConfig& cfg) {
    Museum m;
    m.base = std::move(base);
    m.config = cfg;
    return m;
}

}  // namespace museum

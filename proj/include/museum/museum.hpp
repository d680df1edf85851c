#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "museum/diffusion_model.hpp"
#include "museum/losses.hpp"

namespace museum {

enum class TrainMode { museum, ft_only, no_sdl, no_ttl, upper_bound };
enum class SdlMode { alg1, literal };
enum class LfMode { onestep, sampled };

TrainMode parse_train_mode(const std::string& s);
std::string to_string(TrainMode m);
SdlMode parse_sdl_mode(const std::string& s);
std::string to_string(SdlMode m);
LfMode parse_lf_mode(const std::string& s);
std::string to_string(LfMode m);

// Which objective terms and parameter groups a mode uses.
struct ModeTraits {
    bool task_tokens;    // per-task learned style tokens
    bool sdl;            // style distillation term
    bool dual_reg;       // l_w + l_f against the previous task
    bool per_task_lora;  // fresh adapter per task, selected at generation
};
ModeTraits traits(TrainMode m);

// Base-model pretraining on the synthetic corpus.
struct PretrainConfig {
    int codec_steps = 800;
    int denoiser_steps = 10000;
    int batch_size = 4;
    double codec_lr = 2e-3;
    double denoiser_lr = 2e-3;
};

struct TrainConfig {
    int steps_per_task = 1000;
    int batch_size = 1;
    double learning_rate = 1e-5;
    HyperParams hp;
    SdlMode sdl_mode = SdlMode::alg1;
    bool sdl_stopgrad = false;
    LfMode lf_mode = LfMode::onestep;
    int lf_rollout_steps = 5;
    TrainMode mode = TrainMode::museum;
    std::uint64_t seed = 0;
    int lora_rank = 4;
    double lora_scale = 1.0;
    ModelConfig model;
    PretrainConfig pretrain;

    void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
// Missing keys keep their defaults; unknown enum strings raise ConfigError.
TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

struct TaskRecord {
    int task_id = 0;
    std::string style_name;
    std::vector<std::string> prompt_templates;
};

// Everything learned so far: the frozen base, the shared adapter (or one
// adapter per task in upper_bound mode), every task's style tokens and the
// task registry. Persisted by save_checkpoint.
struct Museum {
    DiffusionModel base;
    LoraState lora;
    std::map<int, LoraState> task_loras;
    TokenBank bank;
    TrainConfig config;
    std::vector<TaskRecord> tasks;

    [[nodiscard]] int task_count() const noexcept { return static_cast<int>(tasks.size()); }
    [[nodiscard]] bool has_task(int task_id) const noexcept { return task_id >= 1 && task_id <= task_count(); }
    [[nodiscard]] const TaskRecord& task(int task_id) const;
    // Task id of a registered style name; LookupError listing the styles otherwise.
    [[nodiscard]] int task_by_style(const std::string& style) const;
    // Adapter used when generating in task_id's style; nullptr before any training.
    [[nodiscard]] const LoraState* lora_for(int task_id) const;

    // Learned parameters held by the museum: adapters plus learned tokens.
    [[nodiscard]] std::size_t learned_parameter_count() const;
    [[nodiscard]] std::size_t lora_parameter_count() const;
};

// A museum holding only the given base model.
Museum make_museum(DiffusionModel base, const TrainConfig& cfg);

}  // namespace museum

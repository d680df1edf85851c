#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "museum/data.hpp"
#include "museum/museum.hpp"

namespace museum {

// Frozen copy of a museum taken before training task k: the past denoiser
// used as the distillation target. Copying a snapshot yields an equal
// snapshot; nothing in it can be updated.
struct ModelSnapshot {
    DiffusionModel base;
    LoraState lora;
    std::map<int, LoraState> task_loras;
    TokenBank bank;
    std::vector<TaskRecord> past_tasks;
    TrainMode mode = TrainMode::museum;

    [[nodiscard]] const LoraState* lora_for(int task_id) const;
    [[nodiscard]] int task_count() const noexcept { return static_cast<int>(past_tasks.size()); }
};

// StateError when the museum has no learned task.
ModelSnapshot snapshot_model(const Museum& museum);
ModelSnapshot snapshot_model(const ModelSnapshot& snapshot);

// Matched predictions of the past and live models on past-style prompts.
// Entry [j][i] belongs to past task j + 1, batch item i.
struct PseudoNoisePairs {
    std::vector<std::vector<ag::Var>> past;
    std::vector<std::vector<ag::Var>> cur;
    std::vector<std::vector<int>> timesteps;
};

struct PseudoNoiseOptions {
    int batch = 1;
    LfMode mode = LfMode::onestep;
    int rollout_steps = 5;
};

// For every past task j: samples one prompt template of j, draws one shared
// (z_t, t) from shared_seed and evaluates both models on it with their own
// task-j token. onestep draws z_t as pure Gaussian noise; sampled reaches
// z_t by a short DDIM rollout of the past model.
PseudoNoisePairs pseudo_noise_pass(const ModelSnapshot& snap, const Museum& live, std::uint64_t shared_seed,
                                   const PseudoNoiseOptions& opts = {});

using StepLogger = std::function<void(int task_id, int step, int epoch, const LossReport& report)>;

// Trains task k on top of museum and returns the updated museum. The input
// is left untouched. Tasks must arrive in order 1, 2, ...
Museum run_task(int k, const StyleTask& task, const TrainConfig& cfg, Museum museum, const StepLogger& log = {});

// encode_prompt with task_id's token, DDIM from seeded noise, decode.
Tensor generate_latent(const Museum& museum, const std::string& prompt, int task_id, std::uint64_t seed,
                       int steps = 50);
Tensor generate(const Museum& museum, const std::string& prompt, int task_id, std::uint64_t seed, int steps = 50);

// l_f between a reference snapshot and the museum over the snapshot's past
// prompts, averaged over `draws` shared seeds.
double evaluate_lf(const ModelSnapshot& reference, const Museum& museum, std::uint64_t seed, int draws, double tau);

}  // namespace museum

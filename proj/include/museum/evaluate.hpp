#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "museum/data.hpp"
#include "museum/metrics.hpp"
#include "museum/museum.hpp"

namespace museum {

struct EvalOptions {
    std::vector<std::string> prompts = default_eval_prompts();
    std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    int steps = 50;
    std::uint64_t extractor_seed = 0x5eed;
    // Generation workers; results do not depend on the count.
    int threads = 1;
    // Evaluate only these task ids (all tasks when empty).
    std::vector<int> only_tasks;

    static std::vector<std::string> default_eval_prompts();
};

struct EvalRow {
    int task_id = 0;  // 0 for the average row
    std::string style;
    double style_loss_x100 = 0.0;
    double fid = 0.0;  // NaN when a set has fewer than 2 samples
    double proxy_clip = 0.0;
    int generated = 0;
};

struct EvalReport {
    int museum_tasks = 0;
    std::vector<EvalRow> rows;  // one per evaluated style, then "average"
    // Contact-sheet rows: one per style, one image per prompt (first seed).
    std::vector<std::vector<Tensor>> grid;

    [[nodiscard]] const EvalRow& average() const { return rows.back(); }
    [[nodiscard]] std::string to_csv() const;
    [[nodiscard]] nlohmann::json to_json() const;
};

// Generates every (prompt, seed) in each task's style and scores the samples
// against that task's training images. StateError if a task is not in the
// museum or its style name disagrees with the registry.
EvalReport evaluate_museum(const Museum& museum, const std::vector<StyleTask>& tasks, const EvalOptions& opts = {});

}  // namespace museum

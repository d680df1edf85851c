#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "museum/autograd.hpp"
#include "museum/text_encoder.hpp"

namespace museum {

struct TokenInit {
    enum class Kind { word, gaussian };
    Kind kind = Kind::word;
    int word_id = -1;
    std::uint64_t seed = 0;
    double sigma = 0.02;

    static TokenInit word(int id) { return {Kind::word, id, 0, 0.02}; }
    static TokenInit gaussian(std::uint64_t seed, double sigma = 0.02) { return {Kind::gaussian, -1, seed, sigma}; }
    // "art" when the vocabulary has it, gaussian(seed, 0.02) otherwise.
    static TokenInit default_for(const Vocabulary& vocab, std::uint64_t seed);

    [[nodiscard]] std::string describe() const;
};

// One style's learned embeddings, one vector per cross-attention layer.
struct TokenSet {
    int task_id = 0;
    std::string style_name;
    std::vector<ag::Var> vectors;
    bool trainable = true;
    std::string init_record;
};

// Task-wise style tokens. Task ids are contiguous from 1; a frozen task's
// vectors are constants and cannot receive updates.
class TokenBank {
public:
    TokenBank() = default;

    TokenSet& init_task_tokens(int task_id, int layers, int d_cond, const TokenInit& init, const TextEncoder& encoder,
                               std::string style_name = {});

    // layer is 1-based. Returns the live handle (trainable while the task is
    // not frozen).
    [[nodiscard]] const ag::Var& lookup(int task_id, int layer) const;
    [[nodiscard]] Tensor lookup_value(int task_id, int layer) const { return lookup(task_id, layer).value(); }

    void freeze_task(int task_id);
    [[nodiscard]] bool is_frozen(int task_id) const;
    // Handles for an optimizer. Raises StateError for frozen tasks.
    [[nodiscard]] std::vector<ag::Var> trainable_vars(int task_id) const;
    // Overwrites one vector. Raises StateError for frozen tasks.
    void update_vector(int task_id, int layer, const Tensor& value);

    [[nodiscard]] bool contains(int task_id) const { return sets_.count(task_id) > 0; }
    [[nodiscard]] const TokenSet& task(int task_id) const;
    [[nodiscard]] const std::map<int, TokenSet>& sets() const noexcept { return sets_; }
    [[nodiscard]] std::size_t task_count() const noexcept { return sets_.size(); }
    [[nodiscard]] std::size_t trainable_parameter_count() const;

    // Deep copy with every set frozen.
    [[nodiscard]] TokenBank frozen_copy() const;

    // Used by checkpoint loading; the set is stored exactly as given.
    void restore(TokenSet set);

private:
    TokenSet& mutable_task(int task_id);
    std::map<int, TokenSet> sets_;
};

// 64-bit FNV-1a over the raw bytes of every vector of one task; used to
// check that other tasks' training leaves a set untouched.
std::uint64_t token_set_hash(const TokenSet& set);

}  // namespace museum

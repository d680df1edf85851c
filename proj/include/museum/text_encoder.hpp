#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "museum/model_config.hpp"
#include "museum/params.hpp"

namespace museum {

// Fixed toy vocabulary. Id 0 is padding, id 1 the style placeholder.
class Vocabulary {
public:
    Vocabulary();

    static constexpr int kPad = 0;
    static constexpr int kPlaceholder = 1;
    static constexpr std::string_view kPlaceholderText = "<style>";

    [[nodiscard]] int size() const noexcept { return static_cast<int>(words_.size()); }
    [[nodiscard]] int id(std::string_view word) const;  // throws LookupError
    [[nodiscard]] bool contains(std::string_view word) const;
    [[nodiscard]] const std::string& word(int id) const;

    // Lower-cases, splits on whitespace and commas (commas become tokens).
    [[nodiscard]] std::vector<int> tokenize(std::string_view prompt) const;
    [[nodiscard]] std::string detokenize(const std::vector<int>& ids) const;

    // Style words the base model sees during pretraining.
    [[nodiscard]] static const std::vector<std::string>& pretraining_style_words();
    [[nodiscard]] static const std::vector<std::string>& shape_words();

private:
    std::vector<std::string> words_;
    std::unordered_map<std::string, int> index_;
};

// Frozen text encoder: embedding table + sinusoidal positions + one
// self-attention block with residual. Randomly initialised from a seed and
// never trained.
class TextEncoder {
public:
    TextEncoder() = default;
    TextEncoder(const ModelConfig& cfg, Rng& rng);

    [[nodiscard]] const Vocabulary& vocab() const noexcept { return vocab_; }
    [[nodiscard]] int d_cond() const noexcept { return d_cond_; }
    [[nodiscard]] int seq_len() const noexcept { return seq_len_; }

    // ids padded to seq_len -> (seq_len, d_cond)
    [[nodiscard]] Tensor encode(const std::vector<int>& ids) const;
    // Raw embedding-table row.
    [[nodiscard]] Tensor word_embedding(int id) const;

    [[nodiscard]] ParamList params() const;

private:
    Vocabulary vocab_;
    int d_cond_ = 64;
    int seq_len_ = 8;
    ag::Var embedding_, wq_, wk_, wv_, wo_;
};

}  // namespace museum

#include "museum/text_encoder.hpp"

#include <cctype>
#include <cmath>
#include <sstream>

#include "museum/errors.hpp"

namespace museum {

const std::vector<std::string>& Vocabulary::pretraining_style_words() {
    static const std::vector<std::string> words{"baroque",     "rococo",    "cubism",  "impressionism",
                                                "expressionism", "popart",  "minimalism", "fauvism",
                                                "surrealism",  "ukiyoe",    "pointillism", "romanticism",
                                                "realism",     "abstract",  "gothic",  "renaissance"};
    return words;
}

const std::vector<std::string>& Vocabulary::shape_words() {
    static const std::vector<std::string> words{"circle", "square", "triangle", "cross", "ring", "diamond"};
    return words;
}

Vocabulary::Vocabulary() {
    words_ = {"<pad>", std::string(kPlaceholderText), "<unk>", "a", "an", "the", "in", "of", "with", "style",
              "art", "painting", "picture", "cat", "dog", "wearing", "sunglasses", "house", "tree", ","};
    for (const auto& w : shape_words()) words_.push_back(w);
    for (const auto& w : pretraining_style_words()) words_.push_back(w);
    for (std::size_t i = 0; i < words_.size(); ++i) index_.emplace(words_[i], static_cast<int>(i));
}

int Vocabulary::id(std::string_view word) const {
    auto it = index_.find(std::string(word));
    if (it == index_.end()) throw LookupError("word '" + std::string(word) + "' is not in the vocabulary");
    return it->second;
}

bool Vocabulary::contains(std::string_view word) const { return index_.count(std::string(word)) > 0; }

const std::string& Vocabulary::word(int id) const {
    if (id < 0 || id >= size()) throw LookupError("token id " + std::to_string(id) + " out of range");
    return words_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::tokenize(std::string_view prompt) const {
    std::string spaced;
    for (char c : prompt) {
        if (c == ',') {
            spaced += " , ";
        } else {
            spaced += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        }
    }
    std::istringstream is(spaced);
    std::vector<int> ids;
    std::string w;
    while (is >> w) {
        auto it = index_.find(w);
        ids.push_back(it == index_.end() ? index_.at("<unk>") : it->second);
    }
    return ids;
}

std::string Vocabulary::detokenize(const std::vector<int>& ids) const {
    std::string out;
    for (int id : ids) {
        if (id == kPad) continue;
        if (!out.empty()) out += ' ';
        out += word(id);
    }
    return out;
}

TextEncoder::TextEncoder(const ModelConfig& cfg, Rng& rng) : d_cond_(cfg.d_cond), seq_len_(cfg.seq_len) {
    Tensor emb = rng.normal_tensor({vocab_.size(), d_cond_}, 1.0);
    round_to_float(emb);
    embedding_ = ag::constant(std::move(emb));
    wq_ = init_weight(rng, {d_cond_, d_cond_}, d_cond_);
    wk_ = init_weight(rng, {d_cond_, d_cond_}, d_cond_);
    wv_ = init_weight(rng, {d_cond_, d_cond_}, d_cond_);
    wo_ = init_weight(rng, {d_cond_, d_cond_}, d_cond_, 0.5);
}

Tensor TextEncoder::word_embedding(int id) const {
    if (id < 0 || id >= vocab_.size()) throw LookupError("token id " + std::to_string(id) + " out of range");
    const auto off = static_cast<std::ptrdiff_t>(id * d_cond_);
    return Tensor({d_cond_}, std::vector<double>(embedding_.value().data.begin() + off,
                                                 embedding_.value().data.begin() + off + d_cond_));
}

Tensor TextEncoder::encode(const std::vector<int>& ids) const {
    if (static_cast<int>(ids.size()) > seq_len_) {
        throw InputError("prompt has " + std::to_string(ids.size()) + " tokens; the encoder accepts at most " +
                         std::to_string(seq_len_));
    }
    Tensor x({seq_len_, d_cond_});
    for (int s = 0; s < seq_len_; ++s) {
        const int id = s < static_cast<int>(ids.size()) ? ids[static_cast<std::size_t>(s)] : Vocabulary::kPad;
        const Tensor e = word_embedding(id);
        for (int d = 0; d < d_cond_; ++d) {
            const double freq = std::pow(10000.0, -static_cast<double>(2 * (d / 2)) / d_cond_);
            const double pos = (d % 2 == 0) ? std::sin(s * freq) : std::cos(s * freq);
            x[static_cast<std::size_t>(s * d_cond_ + d)] = e[static_cast<std::size_t>(d)] + pos;
        }
    }
    const ag::Var xv = ag::constant(std::move(x));
    const ag::Var q = ag::matmul_nt(xv, wq_);
    const ag::Var k = ag::matmul_nt(xv, wk_);
    const ag::Var v = ag::matmul_nt(xv, wv_);
    const ag::Var attn = ag::softmax_rows(ag::scale(ag::matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(d_cond_))));
    return ag::add(xv, ag::matmul_nt(ag::matmul(attn, v), wo_)).value();
}

ParamList TextEncoder::params() const {
    return {{"text.embedding", embedding_}, {"text.wq", wq_}, {"text.wk", wk_}, {"text.wv", wv_}, {"text.wo", wo_}};
}

}  // namespace museum

#include "museum/token_bank.hpp"

#include <cstring>

#include "museum/errors.hpp"
#include "museum/rng.hpp"

namespace museum {

TokenInit TokenInit::default_for(const Vocabulary& vocab, std::uint64_t seed) {
    if (vocab.contains("art")) return word(vocab.id("art"));
    return gaussian(seed, 0.02);
}

std::string TokenInit::describe() const {
    if (kind == Kind::word) return "word:" + std::to_string(word_id);
    return "gaussian:seed=" + std::to_string(seed) + ",sigma=" + std::to_string(sigma);
}

TokenSet& TokenBank::init_task_tokens(int task_id, int layers, int d_cond, const TokenInit& init,
                                      const TextEncoder& encoder, std::string style_name) {
    if (sets_.count(task_id)) throw StateError("task " + std::to_string(task_id) + " already has tokens");
    const int expected = static_cast<int>(sets_.size()) + 1;
    if (task_id != expected) {
        throw StateError("task ids must be contiguous: expected " + std::to_string(expected) + ", got " +
                         std::to_string(task_id));
    }
    if (layers < 1 || d_cond < 1) throw InputError("token set needs at least one layer and one dimension");
    TokenSet set;
    set.task_id = task_id;
    set.style_name = std::move(style_name);
    set.init_record = init.describe();
    if (init.kind == TokenInit::Kind::word) {
        Tensor e = encoder.word_embedding(init.word_id);
        if (static_cast<int>(e.size()) != d_cond) throw InputError("word embedding width does not match d_cond");
        for (int l = 0; l < layers; ++l) set.vectors.push_back(ag::parameter(e));
    } else {
        Rng rng(init.seed);
        for (int l = 0; l < layers; ++l) {
            Tensor v = rng.normal_tensor({d_cond}, init.sigma);
            round_to_float(v);
            set.vectors.push_back(ag::parameter(std::move(v)));
        }
    }
    return sets_.emplace(task_id, std::move(set)).first->second;
}

const TokenSet& TokenBank::task(int task_id) const {
    auto it = sets_.find(task_id);
    if (it == sets_.end()) throw LookupError("no style tokens for task " + std::to_string(task_id));
    return it->second;
}

TokenSet& TokenBank::mutable_task(int task_id) {
    auto it = sets_.find(task_id);
    if (it == sets_.end()) throw LookupError("no style tokens for task " + std::to_string(task_id));
    return it->second;
}

const ag::Var& TokenBank::lookup(int task_id, int layer) const {
    const TokenSet& set = task(task_id);
    if (layer < 1 || layer > static_cast<int>(set.vectors.size())) {
        throw InputError("token layer " + std::to_string(layer) + " outside [1, " + std::to_string(set.vectors.size()) +
                         "]");
    }
    return set.vectors[static_cast<std::size_t>(layer - 1)];
}

void TokenBank::freeze_task(int task_id) {
    TokenSet& set = mutable_task(task_id);
    if (!set.trainable) return;
    for (auto& v : set.vectors) v = ag::constant(v.value());
    set.trainable = false;
}

bool TokenBank::is_frozen(int task_id) const { return !task(task_id).trainable; }

std::vector<ag::Var> TokenBank::trainable_vars(int task_id) const {
    const TokenSet& set = task(task_id);
    if (!set.trainable) throw StateError("tokens of task " + std::to_string(task_id) + " are frozen");
    return set.vectors;
}

void TokenBank::update_vector(int task_id, int layer, const Tensor& value) {
    const ag::Var& v = lookup(task_id, layer);
    if (!task(task_id).trainable) throw StateError("tokens of task " + std::to_string(task_id) + " are frozen");
    if (value.shape != v.shape()) throw InputError("token update has wrong shape");
    v.mutable_value() = value;
}

std::size_t TokenBank::trainable_parameter_count() const {
    std::size_t n = 0;
    for (const auto& [id, set] : sets_) {
        if (!set.trainable) continue;
        for (const auto& v : set.vectors) n += v.size();
    }
    return n;
}

TokenBank TokenBank::frozen_copy() const {
    TokenBank copy;
    for (const auto& [id, set] : sets_) {
        TokenSet s = set;
        for (auto& v : s.vectors) v = ag::constant(v.value());
        s.trainable = false;
        copy.sets_.emplace(id, std::move(s));
    }
    return copy;
}

void TokenBank::restore(TokenSet set) {
    const int id = set.task_id;
    sets_[id] = std::move(set);
}

std::uint64_t token_set_hash(const TokenSet& set) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& v : set.vectors) {
        for (double x : v.value().data) {
            unsigned char bytes[sizeof(double)];
            std::memcpy(bytes, &x, sizeof(double));
            for (unsigned char b : bytes) {
                h ^= b;
                h *= 0x100000001b3ULL;
            }
        }
    }
    return h;
}

}  // namespace museum

#include "museum/lora.hpp"

#include <cmath>

#include "museum/errors.hpp"
#include "museum/unet.hpp"

namespace museum {

LoraState LoraState::create(const std::vector<ProjectionSpec>& layout, int rank, double scale, std::uint64_t init_seed,
                            double init_std) {
    if (rank < 1) throw ConfigError("LoRA rank must be >= 1");
    if (layout.empty()) throw StateError("model exposes no cross-attention projections to adapt");
    LoraState s;
    s.rank_ = rank;
    s.scale_ = scale;
    Rng rng(init_seed);
    for (const auto& p : layout) {
        Tensor a = rng.normal_tensor({p.d_out, rank}, init_std);
        round_to_float(a);
        s.adapters_.push_back({p.name, p.d_out, p.d_in, ag::parameter(std::move(a)), ag::parameter(Tensor({p.d_in, rank}))});
    }
    return s;
}

const LoraAdapter& LoraState::adapter(std::size_t l) const {
    if (l >= adapters_.size()) {
        throw InputError("LoRA layer " + std::to_string(l) + " out of range (" + std::to_string(adapters_.size()) +
                         " adapted projections)");
    }
    return adapters_[l];
}

const LoraAdapter* LoraState::find(const std::string& name) const {
    for (const auto& a : adapters_) {
        if (a.name == name) return &a;
    }
    return nullptr;
}

std::size_t LoraState::parameter_count() const {
    std::size_t n = 0;
    for (const auto& a : adapters_) n += static_cast<std::size_t>(rank_) * static_cast<std::size_t>(a.d_out + a.d_in);
    return n;
}

std::vector<ag::Var> LoraState::trainable() const {
    if (frozen_) throw StateError("frozen LoRA state has no trainable parameters");
    std::vector<ag::Var> out;
    for (const auto& a : adapters_) {
        out.push_back(a.a);
        out.push_back(a.b);
    }
    return out;
}

LoraState LoraState::clone_frozen() const {
    LoraState s;
    s.rank_ = rank_;
    s.scale_ = scale_;
    s.frozen_ = true;
    for (const auto& a : adapters_) {
        s.adapters_.push_back({a.name, a.d_out, a.d_in, ag::constant(a.a.value()), ag::constant(a.b.value())});
    }
    return s;
}

LoraState LoraState::clone_trainable() const {
    LoraState s;
    s.rank_ = rank_;
    s.scale_ = scale_;
    for (const auto& a : adapters_) {
        s.adapters_.push_back({a.name, a.d_out, a.d_in, ag::parameter(a.a.value()), ag::parameter(a.b.value())});
    }
    return s;
}

bool LoraState::structure_matches(const LoraState& other) const {
    if (rank_ != other.rank_ || adapters_.size() != other.adapters_.size()) return false;
    for (std::size_t i = 0; i < adapters_.size(); ++i) {
        const auto& x = adapters_[i];
        const auto& y = other.adapters_[i];
        if (x.name != y.name || x.d_out != y.d_out || x.d_in != y.d_in) return false;
    }
    return true;
}

void LoraState::set_factors(std::size_t l, Tensor a, Tensor b) {
    const LoraAdapter& ad = adapter(l);
    if (a.shape != ad.a.shape() || b.shape != ad.b.shape()) {
        throw FormatError("LoRA factor shape mismatch for " + ad.name);
    }
    ad.a.mutable_value() = std::move(a);
    ad.b.mutable_value() = std::move(b);
}

LoraState attach_lora(UNet& model, int rank, std::uint64_t init_seed, double scale) {
    if (model.lora_attached()) throw StateError("LoRA adapters are already attached to this model");
    LoraState s = LoraState::create(model.adapted_projections(), rank, scale, init_seed);
    model.mark_lora_attached();
    return s;
}

Tensor delta_weight(const LoraState& state, std::size_t l) {
    const LoraAdapter& ad = state.adapter(l);
    const int r = state.rank();
    Tensor out({ad.d_out, ad.d_in});
    const Tensor& a = ad.a.value();
    const Tensor& b = ad.b.value();
    for (int i = 0; i < ad.d_out; ++i)
        for (int j = 0; j < ad.d_in; ++j) {
            double s = 0.0;
            for (int k = 0; k < r; ++k) s += a[static_cast<std::size_t>(i * r + k)] * b[static_cast<std::size_t>(j * r + k)];
            out[static_cast<std::size_t>(i * ad.d_in + j)] = s;
        }
    return out;
}

ag::Var delta_weight_var(const LoraState& state, std::size_t l) {
    const LoraAdapter& ad = state.adapter(l);
    return ag::matmul_nt(ad.a, ad.b);
}

std::vector<double> flatten_delta(const LoraState& state, std::size_t l) { return delta_weight(state, l).data; }

Tensor unflatten(const std::vector<double>& flat, int rows, int cols) { return Tensor({rows, cols}, flat); }

Similarity cosine_similarity(const std::vector<double>& u, const std::vector<double>& v) {
    if (u.size() != v.size()) throw InputError("cosine_similarity: length mismatch");
    double uv = 0.0, uu = 0.0, vv = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        uv += u[i] * v[i];
        uu += u[i] * u[i];
        vv += v[i] * v[i];
    }
    if (uu == 0.0 || vv == 0.0) return {(uu == 0.0 && vv == 0.0) ? 1.0 : 0.0, true};
    return {uv / std::sqrt(uu * vv), false};
}

ag::Var cosine_similarity(const ag::Var& u, const ag::Var& v) {
    if (u.size() != v.size()) throw InputError("cosine_similarity: length mismatch");
    const ag::Var uu = ag::dot(u, u);
    const ag::Var vv = ag::dot(v, v);
    if (uu.item() == 0.0 || vv.item() == 0.0) {
        return ag::constant(Tensor::scalar((uu.item() == 0.0 && vv.item() == 0.0) ? 1.0 : 0.0));
    }
    return ag::div(ag::dot(u, v), ag::sqrt(ag::mul(uu, vv)));
}

}  // namespace museum

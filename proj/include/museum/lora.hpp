#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "museum/autograd.hpp"
#include "museum/rng.hpp"

namespace museum {

class UNet;

// Shape of one adapted projection W: [d_out, d_in].
struct ProjectionSpec {
    std::string name;
    int d_out = 0;
    int d_in = 0;
};

// One low-rank adapter: delta W = A * B^T with A [d_out, r] and B [d_in, r].
struct LoraAdapter {
    std::string name;
    int d_out = 0;
    int d_in = 0;
    ag::Var a;
    ag::Var b;
};

// Low-rank adapters on the cross-attention projections.
class LoraState {
public:
    LoraState() = default;

    // A ~ N(0, init_std^2) seeded, B = 0, so delta W starts at exactly zero.
    static LoraState create(const std::vector<ProjectionSpec>& layout, int rank, double scale, std::uint64_t init_seed,
                            double init_std = 0.02);

    [[nodiscard]] int rank() const noexcept { return rank_; }
    [[nodiscard]] double scale() const noexcept { return scale_; }
    [[nodiscard]] std::size_t layer_count() const noexcept { return adapters_.size(); }
    [[nodiscard]] const std::vector<LoraAdapter>& adapters() const noexcept { return adapters_; }
    [[nodiscard]] const LoraAdapter& adapter(std::size_t l) const;
    // nullptr when no adapter exists for that projection.
    [[nodiscard]] const LoraAdapter* find(const std::string& name) const;

    // Sum over layers of r * (d_out + d_in).
    [[nodiscard]] std::size_t parameter_count() const;
    [[nodiscard]] std::vector<ag::Var> trainable() const;
    [[nodiscard]] bool is_frozen() const noexcept { return frozen_; }

    // Deep copy whose factors are constants: optimizer steps on the source
    // never reach it and no gradient flows into it.
    [[nodiscard]] LoraState clone_frozen() const;
    // Deep copy with fresh trainable factors holding the same values.
    [[nodiscard]] LoraState clone_trainable() const;

    [[nodiscard]] bool structure_matches(const LoraState& other) const;

    // Replaces the values of adapter l (used by checkpoint loading).
    void set_factors(std::size_t l, Tensor a, Tensor b);

private:
    int rank_ = 0;
    double scale_ = 1.0;
    bool frozen_ = false;
    std::vector<LoraAdapter> adapters_;
};

// Attaches shared adapters to every cross-attention projection of the model.
// A model accepts a single attachment; a second call raises StateError.
LoraState attach_lora(UNet& model, int rank, std::uint64_t init_seed, double scale = 1.0);

// A * B^T as [d_out, d_in].
Tensor delta_weight(const LoraState& state, std::size_t l);
ag::Var delta_weight_var(const LoraState& state, std::size_t l);
// Row-major flattening of delta_weight, length d_out * d_in.
std::vector<double> flatten_delta(const LoraState& state, std::size_t l);
Tensor unflatten(const std::vector<double>& flat, int rows, int cols);

struct Similarity {
    double value = 0.0;
    // Set when either input had zero norm and the value came from the
    // convention (1 if both zero, 0 if exactly one zero).
    bool zero_norm = false;
};

Similarity cosine_similarity(const std::vector<double>& u, const std::vector<double>& v);
// Differentiable version with the same zero-norm convention.
ag::Var cosine_similarity(const ag::Var& u, const ag::Var& v);

}  // namespace museum

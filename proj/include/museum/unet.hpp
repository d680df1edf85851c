#pragma once

#include <vector>

#include "museum/autograd.hpp"
#include "museum/lora.hpp"
#include "museum/model_config.hpp"
#include "museum/params.hpp"

namespace museum {

// Per-cross-attention-layer text conditioning: one (seq_len, d_cond)
// sequence per layer. Layers differ only where a style token was substituted.
struct Conditioning {
    std::vector<ag::Var> layers;
};

// Conditional noise predictor over 4x8x8 latents: two resolutions (8x8 with
// base_channels, 4x4 with mid_channels), four residual blocks and four
// single-head cross-attention layers.
//
//   conv_in -> res0 -> xattn0 --------------------------(skip)----.
//                        \-> down -> res1 -> xattn1 -> res2 -> xattn2 -> up -+-> conv_up -> res3 -> xattn3 -> conv_out
class UNet {
public:
    UNet() = default;
    UNet(const ModelConfig& cfg, Rng& rng);

    [[nodiscard]] int cross_attention_layers() const noexcept { return ModelConfig::kCrossAttentionLayers; }
    [[nodiscard]] std::vector<int> latent_shape() const { return {latent_channels_, latent_size_, latent_size_}; }

    // eps_theta(z_t | cond, t). The LoRA state, when given, adds s * A (B^T x)
    // on every adapted projection.
    [[nodiscard]] ag::Var forward(const ag::Var& z_t, int t, const Conditioning& cond, const LoraState* lora) const;

    // Query/key/value/output projections of every cross-attention layer.
    [[nodiscard]] std::vector<ProjectionSpec> adapted_projections() const;
    [[nodiscard]] bool lora_attached() const noexcept { return lora_attached_; }
    void mark_lora_attached() noexcept { lora_attached_ = true; }

    [[nodiscard]] ParamList params() const;

private:
    struct ResBlock {
        ag::Var conv1_w, conv1_b, conv2_w, conv2_b, time_w, time_b;
    };
    struct CrossAttention {
        int dim = 0;
        ag::Var wq, wk, wv, wo;
    };

    ResBlock make_res(Rng& rng, int ch) const;
    CrossAttention make_xattn(Rng& rng, int ch) const;
    ag::Var res_forward(const ResBlock& rb, const ag::Var& x, const ag::Var& temb) const;
    ag::Var xattn_forward(int layer, const ag::Var& x, const ag::Var& cond, const LoraState* lora) const;
    ag::Var time_embedding(int t) const;

    int latent_channels_ = 4;
    int latent_size_ = 8;
    int c1_ = 32;
    int c2_ = 64;
    int d_cond_ = 64;
    int time_dim_ = 64;
    bool lora_attached_ = false;

    ag::Var time1_w_, time1_b_, time2_w_, time2_b_;
    ag::Var conv_in_w_, conv_in_b_, down_w_, down_b_, up_w_, up_b_, out_w_, out_b_;
    std::vector<ResBlock> res_;
    std::vector<CrossAttention> xattn_;
};

}  // namespace museum

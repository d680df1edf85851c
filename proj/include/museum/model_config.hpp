#pragma once

#include <cstdint>
#include <string>

namespace museum {

enum class CodecKind { learned, fixed };

CodecKind parse_codec_kind(const std::string& s);
std::string to_string(CodecKind k);

// Architecture and schedule of the toy latent diffusion backbone.
struct ModelConfig {
    int image_size = 32;
    int latent_channels = 4;
    int latent_size = 8;
    int base_channels = 32;
    int mid_channels = 64;
    int d_cond = 64;
    int time_dim = 64;
    int seq_len = 8;
    int train_timesteps = 1000;
    double beta_start = 1e-4;
    double beta_end = 2e-2;
    CodecKind codec = CodecKind::learned;
    std::uint64_t seed = 0;

    // The U-Net has four cross-attention layers; fixed by the architecture.
    static constexpr int kCrossAttentionLayers = 4;
};

}  // namespace museum

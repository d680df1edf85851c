#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "museum/data.hpp"
#include "museum/diffusion_model.hpp"
#include "museum/museum.hpp"

namespace museum {

// One draw from the synthetic pretraining corpus: a procedural image in one
// of the vocabulary's pretraining styles and a caption naming its shape and
// (usually) its style word.
struct CorpusSample {
    Tensor image;
    std::string prompt;
};

// Style word i of the pretraining corpus always renders with the same spec.
StyleSpec pretraining_style(int index, std::uint64_t seed);
CorpusSample sample_corpus(Rng& rng, std::uint64_t seed, int image_size);

using ProgressFn = std::function<void(const std::string& phase, int step, double loss)>;

// Autoencoder reconstruction training, then sets the latent scale to
// 1 / std of corpus latents. No-op apart from scale for the fixed codec.
void pretrain_codec(DiffusionModel& model, const PretrainConfig& cfg, std::uint64_t seed, const ProgressFn& progress = {});
// Full U-Net training on noise prediction over corpus latents.
void pretrain_denoiser(DiffusionModel& model, const PretrainConfig& cfg, std::uint64_t seed,
                       const ProgressFn& progress = {});

// Random init from cfg, then both pretraining phases. The result is frozen.
DiffusionModel build_base_model(const ModelConfig& cfg, const PretrainConfig& pcfg, const ProgressFn& progress = {});

}  // namespace museum

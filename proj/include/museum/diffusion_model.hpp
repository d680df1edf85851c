#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "museum/codec.hpp"
#include "museum/model_config.hpp"
#include "museum/schedule.hpp"
#include "museum/text_encoder.hpp"
#include "museum/token_bank.hpp"
#include "museum/unet.hpp"

namespace museum {

// The frozen base of the text-to-image model: latent codec, text encoder,
// conditional U-Net and noise schedule. Style training never updates it;
// LoRA adapters and style tokens are passed alongside.
class DiffusionModel {
public:
    DiffusionModel() = default;
    // Random initialisation from cfg.seed. See pretrain.hpp for producing a
    // usable base.
    explicit DiffusionModel(const ModelConfig& cfg);

    [[nodiscard]] const ModelConfig& config() const noexcept { return cfg_; }
    [[nodiscard]] const NoiseSchedule& schedule() const noexcept { return schedule_; }
    [[nodiscard]] const LatentCodec& codec() const noexcept { return codec_; }
    [[nodiscard]] LatentCodec& codec() noexcept { return codec_; }
    [[nodiscard]] const TextEncoder& text_encoder() const noexcept { return text_; }
    [[nodiscard]] const UNet& unet() const noexcept { return unet_; }
    [[nodiscard]] UNet& unet() noexcept { return unet_; }
    [[nodiscard]] const Vocabulary& vocab() const noexcept { return text_.vocab(); }
    [[nodiscard]] int cross_attention_layers() const noexcept { return unet_.cross_attention_layers(); }
    [[nodiscard]] std::vector<int> latent_shape() const { return codec_.latent_shape(); }

    [[nodiscard]] Tensor encode_image(const Tensor& image) const { return codec_.encode(image); }
    [[nodiscard]] Tensor decode_latent(const Tensor& z) const { return codec_.decode(z); }
    [[nodiscard]] Tensor add_noise(const Tensor& z0, int t, const Tensor& eps) const {
        return schedule_.add_noise(z0, t, eps);
    }

    // Builds the per-layer conditioning. With a style task, layer l's
    // sequence carries bank.lookup(task, l) at the placeholder position.
    [[nodiscard]] Conditioning encode_prompt(const std::vector<int>& ids, const TokenBank* bank,
                                             std::optional<int> style_task) const;

    [[nodiscard]] ag::Var predict_noise(const ag::Var& z_t, int t, const Conditioning& cond,
                                        const LoraState* lora) const;
    [[nodiscard]] Tensor predict_noise(const Tensor& z_t, int t, const Conditioning& cond, const LoraState* lora) const {
        return predict_noise(ag::constant(z_t), t, cond, lora).value();
    }

    // Deterministic DDIM (eta = 0) over `steps` evenly spaced timesteps,
    // starting from seeded Gaussian noise.
    [[nodiscard]] Tensor ddim_sample(const Conditioning& cond, int steps, std::uint64_t seed,
                                     const LoraState* lora) const;

    // Every frozen tensor, in serialization order.
    [[nodiscard]] ParamList params() const;

private:
    ModelConfig cfg_;
    NoiseSchedule schedule_;
    LatentCodec codec_;
    TextEncoder text_;
    UNet unet_;
};

// Timesteps visited by ddim_sample, highest first.
std::vector<int> ddim_timesteps(int train_steps, int sample_steps);

}  // namespace museum

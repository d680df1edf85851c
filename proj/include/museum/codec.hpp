#pragma once

#include "museum/autograd.hpp"
#include "museum/model_config.hpp"
#include "museum/params.hpp"

namespace museum {

// Image <-> latent codec. Frozen during style training.
//
// learned: a small strided conv autoencoder, pretrained on the synthetic
//          corpus (see pretrain.hpp) and then frozen.
// fixed:   a seeded orthonormal projection of 4x4 pixel patches; decode is
//          the transpose. Lossy but needs no training.
class LatentCodec {
public:
    LatentCodec() = default;
    LatentCodec(const ModelConfig& cfg, Rng& rng);

    [[nodiscard]] CodecKind kind() const noexcept { return kind_; }
    [[nodiscard]] std::vector<int> latent_shape() const { return {latent_channels_, latent_size_, latent_size_}; }

    // image (3,H,W) in [0,1] -> scaled latent
    [[nodiscard]] Tensor encode(const Tensor& image) const;
    // latent -> image clamped to [0,1]
    [[nodiscard]] Tensor decode(const Tensor& latent) const;

    // Differentiable unscaled, unclamped reconstruction used by codec pretraining.
    [[nodiscard]] ag::Var reconstruct(const ag::Var& image) const;

    [[nodiscard]] double latent_scale() const noexcept { return scale_; }
    void set_latent_scale(double s) noexcept { scale_ = s; }

    [[nodiscard]] ParamList params() const;

private:
    ag::Var encode_raw(const ag::Var& image) const;
    ag::Var decode_raw(const ag::Var& latent) const;
    void check_image(const Tensor& image) const;

    CodecKind kind_ = CodecKind::learned;
    int image_size_ = 32;
    int latent_channels_ = 4;
    int latent_size_ = 8;
    double scale_ = 1.0;

    // learned
    ag::Var enc1_w_, enc1_b_, enc2_w_, enc2_b_, enc3_w_, enc3_b_;
    ag::Var dec1_w_, dec1_b_, dec2_w_, dec2_b_, dec3_w_, dec3_b_, dec4_w_, dec4_b_;
    // fixed: [latent_channels, 3*p*p]
    ag::Var projection_;
};

}  // namespace museum

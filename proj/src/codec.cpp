#include "museum/codec.hpp"

#include <algorithm>
#include <cmath>

#include "museum/errors.hpp"

namespace museum {

namespace {

Tensor orthonormal_rows(Rng& rng, int rows, int cols) {
    Tensor p({rows, cols});
    for (int r = 0; r < rows; ++r) {
        std::vector<double> v(static_cast<std::size_t>(cols));
        for (double& x : v) x = rng.normal();
        for (int q = 0; q < r; ++q) {
            double d = 0.0;
            for (int c = 0; c < cols; ++c) d += v[static_cast<std::size_t>(c)] * p[static_cast<std::size_t>(q * cols + c)];
            for (int c = 0; c < cols; ++c) v[static_cast<std::size_t>(c)] -= d * p[static_cast<std::size_t>(q * cols + c)];
        }
        double n = 0.0;
        for (double x : v) n += x * x;
        n = std::sqrt(n);
        for (int c = 0; c < cols; ++c) p[static_cast<std::size_t>(r * cols + c)] = v[static_cast<std::size_t>(c)] / n;
    }
    round_to_float(p);
    return p;
}

}  // namespace

LatentCodec::LatentCodec(const ModelConfig& cfg, Rng& rng)
    : kind_(cfg.codec), image_size_(cfg.image_size), latent_channels_(cfg.latent_channels), latent_size_(cfg.latent_size) {
    if (cfg.image_size != 4 * cfg.latent_size) {
        throw ConfigError("codec downsamples by 4: image_size must equal 4 * latent_size");
    }
    if (kind_ == CodecKind::fixed) {
        projection_ = ag::constant(orthonormal_rows(rng, latent_channels_, 3 * 16));
        // Patch projections of [0,1] images have std ~0.3; bring to unit scale.
        scale_ = 3.0;
        return;
    }
    const int lc = latent_channels_;
    enc1_w_ = init_weight(rng, {16, 3, 3, 3}, 27);
    enc1_b_ = init_zeros({16});
    enc2_w_ = init_weight(rng, {32, 16, 3, 3}, 144);
    enc2_b_ = init_zeros({32});
    enc3_w_ = init_weight(rng, {lc, 32, 1, 1}, 32);
    enc3_b_ = init_zeros({lc});
    dec1_w_ = init_weight(rng, {32, lc, 1, 1}, lc);
    dec1_b_ = init_zeros({32});
    dec2_w_ = init_weight(rng, {16, 32, 3, 3}, 288);
    dec2_b_ = init_zeros({16});
    dec3_w_ = init_weight(rng, {16, 16, 3, 3}, 144);
    dec3_b_ = init_zeros({16});
    dec4_w_ = init_weight(rng, {3, 16, 3, 3}, 144, 0.5);
    dec4_b_ = init_zeros({3});
}

void LatentCodec::check_image(const Tensor& image) const {
    if (image.rank() != 3 || image.dim(0) != 3 || image.dim(1) != image_size_ || image.dim(2) != image_size_) {
        throw InputError("encode_image: expected image of shape (3, " + std::to_string(image_size_) + ", " +
                         std::to_string(image_size_) + "), got " + shape_str(image.shape));
    }
}

ag::Var LatentCodec::encode_raw(const ag::Var& image) const {
    ag::Var x = ag::add_scalar(image, -0.5);
    x = ag::silu(ag::conv2d(x, enc1_w_, enc1_b_, 2, 1));
    x = ag::silu(ag::conv2d(x, enc2_w_, enc2_b_, 2, 1));
    return ag::conv2d(x, enc3_w_, enc3_b_, 1, 0);
}

ag::Var LatentCodec::decode_raw(const ag::Var& latent) const {
    ag::Var x = ag::silu(ag::conv2d(latent, dec1_w_, dec1_b_, 1, 0));
    x = ag::silu(ag::conv2d(ag::upsample2x(x), dec2_w_, dec2_b_, 1, 1));
    x = ag::silu(ag::conv2d(ag::upsample2x(x), dec3_w_, dec3_b_, 1, 1));
    return ag::add_scalar(ag::conv2d(x, dec4_w_, dec4_b_, 1, 1), 0.5);
}

Tensor LatentCodec::encode(const Tensor& image) const {
    check_image(image);
    if (kind_ == CodecKind::fixed) {
        const Tensor& p = projection_.value();
        Tensor z({latent_channels_, latent_size_, latent_size_});
        for (int c = 0; c < latent_channels_; ++c)
            for (int y = 0; y < latent_size_; ++y)
                for (int x = 0; x < latent_size_; ++x) {
                    double acc = 0.0;
                    int k = 0;
                    for (int ch = 0; ch < 3; ++ch)
                        for (int py = 0; py < 4; ++py)
                            for (int px = 0; px < 4; ++px, ++k) {
                                const double v =
                                    image[static_cast<std::size_t>((ch * image_size_ + 4 * y + py) * image_size_ + 4 * x + px)];
                                acc += p[static_cast<std::size_t>(c * 48 + k)] * (v - 0.5);
                            }
                    z[static_cast<std::size_t>((c * latent_size_ + y) * latent_size_ + x)] = acc * scale_;
                }
        return z;
    }
    Tensor z = encode_raw(ag::constant(image)).value();
    for (double& v : z.data) v *= scale_;
    return z;
}

Tensor LatentCodec::decode(const Tensor& latent) const {
    if (!latent.all_finite()) throw NumericError("decode_latent: latent contains non-finite values");
    if (latent.shape != latent_shape()) {
        throw InputError("decode_latent: expected latent of shape " + shape_str(latent_shape()) + ", got " +
                         shape_str(latent.shape));
    }
    Tensor img({3, image_size_, image_size_});
    if (kind_ == CodecKind::fixed) {
        const Tensor& p = projection_.value();
        for (int y = 0; y < latent_size_; ++y)
            for (int x = 0; x < latent_size_; ++x) {
                int k = 0;
                for (int ch = 0; ch < 3; ++ch)
                    for (int py = 0; py < 4; ++py)
                        for (int px = 0; px < 4; ++px, ++k) {
                            double acc = 0.0;
                            for (int c = 0; c < latent_channels_; ++c) {
                                acc += p[static_cast<std::size_t>(c * 48 + k)] *
                                       latent[static_cast<std::size_t>((c * latent_size_ + y) * latent_size_ + x)] / scale_;
                            }
                            img[static_cast<std::size_t>((ch * image_size_ + 4 * y + py) * image_size_ + 4 * x + px)] = acc + 0.5;
                        }
            }
    } else {
        Tensor z = latent;
        for (double& v : z.data) v /= scale_;
        img = decode_raw(ag::constant(std::move(z))).value();
    }
    for (double& v : img.data) v = std::clamp(v, 0.0, 1.0);
    return img;
}

ag::Var LatentCodec::reconstruct(const ag::Var& image) const {
    check_image(image.value());
    if (kind_ == CodecKind::fixed) return ag::constant(decode(encode(image.value())));
    return decode_raw(encode_raw(image));
}

ParamList LatentCodec::params() const {
    if (kind_ == CodecKind::fixed) return {{"codec.projection", projection_}};
    return {{"codec.enc1.w", enc1_w_}, {"codec.enc1.b", enc1_b_}, {"codec.enc2.w", enc2_w_}, {"codec.enc2.b", enc2_b_},
            {"codec.enc3.w", enc3_w_}, {"codec.enc3.b", enc3_b_}, {"codec.dec1.w", dec1_w_}, {"codec.dec1.b", dec1_b_},
            {"codec.dec2.w", dec2_w_}, {"codec.dec2.b", dec2_b_}, {"codec.dec3.w", dec3_w_}, {"codec.dec3.b", dec3_b_},
            {"codec.dec4.w", dec4_w_}, {"codec.dec4.b", dec4_b_}};
}

}  // namespace museum

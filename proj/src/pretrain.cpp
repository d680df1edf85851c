#include "museum/pretrain.hpp"

#include <cmath>

#include "museum/data.hpp"
#include "museum/errors.hpp"
#include "museum/optimizer.hpp"

namespace museum {

StyleSpec pretraining_style(int index, std::uint64_t seed) {
    const auto& words = Vocabulary::pretraining_style_words();
    if (index < 0 || index >= static_cast<int>(words.size())) throw InputError("pretraining style index out of range");
    Rng rng(derive_seed(seed, 0x5717e, static_cast<std::uint64_t>(index)));
    return random_style_spec(rng, words[static_cast<std::size_t>(index)]);
}

CorpusSample sample_corpus(Rng& rng, std::uint64_t seed, int image_size) {
    const auto& words = Vocabulary::pretraining_style_words();
    const auto& shapes = Vocabulary::shape_words();
    const int s = rng.uniform_int(0, static_cast<int>(words.size()) - 1);
    const int shape = rng.uniform_int(0, static_cast<int>(shapes.size()) - 1);
    CorpusSample out;
    out.image = render_style_image(pretraining_style(s, seed), shape, rng, image_size);
    out.prompt = "a " + shapes[static_cast<std::size_t>(shape)];
    // Captions occasionally omit the style so the model also learns an unstyled prior.
    if (rng.uniform() >= 0.1) out.prompt += " in " + words[static_cast<std::size_t>(s)];
    return out;
}

namespace {

std::vector<ag::Var> vars_of(const ParamList& params) {
    std::vector<ag::Var> v;
    for (const auto& [name, p] : params) v.push_back(p);
    return v;
}

double cosine_lr(double base, int step, int total) {
    return base * 0.5 * (1.0 + std::cos(M_PI * static_cast<double>(step) / static_cast<double>(total)));
}

}  // namespace

void pretrain_codec(DiffusionModel& model, const PretrainConfig& cfg, std::uint64_t seed, const ProgressFn& progress) {
    LatentCodec& codec = model.codec();
    const int size = model.config().image_size;
    if (codec.kind() == CodecKind::learned && cfg.codec_steps > 0) {
        const ParamList params = codec.params();
        set_trainable(params, true);
        Adam opt(vars_of(params), cfg.codec_lr);
        Rng rng(derive_seed(seed, 0xc0dec));
        for (int step = 0; step < cfg.codec_steps; ++step) {
            opt.set_lr(cosine_lr(cfg.codec_lr, step, cfg.codec_steps));
            opt.zero_grad();
            ag::Var loss;
            for (int b = 0; b < cfg.batch_size; ++b) {
                const ag::Var img = ag::constant(sample_corpus(rng, seed, size).image);
                const ag::Var l = ag::mean(ag::square(ag::sub(codec.reconstruct(img), img)));
                loss = loss.defined() ? ag::add(loss, l) : l;
            }
            loss = ag::scale(loss, 1.0 / cfg.batch_size);
            ag::backward(loss);
            opt.step();
            if (progress) progress("codec", step, loss.item());
        }
        set_trainable(params, false);
    }
    // Unit-variance latents keep the noise schedule's signal-to-noise ratio as designed.
    codec.set_latent_scale(1.0);
    Rng rng(derive_seed(seed, 0x5ca1e));
    double sum = 0.0, sq = 0.0;
    std::size_t n = 0;
    for (int i = 0; i < 256; ++i) {
        const Tensor z = codec.encode(sample_corpus(rng, seed, size).image);
        for (double v : z.data) {
            sum += v;
            sq += v * v;
            ++n;
        }
    }
    const double mean = sum / static_cast<double>(n);
    const double sd = std::sqrt(std::max(sq / static_cast<double>(n) - mean * mean, 1e-12));
    codec.set_latent_scale(static_cast<double>(static_cast<float>(1.0 / sd)));
}

void pretrain_denoiser(DiffusionModel& model, const PretrainConfig& cfg, std::uint64_t seed, const ProgressFn& progress) {
    if (cfg.denoiser_steps <= 0) return;
    const ParamList params = model.unet().params();
    set_trainable(params, true);
    Adam opt(vars_of(params), cfg.denoiser_lr);
    Rng rng(derive_seed(seed, 0xd1ff));
    const int size = model.config().image_size;
    const int T = model.schedule().steps();
    for (int step = 0; step < cfg.denoiser_steps; ++step) {
        opt.set_lr(cosine_lr(cfg.denoiser_lr, step, cfg.denoiser_steps));
        opt.zero_grad();
        std::vector<ag::Var> eps, pred;
        for (int b = 0; b < cfg.batch_size; ++b) {
            const CorpusSample s = sample_corpus(rng, seed, size);
            const Tensor z0 = model.encode_image(s.image);
            const int t = rng.uniform_int(0, T - 1);
            const Tensor e = rng.normal_tensor(z0.shape);
            const Conditioning cond = model.encode_prompt(model.vocab().tokenize(s.prompt), nullptr, std::nullopt);
            pred.push_back(model.predict_noise(ag::constant(model.add_noise(z0, t, e)), t, cond, nullptr));
            eps.push_back(ag::constant(e));
        }
        const ag::Var loss = l_sd(eps, pred);
        ag::backward(loss);
        opt.step();
        if (progress) progress("denoiser", step, loss.item());
    }
    set_trainable(params, false);
}

DiffusionModel build_base_model(const ModelConfig& cfg, const PretrainConfig& pcfg, const ProgressFn& progress) {
    DiffusionModel model(cfg);
    pretrain_codec(model, pcfg, cfg.seed, progress);
    pretrain_denoiser(model, pcfg, cfg.seed, progress);
    return model;
}

}  // namespace museum

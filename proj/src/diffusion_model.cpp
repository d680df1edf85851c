#include "museum/diffusion_model.hpp"

#include <algorithm>
#include <cmath>

#include "museum/errors.hpp"

namespace museum {

DiffusionModel::DiffusionModel(const ModelConfig& cfg) : cfg_(cfg) {
    schedule_ = NoiseSchedule::linear(cfg.train_timesteps, cfg.beta_start, cfg.beta_end);
    Rng codec_rng(derive_seed(cfg.seed, 1));
    Rng text_rng(derive_seed(cfg.seed, 2));
    Rng unet_rng(derive_seed(cfg.seed, 3));
    codec_ = LatentCodec(cfg, codec_rng);
    text_ = TextEncoder(cfg, text_rng);
    unet_ = UNet(cfg, unet_rng);
}

Conditioning DiffusionModel::encode_prompt(const std::vector<int>& ids, const TokenBank* bank,
                                           std::optional<int> style_task) const {
    const auto placeholders = std::count(ids.begin(), ids.end(), Vocabulary::kPlaceholder);
    if (placeholders > 1) throw InputError("prompt contains more than one style placeholder");
    if (placeholders == 1 && !style_task) throw InputError("prompt has a style placeholder but no style was given");
    if (style_task && (!bank || !bank->contains(*style_task))) {
        throw LookupError("unknown style task " + std::to_string(*style_task));
    }
    const ag::Var base = ag::constant(text_.encode(ids));
    Conditioning cond;
    const int layers = cross_attention_layers();
    if (!style_task || placeholders == 0) {
        cond.layers.assign(static_cast<std::size_t>(layers), base);
        return cond;
    }
    const int pos = static_cast<int>(std::find(ids.begin(), ids.end(), Vocabulary::kPlaceholder) - ids.begin());
    for (int l = 1; l <= layers; ++l) cond.layers.push_back(ag::replace_row(base, pos, bank->lookup(*style_task, l)));
    return cond;
}

ag::Var DiffusionModel::predict_noise(const ag::Var& z_t, int t, const Conditioning& cond, const LoraState* lora) const {
    if (t < 0 || t >= schedule_.steps()) throw InputError("timestep out of range");
    return unet_.forward(z_t, t, cond, lora);
}

std::vector<int> ddim_timesteps(int train_steps, int sample_steps) {
    if (sample_steps < 1 || sample_steps > train_steps) {
        throw InputError("DDIM steps must lie in [1, " + std::to_string(train_steps) + "], got " +
                         std::to_string(sample_steps));
    }
    const int stride = train_steps / sample_steps;
    std::vector<int> ts;
    for (int i = sample_steps - 1; i >= 0; --i) ts.push_back(i * stride);
    return ts;
}

Tensor DiffusionModel::ddim_sample(const Conditioning& cond, int steps, std::uint64_t seed, const LoraState* lora) const {
    const std::vector<int> ts = ddim_timesteps(schedule_.steps(), steps);
    Rng rng(seed);
    Tensor x = rng.normal_tensor(latent_shape());
    for (std::size_t i = 0; i < ts.size(); ++i) {
        const int t = ts[i];
        const double ab = schedule_.alpha_bar(t);
        const double ab_prev = (i + 1 < ts.size()) ? schedule_.alpha_bar(ts[i + 1]) : 1.0;
        const Tensor eps = predict_noise(x, t, cond, lora);
        const double sa = std::sqrt(ab), sb = std::sqrt(1.0 - ab);
        const double pa = std::sqrt(ab_prev), pb = std::sqrt(1.0 - ab_prev);
        for (std::size_t j = 0; j < x.size(); ++j) {
            const double x0 = (x[j] - sb * eps[j]) / sa;
            x[j] = pa * x0 + pb * eps[j];
        }
    }
    if (!x.all_finite()) throw NumericError("DDIM sampling diverged");
    return x;
}

ParamList DiffusionModel::params() const {
    ParamList p = codec_.params();
    for (auto& kv : text_.params()) p.push_back(kv);
    for (auto& kv : unet_.params()) p.push_back(kv);
    return p;
}

}  // namespace museum

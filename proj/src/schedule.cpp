#include "museum/schedule.hpp"

#include <cmath>

#include "museum/errors.hpp"
#include "museum/model_config.hpp"

namespace museum {

CodecKind parse_codec_kind(const std::string& s) {
    if (s == "learned") return CodecKind::learned;
    if (s == "fixed") return CodecKind::fixed;
    throw ConfigError("unknown codec kind '" + s + "' (expected learned|fixed)");
}

std::string to_string(CodecKind k) { return k == CodecKind::learned ? "learned" : "fixed"; }

NoiseSchedule NoiseSchedule::linear(int steps, double beta_start, double beta_end) {
    if (steps < 2) throw ConfigError("noise schedule needs at least 2 steps");
    if (!(beta_start > 0.0) || !(beta_end < 1.0) || !(beta_start < beta_end)) {
        throw ConfigError("noise schedule betas must satisfy 0 < start < end < 1");
    }
    NoiseSchedule s;
    s.betas_.resize(static_cast<std::size_t>(steps));
    s.alphas_cumprod_.resize(static_cast<std::size_t>(steps));
    double prod = 1.0;
    for (int t = 0; t < steps; ++t) {
        const double beta = beta_start + (beta_end - beta_start) * t / (steps - 1);
        s.betas_[static_cast<std::size_t>(t)] = beta;
        prod *= 1.0 - beta;
        s.alphas_cumprod_[static_cast<std::size_t>(t)] = prod;
    }
    return s;
}

double NoiseSchedule::alpha_bar(int t) const {
    if (t < 0 || t >= steps()) {
        throw InputError("timestep " + std::to_string(t) + " outside [0, " + std::to_string(steps()) + ")");
    }
    return alphas_cumprod_[static_cast<std::size_t>(t)];
}

Tensor mix_noise(const Tensor& z0, double alpha_bar, const Tensor& eps) {
    if (!same_shape(z0, eps)) throw InputError("add_noise: latent and noise shapes differ");
    const double a = std::sqrt(alpha_bar);
    const double b = std::sqrt(1.0 - alpha_bar);
    Tensor out(z0.shape);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * z0[i] + b * eps[i];
    return out;
}

Tensor NoiseSchedule::add_noise(const Tensor& z0, int t, const Tensor& eps) const {
    return mix_noise(z0, alpha_bar(t), eps);
}

}  // namespace museum

#pragma once

#include <vector>

#include "museum/tensor.hpp"

namespace museum {

// Linear beta schedule with cumulative alpha products.
class NoiseSchedule {
public:
    NoiseSchedule() = default;
    static NoiseSchedule linear(int steps, double beta_start, double beta_end);

    [[nodiscard]] int steps() const noexcept { return static_cast<int>(betas_.size()); }
    [[nodiscard]] const std::vector<double>& betas() const noexcept { return betas_; }
    [[nodiscard]] const std::vector<double>& alphas_cumprod() const noexcept { return alphas_cumprod_; }
    [[nodiscard]] double alpha_bar(int t) const;

    // sqrt(abar_t) * z0 + sqrt(1 - abar_t) * eps
    [[nodiscard]] Tensor add_noise(const Tensor& z0, int t, const Tensor& eps) const;

private:
    std::vector<double> betas_;
    std::vector<double> alphas_cumprod_;
};

// Forward-process mix for an explicit cumulative alpha.
Tensor mix_noise(const Tensor& z0, double alpha_bar, const Tensor& eps);

}  // namespace museum

#include "museum/optimizer.hpp"

#include <cmath>

#include "museum/errors.hpp"

namespace museum {

Adam::Adam(std::vector<ag::Var> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& p : params_) {
        if (!p.requires_grad()) throw StateError("optimizer given a parameter that does not require gradients");
        m_.emplace_back(p.shape(), 0.0);
        v_.emplace_back(p.shape(), 0.0);
    }
}

void Adam::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

void Adam::step() {
    ++step_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
        const Tensor& g = params_[k].grad();
        if (g.empty()) continue;
        if (!g.all_finite()) throw NumericError("non-finite gradient");
        Tensor& w = params_[k].mutable_value();
        Tensor& m = m_[k];
        Tensor& v = v_[k];
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
            const double upd = lr_ * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps_);
            w[i] = static_cast<double>(static_cast<float>(w[i] - upd));
        }
    }
}

double Adam::grad_norm(std::size_t begin, std::size_t end) const {
    double s = 0.0;
    for (std::size_t k = begin; k < end && k < params_.size(); ++k) {
        for (double g : params_[k].grad().data) s += g * g;
    }
    return std::sqrt(s);
}

}  // namespace museum

#pragma once

#include <vector>

#include "museum/autograd.hpp"

namespace museum {

// Adam without weight decay. Updated values are rounded through float32 so
// the parameters stay exactly representable in checkpoints.
class Adam {
public:
    Adam(std::vector<ag::Var> params, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

    void zero_grad();
    void step();
    // L2 norm of the current gradients of params [begin, end).
    [[nodiscard]] double grad_norm(std::size_t begin, std::size_t end) const;
    [[nodiscard]] std::size_t size() const noexcept { return params_.size(); }
    void set_lr(double lr) noexcept { lr_ = lr; }

private:
    std::vector<ag::Var> params_;
    std::vector<Tensor> m_, v_;
    double lr_, beta1_, beta2_, eps_;
    long step_ = 0;
};

}  // namespace museum

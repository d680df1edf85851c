#include "museum/params.hpp"

#include <cmath>

namespace museum {

ag::Var init_weight(Rng& rng, std::vector<int> shape, int fan_in, double gain) {
    Tensor t = rng.normal_tensor(std::move(shape), gain / std::sqrt(static_cast<double>(fan_in)));
    round_to_float(t);
    return ag::constant(std::move(t));
}

ag::Var init_zeros(std::vector<int> shape) { return ag::constant(Tensor(std::move(shape), 0.0)); }

std::size_t count_parameters(const ParamList& params) {
    std::size_t n = 0;
    for (const auto& [name, v] : params) n += v.size();
    return n;
}

void set_trainable(const ParamList& params, bool on) {
    for (const auto& [name, v] : params) {
        v.set_requires_grad(on);
        v.zero_grad();
    }
}

}  // namespace museum

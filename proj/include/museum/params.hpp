#pragma once

#include <string>
#include <utility>
#include <vector>

#include "museum/autograd.hpp"
#include "museum/rng.hpp"

namespace museum {

// Ordered (name, parameter) pairs. Order is the serialization order.
using ParamList = std::vector<std::pair<std::string, ag::Var>>;

// Fan-in scaled Gaussian initialisation, rounded through float32 so that
// freshly built models survive a checkpoint round trip unchanged.
ag::Var init_weight(Rng& rng, std::vector<int> shape, int fan_in, double gain = 1.0);
ag::Var init_zeros(std::vector<int> shape);

std::size_t count_parameters(const ParamList& params);
void set_trainable(const ParamList& params, bool on);

}  // namespace museum

#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "museum/tensor.hpp"

namespace museum {

// Seeded generator with a portable normal sampler. std::normal_distribution
// is implementation-defined, so Gaussian draws use Box-Muller on top of
// mt19937_64 to keep checkpoints identical across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    // Uniform in [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    // Uniform integer in [lo, hi].
    int uniform_int(int lo, int hi) noexcept;
    double normal() noexcept;
    double normal(double mean, double stddev) noexcept { return mean + stddev * normal(); }

    Tensor normal_tensor(std::vector<int> shape, double stddev = 1.0);
    std::uint64_t next_u64() noexcept { return engine_(); }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// Derives an independent stream seed from a base seed and a tag sequence
// (splitmix64 mixing).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) noexcept;

}  // namespace museum

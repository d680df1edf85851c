#include "museum/rng.hpp"

#include <cmath>
#include <numbers>

namespace museum {

int Rng::uniform_int(int lo, int hi) noexcept {
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(engine_() % span);
}

double Rng::normal() noexcept {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

Tensor Rng::normal_tensor(std::vector<int> shape, double stddev) {
    Tensor t(std::move(shape));
    for (double& v : t.data) v = stddev * normal();
    return t;
}

namespace {
std::uint64_t splitmix(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}
}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b, std::uint64_t c) noexcept {
    std::uint64_t h = splitmix(base);
    h = splitmix(h ^ a);
    h = splitmix(h ^ (b + 0x51ed270b27ULL));
    h = splitmix(h ^ (c + 0x2545f4914f6cdd1dULL));
    return h;
}

}  // namespace museum

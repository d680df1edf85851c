#include <cmath>

#include "doctest.h"
#include "gradient_suite.hpp"
#include "museum/errors.hpp"
#include "museum/losses.hpp"

using namespace museum;

namespace {

// Direct summation, no log-sum-exp.
double kl_oracle(const std::vector<double>& p, const std::vector<double>& q, double tau) {
    double zp = 0.0, zq = 0.0;
    for (double v : p) zp += std::exp(v / tau);
    for (double v : q) zq += std::exp(v / tau);
    double kl = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double pi = std::exp(p[i] / tau) / zp, qi = std::exp(q[i] / tau) / zq;
        kl += pi * std::log(pi / qi);
    }
    return kl;
}

Tensor vec(std::vector<double> v) {
    const int n = static_cast<int>(v.size());
    return Tensor({n}, std::move(v));
}

// Rank-1 adapter whose delta is u v^T (A = u, B = v).
LoraState rank1(const std::vector<std::vector<double>>& us, const std::vector<std::vector<double>>& vs) {
    std::vector<ProjectionSpec> layout;
    for (std::size_t l = 0; l < us.size(); ++l) {
        layout.push_back({"p" + std::to_string(l), static_cast<int>(us[l].size()), static_cast<int>(vs[l].size())});
    }
    LoraState s = LoraState::create(layout, 1, 1.0, 0);
    for (std::size_t l = 0; l < us.size(); ++l) {
        s.set_factors(l, Tensor({static_cast<int>(us[l].size()), 1}, us[l]),
                      Tensor({static_cast<int>(vs[l].size()), 1}, vs[l]));
    }
    return s;
}

}  // namespace

TEST_CASE("softmax_kl against the direct summation oracle") {
    const double ref = kl_oracle({1, 0}, {0, 1}, 1.0);
    CHECK(ref == doctest::Approx(0.462117).epsilon(1e-6));
    CHECK(std::abs(softmax_kl(vec({1, 0}), vec({0, 1}), 1.0) - ref) < 1e-12);
    CHECK(std::abs(softmax_kl(vec({2, 0}), vec({0, 2}), 2.0) - ref) < 1e-12);
    CHECK(softmax_kl(vec({3, -1, 2}), vec({3, -1, 2}), 1.0) == 0.0);
    // Shift invariance: a constant offset changes nothing.
    CHECK(softmax_kl(vec({1, 2, 3}), vec({6, 7, 8}), 0.7) < 1e-12);
    Rng rng(9);
    for (int trial = 0; trial < 5; ++trial) {
        const Tensor p = rng.normal_tensor({12}), q = rng.normal_tensor({12});
        const double v = softmax_kl(p, q, 1.3);
        CHECK(v >= 0.0);
        CHECK(v == doctest::Approx(kl_oracle(p.data, q.data, 1.3)).epsilon(1e-10));
    }
    CHECK_THROWS_AS(softmax_kl(vec({1, 2}), vec({1, 2, 3}), 1.0), InputError);
    CHECK_THROWS_AS(softmax_kl(vec({INFINITY, 2}), vec({1, 2}), 1.0), NumericError);
}

TEST_CASE("l_sd reduction") {
    const Tensor zero({4, 8, 8}), ones({4, 8, 8}, 1.0);
    CHECK(l_sd({zero}, {zero}) == 0.0);
    CHECK(l_sd({zero}, {ones}) == doctest::Approx(1.0));
    Rng rng(3);
    std::vector<Tensor> a, b;
    for (int i = 0; i < 2; ++i) {
        a.push_back(rng.normal_tensor({4, 8, 8}));
        b.push_back(rng.normal_tensor({4, 8, 8}));
    }
    double oracle = 0.0;
    for (int i = 0; i < 2; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < 256; ++j) s += (a[i][j] - b[i][j]) * (a[i][j] - b[i][j]);
        oracle += s / 256.0;
    }
    CHECK(l_sd(a, b) == doctest::Approx(oracle / 2.0).epsilon(1e-12));
    CHECK_THROWS_AS(l_sd({zero}, {Tensor({3})}), InputError);
    CHECK_THROWS_AS(l_sd(std::vector<Tensor>{}, std::vector<Tensor>{}), InputError);
}

TEST_CASE("mean_latent") {
    const Tensor m = mean_latent({vec({1, 3}), vec({3, 1})});
    CHECK(m[0] == 2.0);
    CHECK(m[1] == 2.0);
    Rng rng(5);
    std::vector<Tensor> zs;
    for (int i = 0; i < 8; ++i) zs.push_back(rng.normal_tensor({4, 8, 8}));
    const Tensor mean = mean_latent(zs);
    for (std::size_t j = 0; j < 256; j += 17) {
        long double acc = 0.0L;
        for (const auto& z : zs) acc += z[j];
        CHECK(std::abs(mean[j] - static_cast<double>(acc / 8.0L)) < 1e-14);
    }
    CHECK(l2_distance(mean_latent({zs[0], zs[0], zs[0]}), zs[0]) < 1e-14);
    CHECK_THROWS_AS(mean_latent({}), InputError);
}

TEST_CASE("l_sdl matches the oracle on recorded outputs") {
    const DiffusionModel m = testing::toy_model();
    Rng rng(12);
    const Tensor z0 = rng.normal_tensor({4, 8, 8}), z1 = rng.normal_tensor({4, 8, 8});
    const Tensor eps = rng.normal_tensor({4, 8, 8});
    const Tensor zbar = mean_latent({z0, z1});
    const Conditioning c = m.encode_prompt(m.vocab().tokenize("a square"), nullptr, std::nullopt);
    const Tensor ps = m.predict_noise(m.add_noise(z0, 250, eps), 250, c, nullptr);
    const Tensor pm = m.predict_noise(m.add_noise(zbar, 250, eps), 250, c, nullptr);
    CHECK(l_sdl({ag::constant(ps)}, {ag::constant(pm)}, 1.0).item() == doctest::Approx(kl_oracle(ps.data, pm.data, 1.0)));
    // One-image task: the mean latent is the latent itself.
    const Tensor single = mean_latent({z0});
    const Tensor p1 = m.predict_noise(m.add_noise(z0, 250, eps), 250, c, nullptr);
    const Tensor p2 = m.predict_noise(m.add_noise(single, 250, eps), 250, c, nullptr);
    CHECK(l_sdl({ag::constant(p1)}, {ag::constant(p2)}, 1.0).item() == 0.0);
    CHECK(l_sdl_literal({z0}, single, 1.0) == 0.0);
}

TEST_CASE("l_w cases") {
    const LoraState a = rank1({{1, 0}, {1, 2}}, {{1, 0}, {0, 1}});
    CHECK(std::abs(l_w(a, a).item()) < 1e-12);
    const LoraState neg = rank1({{-1, 0}, {-1, -2}}, {{1, 0}, {0, 1}});
    CHECK(l_w(a, neg).item() == doctest::Approx(2.0).epsilon(1e-12));
    // Layer 1 orthogonal, layer 2 identical.
    const LoraState half = rank1({{0, 1}, {1, 2}}, {{1, 0}, {0, 1}});
    CHECK(l_w(a, half).item() == doctest::Approx(0.5).epsilon(1e-12));
    const LoraState other = rank1({{1, 0, 0}}, {{1, 0}});
    CHECK_THROWS_AS(l_w(a, other), InputError);
    // Bounded and zero at the start of an interpolation.
    for (double s : {0.0, 0.25, 0.5, 1.0}) {
        const LoraState mix = rank1({{1 - s, s}, {1, 2}}, {{1, 0}, {0, 1}});
        const double v = l_w(a, mix).item();
        CHECK(v >= -1e-12);
        CHECK(v <= 2.0 + 1e-12);
        if (s == 0.0) CHECK(std::abs(v) < 1e-12);
    }
}

TEST_CASE("l_f averaging and gradient routing") {
    CHECK(l_f({}, {}, 1.0).item() == 0.0);
    Rng rng(21);
    std::vector<std::vector<ag::Var>> past(2), cur(2);
    double oracle = 0.0;
    for (int j = 0; j < 2; ++j) {
        const Tensor p = rng.normal_tensor({10}), q = rng.normal_tensor({10});
        past[static_cast<std::size_t>(j)].push_back(ag::parameter(p));
        cur[static_cast<std::size_t>(j)].push_back(ag::parameter(q));
        oracle += kl_oracle(p.data, q.data, 1.0) / 2.0;
    }
    const ag::Var v = l_f(past, cur, 1.0);
    CHECK(v.item() == doctest::Approx(oracle).epsilon(1e-12));
    ag::backward(v);
    CHECK(past[0][0].grad().empty());
    CHECK_FALSE(cur[0][0].grad().empty());
    CHECK(l_f(past, past, 1.0).item() == 0.0);
    CHECK_THROWS_AS(l_f(past, {cur[0]}, 1.0), InputError);
}

TEST_CASE("weighted combinations with the default weights") {
    const HyperParams h;
    CHECK(h.lambda1 == 0.8);
    CHECK(h.lambda2 == 1.0);
    CHECK(h.alpha == 0.8);
    CHECK(h.beta == 1.5);
    CHECK(std::abs(l_dr(0.5, 0.2, h) - 0.6) < 1e-12);
    CHECK(l_dr(0.0, 0.0, h) == 0.0);
    CHECK(std::abs(l_overall_step(1.0, 0.5, 0.6, h) - 2.3) < 1e-12);
    CHECK(l_overall_step(0.0, 0.0, 0.0, h) == 0.0);
    HyperParams bad;
    bad.tau = 0.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad.tau = 1.0;
    bad.beta = -1.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("analytic gradients match finite differences through the denoiser") {
    const auto worst = testing::run_gradient_suite(4, 1e-5, 3);
    for (const auto& [name, err] : worst) {
        INFO(name);
        CHECK(err < 1e-4);
    }
}

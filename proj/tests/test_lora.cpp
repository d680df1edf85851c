#include <cmath>

#include "doctest.h"
#include "museum/errors.hpp"
#include "museum/lora.hpp"
#include "museum/unet.hpp"
#include "test_support.hpp"

using namespace museum;
using museum::testing::toy_model;

TEST_CASE("adapter count and parameter count follow the projection shapes") {
    DiffusionModel m = toy_model();
    const auto layout = m.unet().adapted_projections();
    const LoraState s = attach_lora(m.unet(), 4, 1);
    std::size_t expected = 0;
    for (const auto& p : layout) expected += 4u * static_cast<std::size_t>(p.d_out + p.d_in);
    CHECK(s.parameter_count() == expected);
    CHECK(s.parameter_count() == 6656);
    CHECK(s.layer_count() == 16);
    CHECK(s.trainable().size() == 32);
    CHECK_THROWS_AS(attach_lora(m.unet(), 4, 2), StateError);
    CHECK_THROWS_AS(LoraState::create(layout, 0, 1.0, 1), ConfigError);
}

TEST_CASE("fresh adapters leave the model output unchanged") {
    DiffusionModel m = toy_model();
    const LoraState s = attach_lora(m.unet(), 4, 3);
    for (std::size_t l = 0; l < s.layer_count(); ++l) {
        for (double v : delta_weight(s, l).data) CHECK(v == 0.0);
    }
    const Conditioning c = m.encode_prompt(m.vocab().tokenize("a cross"), nullptr, std::nullopt);
    Rng rng(4);
    const Tensor zt = rng.normal_tensor({4, 8, 8});
    CHECK(bitwise_equal(m.predict_noise(zt, 100, c, nullptr), m.predict_noise(zt, 100, c, &s)));

    // A draws have the requested spread.
    double sq = 0.0;
    std::size_t n = 0;
    for (const auto& a : s.adapters())
        for (double v : a.a.value().data) {
            sq += v * v;
            ++n;
        }
    CHECK(std::abs(std::sqrt(sq / static_cast<double>(n)) - 0.02) < 0.002);
}

TEST_CASE("nonzero adapters change the output by the low-rank delta") {
    DiffusionModel m = toy_model();
    LoraState s = attach_lora(m.unet(), 2, 5);
    Rng rng(6);
    for (std::size_t l = 0; l < s.layer_count(); ++l) {
        const auto& a = s.adapter(l);
        s.set_factors(l, rng.normal_tensor(a.a.shape(), 0.1), rng.normal_tensor(a.b.shape(), 0.1));
    }
    const Tensor d = delta_weight(s, 0);
    const auto& a0 = s.adapter(0);
    // Independent oracle for A B^T.
    for (int i = 0; i < a0.d_out; i += 7)
        for (int j = 0; j < a0.d_in; j += 5) {
            double acc = 0.0;
            for (int r = 0; r < 2; ++r) {
                acc += a0.a.value()[static_cast<std::size_t>(i * 2 + r)] * a0.b.value()[static_cast<std::size_t>(j * 2 + r)];
            }
            CHECK(d[static_cast<std::size_t>(i * a0.d_in + j)] == doctest::Approx(acc).epsilon(1e-12));
        }
    const Conditioning c = m.encode_prompt(m.vocab().tokenize("a cross"), nullptr, std::nullopt);
    const Tensor zt = rng.normal_tensor({4, 8, 8});
    CHECK(l2_distance(m.predict_noise(zt, 100, c, nullptr), m.predict_noise(zt, 100, c, &s)) > 0.0);
    CHECK_THROWS_AS(s.set_factors(0, Tensor({1, 1}), Tensor({1, 1})), FormatError);
}

TEST_CASE("frozen and trainable clones are independent copies") {
    DiffusionModel m = toy_model();
    const LoraState s = attach_lora(m.unet(), 4, 8);
    const LoraState frozen = s.clone_frozen();
    const LoraState live = s.clone_trainable();
    CHECK(frozen.is_frozen());
    CHECK(frozen.structure_matches(s));
    CHECK_FALSE(frozen.adapter(0).a.requires_grad());
    CHECK(live.adapter(0).a.requires_grad());
    live.adapter(0).a.mutable_value()[0] += 1.0;
    CHECK(frozen.adapter(0).a.value()[0] == s.adapter(0).a.value()[0]);
    CHECK(s.adapter(0).a.value()[0] != live.adapter(0).a.value()[0]);
}

TEST_CASE("cosine similarity conventions") {
    CHECK(cosine_similarity({1, 0}, {0, 1}).value == 0.0);
    CHECK(cosine_similarity({1, 2}, {2, 4}).value == doctest::Approx(1.0));
    CHECK(cosine_similarity({1, 2}, {-1, -2}).value == doctest::Approx(-1.0));
    const Similarity both = cosine_similarity({0, 0}, {0, 0});
    CHECK(both.value == 1.0);
    CHECK(both.zero_norm);
    const Similarity one = cosine_similarity({0, 0}, {1, 0});
    CHECK(one.value == 0.0);
    CHECK(one.zero_norm);
    const ag::Var z = ag::constant(Tensor({2}));
    CHECK(cosine_similarity(z, z).item() == 1.0);
    CHECK(cosine_similarity(z, ag::constant(Tensor({2}, std::vector<double>{1, 0}))).item() == 0.0);
}

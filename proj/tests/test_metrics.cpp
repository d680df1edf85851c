#include <cmath>

#include "doctest.h"
#include "museum/data.hpp"
#include "museum/errors.hpp"
#include "museum/metrics.hpp"

using namespace museum;

TEST_CASE("gram matrix") {
    const Tensor g = gram_matrix(Tensor({2, 1, 1}, 1.0));
    CHECK(g.shape == std::vector<int>{2, 2});
    for (double v : g.data) CHECK(v == 0.5);
    for (double v : gram_matrix(Tensor({3, 2, 2})).data) CHECK(v == 0.0);
    Rng rng(4);
    const Tensor r = gram_matrix(rng.normal_tensor({5, 3, 4}));
    for (int i = 0; i < 5; ++i) {
        CHECK(r[static_cast<std::size_t>(i * 5 + i)] >= 0.0);
        for (int j = 0; j < 5; ++j) CHECK(r[static_cast<std::size_t>(i * 5 + j)] == r[static_cast<std::size_t>(j * 5 + i)]);
    }
    // PSD: x^T G x >= 0 for random x.
    for (int trial = 0; trial < 10; ++trial) {
        const Tensor x = rng.normal_tensor({5});
        double q = 0.0;
        for (int i = 0; i < 5; ++i)
            for (int j = 0; j < 5; ++j) q += x[static_cast<std::size_t>(i)] * r[static_cast<std::size_t>(i * 5 + j)] * x[static_cast<std::size_t>(j)];
        CHECK(q >= -1e-12);
    }
    CHECK_THROWS_AS(gram_matrix(Tensor({0, 1, 1})), InputError);
}

TEST_CASE("style loss orders styles") {
    const FeatureExtractor fx;
    const auto specs = reference_styles();
    const StyleTask a = synth_style_task(specs[0], 6, 1), a2 = synth_style_task(specs[0], 6, 2);
    const StyleTask b = synth_style_task(specs[1], 6, 3);
    CHECK(style_loss({a.images[0]}, {a.images[0]}, fx) == 0.0);
    CHECK(style_loss(a.images, b.images, fx) > style_loss(a.images, a2.images, fx));
    CHECK_THROWS_AS(style_loss({}, a.images, fx), InputError);
}

TEST_CASE("extractor is deterministic") {
    const FeatureExtractor f1(3), f2(3);
    const Tensor img = synth_style_task(reference_styles()[2], 1, 1).images[0];
    CHECK(f1.embed(img) == f2.embed(img));
    CHECK(f1.embed(img).size() == 48);
}

TEST_CASE("fid basic properties and the 1-D closed form") {
    Rng rng(8);
    std::vector<std::vector<double>> a, b;
    for (int i = 0; i < 10000; ++i) {
        const double x = rng.normal();
        a.push_back({x});
        b.push_back({x + 1.0});
    }
    CHECK(fid(a, a) < 1e-6);
    CHECK(std::abs(fid(a, b) - 1.0) < 0.02);
    CHECK(fid(a, b) == doctest::Approx(fid(b, a)).epsilon(1e-12));
    std::vector<std::vector<double>> m1, m2;
    for (int i = 0; i < 300; ++i) {
        m1.push_back({rng.normal(), rng.normal(), rng.normal()});
        m2.push_back({rng.normal(0, 2), rng.normal(), rng.normal(1, 1)});
    }
    CHECK(fid(m1, m2) > 0.0);
    CHECK(fid(m1, m2) == doctest::Approx(fid(m2, m1)).epsilon(1e-9));
    CHECK_THROWS_AS(fid({{1.0}}, a), InputError);
}

TEST_CASE("contact sheet layout") {
    const Tensor img({3, 8, 8}, 0.25);
    const Tensor sheet = contact_sheet({{img, img, img}, {img, img, img}});
    CHECK(sheet.shape[0] == 3);
    CHECK(sheet.shape[1] > 16);
    CHECK(sheet.shape[2] > 24);
}

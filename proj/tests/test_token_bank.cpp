#include <cmath>

#include "doctest.h"
#include "museum/errors.hpp"
#include "museum/token_bank.hpp"
#include "test_support.hpp"

using namespace museum;
using museum::testing::toy_model;

TEST_CASE("gaussian init has the requested spread and is seeded") {
    const DiffusionModel m = toy_model();
    TokenBank bank;
    bank.init_task_tokens(1, 4, 64, TokenInit::gaussian(11, 0.02), m.text_encoder(), "a");
    double sq = 0.0;
    for (int l = 1; l <= 4; ++l)
        for (double v : bank.lookup_value(1, l).data) sq += v * v;
    CHECK(std::abs(std::sqrt(sq / 256.0) - 0.02) < 0.002);

    TokenBank again;
    again.init_task_tokens(1, 4, 64, TokenInit::gaussian(11, 0.02), m.text_encoder(), "a");
    CHECK(token_set_hash(bank.task(1)) == token_set_hash(again.task(1)));
}

TEST_CASE("word init copies the embedding into every layer") {
    const DiffusionModel m = toy_model();
    TokenBank bank;
    const int art = m.vocab().id("art");
    const TokenInit init = TokenInit::default_for(m.vocab(), 1);
    CHECK(init.kind == TokenInit::Kind::word);
    CHECK(init.word_id == art);
    bank.init_task_tokens(1, 4, 64, init, m.text_encoder(), "a");
    for (int l = 1; l <= 4; ++l) CHECK(bitwise_equal(bank.lookup_value(1, l), m.text_encoder().word_embedding(art)));
    CHECK(bank.task(1).init_record == init.describe());
}

TEST_CASE("task ids are contiguous and unique") {
    const DiffusionModel m = toy_model();
    TokenBank bank;
    CHECK_THROWS_AS(bank.init_task_tokens(2, 4, 64, TokenInit::gaussian(1), m.text_encoder()), StateError);
    bank.init_task_tokens(1, 4, 64, TokenInit::gaussian(1), m.text_encoder());
    CHECK_THROWS_AS(bank.init_task_tokens(1, 4, 64, TokenInit::gaussian(1), m.text_encoder()), StateError);
    CHECK_THROWS_AS((void)bank.lookup(1, 0), InputError);
    CHECK_THROWS_AS((void)bank.lookup(1, 5), InputError);
    CHECK_THROWS_AS((void)bank.lookup(2, 1), LookupError);
}

TEST_CASE("freezing blocks updates and is idempotent") {
    const DiffusionModel m = toy_model();
    TokenBank bank;
    bank.init_task_tokens(1, 4, 64, TokenInit::gaussian(1), m.text_encoder());
    CHECK(bank.trainable_vars(1).size() == 4);
    CHECK(bank.trainable_parameter_count() == 256);
    bank.update_vector(1, 2, Tensor({64}, 0.5));
    CHECK(bank.lookup_value(1, 2)[0] == 0.5);
    const auto h = token_set_hash(bank.task(1));
    bank.freeze_task(1);
    bank.freeze_task(1);
    CHECK(bank.is_frozen(1));
    CHECK(token_set_hash(bank.task(1)) == h);
    CHECK_FALSE(bank.lookup(1, 1).requires_grad());
    CHECK_THROWS_AS(bank.update_vector(1, 1, Tensor({64})), StateError);
    CHECK_THROWS_AS((void)bank.trainable_vars(1), StateError);
    CHECK(bank.trainable_parameter_count() == 0);
}

TEST_CASE("frozen copies are detached from the source") {
    const DiffusionModel m = toy_model();
    TokenBank bank;
    bank.init_task_tokens(1, 4, 64, TokenInit::gaussian(2), m.text_encoder());
    const TokenBank copy = bank.frozen_copy();
    const auto h = token_set_hash(copy.task(1));
    bank.update_vector(1, 1, Tensor({64}, 3.0));
    CHECK(token_set_hash(copy.task(1)) == h);
    CHECK(copy.is_frozen(1));
    CHECK_FALSE(bank.is_frozen(1));
}

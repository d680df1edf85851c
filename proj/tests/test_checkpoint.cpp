#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "museum/checkpoint.hpp"
#include "museum/errors.hpp"
#include "museum/trainer.hpp"
#include "test_support.hpp"

using namespace museum;
using namespace museum::testing;
namespace fs = std::filesystem;

namespace {

Museum trained(TrainMode mode) {
    const auto tasks = toy_tasks(2);
    TrainConfig cfg = toy_train_config(mode, 5);
    Museum m = make_museum(toy_model(), cfg);
    m = run_task(1, tasks[0], cfg, m);
    return run_task(2, tasks[1], cfg, m);
}

}  // namespace

TEST_CASE("save, load, save is byte identical and generation is preserved") {
    for (TrainMode mode : {TrainMode::museum, TrainMode::upper_bound}) {
        const Museum m = trained(mode);
        const std::string bytes = serialize_checkpoint(m);
        const Museum back = deserialize_checkpoint(bytes);
        CHECK(serialize_checkpoint(back) == bytes);
        CHECK(back.task_count() == 2);
        CHECK(back.config.mode == mode);
        CHECK(back.learned_parameter_count() == m.learned_parameter_count());
        for (int k = 1; k <= 2; ++k) {
            CHECK(token_set_hash(back.bank.task(k)) == token_set_hash(m.bank.task(k)));
            CHECK(bitwise_equal(generate_latent(back, "a ring in <style>", k, 4, 5),
                                generate_latent(m, "a ring in <style>", k, 4, 5)));
        }
    }
}

TEST_CASE("learned codec and the base model survive a file round trip") {
    ModelConfig mc;
    mc.seed = 3;
    TrainConfig cfg;
    cfg.model = mc;
    const Museum m = make_museum(DiffusionModel(mc), cfg);
    const fs::path p = fs::temp_directory_path() / "museum_test_base.ckpt";
    save_checkpoint(m, p);
    const Museum back = load_checkpoint(p);
    const auto a = m.base.params(), b = back.base.params();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(bitwise_equal(a[i].second.value(), b[i].second.value()));
    CHECK(file_sha256(p) == sha256_hex(serialize_checkpoint(back)));
    fs::remove(p);
}

TEST_CASE("corrupt archives are rejected") {
    const std::string bytes = serialize_checkpoint(trained(TrainMode::museum));
    CHECK_THROWS_AS(deserialize_checkpoint(bytes.substr(0, bytes.size() - 10)), FormatError);
    CHECK_THROWS_AS(deserialize_checkpoint(bytes.substr(0, 30)), FormatError);
    CHECK_THROWS_AS(deserialize_checkpoint(bytes.substr(0, 5)), FormatError);
    std::string wrong_version = bytes;
    wrong_version[8] = 9;
    CHECK_THROWS_AS(deserialize_checkpoint(wrong_version), FormatError);
    std::string bad_magic = bytes;
    bad_magic[0] = 'X';
    CHECK_THROWS_AS(deserialize_checkpoint(bad_magic), FormatError);
    std::string bad_manifest = bytes;
    bad_manifest[20] = '#';
    CHECK_THROWS_AS(deserialize_checkpoint(bad_manifest), FormatError);
    CHECK_THROWS_AS(load_checkpoint("/nonexistent/museum.ckpt"), IoError);
}

TEST_CASE("sha256 of a known string") {
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

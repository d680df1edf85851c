#include "doctest.h"
#include "museum/errors.hpp"
#include "museum/trainer.hpp"
#include "test_support.hpp"

using namespace museum;
using namespace museum::testing;

namespace {

struct Run {
    Museum museum;
    std::vector<std::vector<LossReport>> reports;
};

Run train(const TrainConfig& cfg, const std::vector<StyleTask>& tasks, int upto) {
    Run r{make_museum(toy_model(), cfg), {}};
    for (int k = 1; k <= upto; ++k) {
        r.reports.emplace_back();
        r.museum = run_task(k, tasks[static_cast<std::size_t>(k - 1)], cfg, r.museum,
                            [&](int, int, int, const LossReport& rep) { r.reports.back().push_back(rep); });
    }
    return r;
}

}  // namespace

TEST_CASE("first task has no dual regularization") {
    const auto tasks = toy_tasks(2);
    const Run r = train(toy_train_config(), tasks, 2);
    REQUIRE(r.reports[0].size() == 4);
    for (const auto& rep : r.reports[0]) {
        CHECK(rep.l_dr == 0.0);
        CHECK(rep.l_w == 0.0);
        CHECK(rep.l_f == 0.0);
    }
    // The first step of task 2 starts from the snapshot itself.
    CHECK(r.reports[1][0].l_f == 0.0);
    CHECK(std::abs(r.reports[1][0].l_w) < 1e-12);
    bool moved = false;
    for (const auto& rep : r.reports[1]) moved = moved || rep.l_w > 0.0;
    CHECK(moved);
    for (const auto& v : r.reports)
        for (const auto& rep : v) {
            const HyperParams h;
            CHECK(rep.l_total == doctest::Approx(rep.l_sd + h.alpha * rep.l_sdl + h.beta * rep.l_dr).epsilon(1e-12));
        }
}

TEST_CASE("tasks must run in order") {
    const auto tasks = toy_tasks(3);
    const TrainConfig cfg = toy_train_config();
    const Museum empty = make_museum(toy_model(), cfg);
    CHECK_THROWS_AS(run_task(2, tasks[1], cfg, empty), StateError);
    const Museum one = run_task(1, tasks[0], cfg, empty);
    CHECK_THROWS_AS(run_task(1, tasks[0], cfg, one), StateError);
    CHECK_THROWS_AS(run_task(3, tasks[2], cfg, one), StateError);
    TrainConfig other = cfg;
    other.mode = TrainMode::ft_only;
    CHECK_THROWS_AS(run_task(2, tasks[1], other, one), ConfigError);
    TrainConfig bad = cfg;
    bad.steps_per_task = 0;
    CHECK_THROWS_AS(run_task(1, tasks[0], bad, empty), ConfigError);
}

TEST_CASE("run_task leaves its input museum untouched") {
    const auto tasks = toy_tasks(2);
    const TrainConfig cfg = toy_train_config();
    const Museum one = run_task(1, tasks[0], cfg, make_museum(toy_model(), cfg));
    const Tensor a_before = one.lora.adapter(3).a.value();
    const Museum two = run_task(2, tasks[1], cfg, one);
    CHECK(bitwise_equal(one.lora.adapter(3).a.value(), a_before));
    CHECK_FALSE(bitwise_equal(two.lora.adapter(3).a.value(), a_before));
    CHECK(one.task_count() == 1);
    CHECK(two.task_count() == 2);
}

TEST_CASE("training a task never touches earlier token sets") {
    const auto tasks = toy_tasks(3);
    const TrainConfig cfg = toy_train_config();
    Museum m = make_museum(toy_model(), cfg);
    m = run_task(1, tasks[0], cfg, m);
    const auto h1 = token_set_hash(m.bank.task(1));
    const std::size_t lora_params = m.lora.parameter_count();
    m = run_task(2, tasks[1], cfg, m);
    CHECK(token_set_hash(m.bank.task(1)) == h1);
    CHECK(m.lora.parameter_count() == lora_params);
    const auto h2 = token_set_hash(m.bank.task(2));
    m = run_task(3, tasks[2], cfg, m);
    CHECK(token_set_hash(m.bank.task(1)) == h1);
    CHECK(token_set_hash(m.bank.task(2)) == h2);
    CHECK(m.bank.is_frozen(3));
    CHECK(m.task(3).style_name == tasks[2].style_name);
}

TEST_CASE("snapshots are immutable deep copies") {
    const auto tasks = toy_tasks(2);
    TrainConfig cfg = toy_train_config();
    const Museum empty = make_museum(toy_model(), cfg);
    CHECK_THROWS_AS(snapshot_model(empty), StateError);
    Museum m = run_task(1, tasks[0], cfg, empty);
    const ModelSnapshot snap = snapshot_model(m);
    CHECK(snap.task_count() == 1);
    CHECK(snap.bank.task_count() == 1);
    const PseudoNoisePairs before = pseudo_noise_pass(snap, m, 99);

    cfg.steps_per_task = 100;
    cfg.learning_rate = 1e-2;
    const Museum after = run_task(2, tasks[1], cfg, m);
    const PseudoNoisePairs again = pseudo_noise_pass(snap, after, 99);
    CHECK(bitwise_equal(before.past[0][0].value(), again.past[0][0].value()));
    CHECK_FALSE(bitwise_equal(before.cur[0][0].value(), again.cur[0][0].value()));

    const ModelSnapshot twice = snapshot_model(snap);
    const PseudoNoisePairs third = pseudo_noise_pass(twice, after, 99);
    CHECK(bitwise_equal(third.past[0][0].value(), before.past[0][0].value()));
    CHECK(snapshot_model(after).bank.task_count() == 2);
}

TEST_CASE("pseudo-noise pass pairs and shared draws") {
    const auto tasks = toy_tasks(3);
    const TrainConfig cfg = toy_train_config();
    Museum m = make_museum(toy_model(), cfg);
    m = run_task(1, tasks[0], cfg, m);
    m = run_task(2, tasks[1], cfg, m);
    const ModelSnapshot snap = snapshot_model(m);
    const PseudoNoisePairs p = pseudo_noise_pass(snap, m, 5, {2, LfMode::onestep, 5});
    REQUIRE(p.past.size() == 2);
    CHECK(p.past[0].size() == 2);
    // Live equals snapshot, so every pair matches and l_f vanishes.
    for (std::size_t j = 0; j < 2; ++j)
        for (std::size_t i = 0; i < 2; ++i) CHECK(bitwise_equal(p.past[j][i].value(), p.cur[j][i].value()));
    CHECK(l_f(p.past, p.cur, 1.0).item() == 0.0);
    const PseudoNoisePairs q = pseudo_noise_pass(snap, m, 5, {2, LfMode::onestep, 5});
    CHECK(p.timesteps == q.timesteps);
    CHECK(bitwise_equal(p.past[1][1].value(), q.past[1][1].value()));
    const PseudoNoisePairs s = pseudo_noise_pass(snap, m, 5, {1, LfMode::sampled, 5});
    CHECK(s.past.size() == 2);
    for (const auto& ts : s.timesteps)
        for (int t : ts) CHECK(t % 200 == 0);

    ModelSnapshot empty_prompts = snap;
    empty_prompts.past_tasks[0].prompt_templates.clear();
    CHECK_THROWS_AS(pseudo_noise_pass(empty_prompts, m, 5), InputError);
}

TEST_CASE("mode reductions of the objective") {
    const auto tasks = toy_tasks(2);
    const HyperParams h;
    const Run ft = train(toy_train_config(TrainMode::ft_only), tasks, 2);
    for (const auto& v : ft.reports)
        for (const auto& rep : v) {
            CHECK(rep.l_total == rep.l_sd);
            CHECK(rep.grad_norm_tokens == 0.0);
        }
    const Run nosdl = train(toy_train_config(TrainMode::no_sdl), tasks, 2);
    for (const auto& rep : nosdl.reports[1]) {
        CHECK(rep.l_sdl == 0.0);
        CHECK(rep.l_total == doctest::Approx(rep.l_sd + h.beta * rep.l_dr).epsilon(1e-12));
    }
    const Run nottl = train(toy_train_config(TrainMode::no_ttl), tasks, 2);
    CHECK(token_set_hash(nottl.museum.bank.task(1)) == token_set_hash(nottl.museum.bank.task(2)));
    CHECK(nottl.reports[1].back().l_w > 0.0);
    const Run ub = train(toy_train_config(TrainMode::upper_bound), tasks, 2);
    CHECK(ub.museum.task_loras.size() == 2);
    for (const auto& rep : ub.reports[1]) CHECK(rep.l_dr == 0.0);
}

TEST_CASE("a one-image task has zero style distillation loss") {
    auto tasks = toy_tasks(1, 1);
    TrainConfig cfg = toy_train_config(TrainMode::museum, 10);
    const Run r = train(cfg, tasks, 1);
    for (const auto& rep : r.reports[0]) CHECK(rep.l_sdl == 0.0);
}

TEST_CASE("parameter budget across tasks") {
    auto tasks = toy_tasks(3);
    const Run museum_run = train(toy_train_config(TrainMode::museum, 2), tasks, 3);
    const Run ub_run = train(toy_train_config(TrainMode::upper_bound, 2), tasks, 3);
    const std::size_t lora = 6656, tokens = 4 * 64;
    CHECK(museum_run.museum.learned_parameter_count() == lora + 3 * tokens);
    CHECK(ub_run.museum.learned_parameter_count() == 3 * lora + 3 * tokens);
    const Run ft = train(toy_train_config(TrainMode::ft_only, 2), tasks, 3);
    CHECK(ft.museum.learned_parameter_count() == lora);
}

TEST_CASE("generation is deterministic and style dependent") {
    const auto tasks = toy_tasks(2);
    TrainConfig cfg = toy_train_config(TrainMode::museum, 20);
    cfg.learning_rate = 1e-2;
    const Run r = train(cfg, tasks, 2);
    const Tensor a = generate(r.museum, "a circle in <style>", 1, 3, 5);
    const Tensor b = generate(r.museum, "a circle in <style>", 1, 3, 5);
    CHECK(bitwise_equal(a, b));
    CHECK(l2_distance(a, generate(r.museum, "a circle in <style>", 2, 3, 5)) > 0.0);
    CHECK_THROWS_AS(generate(r.museum, "a circle in <style>", 3, 3, 5), LookupError);
    CHECK(r.museum.task_by_style(tasks[1].style_name) == 2);
    CHECK_THROWS_AS((void)r.museum.task_by_style("nope"), LookupError);
}

TEST_CASE("config json round trip and validation") {
    TrainConfig c;
    c.mode = TrainMode::upper_bound;
    c.hp.beta = 0.0;
    c.seed = 17;
    c.sdl_mode = SdlMode::literal;
    const TrainConfig back = train_config_from_json(to_json(c));
    CHECK(to_json(back) == to_json(c));
    CHECK(c.steps_per_task == 1000);
    CHECK(c.batch_size == 1);
    CHECK(c.learning_rate == 1e-5);
    CHECK_THROWS_AS(train_config_from_json({{"mode", "bogus"}}), ConfigError);
    CHECK_THROWS_AS(train_config_from_json({{"batch_size", 0}}), ConfigError);
    CHECK_THROWS_AS(train_config_from_json({{"steps_per_task", "many"}}), ConfigError);
    CHECK_THROWS_AS(train_config_from_json(nlohmann::json::array()), ConfigError);
}

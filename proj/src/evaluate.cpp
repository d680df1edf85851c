#include "museum/evaluate.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <thread>

#include "museum/errors.hpp"
#include "museum/trainer.hpp"

namespace museum {

std::vector<std::string> EvalOptions::default_eval_prompts() {
    return {"a circle in <style>", "a square in <style>", "a triangle in <style>", "a ring in <style>",
            "a cat wearing sunglasses in <style>"};
}

namespace {

std::string fmt(double v) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

struct Job {
    int task_id;
    std::size_t prompt;
    std::uint64_t seed;
};

}  // namespace

std::string EvalReport::to_csv() const {
    std::string out = "task,style,style_loss_x100,fid,proxy_clip,generated\n";
    for (const auto& r : rows) {
        out += (r.task_id ? std::to_string(r.task_id) : std::string("avg")) + "," + r.style + "," +
               fmt(r.style_loss_x100) + "," + fmt(r.fid) + "," + fmt(r.proxy_clip) + "," + std::to_string(r.generated) +
               "\n";
    }
    return out;
}

nlohmann::json EvalReport::to_json() const {
    nlohmann::json rows_j = nlohmann::json::array();
    for (const auto& r : rows) {
        rows_j.push_back({{"task", r.task_id},
                          {"style", r.style},
                          {"style_loss_x100", r.style_loss_x100},
                          {"fid", std::isnan(r.fid) ? nlohmann::json(nullptr) : nlohmann::json(r.fid)},
                          {"proxy_clip", r.proxy_clip},
                          {"generated", r.generated}});
    }
    return {{"museum_tasks", museum_tasks},
            {"rows", rows_j},
            {"notes",
             "fid is computed against the task's few training images and is biased at this sample size; "
             "proxy_clip is a cosine similarity of extractor features, not a CLIP score"}};
}

EvalReport evaluate_museum(const Museum& museum, const std::vector<StyleTask>& tasks, const EvalOptions& opts) {
    if (tasks.empty()) throw InputError("evaluate_museum: no tasks given");
    if (opts.prompts.empty() || opts.seeds.empty()) throw InputError("evaluate_museum: need prompts and seeds");
    std::vector<const StyleTask*> selected;
    for (const auto& t : tasks) {
        if (!opts.only_tasks.empty() &&
            std::find(opts.only_tasks.begin(), opts.only_tasks.end(), t.task_id) == opts.only_tasks.end()) {
            continue;
        }
        if (!museum.has_task(t.task_id)) {
            throw StateError("style task " + std::to_string(t.task_id) + " ('" + t.style_name +
                             "') has not been trained into this museum");
        }
        if (museum.task(t.task_id).style_name != t.style_name) {
            throw StateError("task " + std::to_string(t.task_id) + " is '" + museum.task(t.task_id).style_name +
                             "' in the museum but '" + t.style_name + "' on disk");
        }
        selected.push_back(&t);
    }
    if (selected.empty()) throw InputError("evaluate_museum: no tasks selected");

    std::vector<Job> jobs;
    for (const StyleTask* t : selected)
        for (std::size_t p = 0; p < opts.prompts.size(); ++p)
            for (std::uint64_t s : opts.seeds) jobs.push_back({t->task_id, p, s});
    std::vector<Tensor> images(jobs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < jobs.size(); i = next++) {
            const Job& j = jobs[i];
            images[i] = generate(museum, opts.prompts[j.prompt], j.task_id, j.seed, opts.steps);
        }
    };
    const int threads = std::max(1, opts.threads);
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    const FeatureExtractor fx(opts.extractor_seed);
    EvalReport report;
    report.museum_tasks = museum.task_count();
    const std::size_t per_task = opts.prompts.size() * opts.seeds.size();
    for (std::size_t k = 0; k < selected.size(); ++k) {
        const StyleTask& t = *selected[k];
        const std::vector<Tensor> gen(images.begin() + static_cast<std::ptrdiff_t>(k * per_task),
                                      images.begin() + static_cast<std::ptrdiff_t>((k + 1) * per_task));
        std::vector<std::vector<double>> fg, fr;
        for (const auto& g : gen) fg.push_back(fx.embed(g));
        for (const auto& r : t.images) fr.push_back(fx.embed(r));
        EvalRow row;
        row.task_id = t.task_id;
        row.style = t.style_name;
        row.style_loss_x100 = 100.0 * style_loss(gen, t.images, fx);
        row.fid = (fg.size() >= 2 && fr.size() >= 2) ? fid(fg, fr) : std::numeric_limits<double>::quiet_NaN();
        row.proxy_clip = proxy_clip(fg, fr);
        row.generated = static_cast<int>(gen.size());
        report.rows.push_back(row);

        std::vector<Tensor> sheet_row;
        for (std::size_t p = 0; p < opts.prompts.size(); ++p) sheet_row.push_back(gen[p * opts.seeds.size()]);
        report.grid.push_back(std::move(sheet_row));
    }
    EvalRow avg;
    avg.style = "average";
    for (const auto& r : report.rows) {
        avg.style_loss_x100 += r.style_loss_x100 / static_cast<double>(report.rows.size());
        avg.fid += r.fid / static_cast<double>(report.rows.size());
        avg.proxy_clip += r.proxy_clip / static_cast<double>(report.rows.size());
        avg.generated += r.generated;
    }
    report.rows.push_back(avg);
    return report;
}

}  // namespace museum

#include "museum/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include "json.hpp"

#include "museum/errors.hpp"
#include "museum/png_io.hpp"
#include "museum/text_encoder.hpp"

namespace museum {

namespace fs = std::filesystem;

Pattern parse_pattern(const std::string& s) {
    if (s == "stripes") return Pattern::stripes;
    if (s == "dots") return Pattern::dots;
    if (s == "checker") return Pattern::checker;
    throw InputError("unknown pattern '" + s + "' (expected stripes|dots|checker)");
}

std::string to_string(Pattern p) {
    switch (p) {
        case Pattern::stripes: return "stripes";
        case Pattern::dots: return "dots";
        case Pattern::checker: return "checker";
    }
    return "?";
}

void StyleTask::validate() const {
    if (images.empty()) throw InputError("style task has no images");
    if (images.size() != prompts.size()) {
        throw InputError("style task has " + std::to_string(images.size()) + " images but " +
                         std::to_string(prompts.size()) + " prompts");
    }
    for (const auto& img : images) {
        if (img.shape != images[0].shape) throw InputError("style task images differ in shape");
        for (double v : img.data) {
            if (!(v >= 0.0 && v <= 1.0)) throw InputError("image values must lie in [0, 1]");
        }
    }
    for (const auto& p : prompts) {
        if (p.find(Vocabulary::kPlaceholderText) == std::string::npos) {
            throw InputError("prompt '" + p + "' lacks the " + std::string(Vocabulary::kPlaceholderText) + " placeholder");
        }
    }
}

void StyleSpec::validate() const {
    if (frequency < 1 || frequency > 16) throw InputError("style frequency must lie in [1, 16]");
    for (const auto& c : palette)
        for (double v : c)
            if (!(v >= 0.0 && v <= 1.0)) throw InputError("palette colors must lie in [0, 1]");
}

StyleTask load_style_task(const fs::path& dir, const fs::path& prompts_file, int task_id, int image_size) {
    const fs::path image_dir = dir / "images";
    if (!fs::is_directory(image_dir)) throw IoError("missing image folder " + image_dir.string());
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(image_dir)) {
        if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());

    std::ifstream in(prompts_file);
    if (!in) throw IoError("cannot open prompts file " + prompts_file.string());
    std::vector<std::string> prompts;
    for (std::string line; std::getline(in, line);) {
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
        if (!line.empty()) prompts.push_back(line);
    }
    if (files.size() != prompts.size()) {
        throw InputError(dir.string() + ": " + std::to_string(files.size()) + " images but " +
                         std::to_string(prompts.size()) + " prompts");
    }

    StyleTask task;
    task.task_id = task_id;
    task.style_name = dir.filename().string();
    if (task.style_name.empty()) task.style_name = dir.parent_path().filename().string();
    const fs::path meta = dir / "meta.json";
    if (fs::exists(meta)) {
        std::ifstream ms(meta);
        try {
            auto j = nlohmann::json::parse(ms);
            if (j.contains("style")) task.style_name = j.at("style").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw InputError("bad meta.json in " + dir.string() + ": " + e.what());
        }
    }
    for (const auto& f : files) task.images.push_back(center_crop_resize(read_png(f), image_size));
    task.prompts = std::move(prompts);
    task.validate();
    return task;
}

StyleTask load_style_task(const fs::path& dir, int task_id, int image_size) {
    return load_style_task(dir, dir / "prompts.txt", task_id, image_size);
}

void save_style_task(const StyleTask& task, const fs::path& dir) {
    fs::create_directories(dir / "images");
    std::ofstream prompts(dir / "prompts.txt");
    if (!prompts) throw IoError("cannot write " + (dir / "prompts.txt").string());
    for (std::size_t i = 0; i < task.images.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "%03zu.png", i);
        write_png(dir / "images" / name, task.images[i]);
        prompts << task.prompts[i] << '\n';
    }
    std::ofstream meta(dir / "meta.json");
    meta << nlohmann::json{{"style", task.style_name}}.dump(2) << '\n';
}

namespace {

bool inside_shape(int shape, double dx, double dy, double r) {
    const double ax = std::abs(dx), ay = std::abs(dy);
    switch (shape) {
        case 0: return dx * dx + dy * dy <= r * r;                                    // circle
        case 1: return ax <= r && ay <= r;                                            // square
        case 2: return dy <= r && dy >= -r && ax <= (dy + r) * 0.5;                   // triangle
        case 3: return (ax <= r * 0.35 && ay <= r) || (ay <= r * 0.35 && ax <= r);    // cross
        case 4: {                                                                     // ring
            const double d2 = dx * dx + dy * dy;
            return d2 <= r * r && d2 >= 0.4 * r * r;
        }
        default: return ax + ay <= r;                                                 // diamond
    }
}

}  // namespace

Tensor render_style_image(const StyleSpec& spec, int shape_index, Rng& rng, int size) {
    const double cx = size * (0.3 + 0.4 * rng.uniform());
    const double cy = size * (0.3 + 0.4 * rng.uniform());
    const double r = size * (0.15 + 0.12 * rng.uniform());
    const double phase = rng.uniform();
    Tensor img({3, size, size});
    const double period = static_cast<double>(size) / spec.frequency;
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            int which = 0;
            const double u = x / period + phase, v = y / period + phase;
            switch (spec.pattern) {
                case Pattern::stripes: which = static_cast<int>(std::floor(u)) & 1; break;
                case Pattern::checker:
                    which = (static_cast<int>(std::floor(u)) + static_cast<int>(std::floor(v))) & 1;
                    break;
                case Pattern::dots: {
                    const double fu = u - std::floor(u) - 0.5, fv = v - std::floor(v) - 0.5;
                    which = (fu * fu + fv * fv) < 0.09 ? 1 : 0;
                    break;
                }
            }
            const bool in_shape = inside_shape(shape_index, x + 0.5 - cx, y + 0.5 - cy, r);
            const Rgb& col = in_shape ? spec.palette[2] : spec.palette[static_cast<std::size_t>(which)];
            for (int c = 0; c < 3; ++c) {
                const double jitter = 0.03 * (rng.uniform() - 0.5);
                img[static_cast<std::size_t>((c * size + y) * size + x)] =
                    std::clamp(col[static_cast<std::size_t>(c)] + jitter, 0.0, 1.0);
            }
        }
    return img;
}

StyleTask synth_style_task(const StyleSpec& spec, int n, std::uint64_t content_seed, int task_id, int image_size) {
    if (n < 1) throw InputError("synth_style_task: n must be >= 1");
    spec.validate();
    Rng rng(content_seed);
    StyleTask task;
    task.task_id = task_id;
    task.style_name = spec.name;
    const auto& shapes = Vocabulary::shape_words();
    for (int i = 0; i < n; ++i) {
        const int shape = rng.uniform_int(0, static_cast<int>(shapes.size()) - 1);
        task.images.push_back(render_style_image(spec, shape, rng, image_size));
        task.prompts.push_back("a " + shapes[static_cast<std::size_t>(shape)] + " in " +
                               std::string(Vocabulary::kPlaceholderText));
    }
    return task;
}

StyleSpec random_style_spec(Rng& rng, std::string name) {
    StyleSpec s;
    s.name = std::move(name);
    for (auto& c : s.palette)
        for (double& v : c) v = std::round(rng.uniform() * 100.0) / 100.0;
    s.pattern = static_cast<Pattern>(rng.uniform_int(0, 2));
    s.frequency = rng.uniform_int(2, 8);
    return s;
}

std::vector<StyleSpec> reference_styles() {
    return {
        {"ember", {{{0.95, 0.35, 0.10}, {0.55, 0.05, 0.05}, {1.00, 0.85, 0.20}}}, Pattern::stripes, 4},
        {"glacier", {{{0.10, 0.30, 0.85}, {0.75, 0.90, 1.00}, {0.05, 0.05, 0.35}}}, Pattern::checker, 4},
        {"meadow", {{{0.15, 0.60, 0.15}, {0.70, 0.90, 0.30}, {0.40, 0.20, 0.55}}}, Pattern::dots, 4},
    };
}

std::vector<double> mean_color_histogram(const std::vector<Tensor>& images, int bins) {
    if (images.empty()) throw InputError("mean_color_histogram: no images");
    std::vector<double> hist(static_cast<std::size_t>(3 * bins), 0.0);
    for (const auto& img : images) {
        const std::size_t per = img.size() / 3;
        for (int c = 0; c < 3; ++c)
            for (std::size_t i = 0; i < per; ++i) {
                const double v = img[static_cast<std::size_t>(c) * per + i];
                const int b = std::min(bins - 1, static_cast<int>(v * bins));
                hist[static_cast<std::size_t>(c * bins + b)] += 1.0 / static_cast<double>(per);
            }
    }
    for (double& v : hist) v /= static_cast<double>(images.size());
    return hist;
}

}  // namespace museum

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "museum/rng.hpp"
#include "museum/tensor.hpp"

namespace museum {

// One customization task: n images of one style with matching prompts.
// Prompts are text templates containing the "<style>" placeholder.
struct StyleTask {
    int task_id = 0;
    std::string style_name;
    std::vector<Tensor> images;  // each (3, H, W) in [0, 1]
    std::vector<std::string> prompts;

    [[nodiscard]] int size() const noexcept { return static_cast<int>(images.size()); }
    // Throws InputError if any invariant is violated.
    void validate() const;
};

enum class Pattern { stripes, dots, checker };

Pattern parse_pattern(const std::string& s);
std::string to_string(Pattern p);

using Rgb = std::array<double, 3>;

// Procedural style: a two-color background texture plus an accent color for
// the content shape.
struct StyleSpec {
    std::string name;
    std::array<Rgb, 3> palette{};
    Pattern pattern = Pattern::stripes;
    int frequency = 4;

    void validate() const;
};

// Loads <dir>/images/*.png in sorted order, one prompt per line from
// prompts_file, and the optional <dir>/meta.json {"style": name}.
StyleTask load_style_task(const std::filesystem::path& dir, const std::filesystem::path& prompts_file, int task_id,
                          int image_size = 32);
// Same, with prompts at <dir>/prompts.txt.
StyleTask load_style_task(const std::filesystem::path& dir, int task_id, int image_size = 32);

// Writes a task in the folder layout load_style_task reads.
void save_style_task(const StyleTask& task, const std::filesystem::path& dir);

// n images sharing spec's palette and texture, each with a random content
// shape drawn from content_seed; prompts read "a <shape> in <style>".
StyleTask synth_style_task(const StyleSpec& spec, int n, std::uint64_t content_seed, int task_id = 0,
                           int image_size = 32);

// Renders one image; exposed for the pretraining corpus.
Tensor render_style_image(const StyleSpec& spec, int shape_index, Rng& rng, int image_size);

StyleSpec random_style_spec(Rng& rng, std::string name);

// The three reference styles used by the demos and the acceptance suite:
// disjoint warm / cool / green palettes with distinct textures.
std::vector<StyleSpec> reference_styles();

// Per-channel normalized histograms (bins per channel), averaged over images.
std::vector<double> mean_color_histogram(const std::vector<Tensor>& images, int bins = 8);

}  // namespace museum

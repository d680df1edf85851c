#pragma once

#include <filesystem>

#include "museum/tensor.hpp"

namespace museum {

// 8-bit RGB PNG <-> (3, H, W) tensor in [0, 1].
Tensor read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Tensor& image);

// Center-crop to a square, then bilinear resize to size x size.
Tensor center_crop_resize(const Tensor& image, int size);

}  // namespace museum

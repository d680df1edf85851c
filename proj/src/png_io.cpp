#include "museum/png_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include "museum/errors.hpp"

namespace museum {

Tensor read_png(const std::filesystem::path& path) {
    png_image img;
    std::memset(&img, 0, sizeof img);
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&img, path.c_str())) {
        throw IoError("cannot read PNG " + path.string() + ": " + img.message);
    }
    img.format = PNG_FORMAT_RGB;
    std::vector<png_byte> buf(PNG_IMAGE_SIZE(img));
    if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
        png_image_free(&img);
        throw IoError("cannot decode PNG " + path.string() + ": " + img.message);
    }
    const int h = static_cast<int>(img.height), w = static_cast<int>(img.width);
    Tensor out({3, h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                out[static_cast<std::size_t>((c * h + y) * w + x)] = buf[static_cast<std::size_t>((y * w + x) * 3 + c)] / 255.0;
    return out;
}

void write_png(const std::filesystem::path& path, const Tensor& image) {
    if (image.rank() != 3 || image.dim(0) != 3) throw InputError("write_png expects a (3, H, W) image");
    const int h = image.dim(1), w = image.dim(2);
    std::vector<png_byte> buf(static_cast<std::size_t>(h * w * 3));
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) {
                const double v = std::clamp(image[static_cast<std::size_t>((c * h + y) * w + x)], 0.0, 1.0);
                buf[static_cast<std::size_t>((y * w + x) * 3 + c)] = static_cast<png_byte>(std::lround(v * 255.0));
            }
    png_image img;
    std::memset(&img, 0, sizeof img);
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(w);
    img.height = static_cast<png_uint_32>(h);
    img.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&img, path.c_str(), 0, buf.data(), 0, nullptr)) {
        throw IoError("cannot write PNG " + path.string() + ": " + img.message);
    }
}

Tensor center_crop_resize(const Tensor& image, int size) {
    const int h = image.dim(1), w = image.dim(2);
    const int side = std::min(h, w);
    const int oy = (h - side) / 2, ox = (w - side) / 2;
    Tensor out({3, size, size});
    const double step = static_cast<double>(side) / size;
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x) {
                const double sy = std::clamp((y + 0.5) * step - 0.5, 0.0, side - 1.0);
                const double sx = std::clamp((x + 0.5) * step - 0.5, 0.0, side - 1.0);
                const int y0 = static_cast<int>(sy), x0 = static_cast<int>(sx);
                const int y1 = std::min(y0 + 1, side - 1), x1 = std::min(x0 + 1, side - 1);
                const double fy = sy - y0, fx = sx - x0;
                auto px = [&](int yy, int xx) {
                    return image[static_cast<std::size_t>((c * h + oy + yy) * w + ox + xx)];
                };
                const double v = (1 - fy) * ((1 - fx) * px(y0, x0) + fx * px(y0, x1)) +
                                 fy * ((1 - fx) * px(y1, x0) + fx * px(y1, x1));
                out[static_cast<std::size_t>((c * size + y) * size + x)] = v;
            }
    return out;
}

}  // namespace museum

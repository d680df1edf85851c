#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace museum {

// Dense row-major array of doubles. Shape is carried at runtime; a rank-0
// tensor (empty shape) holds a single scalar.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> shape_, double fill = 0.0);
    Tensor(std::vector<int> shape_, std::vector<double> data_);

    static Tensor scalar(double v) { return Tensor({}, std::vector<double>{v}); }

    [[nodiscard]] std::size_t size() const noexcept { return data.size(); }
    [[nodiscard]] int rank() const noexcept { return static_cast<int>(shape.size()); }
    [[nodiscard]] int dim(int i) const { return shape.at(static_cast<std::size_t>(i)); }
    [[nodiscard]] bool empty() const noexcept { return data.empty(); }
    [[nodiscard]] bool all_finite() const noexcept;

    double& operator[](std::size_t i) noexcept { return data[i]; }
    double operator[](std::size_t i) const noexcept { return data[i]; }

    // Same data, new shape. Element count must match.
    [[nodiscard]] Tensor reshaped(std::vector<int> new_shape) const;
};

std::size_t shape_size(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);

bool same_shape(const Tensor& a, const Tensor& b) noexcept;
double l2_distance(const Tensor& a, const Tensor& b);
// Exact element-wise comparison; used for the bitwise determinism checks.
bool bitwise_equal(const Tensor& a, const Tensor& b) noexcept;

// Rounds every entry through float32 so the tensor survives a float32
// serialization round trip unchanged.
void round_to_float(Tensor& t) noexcept;

}  // namespace museum

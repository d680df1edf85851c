#include "museum/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "museum/errors.hpp"

namespace museum {

std::size_t shape_size(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d < 0) {
            throw InputError("negative dimension in shape " + shape_str(shape));
        }
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ", ";
        os << shape[i];
    }
    os << ')';
    return os.str();
}

Tensor::Tensor(std::vector<int> shape_, double fill) : shape(std::move(shape_)), data(shape_size(shape), fill) {}

Tensor::Tensor(std::vector<int> shape_, std::vector<double> data_) : shape(std::move(shape_)), data(std::move(data_)) {
    if (data.size() != shape_size(shape)) {
        throw InputError("tensor data length " + std::to_string(data.size()) + " does not match shape " +
                         shape_str(shape));
    }
}

bool Tensor::all_finite() const noexcept {
    for (double v : data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

Tensor Tensor::reshaped(std::vector<int> new_shape) const {
    if (shape_size(new_shape) != data.size()) {
        throw InputError("cannot reshape " + shape_str(shape) + " to " + shape_str(new_shape));
    }
    return Tensor(std::move(new_shape), data);
}

bool same_shape(const Tensor& a, const Tensor& b) noexcept { return a.shape == b.shape; }

double l2_distance(const Tensor& a, const Tensor& b) {
    if (a.size() != b.size()) throw InputError("l2_distance: size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

bool bitwise_equal(const Tensor& a, const Tensor& b) noexcept {
    if (a.shape != b.shape) return false;
    return std::memcmp(a.data.data(), b.data.data(), a.size() * sizeof(double)) == 0;
}

void round_to_float(Tensor& t) noexcept {
    for (double& v : t.data) v = static_cast<double>(static_cast<float>(v));
}

}  // namespace museum

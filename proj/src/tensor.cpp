#include "snnkit/tensor.hpp"

#include <cmath>
#include <cstring>
#include <string>
#include <utility>

#include "snnkit/errors.hpp"

namespace snnkit {

std::size_t shape_size(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return shape.empty() ? 0 : n;
}

Tensor::Tensor(std::vector<std::size_t> shape_, std::vector<double> data_)
    : shape(std::move(shape_)), data(std::move(data_)) {
    if (shape_size(shape) != data.size()) {
        throw DimensionError("tensor: shape does not match data length (" +
                             std::to_string(shape_size(shape)) + " vs " +
                             std::to_string(data.size()) + ")");
    }
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
    std::size_t n = shape_size(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value) {
    std::size_t n = shape_size(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::vec(std::vector<double> values) {
    std::vector<std::size_t> shape{values.size()};
    return Tensor(std::move(shape), std::move(values));
}

bool all_finite(const Tensor& t) {
    for (double v : t.data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void require_finite(const Tensor& t, const char* context) {
    if (!all_finite(t)) {
        throw NumericError(std::string(context) + ": tensor contains NaN or Inf");
    }
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
    if (a.shape != b.shape) return false;
    return std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(double)) == 0;
}

}  // namespace snnkit

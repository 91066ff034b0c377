#pragma once

#include <cstddef>
#include <vector>

namespace snnkit {

std::size_t shape_size(const std::vector<std::size_t>& shape);

// Dense N-dimensional array, row-major, 64-bit floats throughout.
// Carries activations, weights and spike values for both network engines.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::vector<std::size_t> shape_, std::vector<double> data_);

    static Tensor zeros(std::vector<std::size_t> shape);
    static Tensor full(std::vector<std::size_t> shape, double value);
    // 1-D tensor from a value list.
    static Tensor vec(std::vector<double> values);

    std::size_t size() const { return data.size(); }
    bool same_shape(const Tensor& other) const { return shape == other.shape; }
};

// Throws NumericError if any element is NaN or infinite.
void require_finite(const Tensor& t, const char* context);
bool all_finite(const Tensor& t);

bool bitwise_equal(const Tensor& a, const Tensor& b);

}  // namespace snnkit

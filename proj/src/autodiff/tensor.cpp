#include "mdl/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "mdl/errors.hpp"

namespace mdl::ad {

std::size_t shape_size(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

Tensor::Tensor(Shape s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
    for (auto d : shape)
        if (d == 0) throw DimensionError("tensor extents must be positive, got " + shape_string(shape));
    if (shape_size(shape) != data.size())
        throw DimensionError("shape " + shape_string(shape) + " does not hold " +
                             std::to_string(data.size()) + " values");
}

Tensor Tensor::zeros(Shape s) { return filled(std::move(s), 0.0); }

Tensor Tensor::filled(Shape s, double value) {
    const auto n = shape_size(s);
    return Tensor(std::move(s), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
    return Tensor({rows, cols}, std::move(values));
}

std::size_t Tensor::rows() const {
    if (rank() != 2) throw DimensionError("expected a matrix, got " + shape_string(shape));
    return shape[0];
}

std::size_t Tensor::cols() const {
    if (rank() != 2) throw DimensionError("expected a matrix, got " + shape_string(shape));
    return shape[1];
}

void Tensor::check_finite(const char* where) const {
    for (double v : data)
        if (!std::isfinite(v)) throw NumericError(std::string("non-finite value produced by ") + where);
}

bool bit_equal(const Tensor& a, const Tensor& b) {
    if (a.shape != b.shape || a.data.size() != b.data.size()) return false;
    return a.data.empty() ||
           std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(double)) == 0;
}

}  // namespace mdl::ad

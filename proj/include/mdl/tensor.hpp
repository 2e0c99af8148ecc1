#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace mdl::ad {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

// Dense row-major array of doubles. `grad` and `tape_id` are filled in only
// when the tensor takes part in a differentiated computation.
struct Tensor {
    Shape shape;
    std::vector<double> data;
    std::optional<std::vector<double>> grad;
    std::optional<std::size_t> tape_id;

    Tensor() = default;
    Tensor(Shape s, std::vector<double> values);

    static Tensor zeros(Shape s);
    static Tensor filled(Shape s, double value);
    static Tensor scalar(double value);
    // 2-D convenience: rows x cols.
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

    std::size_t size() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }
    std::size_t rows() const;
    std::size_t cols() const;

    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }

    // Throws NumericError when any value is NaN or infinite.
    void check_finite(const char* where) const;
};

// Value equality on shape and data, bit for bit (so -0.0 != 0.0 and NaN never
// compares equal to itself through this path; NaN is excluded by invariant).
bool bit_equal(const Tensor& a, const Tensor& b);

}  // namespace mdl::ad

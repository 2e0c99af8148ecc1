#include "mdl/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace mdl::kernels::serial {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n) {
    std::fill(c.begin(), c.begin() + m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        double* ci = c.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = a[i * k + p];
            const double* bp = b.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
        }
    }
}

void matmul_at_b_acc(std::span<const double> a, std::span<const double> g, std::span<double> c,
                     std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t p = 0; p < k; ++p) {
        double* cp = c.data() + p * n;
        for (std::size_t i = 0; i < m; ++i) {
            const double aip = a[i * k + p];
            const double* gi = g.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) cp[j] += aip * gi[j];
        }
    }
}

void matmul_a_bt_acc(std::span<const double> g, std::span<const double> b, std::span<double> c,
                     std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* gi = g.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double* bp = b.data() + p * n;
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) s += gi[j] * bp[j];
            c[i * k + p] += s;
        }
    }
}

void bias_add(std::span<const double> x, std::span<const double> bias, std::span<double> y,
              std::size_t m, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) y[i * n + j] = x[i * n + j] + bias[j];
}

void softmax_rows(std::span<const double> x, std::span<double> y, std::size_t m, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* xi = x.data() + i * n;
        double* yi = y.data() + i * n;
        double mx = xi[0];
        for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, xi[j]);
        double z = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            yi[j] = std::exp(xi[j] - mx);
            z += yi[j];
        }
        for (std::size_t j = 0; j < n; ++j) yi[j] /= z;
    }
}

}  // namespace mdl::kernels::serial

#include "mdl/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

namespace mdl::kernels {

namespace parallel {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n) {
    const auto rows = static_cast<std::int64_t>(m);
#pragma omp parallel for schedule(static)
    for (std::int64_t ii = 0; ii < rows; ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        double* ci = c.data() + i * n;
        std::fill(ci, ci + n, 0.0);
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = a[i * k + p];
            const double* bp = b.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
        }
    }
}

void matmul_at_b_acc(std::span<const double> a, std::span<const double> g, std::span<double> c,
                     std::size_t m, std::size_t k, std::size_t n) {
    const auto rows = static_cast<std::int64_t>(k);
#pragma omp parallel for schedule(static)
    for (std::int64_t pp = 0; pp < rows; ++pp) {
        const auto p = static_cast<std::size_t>(pp);
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
    const auto rows = static_cast<std::int64_t>(m);
#pragma omp parallel for schedule(static)
    for (std::int64_t ii = 0; ii < rows; ++ii) {
        const auto i = static_cast<std::size_t>(ii);
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
    const auto rows = static_cast<std::int64_t>(m);
#pragma omp parallel for schedule(static)
    for (std::int64_t ii = 0; ii < rows; ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        for (std::size_t j = 0; j < n; ++j) y[i * n + j] = x[i * n + j] + bias[j];
    }
}

void softmax_rows(std::span<const double> x, std::span<double> y, std::size_t m, std::size_t n) {
    const auto rows = static_cast<std::int64_t>(m);
#pragma omp parallel for schedule(static)
    for (std::int64_t ii = 0; ii < rows; ++ii) {
        const auto i = static_cast<std::size_t>(ii);
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

}  // namespace parallel

namespace {
bool big(std::size_t work) { return work >= kParallelThreshold; }
}  // namespace

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n) {
    if (big(m * k * n)) parallel::matmul(a, b, c, m, k, n);
    else serial::matmul(a, b, c, m, k, n);
}

void matmul_at_b_acc(std::span<const double> a, std::span<const double> g, std::span<double> c,
                     std::size_t m, std::size_t k, std::size_t n) {
    if (big(m * k * n)) parallel::matmul_at_b_acc(a, g, c, m, k, n);
    else serial::matmul_at_b_acc(a, g, c, m, k, n);
}

void matmul_a_bt_acc(std::span<const double> g, std::span<const double> b, std::span<double> c,
                     std::size_t m, std::size_t k, std::size_t n) {
    if (big(m * k * n)) parallel::matmul_a_bt_acc(g, b, c, m, k, n);
    else serial::matmul_a_bt_acc(g, b, c, m, k, n);
}

void bias_add(std::span<const double> x, std::span<const double> bias, std::span<double> y,
              std::size_t m, std::size_t n) {
    if (big(m * n)) parallel::bias_add(x, bias, y, m, n);
    else serial::bias_add(x, bias, y, m, n);
}

void softmax_rows(std::span<const double> x, std::span<double> y, std::size_t m, std::size_t n) {
    if (big(m * n)) parallel::softmax_rows(x, y, m, n);
    else serial::softmax_rows(x, y, m, n);
}

}  // namespace mdl::kernels

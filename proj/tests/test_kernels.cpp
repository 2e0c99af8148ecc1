#include <vector>

#include <gtest/gtest.h>

#include "mdl/kernels.hpp"
#include "mdl/rng.hpp"
#include "mdl/tensor.hpp"

namespace k = mdl::kernels;

namespace {

std::vector<double> rand_vec(std::size_t n, std::uint64_t seed) {
    mdl::Rng rng(seed);
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(-1.0, 1.0);
    return v;
}

std::vector<double> naive_matmul(const std::vector<double>& a, const std::vector<double>& b, std::size_t m,
                                 std::size_t kk, std::size_t n) {
    std::vector<double> c(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t p = 0; p < kk; ++p) s += a[i * kk + p] * b[p * n + j];
            c[i * n + j] = s;
        }
    return c;
}

}  // namespace

TEST(Kernels, SerialMatmulMatchesNaiveProduct) {
    const std::size_t m = 7, kk = 5, n = 3;
    const auto a = rand_vec(m * kk, 1), b = rand_vec(kk * n, 2);
    std::vector<double> c(m * n);
    k::serial::matmul(a, b, c, m, kk, n);
    const auto ref = naive_matmul(a, b, m, kk, n);
    for (std::size_t i = 0; i < c.size(); ++i) EXPECT_NEAR(c[i], ref[i], 1e-12);
}

TEST(Kernels, TransposedProductsMatchNaive) {
    const std::size_t m = 6, kk = 4, n = 5;
    const auto a = rand_vec(m * kk, 3), g = rand_vec(m * n, 4), b = rand_vec(kk * n, 5);
    std::vector<double> atg(kk * n, 0.5), gbt(m * kk, -0.25);
    k::serial::matmul_at_b_acc(a, g, atg, m, kk, n);
    k::serial::matmul_a_bt_acc(g, b, gbt, m, kk, n);
    for (std::size_t p = 0; p < kk; ++p)
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.5;
            for (std::size_t i = 0; i < m; ++i) s += a[i * kk + p] * g[i * n + j];
            EXPECT_NEAR(atg[p * n + j], s, 1e-12);
        }
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < kk; ++p) {
            double s = -0.25;
            for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * b[p * n + j];
            EXPECT_NEAR(gbt[i * kk + p], s, 1e-12);
        }
}

TEST(Kernels, ParallelIsBitIdenticalToSerial) {
    for (auto [m, kk, n] : {std::tuple<std::size_t, std::size_t, std::size_t>{1, 1, 1}, {3, 7, 2}, {257, 33, 65}, {64, 128, 96}}) {
        const auto a = rand_vec(m * kk, 10 + m), b = rand_vec(kk * n, 20 + n), g = rand_vec(m * n, 30 + kk);
        std::vector<double> s1(m * n), p1(m * n);
        k::serial::matmul(a, b, s1, m, kk, n);
        k::parallel::matmul(a, b, p1, m, kk, n);
        EXPECT_EQ(s1, p1);

        std::vector<double> s2(kk * n, 1.0), p2(kk * n, 1.0);
        k::serial::matmul_at_b_acc(a, g, s2, m, kk, n);
        k::parallel::matmul_at_b_acc(a, g, p2, m, kk, n);
        EXPECT_EQ(s2, p2);

        std::vector<double> s3(m * kk, 2.0), p3(m * kk, 2.0);
        k::serial::matmul_a_bt_acc(g, b, s3, m, kk, n);
        k::parallel::matmul_a_bt_acc(g, b, p3, m, kk, n);
        EXPECT_EQ(s3, p3);

        const auto bias = rand_vec(n, 40);
        std::vector<double> s4(m * n), p4(m * n), s5(m * n), p5(m * n);
        k::serial::bias_add(g, bias, s4, m, n);
        k::parallel::bias_add(g, bias, p4, m, n);
        EXPECT_EQ(s4, p4);
        k::serial::softmax_rows(g, s5, m, n);
        k::parallel::softmax_rows(g, p5, m, n);
        EXPECT_EQ(s5, p5);
    }
}

TEST(Kernels, DispatcherMatchesSerialAboveThreshold) {
    const std::size_t m = 128, kk = 64, n = 64;
    ASSERT_GE(m * kk * n, k::kParallelThreshold);
    const auto a = rand_vec(m * kk, 50), b = rand_vec(kk * n, 51);
    std::vector<double> s(m * n), d(m * n);
    k::serial::matmul(a, b, s, m, kk, n);
    k::matmul(a, b, d, m, kk, n);
    EXPECT_EQ(s, d);
}

TEST(Kernels, SoftmaxRowsSumToOneAndSurviveLargeLogits) {
    const std::vector<double> x{1000.0, 1001.0, 999.0, -5.0, 0.0, 5.0};
    std::vector<double> y(6);
    k::serial::softmax_rows(x, y, 2, 3);
    for (std::size_t r = 0; r < 2; ++r) EXPECT_NEAR(y[3 * r] + y[3 * r + 1] + y[3 * r + 2], 1.0, 1e-12);
    EXPECT_GT(y[1], y[0]);
}

#pragma once

// Dense row-major kernels used by the autodiff primitives.
//
// Every kernel exists twice: `serial` is the reference implementation the
// tests compare against, `parallel` splits output rows across OpenMP threads.
// Each output element is accumulated by exactly one thread in the same index
// order as the serial loop, so both produce bit-identical results for any
// thread count.

#include <cstddef>
#include <span>

namespace mdl::kernels {

namespace serial {

// c[m,n] = a[m,k] * b[k,n]
void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n);
// c[k,n] += a[m,k]^T * g[m,n]
void matmul_at_b_acc(std::span<const double> a, std::span<const double> g, std::span<double> c,
                     std::size_t m, std::size_t k, std::size_t n);
// c[m,k] += g[m,n] * b[k,n]^T
void matmul_a_bt_acc(std::span<const double> g, std::span<const double> b, std::span<double> c,
                     std::size_t m, std::size_t k, std::size_t n);
// y[m,n] = x[m,n] + bias[n]
void bias_add(std::span<const double> x, std::span<const double> bias, std::span<double> y,
              std::size_t m, std::size_t n);
// row-wise softmax over the last axis
void softmax_rows(std::span<const double> x, std::span<double> y, std::size_t m, std::size_t n);

}  // namespace serial

namespace parallel {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n);
void matmul_at_b_acc(std::span<const double> a, std::span<const double> g, std::span<double> c,
                     std::size_t m, std::size_t k, std::size_t n);
void matmul_a_bt_acc(std::span<const double> g, std::span<const double> b, std::span<double> c,
                     std::size_t m, std::size_t k, std::size_t n);
void bias_add(std::span<const double> x, std::span<const double> bias, std::span<double> y,
              std::size_t m, std::size_t n);
void softmax_rows(std::span<const double> x, std::span<double> y, std::size_t m, std::size_t n);

}  // namespace parallel

// Work (multiply-adds) above which the dispatchers below use the parallel
// kernels. Results do not depend on the choice.
inline constexpr std::size_t kParallelThreshold = 1u << 15;

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n);
void matmul_at_b_acc(std::span<const double> a, std::span<const double> g, std::span<double> c,
                     std::size_t m, std::size_t k, std::size_t n);
void matmul_a_bt_acc(std::span<const double> g, std::span<const double> b, std::span<double> c,
                     std::size_t m, std::size_t k, std::size_t n);
void bias_add(std::span<const double> x, std::span<const double> bias, std::span<double> y,
              std::size_t m, std::size_t n);
void softmax_rows(std::span<const double> x, std::span<double> y, std::size_t m, std::size_t n);

}  // namespace mdl::kernels

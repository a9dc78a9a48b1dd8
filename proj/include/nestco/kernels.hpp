#pragma once

#include <cstddef>
#include <span>

// Dense kernels behind the MLP forward and backward passes.
//
// Layout: X is [rows, in], W is [out, in], Y and dY are [rows, out], all
// row-major. The OpenMP versions partition over output rows (or weight rows)
// so every element is accumulated in the same order as the serial reference;
// results are bit-identical for any thread count.

namespace nestco::kernels {

struct LinearShape {
    std::size_t rows;
    std::size_t in;
    std::size_t out;
};

/// Y = X W^T + bias.
void linear_forward(LinearShape s, std::span<const double> x, std::span<const double> w,
                    std::span<const double> bias, std::span<double> y);

/// dW = dY^T X, dbias = column sums of dY (both overwritten).
void linear_backward_params(LinearShape s, std::span<const double> x, std::span<const double> dy,
                            std::span<double> dw, std::span<double> dbias);

/// dX = dY W (overwritten).
void linear_backward_input(LinearShape s, std::span<const double> w, std::span<const double> dy,
                           std::span<double> dx);

/// Single-threaded reference kept for testing and benchmarking.
namespace serial {

void linear_forward(LinearShape s, std::span<const double> x, std::span<const double> w,
                    std::span<const double> bias, std::span<double> y);
void linear_backward_params(LinearShape s, std::span<const double> x, std::span<const double> dy,
                            std::span<double> dw, std::span<double> dbias);
void linear_backward_input(LinearShape s, std::span<const double> w, std::span<const double> dy,
                           std::span<double> dx);

} // namespace serial

/// Number of threads the parallel kernels will use (1 without OpenMP).
int max_threads();
void set_threads(int n);

} // namespace nestco::kernels

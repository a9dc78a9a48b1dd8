#include "nestco/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace nestco::kernels {

namespace {

// Below this many multiply-adds the fork/join cost dominates.
constexpr std::size_t parallel_threshold = 1 << 15;

inline void forward_row(LinearShape s, const double* x, const double* w, const double* bias,
                        double* y)
{
    for (std::size_t o = 0; o < s.out; ++o) {
        const double* wo = w + o * s.in;
        double acc = bias[o];
        for (std::size_t i = 0; i < s.in; ++i)
            acc += x[i] * wo[i];
        y[o] = acc;
    }
}

inline void weight_row_grad(LinearShape s, std::size_t o, const double* x, const double* dy,
                            double* dw, double* dbias)
{
    double* dwo = dw + o * s.in;
    for (std::size_t i = 0; i < s.in; ++i)
        dwo[i] = 0.0;
    double db = 0.0;
    for (std::size_t r = 0; r < s.rows; ++r) {
        const double g = dy[r * s.out + o];
        if (g == 0.0)
            continue;
        const double* xr = x + r * s.in;
        for (std::size_t i = 0; i < s.in; ++i)
            dwo[i] += g * xr[i];
        db += g;
    }
    dbias[o] = db;
}

inline void input_row_grad(LinearShape s, std::size_t r, const double* w, const double* dy,
                           double* dx)
{
    double* dxr = dx + r * s.in;
    for (std::size_t i = 0; i < s.in; ++i)
        dxr[i] = 0.0;
    const double* dyr = dy + r * s.out;
    for (std::size_t o = 0; o < s.out; ++o) {
        const double g = dyr[o];
        if (g == 0.0)
            continue;
        const double* wo = w + o * s.in;
        for (std::size_t i = 0; i < s.in; ++i)
            dxr[i] += g * wo[i];
    }
}

std::size_t work(LinearShape s)
{
    return s.rows * s.in * s.out;
}

} // namespace

void linear_forward(LinearShape s, std::span<const double> x, std::span<const double> w,
                    std::span<const double> bias, std::span<double> y)
{
    const bool par = work(s) >= parallel_threshold;
    const auto rows = static_cast<long long>(s.rows);
#pragma omp parallel for schedule(static) if (par)
    for (long long r = 0; r < rows; ++r)
        forward_row(s, x.data() + r * s.in, w.data(), bias.data(), y.data() + r * s.out);
}

void linear_backward_params(LinearShape s, std::span<const double> x, std::span<const double> dy,
                            std::span<double> dw, std::span<double> dbias)
{
    const bool par = work(s) >= parallel_threshold;
    const auto outs = static_cast<long long>(s.out);
#pragma omp parallel for schedule(static) if (par)
    for (long long o = 0; o < outs; ++o)
        weight_row_grad(s, static_cast<std::size_t>(o), x.data(), dy.data(), dw.data(), dbias.data());
}

void linear_backward_input(LinearShape s, std::span<const double> w, std::span<const double> dy,
                           std::span<double> dx)
{
    const bool par = work(s) >= parallel_threshold;
    const auto rows = static_cast<long long>(s.rows);
#pragma omp parallel for schedule(static) if (par)
    for (long long r = 0; r < rows; ++r)
        input_row_grad(s, static_cast<std::size_t>(r), w.data(), dy.data(), dx.data());
}

namespace serial {

void linear_forward(LinearShape s, std::span<const double> x, std::span<const double> w,
                    std::span<const double> bias, std::span<double> y)
{
    for (std::size_t r = 0; r < s.rows; ++r)
        forward_row(s, x.data() + r * s.in, w.data(), bias.data(), y.data() + r * s.out);
}

void linear_backward_params(LinearShape s, std::span<const double> x, std::span<const double> dy,
                            std::span<double> dw, std::span<double> dbias)
{
    for (std::size_t o = 0; o < s.out; ++o)
        weight_row_grad(s, o, x.data(), dy.data(), dw.data(), dbias.data());
}

void linear_backward_input(LinearShape s, std::span<const double> w, std::span<const double> dy,
                           std::span<double> dx)
{
    for (std::size_t r = 0; r < s.rows; ++r)
        input_row_grad(s, r, w.data(), dy.data(), dx.data());
}

} // namespace serial

int max_threads()
{
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

void set_threads(int n)
{
#ifdef _OPENMP
    if (n > 0)
        omp_set_num_threads(n);
#else
    (void)n;
#endif
}

} // namespace nestco::kernels

#include "nestco/kernels.hpp"
#include "nestco/rng.hpp"

#include <benchmark/benchmark.h>

#include <vector>

using namespace nestco;
using kernels::LinearShape;

namespace {

struct Buffers {
    LinearShape s;
    std::vector<double> x, w, b, y, dy, dw, db, dx;

    explicit Buffers(LinearShape shape)
        : s(shape), x(s.rows * s.in), w(s.out * s.in), b(s.out), y(s.rows * s.out), dy(s.rows * s.out),
          dw(s.out * s.in), db(s.out), dx(s.rows * s.in)
    {
        Rng rng(7);
        for (auto* v : {&x, &w, &b, &dy})
            for (double& e : *v)
                e = rng.normal();
    }
};

LinearShape shape_of(const benchmark::State& st)
{
    return {static_cast<std::size_t>(st.range(0)), static_cast<std::size_t>(st.range(1)),
            static_cast<std::size_t>(st.range(2))};
}

template <bool Parallel>
void forward(benchmark::State& st)
{
    Buffers buf(shape_of(st));
    for (auto _ : st) {
        if constexpr (Parallel)
            kernels::linear_forward(buf.s, buf.x, buf.w, buf.b, buf.y);
        else
            kernels::serial::linear_forward(buf.s, buf.x, buf.w, buf.b, buf.y);
        benchmark::DoNotOptimize(buf.y.data());
    }
    st.SetItemsProcessed(st.iterations() * static_cast<std::int64_t>(buf.s.rows * buf.s.in * buf.s.out));
}

template <bool Parallel>
void backward(benchmark::State& st)
{
    Buffers buf(shape_of(st));
    for (auto _ : st) {
        if constexpr (Parallel) {
            kernels::linear_backward_params(buf.s, buf.x, buf.dy, buf.dw, buf.db);
            kernels::linear_backward_input(buf.s, buf.w, buf.dy, buf.dx);
        } else {
            kernels::serial::linear_backward_params(buf.s, buf.x, buf.dy, buf.dw, buf.db);
            kernels::serial::linear_backward_input(buf.s, buf.w, buf.dy, buf.dx);
        }
        benchmark::DoNotOptimize(buf.dw.data());
        benchmark::DoNotOptimize(buf.dx.data());
    }
    st.SetItemsProcessed(st.iterations() * static_cast<std::int64_t>(2 * buf.s.rows * buf.s.in * buf.s.out));
}

void shapes(benchmark::internal::Benchmark* b)
{
    b->Args({64, 1, 64})->Args({64, 64, 128})->Args({128, 32, 16})->Args({256, 256, 256});
}

} // namespace

BENCHMARK(forward<false>)->Name("linear_forward/serial")->Apply(shapes);
BENCHMARK(forward<true>)->Name("linear_forward/openmp")->Apply(shapes);
BENCHMARK(backward<false>)->Name("linear_backward/serial")->Apply(shapes);
BENCHMARK(backward<true>)->Name("linear_backward/openmp")->Apply(shapes);

BENCHMARK_MAIN();

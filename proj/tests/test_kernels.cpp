#include "nestco/kernels.hpp"
#include "nestco/rng.hpp"

#include <doctest.h>

#include <vector>

using namespace nestco;

namespace {

std::vector<double> randn(Rng& r, std::size_t n)
{
    std::vector<double> v(n);
    for (double& x : v)
        x = r.normal();
    return v;
}

} // namespace

TEST_CASE("parallel kernels are bit-identical to the serial reference")
{
    Rng rng(11);
    for (const auto threads : {1, 2, 4}) {
        kernels::set_threads(threads);
        for (const kernels::LinearShape s : {kernels::LinearShape{1, 1, 1}, kernels::LinearShape{7, 3, 5},
                                             kernels::LinearShape{64, 33, 17}, kernels::LinearShape{5, 128, 64}}) {
            const auto x = randn(rng, s.rows * s.in);
            const auto w = randn(rng, s.out * s.in);
            const auto b = randn(rng, s.out);
            const auto dy = randn(rng, s.rows * s.out);

            std::vector<double> y1(s.rows * s.out), y2(s.rows * s.out);
            kernels::linear_forward(s, x, w, b, y1);
            kernels::serial::linear_forward(s, x, w, b, y2);
            CHECK(y1 == y2);

            std::vector<double> dw1(s.out * s.in), dw2(s.out * s.in), db1(s.out), db2(s.out);
            kernels::linear_backward_params(s, x, dy, dw1, db1);
            kernels::serial::linear_backward_params(s, x, dy, dw2, db2);
            CHECK(dw1 == dw2);
            CHECK(db1 == db2);

            std::vector<double> dx1(s.rows * s.in), dx2(s.rows * s.in);
            kernels::linear_backward_input(s, w, dy, dx1);
            kernels::serial::linear_backward_input(s, w, dy, dx2);
            CHECK(dx1 == dx2);
        }
    }
    kernels::set_threads(kernels::max_threads());
}

TEST_CASE("serial kernels match the definitions")
{
    // X = [[1, 2]], W = [[1, 0], [0, 1], [1, 1]], b = [0.5, 0, -1]
    const kernels::LinearShape s{1, 2, 3};
    const std::vector<double> x{1, 2}, w{1, 0, 0, 1, 1, 1}, b{0.5, 0, -1};
    std::vector<double> y(3);
    kernels::serial::linear_forward(s, x, w, b, y);
    CHECK(y == std::vector<double>{1.5, 2.0, 2.0});

    const std::vector<double> dy{1, 0, 2};
    std::vector<double> dw(6), db(3), dx(2);
    kernels::serial::linear_backward_params(s, x, dy, dw, db);
    CHECK(dw == std::vector<double>{1, 2, 0, 0, 2, 4});
    CHECK(db == std::vector<double>{1, 0, 2});
    kernels::serial::linear_backward_input(s, w, dy, dx);
    CHECK(dx == std::vector<double>{3, 2});
}

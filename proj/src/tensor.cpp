#include "nestco/tensor.hpp"

#include "nestco/errors.hpp"

#include <cmath>
#include <functional>
#include <numeric>

namespace nestco {

namespace {

std::size_t product(const std::vector<std::size_t>& shape)
{
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

} // namespace

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), values_(product(shape_), fill)
{
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values))
{
    if (product(shape_) != values_.size())
        throw DimensionError("tensor shape " + shape_string() + " does not match " +
                             std::to_string(values_.size()) + " values");
}

Tensor Tensor::vector(std::initializer_list<double> values)
{
    return Tensor({values.size()}, std::vector<double>(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values)
{
    return Tensor({rows, cols}, std::vector<double>(values));
}

std::size_t Tensor::rows() const noexcept
{
    return shape_.size() >= 2 ? shape_[0] : 1;
}

std::size_t Tensor::cols() const noexcept
{
    return shape_.empty() ? 0 : shape_.back();
}

bool Tensor::all_finite() const noexcept
{
    for (double v : values_)
        if (!std::isfinite(v))
            return false;
    return true;
}

std::string Tensor::shape_string() const
{
    std::string s = "[";
    for (std::size_t i = 0; i < shape_.size(); ++i) {
        if (i)
            s += ",";
        s += std::to_string(shape_[i]);
    }
    return s + "]";
}

} // namespace nestco

#pragma once

#include <stdexcept>
#include <string>

namespace nestco {

/// Shape or length mismatch between operands.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Non-finite value encountered where finite input is required.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// API misuse: stale tape, empty input, missing teacher score, wrong model family.
class UsageError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Argument outside its mathematical domain (probabilities, rates, labels).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

} // namespace nestco

#pragma once

#include <stdexcept>
#include <string>

namespace gompertz {

/// Invalid input: malformed files, violated preconditions, bad configuration.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A numerical routine failed (quadrature, non-finite values, degenerate variance).
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An estimator could not produce an estimate (no bracket, no positive root, ...).
class EstimationError : public NumericError {
public:
    using NumericError::NumericError;
};

namespace detail {

inline void require(bool cond, const std::string& what) {
    if (!cond) throw ValidationError(what);
}

}  // namespace detail
}  // namespace gompertz

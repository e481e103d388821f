#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "gompertz/error.hpp"

namespace gompertz::numeric {

/// First derivative of sampled values on a (possibly non-uniform) grid.
/// Three-point central stencil inside, second-order one-sided stencils at the
/// ends; every stencil is exact for polynomials of degree <= 2.
inline std::vector<double> numeric_derivative(std::span<const double> t, std::span<const double> y) {
    const std::size_t n = t.size();
    gompertz::detail::require(y.size() == n, "numeric_derivative: grid/value length mismatch");
    gompertz::detail::require(n >= 3, "numeric_derivative: at least 3 points required");
    for (std::size_t i = 1; i < n; ++i)
        gompertz::detail::require(t[i] > t[i - 1], "numeric_derivative: grid must be strictly increasing");

    std::vector<double> d(n);
    for (std::size_t i = 1; i + 1 < n; ++i) {
        const double h1 = t[i] - t[i - 1];
        const double h2 = t[i + 1] - t[i];
        d[i] = -h2 / (h1 * (h1 + h2)) * y[i - 1] + (h2 - h1) / (h1 * h2) * y[i] +
               h1 / (h2 * (h1 + h2)) * y[i + 1];
    }
    {
        const double h1 = t[1] - t[0];
        const double h2 = t[2] - t[1];
        d[0] = -(2.0 * h1 + h2) / (h1 * (h1 + h2)) * y[0] + (h1 + h2) / (h1 * h2) * y[1] -
               h1 / (h2 * (h1 + h2)) * y[2];
    }
    {
        const double h1 = t[n - 2] - t[n - 3];
        const double h2 = t[n - 1] - t[n - 2];
        d[n - 1] = h2 / (h1 * (h1 + h2)) * y[n - 3] - (h1 + h2) / (h1 * h2) * y[n - 2] +
                   (2.0 * h2 + h1) / (h2 * (h1 + h2)) * y[n - 1];
    }
    return d;
}

}  // namespace gompertz::numeric

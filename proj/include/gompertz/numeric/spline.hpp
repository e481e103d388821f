#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

#include "gompertz/error.hpp"

namespace gompertz::numeric {

/// Natural cubic spline interpolant (zero second derivative at both end knots).
/// Outside the knot range the spline continues linearly, which is the natural
/// extension of the end conditions.
class NaturalCubicSpline {
public:
    NaturalCubicSpline() = default;

    NaturalCubicSpline(std::span<const double> knots, std::span<const double> values)
        : x_(knots.begin(), knots.end()), y_(values.begin(), values.end()) {
        gompertz::detail::require(x_.size() == y_.size(), "spline: knot/value length mismatch");
        gompertz::detail::require(x_.size() >= 2, "spline: at least two knots required");
        for (std::size_t i = 1; i < x_.size(); ++i)
            gompertz::detail::require(x_[i] > x_[i - 1], "spline: knots must be strictly increasing");
        solve_second_derivatives();
    }

    [[nodiscard]] const std::vector<double>& knots() const noexcept { return x_; }
    [[nodiscard]] const std::vector<double>& values() const noexcept { return y_; }
    [[nodiscard]] const std::vector<double>& second_derivatives() const noexcept { return m_; }

    [[nodiscard]] double operator()(double t) const {
        const std::size_t n = x_.size();
        if (t <= x_.front()) return y_.front() + slope_at(0) * (t - x_.front());
        if (t >= x_.back()) return y_.back() + slope_at(n - 1) * (t - x_.back());
        const std::size_t i = segment(t);
        const double h = x_[i + 1] - x_[i];
        const double a = (x_[i + 1] - t) / h;
        const double b = (t - x_[i]) / h;
        return a * y_[i] + b * y_[i + 1] +
               ((a * a * a - a) * m_[i] + (b * b * b - b) * m_[i + 1]) * h * h / 6.0;
    }

    [[nodiscard]] double derivative(double t) const {
        const std::size_t n = x_.size();
        if (t <= x_.front()) return slope_at(0);
        if (t >= x_.back()) return slope_at(n - 1);
        const std::size_t i = segment(t);
        const double h = x_[i + 1] - x_[i];
        const double a = (x_[i + 1] - t) / h;
        const double b = (t - x_[i]) / h;
        return (y_[i + 1] - y_[i]) / h +
               ((1.0 - 3.0 * a * a) * m_[i] + (3.0 * b * b - 1.0) * m_[i + 1]) * h / 6.0;
    }

    /// Exact integral of the piecewise cubic (and linear tails) over [a, b].
    [[nodiscard]] double integral(double a, double b) const {
        if (a == b) return 0.0;
        if (a > b) return -integral(b, a);
        return antiderivative(b) - antiderivative(a);
    }

private:
    std::vector<double> x_;
    std::vector<double> y_;
    std::vector<double> m_;
    std::vector<double> cumulative_;  // integral from x_[0] to x_[i]

    void solve_second_derivatives() {
        const std::size_t n = x_.size();
        m_.assign(n, 0.0);
        if (n > 2) {
            // Thomas algorithm on the interior equations.
            std::vector<double> diag(n, 0.0), rhs(n, 0.0), upper(n, 0.0);
            for (std::size_t i = 1; i + 1 < n; ++i) {
                const double h0 = x_[i] - x_[i - 1];
                const double h1 = x_[i + 1] - x_[i];
                diag[i] = 2.0 * (h0 + h1);
                upper[i] = h1;
                rhs[i] = 6.0 * ((y_[i + 1] - y_[i]) / h1 - (y_[i] - y_[i - 1]) / h0);
                if (i > 1) {
                    const double w = h0 / diag[i - 1];
                    diag[i] -= w * upper[i - 1];
                    rhs[i] -= w * rhs[i - 1];
                }
            }
            for (std::size_t i = n - 2; i >= 1; --i) {
                m_[i] = (rhs[i] - upper[i] * m_[i + 1]) / diag[i];
                if (i == 1) break;
            }
        }
        cumulative_.assign(n, 0.0);
        for (std::size_t i = 0; i + 1 < n; ++i) {
            const double h = x_[i + 1] - x_[i];
            cumulative_[i + 1] = cumulative_[i] + 0.5 * h * (y_[i] + y_[i + 1]) -
                                 h * h * h / 24.0 * (m_[i] + m_[i + 1]);
        }
    }

    [[nodiscard]] double slope_at(std::size_t i) const {
        const std::size_t n = x_.size();
        if (i == 0) {
            const double h = x_[1] - x_[0];
            return (y_[1] - y_[0]) / h - h / 6.0 * (2.0 * m_[0] + m_[1]);
        }
        const double h = x_[n - 1] - x_[n - 2];
        return (y_[n - 1] - y_[n - 2]) / h + h / 6.0 * (m_[n - 2] + 2.0 * m_[n - 1]);
    }

    [[nodiscard]] std::size_t segment(double t) const {
        auto it = std::upper_bound(x_.begin(), x_.end(), t);
        std::size_t i = static_cast<std::size_t>(it - x_.begin());
        if (i == 0) return 0;
        return std::min(i - 1, x_.size() - 2);
    }

    [[nodiscard]] double antiderivative(double t) const {
        const std::size_t n = x_.size();
        if (t <= x_.front()) {
            const double d = t - x_.front();
            return y_.front() * d + 0.5 * slope_at(0) * d * d;
        }
        if (t >= x_.back()) {
            const double d = t - x_.back();
            return cumulative_.back() + y_.back() * d + 0.5 * slope_at(n - 1) * d * d;
        }
        const std::size_t i = segment(t);
        const double h = x_[i + 1] - x_[i];
        const double a = (x_[i + 1] - t) / h;
        const double b = (t - x_[i]) / h;
        // d/dt of the terms below reproduces operator() on segment i.
        const double lin = h * (y_[i] * (1.0 - a * a) + y_[i + 1] * b * b) / 2.0;
        const double cub = h * h * h / 6.0 *
                           (m_[i] * (-(a * a * a * a) / 4.0 + a * a / 2.0 - 0.25) +
                            m_[i + 1] * (b * b * b * b / 4.0 - b * b / 2.0));
        return cumulative_[i] + lin + cub;
    }
};

}  // namespace gompertz::numeric

#pragma once

#include <cmath>
#include <concepts>
#include <sstream>

#include "gompertz/error.hpp"

namespace gompertz::numeric {

template <typename F>
concept ScalarFunction = requires(F f, double x) {
    { f(x) } -> std::convertible_to<double>;
};

/// Composite Simpson rule on [a, b] with `panels` subintervals (rounded up to even).
template <ScalarFunction F>
double simpson(F&& f, double a, double b, int panels) {
    if (a == b) return 0.0;
    if (panels < 2) panels = 2;
    if (panels % 2 != 0) ++panels;
    const double h = (b - a) / panels;
    double odd = 0.0;
    double even = 0.0;
    for (int k = 1; k < panels; ++k) {
        const double v = f(a + k * h);
        (k % 2 != 0 ? odd : even) += v;
    }
    const double result = h / 3.0 * (f(a) + 4.0 * odd + 2.0 * even + f(b));
    if (!std::isfinite(result)) {
        std::ostringstream os;
        os << "quadrature produced a non-finite value on [" << a << ", " << b << "]";
        throw NumericError(os.str());
    }
    return result;
}

namespace detail {

template <typename F>
double adaptive_step(F& f, double a, double b, double fa, double fm, double fb,
                     double whole, double tol, int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m);
    const double rm = 0.5 * (m + b);
    const double flm = f(lm);
    const double frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const double delta = left + right - whole;
    if (std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
    if (depth <= 0) {
        std::ostringstream os;
        os << "adaptive quadrature did not converge on [" << a << ", " << b << "]";
        throw NumericError(os.str());
    }
    return adaptive_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           adaptive_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

}  // namespace detail

/// Adaptive Simpson with absolute tolerance `tol`.
template <ScalarFunction F>
double adaptive_simpson(F&& f, double a, double b, double tol = 1e-12, int max_depth = 40) {
    if (a == b) return 0.0;
    const double fa = f(a);
    const double fb = f(b);
    const double fm = f(0.5 * (a + b));
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return detail::adaptive_step(f, a, b, fa, fm, fb, whole, tol, max_depth);
}

}  // namespace gompertz::numeric

#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "gompertz/numeric/quadrature.hpp"

namespace gompertz::numeric {

struct RootResult {
    double root = std::numeric_limits<double>::quiet_NaN();
    double value = std::numeric_limits<double>::quiet_NaN();
    int iterations = 0;
    bool converged = false;
};

/// Brent's method (bisection + secant + inverse quadratic interpolation).
/// Requires f(a) and f(b) of opposite sign; returns converged=false otherwise.
template <ScalarFunction F>
RootResult brent_root(F&& f, double a, double b, double xtol = 1e-12, int max_iter = 200) {
    double fa = f(a);
    double fb = f(b);
    RootResult out;
    if (fa == 0.0) return {a, fa, 0, true};
    if (fb == 0.0) return {b, fb, 0, true};
    if ((fa > 0.0) == (fb > 0.0) || !std::isfinite(fa) || !std::isfinite(fb)) return out;

    double c = a, fc = fa;
    double d = b - a, e = d;
    for (int iter = 1; iter <= max_iter; ++iter) {
        if ((fb > 0.0) == (fc > 0.0)) {
            c = a;
            fc = fa;
            d = e = b - a;
        }
        if (std::abs(fc) < std::abs(fb)) {
            a = b; b = c; c = a;
            fa = fb; fb = fc; fc = fa;
        }
        const double tol = 2.0 * std::numeric_limits<double>::epsilon() * std::abs(b) + 0.5 * xtol;
        const double m = 0.5 * (c - b);
        if (std::abs(m) <= tol || fb == 0.0) return {b, fb, iter, true};

        if (std::abs(e) >= tol && std::abs(fa) > std::abs(fb)) {
            double p, q;
            const double s = fb / fa;
            if (a == c) {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                const double qa = fa / fc;
                const double r = fb / fc;
                p = s * (2.0 * m * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if (p > 0.0) q = -q; else p = -p;
            if (2.0 * p < std::min(3.0 * m * q - std::abs(tol * q), std::abs(e * q))) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += (std::abs(d) > tol) ? d : (m > 0.0 ? tol : -tol);
        fb = f(b);
    }
    return {b, fb, max_iter, false};
}

/// Sign-change brackets of f over the supplied increasing abscissae.
template <ScalarFunction F>
std::vector<std::pair<double, double>> scan_brackets(F&& f, const std::vector<double>& xs) {
    std::vector<std::pair<double, double>> out;
    double prev_x = xs.front();
    double prev_f = f(prev_x);
    for (std::size_t i = 1; i < xs.size(); ++i) {
        const double fx = f(xs[i]);
        if (std::isfinite(prev_f) && std::isfinite(fx) && ((prev_f > 0.0) != (fx > 0.0) || fx == 0.0))
            out.emplace_back(prev_x, xs[i]);
        prev_x = xs[i];
        prev_f = fx;
    }
    return out;
}

inline std::vector<double> geometric_grid(double lo, double hi, int points) {
    std::vector<double> xs(static_cast<std::size_t>(points));
    const double ratio = std::log(hi / lo) / (points - 1);
    for (int i = 0; i < points; ++i) xs[static_cast<std::size_t>(i)] = lo * std::exp(ratio * i);
    xs.back() = hi;
    return xs;
}

}  // namespace gompertz::numeric

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "gompertz/error.hpp"

namespace gompertz::numeric {

struct LoessConfig {
    double span = 0.5;
    int degree = 2;
    int robustness_iterations = 0;
};

namespace detail {

inline double tricube(double u) {
    u = std::abs(u);
    if (u >= 1.0) return 0.0;
    const double c = 1.0 - u * u * u;
    return c * c * c;
}

// Weighted least-squares polynomial in z, returns the fitted value at z = 0.
// Falls back to lower degree if the normal equations are singular.
inline bool local_fit(std::span<const double> z, std::span<const double> y, std::span<const double> w,
                      int degree, double& out) {
    for (int deg = degree; deg >= 0; --deg) {
        const int p = deg + 1;
        std::array<double, 9> a{};
        std::array<double, 3> b{};
        for (std::size_t i = 0; i < z.size(); ++i) {
            if (w[i] <= 0.0) continue;
            std::array<double, 3> basis{1.0, z[i], z[i] * z[i]};
            for (int r = 0; r < p; ++r) {
                b[r] += w[i] * basis[r] * y[i];
                for (int c = 0; c < p; ++c) a[r * 3 + c] += w[i] * basis[r] * basis[c];
            }
        }
        double scale = 0.0;
        for (int r = 0; r < p; ++r) scale = std::max(scale, std::abs(a[r * 3 + r]));
        if (scale == 0.0) continue;
        // Gaussian elimination with partial pivoting on the p x p system.
        bool singular = false;
        for (int col = 0; col < p && !singular; ++col) {
            int piv = col;
            for (int r = col + 1; r < p; ++r)
                if (std::abs(a[r * 3 + col]) > std::abs(a[piv * 3 + col])) piv = r;
            if (std::abs(a[piv * 3 + col]) <= 1e-12 * scale) {
                singular = true;
                break;
            }
            if (piv != col) {
                for (int c = 0; c < p; ++c) std::swap(a[col * 3 + c], a[piv * 3 + c]);
                std::swap(b[col], b[piv]);
            }
            for (int r = col + 1; r < p; ++r) {
                const double f = a[r * 3 + col] / a[col * 3 + col];
                for (int c = col; c < p; ++c) a[r * 3 + c] -= f * a[col * 3 + c];
                b[r] -= f * b[col];
            }
        }
        if (singular) continue;
        std::array<double, 3> coef{};
        for (int r = p - 1; r >= 0; --r) {
            double s = b[r];
            for (int c = r + 1; c < p; ++c) s -= a[r * 3 + c] * coef[c];
            coef[r] = s / a[r * 3 + r];
        }
        out = coef[0];
        return true;
    }
    return false;
}

inline double median(std::vector<double> v) {
    const std::size_t n = v.size();
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(n / 2), v.end());
    double hi = v[n / 2];
    if (n % 2 == 1) return hi;
    const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(n / 2));
    return 0.5 * (lo + hi);
}

// Non-missing observations plus the neighbourhood size and robustness weights.
struct LoessState {
    std::vector<double> xs, ys;
    std::vector<std::size_t> index_of;
    std::size_t q = 0;
    std::size_t min_points = 0;
    int degree = 2;
    std::vector<double> robust;

    LoessState(std::span<const double> t, std::span<const double> y, const LoessConfig& cfg) : degree(cfg.degree) {
        gompertz::detail::require(t.size() == y.size(), "loess: length mismatch");
        gompertz::detail::require(cfg.span > 0.0 && cfg.span <= 1.0, "loess: span must lie in (0, 1]");
        gompertz::detail::require(cfg.degree == 1 || cfg.degree == 2, "loess: degree must be 1 or 2");
        gompertz::detail::require(cfg.robustness_iterations >= 0, "loess: negative robustness iterations");
        for (std::size_t i = 0; i < t.size(); ++i) {
            if (std::isfinite(y[i])) {
                xs.push_back(t[i]);
                ys.push_back(y[i]);
                index_of.push_back(i);
            }
        }
        const std::size_t n = xs.size();
        min_points = static_cast<std::size_t>(cfg.degree) + 2;
        gompertz::detail::require(n >= min_points, "loess: not enough non-missing points for the requested degree");
        q = static_cast<std::size_t>(std::ceil(cfg.span * static_cast<double>(n)));
        q = std::clamp(q, min_points, n);
        robust.assign(n, 1.0);
    }

    // Local fit at x0 for the response `resp` (same length as xs).
    [[nodiscard]] double fit_at(double x0, std::span<const double> resp) const {
        const std::size_t n = xs.size();
        std::vector<double> dist(n), z(n), w(n);
        for (std::size_t i = 0; i < n; ++i) dist[i] = std::abs(xs[i] - x0);
        std::vector<double> sorted = dist;
        std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(q - 1), sorted.end());
        double radius = sorted[q - 1];
        if (q == n) radius = std::max(radius, *std::max_element(dist.begin(), dist.end()));
        if (radius <= 0.0) radius = 1.0;
        // Points exactly at the radius get zero weight; widen slightly when
        // that leaves too few supporting points.
        std::size_t support = 0;
        for (std::size_t i = 0; i < n; ++i) support += dist[i] < radius ? 1 : 0;
        if (support < min_points) radius *= 1.0 + 1e-6;
        for (std::size_t i = 0; i < n; ++i) {
            z[i] = (xs[i] - x0) / radius;
            w[i] = tricube(dist[i] / radius) * robust[i];
        }
        double value = 0.0;
        if (!local_fit(z, resp, w, degree, value)) {
            // Robustness weights can zero a neighbourhood; refit without them.
            for (std::size_t i = 0; i < n; ++i) w[i] = tricube(dist[i] / radius);
            local_fit(z, resp, w, degree, value);
        }
        return value;
    }

    // Fits at the observed abscissae after the robustness passes.
    std::vector<double> run(int robustness_iterations) {
        const std::size_t n = xs.size();
        std::vector<double> fitted(n);
        for (int pass = 0; pass <= robustness_iterations; ++pass) {
            for (std::size_t i = 0; i < n; ++i) fitted[i] = fit_at(xs[i], ys);
            if (pass == robustness_iterations) break;
            std::vector<double> abs_res(n);
            for (std::size_t i = 0; i < n; ++i) abs_res[i] = std::abs(ys[i] - fitted[i]);
            const double s = median(abs_res);
            if (s <= 1e-14 * (1.0 + std::abs(median(ys)))) break;
            for (std::size_t i = 0; i < n; ++i) {
                const double u = abs_res[i] / (6.0 * s);
                robust[i] = u < 1.0 ? (1.0 - u * u) * (1.0 - u * u) : 0.0;
            }
        }
        return fitted;
    }

    // Diagonal of the smoother matrix under the current weights.
    [[nodiscard]] double trace() const {
        const std::size_t n = xs.size();
        std::vector<double> e(n, 0.0);
        double tr = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            e[i] = 1.0;
            tr += fit_at(xs[i], e);
            e[i] = 0.0;
        }
        return tr;
    }
};

}  // namespace detail

/// Local polynomial regression (tricube neighbourhood weights, optional
/// bisquare robustness passes). Non-finite entries of `y` are treated as
/// missing: excluded from every fit but still predicted at their abscissa.
inline std::vector<double> loess(std::span<const double> t, std::span<const double> y,
                                 const LoessConfig& cfg = {}) {
    detail::LoessState st(t, y, cfg);
    const std::vector<double> fitted = st.run(cfg.robustness_iterations);
    std::vector<double> out(t.size());
    std::size_t k = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (k < st.xs.size() && st.index_of[k] == i) out[i] = fitted[k++];
        else out[i] = st.fit_at(t[i], st.ys);
    }
    return out;
}

/// Generalised cross-validation score n RSS / (n - tr L)^2 of a fit.
inline double loess_gcv(std::span<const double> t, std::span<const double> y, const LoessConfig& cfg) {
    detail::LoessState st(t, y, cfg);
    const std::vector<double> fitted = st.run(cfg.robustness_iterations);
    const double n = static_cast<double>(st.xs.size());
    double rss = 0.0;
    for (std::size_t i = 0; i < st.xs.size(); ++i) rss += (st.ys[i] - fitted[i]) * (st.ys[i] - fitted[i]);
    const double dof = n - st.trace();
    if (!(dof > 0.0)) return std::numeric_limits<double>::infinity();
    return n * rss / (dof * dof);
}

/// Span from `candidates` with the smallest GCV score (first one on ties).
inline double select_span_gcv(std::span<const double> t, std::span<const double> y, LoessConfig cfg,
                              std::span<const double> candidates) {
    gompertz::detail::require(!candidates.empty(), "loess: no candidate spans");
    double best = candidates.front();
    double best_score = std::numeric_limits<double>::infinity();
    for (double span : candidates) {
        cfg.span = span;
        const double g = loess_gcv(t, y, cfg);
        if (g < best_score) {
            best_score = g;
            best = span;
        }
    }
    return best;
}

}  // namespace gompertz::numeric

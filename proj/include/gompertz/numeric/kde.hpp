#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

#include "gompertz/error.hpp"
#include "gompertz/numeric/brent.hpp"

namespace gompertz::numeric {

enum class BandwidthRule { Silverman, SheatherJones };

struct DensityCurve {
    std::vector<double> x;
    std::vector<double> density;
    double bandwidth = 0.0;
    double critical_value = 0.0;  // empirical upper quantile at the requested level
};

/// Sample quantile, linear interpolation between order statistics (type 7).
inline double quantile(std::vector<double> v, double p) {
    gompertz::detail::require(!v.empty(), "quantile: empty sample");
    std::sort(v.begin(), v.end());
    const double h = (static_cast<double>(v.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

namespace detail {

inline double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

// psi_r(g) = n^-2 g^-(r+1) sum_i sum_j phi^(r)((x_i - x_j)/g) for r = 4, 6.
inline double psi_functional(std::span<const double> x, double g, int r) {
    const std::size_t n = x.size();
    double sum = 0.0;
    auto kernel = [r](double u) {
        const double u2 = u * u;
        if (r == 4) return (u2 * u2 - 6.0 * u2 + 3.0) * normal_pdf(u);
        return (u2 * u2 * u2 - 15.0 * u2 * u2 + 45.0 * u2 - 15.0) * normal_pdf(u);
    };
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) sum += 2.0 * kernel((x[i] - x[j]) / g);
    sum += static_cast<double>(n) * kernel(0.0);
    return sum / (static_cast<double>(n) * static_cast<double>(n) * std::pow(g, r + 1));
}

}  // namespace detail

inline double silverman_bandwidth(std::span<const double> x) {
    const double n = static_cast<double>(x.size());
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= n;
    double ss = 0.0;
    for (double v : x) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / (n - 1.0));
    std::vector<double> copy(x.begin(), x.end());
    const double iqr = quantile(copy, 0.75) - quantile(copy, 0.25);
    double scale = std::min(sd, iqr / 1.349);
    if (scale <= 0.0) scale = sd;
    return 0.9 * scale * std::pow(n, -0.2);
}

/// Sheather-Jones "solve-the-equation" plug-in bandwidth.
inline double sheather_jones_bandwidth(std::span<const double> x) {
    const double n = static_cast<double>(x.size());
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= n;
    double ss = 0.0;
    for (double v : x) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / (n - 1.0));
    std::vector<double> copy(x.begin(), x.end());
    const double iqr = quantile(copy, 0.75) - quantile(copy, 0.25);
    double scale = std::min(sd, iqr / 1.349);
    if (scale <= 0.0) scale = sd;

    const double a = 1.24 * scale * std::pow(n, -1.0 / 7.0);
    const double b = 1.23 * scale * std::pow(n, -1.0 / 9.0);
    const double c1 = 1.0 / (2.0 * std::sqrt(std::numbers::pi) * n);
    const double td = -detail::psi_functional(x, b, 6);
    const double sda = detail::psi_functional(x, a, 4);
    const double alpha2 = 1.357 * std::pow(sda / td, 1.0 / 7.0);
    auto equation = [&](double h) {
        return std::pow(c1 / detail::psi_functional(x, alpha2 * std::pow(h, 5.0 / 7.0), 4), 0.2) - h;
    };
    const double hmax = 1.144 * scale * std::pow(n, -0.2);
    double lo = 0.1 * hmax, hi = hmax;
    for (int k = 0; k < 20 && equation(lo) * equation(hi) > 0.0; ++k) {
        lo *= 0.9;
        hi *= 1.1;
    }
    const RootResult r = brent_root(equation, lo, hi, 0.1 * lo * 1e-3);
    if (!r.converged) return silverman_bandwidth(x);
    return r.root;
}

/// Gaussian kernel density estimate of a replicate sample on an even grid
/// spanning [min - 3h, max + 3h].
inline DensityCurve gaussian_kde(std::span<const double> sample, BandwidthRule rule = BandwidthRule::Silverman,
                                 std::size_t grid_points = 512, double level = 0.05) {
    gompertz::detail::require(sample.size() >= 2, "kde: at least two replicates required");
    const auto [mn, mx] = std::minmax_element(sample.begin(), sample.end());
    if (!(*mx > *mn)) throw NumericError("kde: replicate statistics have zero variance");

    DensityCurve out;
    out.bandwidth = rule == BandwidthRule::Silverman ? silverman_bandwidth(sample)
                                                      : sheather_jones_bandwidth(sample);
    const double h = out.bandwidth;
    const double lo = *mn - 3.0 * h;
    const double hi = *mx + 3.0 * h;
    out.x.resize(grid_points);
    out.density.resize(grid_points);
    const double step = (hi - lo) / static_cast<double>(grid_points - 1);
    const double norm = 1.0 / (static_cast<double>(sample.size()) * h);
    for (std::size_t k = 0; k < grid_points; ++k) {
        const double x = lo + step * static_cast<double>(k);
        double s = 0.0;
        for (double v : sample) s += detail::normal_pdf((x - v) / h);
        out.x[k] = x;
        out.density[k] = s * norm;
    }
    out.critical_value = quantile(std::vector<double>(sample.begin(), sample.end()), 1.0 - level);
    return out;
}

}  // namespace gompertz::numeric

#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "gompertz/error.hpp"
#include "gompertz/numeric/brent.hpp"
#include "gompertz/numeric/derivative.hpp"
#include "gompertz/numeric/kde.hpp"
#include "gompertz/numeric/loess.hpp"
#include "gompertz/numeric/quadrature.hpp"
#include "gompertz/numeric/spline.hpp"

using namespace gompertz;
using namespace gompertz::numeric;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

std::vector<double> uniform_grid(double a, double b, std::size_t n) {
    std::vector<double> g(n);
    for (std::size_t i = 0; i < n; ++i) g[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
    return g;
}

}  // namespace

TEST_CASE("simpson is exact for cubics and converges for smooth integrands", "[quadrature]") {
    auto cubic = [](double x) { return 2.0 * x * x * x - x + 3.0; };
    // int_0^2 = 8 - 2 + 6 = 12
    CHECK_THAT(simpson(cubic, 0.0, 2.0, 1), WithinAbs(12.0, 1e-13));
    CHECK_THAT(simpson([](double x) { return std::exp(x); }, 0.0, 1.0, 64), WithinAbs(std::exp(1.0) - 1.0, 1e-8));
    CHECK_THAT(adaptive_simpson([](double x) { return std::sin(x); }, 0.0, std::numbers::pi), WithinAbs(2.0, 1e-11));
}

TEST_CASE("natural cubic spline interpolates, is linear-exact and integrates exactly", "[spline]") {
    const std::vector<double> x{0.0, 1.0, 2.5, 4.0, 7.0};
    std::vector<double> y;
    for (double v : x) y.push_back(3.0 * v - 2.0);
    NaturalCubicSpline s(x, y);
    for (double t : {0.0, 0.3, 1.7, 3.9, 6.5, 7.0}) CHECK_THAT(s(t), WithinAbs(3.0 * t - 2.0, 1e-12));
    CHECK_THAT(s.derivative(2.0), WithinAbs(3.0, 1e-12));
    CHECK_THAT(s.integral(0.5, 6.0), WithinAbs(1.5 * (36.0 - 0.25) - 2.0 * 5.5, 1e-11));

    const std::vector<double> y2{1.0, -1.0, 2.0, 0.5, 3.0};
    NaturalCubicSpline s2(x, y2);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK_THAT(s2(x[i]), WithinAbs(y2[i], 1e-13));
    CHECK_THAT(s2.second_derivatives().front(), WithinAbs(0.0, 1e-14));
    CHECK_THAT(s2.second_derivatives().back(), WithinAbs(0.0, 1e-14));
    const double quad = adaptive_simpson([&](double t) { return s2(t); }, 0.2, 6.3, 1e-13);
    CHECK_THAT(s2.integral(0.2, 6.3), WithinAbs(quad, 1e-10));
    CHECK_THAT(s2.integral(6.3, 0.2), WithinAbs(-quad, 1e-10));

    CHECK_THROWS_AS(NaturalCubicSpline(std::vector<double>{0.0, 0.0}, std::vector<double>{1.0, 2.0}), ValidationError);
}

TEST_CASE("brent finds roots inside a bracket and scan finds sign changes", "[brent]") {
    const auto r = brent_root([](double x) { return std::cos(x) - x; }, 0.0, 1.0);
    REQUIRE(r.converged);
    CHECK_THAT(r.root, WithinAbs(0.7390851332151607, 1e-12));
    const auto br = scan_brackets([](double x) { return (x - 0.1) * (x - 2.0); }, geometric_grid(1e-3, 10.0, 41));
    REQUIRE(br.size() == 2);
    CHECK(br[0].first < 0.1);
    CHECK(br[0].second > 0.1);
    CHECK(br[1].first < 2.0);
    CHECK(br[1].second > 2.0);
    const auto g = geometric_grid(1e-4, 5.0, 61);
    CHECK_THAT(g.front(), WithinRel(1e-4, 1e-12));
    CHECK_THAT(g.back(), WithinRel(5.0, 1e-12));
}

TEST_CASE("numeric_derivative examples", "[derivative]") {
    SECTION("linear values give the slope exactly on a non-uniform grid") {
        const std::vector<double> t{0.0, 0.4, 1.5, 1.7, 3.0, 4.2};
        std::vector<double> y;
        for (double v : t) y.push_back(-2.5 * v + 4.0);
        for (double d : numeric_derivative(t, y)) CHECK_THAT(d, WithinAbs(-2.5, 1e-12));
    }
    SECTION("quadratic values give the exact derivative") {
        const auto t = uniform_grid(0.0, 10.0, 11);
        std::vector<double> y;
        for (double v : t) y.push_back(v * v);
        const auto d = numeric_derivative(t, y);
        CHECK_THAT(d[5], WithinAbs(10.0, 1e-12));
        for (std::size_t i = 0; i < t.size(); ++i) CHECK_THAT(d[i], WithinAbs(2.0 * t[i], 1e-11));
    }
    SECTION("sin on [0, 50] with 51 points stays within the truncation bound") {
        const auto t = uniform_grid(0.0, 50.0, 51);
        std::vector<double> y;
        for (double v : t) y.push_back(std::sin(v));
        const auto d = numeric_derivative(t, y);
        double worst = 0.0;
        for (std::size_t i = 1; i + 1 < t.size(); ++i) worst = std::max(worst, std::abs(d[i] - std::cos(t[i])));
        CHECK(worst <= 1.0 / 6.0 + 1e-12);
        // One-sided second-order stencils: bound h^2/3 max|f'''|.
        CHECK(std::abs(d.front() - 1.0) <= 1.0 / 3.0);
        CHECK(std::abs(d.back() - std::cos(50.0)) <= 1.0 / 3.0);
    }
    SECTION("fewer than three points is an error") {
        const std::vector<double> t{0.0, 1.0};
        CHECK_THROWS_AS(numeric_derivative(t, t), ValidationError);
    }
}

TEST_CASE("loess reproduces polynomials of its degree and constants", "[loess]") {
    const auto t = uniform_grid(0.0, 50.0, 51);
    for (int degree : {1, 2}) {
        std::vector<double> y;
        for (double v : t) y.push_back(degree == 1 ? 0.3 * v - 1.0 : 0.01 * v * v - 0.2 * v + 3.0);
        for (double span : {0.2, 0.5, 1.0}) {
            const auto f = loess(t, y, {span, degree, 2});
            for (std::size_t i = 0; i < t.size(); ++i) CHECK_THAT(f[i], WithinAbs(y[i], 1e-9));
        }
    }
    const std::vector<double> seven(t.size(), 7.0);
    for (double span : {0.1, 0.5, 1.0})
        for (double v : loess(t, seven, {span, 2, 2})) CHECK_THAT(v, WithinAbs(7.0, 1e-12));
}

TEST_CASE("loess predicts missing points and is idempotent on degree-exact input", "[loess]") {
    const auto t = uniform_grid(0.0, 20.0, 21);
    std::vector<double> y;
    for (double v : t) y.push_back(0.5 * v * v - v);
    auto holed = y;
    holed[0] = std::nan("");
    holed[7] = std::nan("");
    const auto f = loess(t, holed, {0.4, 2, 0});
    CHECK_THAT(f[0], WithinAbs(y[0], 1e-9));
    CHECK_THAT(f[7], WithinAbs(y[7], 1e-9));
    const auto g = loess(t, f, {0.4, 2, 0});
    for (std::size_t i = 0; i < t.size(); ++i) CHECK_THAT(g[i], WithinAbs(f[i], 1e-9));
}

TEST_CASE("loess smooths sin(t/8) with N(0, 0.01^2) noise below 0.01 RMSE (median of 100 seeds)", "[loess]") {
    const auto t = uniform_grid(0.0, 50.0, 51);
    std::vector<double> rmse;
    for (int seed = 0; seed < 100; ++seed) {
        std::mt19937_64 rng(static_cast<std::uint64_t>(seed) + 1000);
        std::normal_distribution<double> noise(0.0, 0.01);
        std::vector<double> y;
        for (double v : t) y.push_back(std::sin(v / 8.0) + noise(rng));
        const auto f = loess(t, y, {0.3, 2, 0});
        double s = 0.0;
        for (std::size_t i = 0; i < t.size(); ++i) s += (f[i] - std::sin(t[i] / 8.0)) * (f[i] - std::sin(t[i] / 8.0));
        rmse.push_back(std::sqrt(s / static_cast<double>(t.size())));
    }
    CHECK(quantile(rmse, 0.5) < 0.01);
}

TEST_CASE("loess GCV prefers small spans for sharp noise-free features", "[loess]") {
    const auto t = uniform_grid(0.0, 50.0, 51);
    std::vector<double> y;
    for (double v : t) y.push_back(-0.12 * v * v / (50.0 + v * (v - 10.0)));
    const std::vector<double> spans{0.1, 0.3, 0.5, 1.0};
    CHECK(select_span_gcv(t, y, {0.5, 2, 0}, spans) == 0.1);
}

TEST_CASE("loess argument validation", "[loess]") {
    const auto t = uniform_grid(0.0, 1.0, 5);
    const std::vector<double> y(5, 1.0);
    CHECK_THROWS_AS(loess(t, y, {0.0, 2, 0}), ValidationError);
    CHECK_THROWS_AS(loess(t, y, {0.5, 3, 0}), ValidationError);
    std::vector<double> sparse(5, std::nan(""));
    sparse[0] = 1.0;
    sparse[1] = 2.0;
    CHECK_THROWS_AS(loess(t, sparse, {0.5, 2, 0}), ValidationError);
}

TEST_CASE("gaussian kde matches the normal density and integrates to one", "[kde]") {
    std::mt19937_64 rng(42);
    std::normal_distribution<double> n01(0.0, 1.0);
    std::vector<double> x(10000);
    for (double& v : x) v = n01(rng);
    for (auto rule : {BandwidthRule::Silverman, BandwidthRule::SheatherJones}) {
        const auto c = gaussian_kde(x, rule);
        double at0 = 0.0, best = 1e9, integral = 0.0;
        for (std::size_t k = 0; k < c.x.size(); ++k) {
            if (std::abs(c.x[k]) < best) {
                best = std::abs(c.x[k]);
                at0 = c.density[k];
            }
            if (k > 0) integral += 0.5 * (c.density[k] + c.density[k - 1]) * (c.x[k] - c.x[k - 1]);
        }
        CHECK(best < 0.02);
        CHECK_THAT(at0, WithinAbs(1.0 / std::sqrt(2.0 * std::numbers::pi), 0.02));
        CHECK_THAT(integral, WithinAbs(1.0, 1e-3));
        CHECK_THAT(c.critical_value, WithinAbs(1.6449, 0.06));
    }
    const std::vector<double> same(50, 2.0);
    CHECK_THROWS_AS(gaussian_kde(same), NumericError);
}

TEST_CASE("quantile uses linear interpolation between order statistics", "[kde]") {
    CHECK_THAT(quantile({1.0, 2.0, 3.0, 4.0}, 0.5), WithinAbs(2.5, 1e-15));
    CHECK_THAT(quantile({5.0, 1.0, 3.0}, 1.0), WithinAbs(5.0, 1e-15));
    CHECK_THAT(quantile({5.0, 1.0, 3.0}, 0.0), WithinAbs(1.0, 1e-15));
}

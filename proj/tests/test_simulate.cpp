#include <catch_amalgamated.hpp>

#include <cmath>
#include <cstdlib>
#include <vector>

#include "gompertz/model.hpp"
#include "gompertz/random.hpp"
#include "gompertz/simulate.hpp"

using namespace gompertz;
using Catch::Matchers::WithinAbs;

namespace {

const ModelParams kParams{0.5, 0.2, 0.01};

struct ColumnStats {
    double mean = 0.0;
    double var = 0.0;  // unbiased
};

template <typename F>
ColumnStats column_stats(const PathPanel& p, std::size_t j, F&& transform) {
    const double d = static_cast<double>(p.subjects());
    ColumnStats s;
    for (const auto& row : p.values) s.mean += transform(row[j]);
    s.mean /= d;
    for (const auto& row : p.values) s.var += (transform(row[j]) - s.mean) * (transform(row[j]) - s.mean);
    s.var /= d - 1.0;
    return s;
}

ColumnStats x_stats(const PathPanel& p, std::size_t j) {
    return column_stats(p, j, [](double x) { return x; });
}

ModelSpec application_group2() {
    return {kParams, TherapyProfile::linear(Role::C, 0.005), TherapyProfile::rational_bump(Role::D, -0.12, 50.0, 10.0),
            TherapyProfile::lognormal_offset_squared(Role::V, 0.7, 15.0, 3.0, 0.5)};
}

}  // namespace

TEST_CASE("panels start at x0, are positive and have the grid's width", "[simulate]") {
    const auto design = StudyDesign::uniform(0.0, 50.0, 51, 1.5);
    SimulationConfig cfg;
    cfg.seed = 3;
    for (auto scheme : {Scheme::ExactTransition, Scheme::EulerMaruyama}) {
        cfg.scheme = scheme;
        const auto p = simulate(application_group2(), design, cfg);
        REQUIRE(p.subjects() == 25);
        for (const auto& row : p.values) {
            REQUIRE(row.size() == 51);
            CHECK(row[0] == 1.5);
            for (double v : row) CHECK(v > 0.0);
        }
        CHECK_NOTHROW(p.validate());
    }
}

TEST_CASE("noise-free limit follows the deterministic Gompertz curve", "[simulate]") {
    const ModelParams p{0.5, 0.2, 1e-12};
    const auto design = StudyDesign::uniform(0.0, 50.0, 51);
    SimulationConfig cfg;
    cfg.n_paths = 5;
    for (auto scheme : {Scheme::ExactTransition, Scheme::EulerMaruyama}) {
        cfg.scheme = scheme;
        cfg.euler_substeps = 4096;
        const auto panel = simulate(ModelSpec::homogeneous(p), design, cfg);
        const double tol = scheme == Scheme::ExactTransition ? 1e-6 : 1e-3;
        for (const auto& row : panel.values)
            for (std::size_t j = 0; j < design.size(); ++j) {
                const double t = design.grid[j];
                CHECK_THAT(row[j], WithinAbs(std::exp(p.alpha / p.beta * (1.0 - std::exp(-p.beta * t))), tol));
            }
    }
}

TEST_CASE("fixed seed reproduces the panel bit for bit under any thread count", "[simulate]") {
    const auto design = StudyDesign::uniform(0.0, 50.0, 51);
    SimulationConfig cfg;
    cfg.n_paths = 40;
    cfg.seed = 99;
    for (auto scheme : {Scheme::ExactTransition, Scheme::EulerMaruyama}) {
        cfg.scheme = scheme;
        ::setenv("GOMPERTZ_THREADS", "1", 1);
        const auto a = simulate(application_group2(), design, cfg);
        ::setenv("GOMPERTZ_THREADS", "4", 1);
        const auto b = simulate(application_group2(), design, cfg);
        ::unsetenv("GOMPERTZ_THREADS");
        CHECK(a.values == b.values);
        cfg.seed = 100;
        const auto c = simulate(application_group2(), design, cfg);
        CHECK(a.values != c.values);
        cfg.seed = 99;
    }
}

TEST_CASE("10,000 exact paths match the analytic mean of X(50)", "[simulate][montecarlo]") {
    const auto design = StudyDesign::uniform(0.0, 50.0, 51);
    SimulationConfig cfg;
    cfg.n_paths = 10000;
    cfg.seed = 2024;
    const auto model = ModelSpec::homogeneous(kParams);
    const auto panel = simulate(model, design, cfg);
    const auto [mean, var] = mean_variance_X(theoretical_moments(model, design));
    const auto s = x_stats(panel, 50);
    const double se = std::sqrt(var[50] / 10000.0);
    CHECK(std::abs(s.mean - mean[50]) < 3.0 * se);
}

TEST_CASE("exact scheme: log-states match the analytic normal law", "[simulate][montecarlo]") {
    const auto design = StudyDesign::uniform(0.0, 50.0, 51);
    SimulationConfig cfg;
    cfg.n_paths = 5000;
    cfg.seed = 17;
    const auto model = application_group2();
    const auto panel = simulate(model, design, cfg);
    const auto mc = theoretical_moments(model, design);
    const double n = 5000.0;
    for (std::size_t j : {1u, 5u, 20u, 35u, 50u}) {
        const auto s = column_stats(panel, j, [](double x) { return std::log(x); });
        const double z_mean = (s.mean - mc.m1[j]) / std::sqrt(mc.u[j] / n);
        const double z_var = (s.var - mc.u[j]) / (mc.u[j] * std::sqrt(2.0 / (n - 1.0)));
        CHECK(std::abs(z_mean) < 4.0);
        CHECK(std::abs(z_var) < 4.0);
    }
}

TEST_CASE("Euler with 32 substeps agrees with the exact scheme at every grid time", "[simulate][montecarlo]") {
    // Noise large enough that the Monte-Carlo error dominates discretisation bias.
    const ModelParams p{0.0696, 0.0124, 0.0896};
    const auto design = StudyDesign::uniform(0.0, 50.0, 51);
    SimulationConfig cfg;
    cfg.n_paths = 10000;
    cfg.seed = 5;
    const auto exact = simulate(ModelSpec::homogeneous(p), design, cfg);
    cfg.scheme = Scheme::EulerMaruyama;
    cfg.euler_substeps = 32;
    cfg.seed = 6;
    const auto euler = simulate(ModelSpec::homogeneous(p), design, cfg);
    for (std::size_t j = 1; j < design.size(); ++j) {
        const auto a = x_stats(exact, j);
        const auto b = x_stats(euler, j);
        CHECK(std::abs(a.mean - b.mean) < 3.0 * std::sqrt((a.var + b.var) / 10000.0));
    }
}

TEST_CASE("Euler mean error shrinks as substeps double", "[simulate][montecarlo]") {
    StudyDesign design;
    design.grid = {0.0, 1.0, 2.0, 3.0};
    const auto model = ModelSpec::homogeneous(kParams);
    const double truth = mean_variance_X(theoretical_moments(model, design)).first.back();
    SimulationConfig cfg;
    cfg.n_paths = 4000;
    cfg.scheme = Scheme::EulerMaruyama;
    cfg.seed = 8;
    double previous = std::numeric_limits<double>::infinity();
    for (int substeps : {1, 2, 4, 8, 16}) {
        cfg.euler_substeps = substeps;
        const auto panel = simulate(model, design, cfg);
        const double err = std::abs(x_stats(panel, 3).mean - truth);
        CHECK(err < previous);
        previous = err;
    }
}

TEST_CASE("Euler positivity failures: redraw below the threshold, error above it", "[simulate]") {
    const ModelParams rough{0.5, 0.2, 0.8};
    const auto design = StudyDesign::uniform(0.0, 5.0, 6);
    SimulationConfig cfg;
    cfg.n_paths = 200;
    cfg.scheme = Scheme::EulerMaruyama;
    cfg.euler_substeps = 1;
    cfg.seed = 12;
    CHECK_THROWS_AS(simulate(ModelSpec::homogeneous(rough), design, cfg), NumericError);

    cfg.max_failure_fraction = 1.0;
    SimulationReport report;
    const auto panel = simulate(ModelSpec::homogeneous(rough), design, cfg, &report);
    CHECK(report.failed_paths.size() > 2);
    CHECK_NOTHROW(panel.validate());

    // A failure count at exactly 1% of the panel is tolerated.
    const auto n_failed = report.failed_paths.size();
    cfg.max_failure_fraction = static_cast<double>(n_failed) / 200.0;
    CHECK_NOTHROW(simulate(ModelSpec::homogeneous(rough), design, cfg));
    cfg.max_failure_fraction = (static_cast<double>(n_failed) - 0.5) / 200.0;
    CHECK_THROWS_AS(simulate(ModelSpec::homogeneous(rough), design, cfg), NumericError);
}

TEST_CASE("invalid configurations are rejected", "[simulate]") {
    const auto design = StudyDesign::uniform(0.0, 5.0, 6);
    SimulationConfig cfg;
    cfg.n_paths = 0;
    CHECK_THROWS_AS(simulate(ModelSpec::homogeneous(kParams), design, cfg), ValidationError);
    cfg.n_paths = 3;
    cfg.euler_substeps = 0;
    CHECK_THROWS_AS(simulate(ModelSpec::homogeneous(kParams), design, cfg), ValidationError);
    cfg.euler_substeps = 4;
    ModelSpec bad = ModelSpec::homogeneous(kParams);
    bad.V = TherapyProfile::constant(Role::V, -1.0);
    CHECK_THROWS_AS(simulate(bad, design, cfg), ValidationError);
}

TEST_CASE("seed derivation is order independent and separates counters", "[random]") {
    CHECK(derive_seed(7, {1, 2}) == derive_seed(7, {1, 2}));
    CHECK(derive_seed(7, {1, 2}) != derive_seed(7, {2, 1}));
    CHECK(derive_seed(7, {1}) != derive_seed(8, {1}));
    CHECK(derive_seed(7, {}) != derive_seed(7, {0}));
}

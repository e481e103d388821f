#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "gompertz/error.hpp"
#include "gompertz/likelihood.hpp"
#include "gompertz/model.hpp"
#include "gompertz/numeric/derivative.hpp"
#include "gompertz/numeric/loess.hpp"
#include "gompertz/simulate.hpp"
#include "gompertz/therapy.hpp"

namespace gompertz {

/// Sample moment curves of a panel: mean of ln x, ln of the mean of x and the
/// unbiased variance of ln x per grid time, with numeric derivatives.
inline MomentCurves sample_moment_curves(const PathPanel& panel) {
    const std::size_t d = panel.subjects();
    if (d < 2) throw ValidationError("sample_moment_curves: at least two subjects are required");
    const std::size_t n = panel.times();
    MomentCurves c;
    c.grid = panel.design.grid;
    c.m1.resize(n);
    c.m2.resize(n);
    c.u.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
        double sum_log = 0.0, sum_x = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            sum_log += std::log(panel.values[i][j]);
            sum_x += panel.values[i][j];
        }
        const double mean_log = sum_log / static_cast<double>(d);
        double ss = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            const double z = std::log(panel.values[i][j]) - mean_log;
            ss += z * z;
        }
        c.m1[j] = mean_log;
        c.m2[j] = std::log(sum_x / static_cast<double>(d));
        c.u[j] = ss / static_cast<double>(d - 1);
    }
    c.dm1 = numeric::numeric_derivative(c.grid, c.m1);
    c.dm2 = numeric::numeric_derivative(c.grid, c.m2);
    c.du = numeric::numeric_derivative(c.grid, c.u);
    return c;
}

/// Mean squared difference between two curves on the same grid.
inline double mse_curve(std::span<const double> fitted, std::span<const double> truth) {
    detail::require(fitted.size() == truth.size(), "mse_curve: length mismatch");
    detail::require(!fitted.empty(), "mse_curve: empty curves");
    double s = 0.0;
    for (std::size_t j = 0; j < fitted.size(); ++j) {
        const double e = fitted[j] - truth[j];
        s += e * e;
    }
    return s / static_cast<double>(fitted.size());
}

/// Therapy ordering of the two treated groups.
enum class Ordering {
    AntiProliferativeFirst,  // G1 carries C, G2 adds D
    DeathInducedFirst        // G1 carries D, G2 adds C
};

inline const char* to_string(Ordering o) { return o == Ordering::AntiProliferativeFirst ? "apf" : "dif"; }

/// LOESS settings for one kind of series. With `gcv_span` the span is chosen
/// per series by generalised cross-validation over the candidate list.
struct SeriesSmoothing {
    numeric::LoessConfig loess{0.5, 2, 0};
    bool gcv_span = false;
};

/// Curve finalisation: LOESS of the pointwise series followed by a natural
/// spline through the smoothed values. With `smooth = false` the spline goes
/// straight through the non-missing pointwise values.
struct SmoothingConfig {
    bool smooth = true;
    SeriesSmoothing rate{{0.5, 2, 0}, true};
    SeriesSmoothing variance{{0.5, 2, 0}, false};
    std::vector<double> span_candidates{0.1, 0.15, 0.2, 0.25, 0.3, 0.4, 0.5, 0.6, 0.75, 0.9, 1.0};
};

struct FitOptions {
    Ordering ordering = Ordering::AntiProliferativeFirst;
    SmoothingConfig smoothing{};
    RelationOptions relation{};
};

/// What a single treated group's pipeline estimates: one rate shift (C or D)
/// plus its variance modulation, with the other rate known on the grid.
struct GroupSpec {
    Role rate = Role::C;
    std::vector<double> companion;  // known values of the other rate on the grid
};

struct SmoothedSeries {
    PointwiseEstimate raw;
    std::vector<double> smoothed;  // values on the grid after smoothing
    TherapyProfile profile;
    double span = 0.0;  // LOESS span used (0 when unsmoothed)
};

struct GroupFit {
    GroupSpec spec;
    SmoothedSeries rate;
    SmoothedSeries variance;
    std::vector<double> death_used_for_variance;
};

/// Smooth a pointwise series into a grid spline.
inline SmoothedSeries finalize_series(std::span<const double> grid, PointwiseEstimate raw, Role role,
                                      const SmoothingConfig& cfg, double floor = -std::numeric_limits<double>::infinity()) {
    SmoothedSeries s;
    const std::size_t n = grid.size();
    const SeriesSmoothing& ss = role == Role::V ? cfg.variance : cfg.rate;
    if (cfg.smooth) {
        numeric::LoessConfig lc = ss.loess;
        if (ss.gcv_span) lc.span = numeric::select_span_gcv(grid, raw.values, lc, cfg.span_candidates);
        s.span = lc.span;
        s.smoothed = numeric::loess(grid, raw.values, lc);
        for (double& v : s.smoothed) v = std::max(v, floor);
        s.profile = TherapyProfile::grid_spline(role, grid, s.smoothed);
    } else {
        std::vector<double> kx, ky;
        for (std::size_t j = 0; j < n; ++j)
            if (std::isfinite(raw.values[j])) {
                kx.push_back(grid[j]);
                ky.push_back(std::max(raw.values[j], floor));
            }
        if (kx.size() < 2) throw EstimationError("finalize_series: fewer than two usable points");
        s.profile = TherapyProfile::grid_spline(role, kx, ky);
        s.smoothed = s.profile.sample(grid);
        for (double& v : s.smoothed) v = std::max(v, floor);
    }
    s.raw = std::move(raw);
    return s;
}

/// Run one treated group's pipeline from its moment curves.
inline GroupFit fit_group(const MomentCurves& curves, const ModelParams& p, GroupSpec spec, const FitOptions& opt) {
    detail::require(spec.rate == Role::C || spec.rate == Role::D, "fit_group: the estimated rate must be C or D");
    detail::require(spec.companion.size() == curves.size(), "fit_group: companion length differs from the grid");
    GroupFit g;
    const auto& grid = curves.grid;
    if (spec.rate == Role::C) {
        g.rate = finalize_series(grid, recover_C(curves, p, spec.companion, opt.relation), Role::C, opt.smoothing);
        g.death_used_for_variance = spec.companion;
    } else {
        g.rate = finalize_series(grid, recover_D(curves, p, spec.companion, opt.relation), Role::D, opt.smoothing);
        g.death_used_for_variance = g.rate.raw.values;
        for (std::size_t j = 0; j < grid.size(); ++j)
            if (!std::isfinite(g.death_used_for_variance[j])) g.death_used_for_variance[j] = g.rate.smoothed[j];
    }
    g.variance = finalize_series(grid, recover_V(curves, p, g.death_used_for_variance, opt.relation), Role::V,
                                 opt.smoothing, opt.relation.variance_floor);
    g.spec = std::move(spec);
    return g;
}

/// Output of the full stepwise procedure.
struct FitResult {
    ModelParams params;
    ControlFit control;
    FitOptions options;
    std::vector<double> grid;
    double x0 = 1.0;
    GroupFit g1, g2;

    [[nodiscard]] const SmoothedSeries& series(Role rate) const {
        const bool first = (rate == Role::C) == (options.ordering == Ordering::AntiProliferativeFirst);
        return first ? g1.rate : g2.rate;
    }
    [[nodiscard]] const TherapyProfile& C() const { return series(Role::C).profile; }
    [[nodiscard]] const TherapyProfile& D() const { return series(Role::D).profile; }
    [[nodiscard]] const TherapyProfile& V1() const { return g1.variance.profile; }
    [[nodiscard]] const TherapyProfile& V2() const { return g2.variance.profile; }

    [[nodiscard]] StudyDesign design() const { return {grid, x0}; }

    /// Fitted model of group 1 or 2.
    [[nodiscard]] ModelSpec group_model(int group) const {
        detail::require(group == 1 || group == 2, "group_model: group must be 1 or 2");
        ModelSpec m{params};
        const bool apf = options.ordering == Ordering::AntiProliferativeFirst;
        if (group == 1) {
            if (apf) m.C = C();
            else m.D = D();
            m.V = V1();
        } else {
            m.C = C();
            m.D = D();
            m.V = V2();
        }
        return m;
    }
};

/// Companion spec for the first treated group (the other rate is zero).
inline GroupSpec first_group_spec(Ordering o, std::size_t n) {
    return {o == Ordering::AntiProliferativeFirst ? Role::C : Role::D, std::vector<double>(n, 0.0)};
}

/// Companion spec for the second group: the first group's rate estimate,
/// pointwise, with guarded points filled from its smoothed curve.
inline GroupSpec second_group_spec(Ordering o, const GroupFit& g1) {
    GroupSpec s;
    s.rate = o == Ordering::AntiProliferativeFirst ? Role::D : Role::C;
    s.companion = g1.rate.raw.values;
    for (std::size_t j = 0; j < s.companion.size(); ++j)
        if (!std::isfinite(s.companion[j])) s.companion[j] = g1.rate.smoothed[j];
    return s;
}

/// Stepwise estimation from given moment curves and control parameters.
inline FitResult stepwise_from_curves(const ModelParams& params, const MomentCurves& g1, const MomentCurves& g2,
                                      const FitOptions& opt, double x0 = 1.0) {
    detail::require(g1.grid == g2.grid, "stepwise_fit: treated groups must share a grid");
    FitResult r;
    r.params = params;
    r.control.params = params;
    r.options = opt;
    r.grid = g1.grid;
    r.x0 = x0;
    r.g1 = fit_group(g1, params, first_group_spec(opt.ordering, g1.size()), opt);
    r.g2 = fit_group(g2, params, second_group_spec(opt.ordering, r.g1), opt);
    return r;
}

/// Full stepwise procedure: control ML fit, sample curves, pointwise relations,
/// smoothing and spline finalisation for both treated groups.
inline FitResult stepwise_fit(const PathPanel& control, const PathPanel& g1, const PathPanel& g2,
                              const FitOptions& opt = {}) {
    control.validate();
    g1.validate();
    g2.validate();
    detail::require(g1.design.grid == g2.design.grid, "stepwise_fit: treated groups must share a grid");
    ControlFit cf = ml_fit_control(control);
    FitResult r = stepwise_from_curves(cf.params, sample_moment_curves(g1), sample_moment_curves(g2), opt,
                                       g1.design.x0);
    r.control = std::move(cf);
    return r;
}

}  // namespace gompertz

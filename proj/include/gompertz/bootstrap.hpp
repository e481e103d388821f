#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "gompertz/error.hpp"
#include "gompertz/inference.hpp"
#include "gompertz/likelihood.hpp"
#include "gompertz/model.hpp"
#include "gompertz/numeric/kde.hpp"
#include "gompertz/parallel.hpp"
#include "gompertz/random.hpp"
#include "gompertz/simulate.hpp"

namespace gompertz {

enum class Target { C, D, V1, V2 };

inline const char* to_string(Target t) {
    switch (t) {
        case Target::C: return "C";
        case Target::D: return "D";
        case Target::V1: return "V1";
        case Target::V2: return "V2";
    }
    return "?";
}

/// H0: target(t) = h(t) for one treated group.
struct Hypothesis {
    Target target = Target::V1;
    TherapyProfile h;
    int group = 1;
    /// Model simulated under H0 (h in the target slot).
    ModelSpec null_model;
    /// Pipeline used to re-estimate the target on each replicate.
    GroupSpec pipeline;
    std::size_t subjects = 25;
    StudyDesign design;
};

struct TestResult {
    Hypothesis hypothesis;
    double statistic = 0.0;
    std::vector<double> replicates;
    double p_value = 1.0;
    std::size_t m = 0;
    std::uint64_t seed = 0;
    double level = 0.05;
    bool rejected = false;
    std::size_t retries = 0;
};

/// Sum over the grid of |fitted(t_j) - h(t_j)|; non-finite fitted values
/// contribute nothing.
inline double d_statistic(std::span<const double> fitted, const TherapyProfile& h, std::span<const double> grid) {
    detail::require(fitted.size() == grid.size(), "d_statistic: fitted values and grid differ in length");
    double s = 0.0;
    for (std::size_t j = 0; j < grid.size(); ++j)
        if (std::isfinite(fitted[j])) s += std::abs(fitted[j] - h(grid[j]));
    return s;
}

inline double d_statistic(const TherapyProfile& fitted, const TherapyProfile& h, std::span<const double> grid) {
    const auto v = fitted.sample(grid);
    return d_statistic(v, h, grid);
}

/// Proportion of replicates at least as extreme as the observed statistic.
inline double bootstrap_p_value(double observed, std::span<const double> replicates) {
    detail::require(!replicates.empty(), "bootstrap: no replicates");
    std::size_t k = 0;
    for (double d : replicates) k += d >= observed ? 1 : 0;
    return static_cast<double>(k) / static_cast<double>(replicates.size());
}

inline constexpr int kReplicateRetries = 3;

/// Generate m replicate statistics. replicate(l, attempt) computes one
/// statistic; estimation or numeric failures are retried with the next
/// attempt index up to kReplicateRetries times.
template <typename ReplicateFn>
std::vector<double> bootstrap_replicates(std::size_t m, ReplicateFn&& replicate, std::size_t* retries = nullptr) {
    std::vector<double> out(m);
    std::vector<std::size_t> used(m, 0);
    parallel_for(m, [&](std::size_t l) {
        for (int attempt = 0;; ++attempt) {
            try {
                out[l] = replicate(l, static_cast<std::uint64_t>(attempt));
                used[l] = static_cast<std::size_t>(attempt);
                return;
            } catch (const NumericError& e) {
                if (attempt >= kReplicateRetries) {
                    std::ostringstream os;
                    os << "bootstrap replicate " << l << " failed after " << attempt + 1 << " attempts: " << e.what();
                    throw EstimationError(os.str());
                }
            }
        }
    });
    if (retries) {
        *retries = 0;
        for (std::size_t u : used) *retries += u;
    }
    return out;
}

/// Which smoothed series of a group fit is the tested target.
inline const std::vector<double>& target_values(const GroupFit& g, Target t) {
    return (t == Target::V1 || t == Target::V2) ? g.variance.smoothed : g.rate.smoothed;
}

/// Parametric bootstrap test of H0 given the observed fitted target values.
inline TestResult b_test(const Hypothesis& hyp, std::span<const double> observed_fit, const ModelParams& params,
                         const FitOptions& opt, std::size_t m, std::uint64_t seed, double level = 0.05) {
    detail::require(m >= 1, "b_test: m must be positive");
    detail::require(hyp.subjects >= 2, "b_test: replicate panels need at least two subjects");
    hyp.design.validate();
    hyp.h.validate(hyp.design.grid);
    const auto& grid = hyp.design.grid;

    TestResult r;
    r.hypothesis = hyp;
    r.m = m;
    r.seed = seed;
    r.level = level;
    r.statistic = d_statistic(observed_fit, hyp.h, grid);

    const CellTransitions cells = cell_transitions(hyp.null_model, grid);
    r.replicates = bootstrap_replicates(
        m,
        [&](std::size_t l, std::uint64_t attempt) {
            PathPanel panel;
            panel.design = hyp.design;
            panel.values.resize(hyp.subjects);
            for (std::size_t i = 0; i < hyp.subjects; ++i) {
                Engine engine = make_engine(seed, {l, attempt, i});
                panel.values[i] = detail::exact_path(cells, hyp.design.x0, engine);
            }
            const GroupFit g = fit_group(sample_moment_curves(panel), params, hyp.pipeline, opt);
            return d_statistic(target_values(g, hyp.target), hyp.h, grid);
        },
        &r.retries);
    r.p_value = bootstrap_p_value(r.statistic, r.replicates);
    r.rejected = r.p_value < level;
    return r;
}

/// Gaussian KDE of the null statistics plus the empirical critical value.
inline numeric::DensityCurve kde_null(std::span<const double> replicates,
                                      numeric::BandwidthRule rule = numeric::BandwidthRule::Silverman,
                                      double level = 0.05) {
    detail::require(replicates.size() >= 30, "kde_null: at least 30 replicates are required");
    return numeric::gaussian_kde(replicates, rule, 512, level);
}

// ---------------------------------------------------------------------------
// Concatenated constancy protocol
// ---------------------------------------------------------------------------

struct ProtocolOptions {
    FitOptions fit{};
    std::size_t m = 1500;
    double level = 0.05;
    std::uint64_t seed = 1;
};

struct ProtocolResult {
    FitResult fit;                  // stepwise fit with the second group re-fitted after the first rate test
    std::vector<TestResult> tests;  // in protocol order
    std::vector<double> constants;  // the ML constant used as h by each test
    ModelSpec final_g1, final_g2;   // post-test models with accepted constants substituted
    std::vector<std::string> log;
};

/// Run the four constancy tests in protocol order: variance then rate of the
/// first group, then variance then rate of the second group. Each later
/// constant is determined under the accepted form of the earlier tests.
inline ProtocolResult concatenated_protocol(const PathPanel& control, const PathPanel& g1, const PathPanel& g2,
                                            const ProtocolOptions& po) {
    const FitOptions& opt = po.fit;
    const bool apf = opt.ordering == Ordering::AntiProliferativeFirst;
    ProtocolResult out;
    out.fit = stepwise_fit(control, g1, g2, opt);
    FitResult& fit = out.fit;
    const ModelParams& p = fit.params;
    const StudyDesign design = fit.design();
    const auto& grid = design.grid;
    const auto d1 = to_series(g1);
    const auto d2 = to_series(g2);
    const MomentCurves curves2 = sample_moment_curves(g2);
    const Role r1 = apf ? Role::C : Role::D;
    const Role r2 = apf ? Role::D : Role::C;
    const Target t1 = apf ? Target::C : Target::D;
    const Target t2 = apf ? Target::D : Target::C;

    auto log = [&](const std::string& s) { out.log.push_back(s); };
    auto describe = [](const TestResult& t, double h) {
        std::ostringstream os;
        os.precision(10);
        os << "H0: " << to_string(t.hypothesis.target) << " = " << h << "  D = " << t.statistic
           << "  p = " << t.p_value << "  -> " << (t.rejected ? "rejected" : "not rejected");
        return os.str();
    };
    auto run = [&](Target target, int group, double h, ModelSpec null_model, GroupSpec pipeline,
                   const std::vector<double>& observed, std::size_t subjects) {
        Hypothesis hyp;
        hyp.target = target;
        hyp.group = group;
        const Role role = (target == Target::V1 || target == Target::V2) ? Role::V
                          : target == Target::C                          ? Role::C
                                                                         : Role::D;
        hyp.h = TherapyProfile::constant(role, h);
        if (role == Role::V) null_model.V = hyp.h;
        else if (role == Role::C) null_model.C = hyp.h;
        else null_model.D = hyp.h;
        hyp.null_model = std::move(null_model);
        hyp.pipeline = std::move(pipeline);
        hyp.subjects = subjects;
        hyp.design = design;
        TestResult t = b_test(hyp, observed, p, opt, po.m, derive_seed(po.seed, {out.tests.size()}), po.level);
        out.constants.push_back(h);
        log(describe(t, h));
        out.tests.push_back(std::move(t));
        return !out.tests.back().rejected;
    };

    // First treated group: its model has the other rate at zero.
    ModelSpec m1 = fit.group_model(1);
    const double v1 = ml_constant_variance_scale(d1, p, m1.C, m1.D);
    const bool v1_ok = run(Target::V1, 1, v1, m1, fit.g1.spec, fit.g1.variance.smoothed, g1.subjects());
    const TherapyProfile V1 = v1_ok ? TherapyProfile::constant(Role::V, v1) : fit.V1();
    m1.V = V1;

    const double rate1 = apf ? ml_constant_growth_shift(d1, p, m1.D, V1) : ml_constant_death_shift(d1, p, m1.C, V1);
    const bool r1_ok = run(t1, 1, rate1, m1, fit.g1.spec, fit.g1.rate.smoothed, g1.subjects());
    const TherapyProfile R1 = r1_ok ? TherapyProfile::constant(r1, rate1) : fit.g1.rate.profile;
    if (apf) m1.C = R1;
    else m1.D = R1;
    out.final_g1 = m1;

    // Second group, re-fitted with the first rate in its accepted form.
    GroupSpec spec2 = r1_ok ? GroupSpec{r2, std::vector<double>(grid.size(), rate1)}
                            : second_group_spec(opt.ordering, fit.g1);
    fit.g2 = fit_group(curves2, p, spec2, opt);
    log(std::string("second group re-fitted with ") + to_string(r1) + (r1_ok ? " constant" : " estimated curve"));
    ModelSpec m2{p};
    if (apf) {
        m2.C = R1;
        m2.D = fit.g2.rate.profile;
    } else {
        m2.D = R1;
        m2.C = fit.g2.rate.profile;
    }
    const double v2 = ml_constant_variance_scale(d2, p, m2.C, m2.D);
    const bool v2_ok = run(Target::V2, 2, v2, m2, spec2, fit.g2.variance.smoothed, g2.subjects());
    m2.V = v2_ok ? TherapyProfile::constant(Role::V, v2) : fit.g2.variance.profile;

    const double rate2 = apf ? ml_constant_death_shift(d2, p, m2.C, m2.V) : ml_constant_growth_shift(d2, p, m2.D, m2.V);
    const bool r2_ok = run(t2, 2, rate2, m2, spec2, fit.g2.rate.smoothed, g2.subjects());
    if (r2_ok) {
        if (apf) m2.D = TherapyProfile::constant(Role::D, rate2);
        else m2.C = TherapyProfile::constant(Role::C, rate2);
    }
    out.final_g2 = m2;
    return out;
}

}  // namespace gompertz

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <numbers>
#include <span>
#include <sstream>
#include <utility>
#include <vector>

#include "gompertz/error.hpp"
#include "gompertz/model.hpp"
#include "gompertz/numeric/brent.hpp"
#include "gompertz/simulate.hpp"

namespace gompertz {

/// One subject's observation times and values. Subjects may have their own
/// grids; all start at (t0, x0).
struct SubjectSeries {
    std::vector<double> times;
    std::vector<double> values;
};

inline std::vector<SubjectSeries> to_series(const PathPanel& panel) {
    std::vector<SubjectSeries> out;
    out.reserve(panel.subjects());
    for (const auto& row : panel.values) out.push_back({panel.design.grid, row});
    return out;
}

/// Sums entering the log-likelihood and the likelihood equations.
/// Names follow the aggregate symbols of the likelihood derivation
/// (Z, Phi, Gamma, Upsilon and X1..X15; x[k] holds X_k, x[0] unused).
struct LikelihoodAggregates {
    double n = 0.0;
    double Z = 0.0, Phi = 0.0, Gamma = 0.0, Upsilon = 0.0;
    double residual = 0.0;  // sum (delta - theta)^2 / Omega; equals Z + Phi - 2 Gamma without the cancellation
    double residual0 = 0.0;  // the same with theta evaluated at sigma^2 = 0
    double sum_log_x = 0.0;
    std::array<double, 16> x{};
};

/// Per-call workspace: Psi integrals per distinct transition interval for a
/// fixed (beta, C, D, V), and the per-transition quantities built from them.
class LikelihoodWorkspace {
public:
    struct Transition {
        std::size_t interval;  // index into intervals()
        double log_x;          // ln x_ij
        double log_x_prev;     // ln x_i,j-1
        double width;          // t_ij - t_i,j-1
        double delta;          // ln x_ij - kbar ln x_i,j-1
    };

    LikelihoodWorkspace(std::span<const SubjectSeries> data, double beta, const TherapyProfile& C,
                        const TherapyProfile& D, const TherapyProfile& V, int panels = kDefaultQuadraturePanels)
        : beta_(beta) {
        std::map<std::pair<double, double>, std::size_t> cache;
        for (const auto& s : data) {
            detail::require(s.times.size() == s.values.size(), "likelihood: subject times/values mismatch");
            for (std::size_t j = 1; j < s.times.size(); ++j) {
                const double a = s.times[j - 1];
                const double b = s.times[j];
                detail::require(b > a, "likelihood: subject times must increase");
                detail::require(s.values[j] > 0.0 && s.values[j - 1] > 0.0, "likelihood: values must be positive");
                auto [it, inserted] = cache.try_emplace({a, b}, intervals_.size());
                if (inserted) {
                    intervals_.push_back(interval_integrals(a, b, beta, C, D, V, panels));
                    if (!(intervals_.back().omega() > 0.0)) {
                        std::ostringstream os;
                        os << "likelihood: Omega is not positive on [" << a << ", " << b << "]";
                        throw NumericError(os.str());
                    }
                }
                const auto& I = intervals_[it->second];
                Transition tr;
                tr.interval = it->second;
                tr.log_x = std::log(s.values[j]);
                tr.log_x_prev = std::log(s.values[j - 1]);
                tr.width = b - a;
                tr.delta = tr.log_x - I.kbar * tr.log_x_prev;
                transitions_.push_back(tr);
            }
        }
        detail::require(!transitions_.empty(), "likelihood: no transitions in the sample");
    }

    [[nodiscard]] double beta() const noexcept { return beta_; }
    [[nodiscard]] const std::vector<IntervalIntegrals>& intervals() const noexcept { return intervals_; }
    [[nodiscard]] const std::vector<Transition>& transitions() const noexcept { return transitions_; }

    /// All aggregates at (alpha, sigma^2) for this workspace's beta.
    [[nodiscard]] LikelihoodAggregates aggregates(double alpha, double sigma2) const {
        LikelihoodAggregates a;
        auto& X = a.x;
        for (const auto& tr : transitions_) {
            const auto& I = intervals_[tr.interval];
            const double om = I.omega();
            const double th = I.theta(alpha, sigma2);
            const double ph = I.phi(alpha, sigma2);
            const double d = tr.delta;
            const double kdl = I.kbar * tr.width * tr.log_x_prev;
            a.n += 1.0;
            a.Z += d * d / om;
            a.Phi += th * th / om;
            a.Gamma += d * th / om;
            a.residual += (d - th) * (d - th) / om;
            const double r0 = d - I.theta(alpha, 0.0);
            a.residual0 += r0 * r0 / om;
            a.Upsilon += std::log(om);
            a.sum_log_x += tr.log_x;
            X[1] += I.psi0001 * I.psi0001 / om;
            X[2] += I.psi0101 * I.psi0001 / om;
            X[3] += I.psi0011 * I.psi0001 / om;
            X[4] += d * I.psi0001 / om;
            X[5] += kdl * th / om;
            X[6] += th * ph / om;
            X[7] += th * th * I.psi1012 / (om * om);
            X[8] += d * d * I.psi1012 / (om * om);
            X[9] += d * kdl / om;
            X[10] += d * I.psi1012 * th / (om * om);
            X[11] += d * ph / om;
            X[12] += I.psi1012 / om;
            X[13] += I.psi0011 * I.psi0011 / om;
            X[14] += I.psi0101 * I.psi0101 / om;
            X[15] += d * I.psi0101 / om;
        }
        return a;
    }

private:
    double beta_;
    std::vector<IntervalIntegrals> intervals_;
    std::vector<Transition> transitions_;
};

/// Log-likelihood assembled from the aggregates.
inline double log_likelihood(const LikelihoodAggregates& a, double sigma2) {
    return -0.5 * a.n * std::log(2.0 * std::numbers::pi) - 0.5 * a.n * std::log(sigma2) -
           a.residual / (2.0 * sigma2) - 0.5 * a.Upsilon - a.sum_log_x;
}

inline double log_likelihood(std::span<const SubjectSeries> data, const ModelSpec& model,
                             int panels = kDefaultQuadraturePanels) {
    const LikelihoodWorkspace ws(data, model.params.beta, model.C, model.D, model.V, panels);
    return log_likelihood(ws.aggregates(model.params.alpha, model.params.sigma2()), model.params.sigma2());
}

inline double log_likelihood(const PathPanel& panel, const ModelSpec& model, int panels = kDefaultQuadraturePanels) {
    const auto data = to_series(panel);
    return log_likelihood(data, model, panels);
}

/// Left-hand sides of the three likelihood equations at (alpha, beta, sigma^2).
struct LikelihoodEquations {
    double alpha_eq;   // 2 alpha X1 - 2 X2 - sigma^2 X3 - 2 X4
    double beta_eq;    // X5 - X6 - X7 - X8 - X9 + 2 X10 + X11 + sigma^2 X12
    double sigma2_eq;  // sigma^4/4 X13 + n sigma^2 - (Z + alpha^2 X1 - 2 alpha X2 - 2 alpha X4 + X14 + 2 X15)
    double alpha_scale, beta_scale, sigma2_scale;  // sums of absolute terms, for relative checks
};

inline LikelihoodEquations likelihood_equations(const LikelihoodAggregates& a, double alpha, double sigma2) {
    const auto& X = a.x;
    LikelihoodEquations e;
    e.alpha_eq = 2.0 * alpha * X[1] - 2.0 * X[2] - sigma2 * X[3] - 2.0 * X[4];
    e.alpha_scale = std::abs(2.0 * alpha * X[1]) + std::abs(2.0 * X[2]) + std::abs(sigma2 * X[3]) + std::abs(2.0 * X[4]);
    e.beta_eq = X[5] - X[6] - X[7] - X[8] - X[9] + 2.0 * X[10] + X[11] + sigma2 * X[12];
    e.beta_scale = std::abs(X[5]) + std::abs(X[6]) + std::abs(X[7]) + std::abs(X[8]) + std::abs(X[9]) +
                   std::abs(2.0 * X[10]) + std::abs(X[11]) + std::abs(sigma2 * X[12]);
    // R = Z + alpha^2 X1 - 2 alpha X2 - 2 alpha X4 + X14 + 2 X15, accumulated directly (a is built at alpha).
    const double R = a.residual0;
    e.sigma2_eq = 0.25 * sigma2 * sigma2 * X[13] + a.n * sigma2 - R;
    e.sigma2_scale = std::abs(0.25 * sigma2 * sigma2 * X[13]) + std::abs(a.n * sigma2) + std::abs(R);
    return e;
}

/// Gradient of the log-likelihood in (alpha, beta, sigma^2).
inline std::array<double, 3> score(const LikelihoodAggregates& a, double alpha, double sigma2) {
    const LikelihoodEquations e = likelihood_equations(a, alpha, sigma2);
    return {-e.alpha_eq / (2.0 * sigma2), e.beta_eq / sigma2, -e.sigma2_eq / (2.0 * sigma2 * sigma2)};
}

// ---------------------------------------------------------------------------
// Estimators
// ---------------------------------------------------------------------------

struct ControlFit {
    ModelParams params;
    double log_likelihood = 0.0;
    int iterations = 0;
    LikelihoodEquations residuals{};
    std::vector<std::pair<double, double>> beta_trace;  // (beta, profiled beta equation)
};

namespace detail {

struct ProfiledPoint {
    double alpha, sigma2;
    LikelihoodAggregates agg;
};

// Given beta: alpha is linear in sigma^2 from the alpha equation; substituting
// it into the sigma^2 equation leaves a quadratic in sigma^2 with a unique
// positive root.
inline ProfiledPoint profile_alpha_sigma(const LikelihoodWorkspace& ws) {
    const LikelihoodAggregates base = ws.aggregates(0.0, 0.0);
    const auto& X = base.x;
    if (!(X[1] > 0.0)) throw EstimationError("ml: degenerate design (X1 = 0)");
    const double a0 = (X[2] + X[4]) / X[1];
    const double a1 = X[3] / (2.0 * X[1]);
    const double r0 = ws.aggregates(a0, 0.0).residual0;
    if (!(r0 > 0.0)) throw EstimationError("ml: no positive sigma^2 root (residual sum is not positive)");
    const double qa = std::max(0.0, 0.25 * X[13] - X[1] * a1 * a1);
    const double s2 = 2.0 * r0 / (base.n + std::sqrt(base.n * base.n + 4.0 * qa * r0));
    const double alpha = a0 + a1 * s2;
    return {alpha, s2, ws.aggregates(alpha, s2)};
}

template <typename Eq, typename Ll>
double solve_scalar_equation(Eq&& eq, Ll&& loglik, double lo, double hi, const char* what,
                             std::vector<std::pair<double, double>>* trace) {
    auto record = [&](double b) {
        const double v = eq(b);
        if (trace) trace->emplace_back(b, v);
        return v;
    };
    std::vector<std::pair<double, double>> brackets;
    for (int attempt = 0; attempt < 3 && brackets.empty(); ++attempt) {
        brackets = numeric::scan_brackets(record, numeric::geometric_grid(lo, hi, 61));
        lo /= 10.0;
        hi *= 10.0;
    }
    if (brackets.empty()) {
        std::ostringstream os;
        os << what << ": no sign change of the profiled equation in the search bracket";
        if (trace && !trace->empty()) {
            os << "; trace:";
            for (std::size_t k = 0; k < trace->size(); k += 10)
                os << " (" << (*trace)[k].first << ", " << (*trace)[k].second << ")";
        }
        throw EstimationError(os.str());
    }
    double best = std::numeric_limits<double>::quiet_NaN();
    double best_ll = -std::numeric_limits<double>::infinity();
    for (const auto& [a, b] : brackets) {
        const numeric::RootResult r = numeric::brent_root(eq, a, b, 1e-12, 200);
        if (!r.converged) continue;
        const double ll = loglik(r.root);
        if (ll > best_ll) {
            best_ll = ll;
            best = r.root;
        }
    }
    if (!std::isfinite(best)) throw EstimationError(std::string(what) + ": Brent iteration did not converge");
    return best;
}

}  // namespace detail

/// ML fit of (alpha, beta, sigma) for a control group (C = D = 0, V = 1).
/// Profiles out alpha and sigma^2 in closed form and solves the remaining
/// beta equation by bracketing and Brent's method.
inline ControlFit ml_fit_control(std::span<const SubjectSeries> data, double beta_lo = 1e-4, double beta_hi = 5.0) {
    const TherapyProfile C = TherapyProfile::zero(Role::C);
    const TherapyProfile D = TherapyProfile::zero(Role::D);
    const TherapyProfile V = TherapyProfile::one(Role::V);
    int evaluations = 0;
    auto point = [&](double beta) {
        ++evaluations;
        return detail::profile_alpha_sigma(LikelihoodWorkspace(data, beta, C, D, V));
    };
    // A beta with no admissible profile is skipped by the bracket scan.
    auto equation = [&](double beta) {
        try {
            const auto p = point(beta);
            return likelihood_equations(p.agg, p.alpha, p.sigma2).beta_eq / p.sigma2;
        } catch (const EstimationError&) {
            return std::numeric_limits<double>::quiet_NaN();
        }
    };
    auto loglik = [&](double beta) {
        const auto p = point(beta);
        return log_likelihood(p.agg, p.sigma2);
    };
    ControlFit fit;
    const double beta = detail::solve_scalar_equation(equation, loglik, beta_lo, beta_hi, "ml_fit_control",
                                                      &fit.beta_trace);
    const auto p = point(beta);
    fit.params = {p.alpha, beta, std::sqrt(p.sigma2)};
    fit.log_likelihood = log_likelihood(p.agg, p.sigma2);
    fit.residuals = likelihood_equations(p.agg, p.alpha, p.sigma2);
    fit.iterations = evaluations;
    const auto& r = fit.residuals;
    if (std::abs(r.alpha_eq) > 1e-8 * r.alpha_scale || std::abs(r.sigma2_eq) > 1e-8 * r.sigma2_scale ||
        std::abs(r.beta_eq) > 1e-6 * r.beta_scale) {
        std::ostringstream os;
        os << "ml_fit_control: likelihood equations not satisfied at the returned root (" << r.alpha_eq << ", "
           << r.beta_eq << ", " << r.sigma2_eq << ")";
        throw EstimationError(os.str());
    }
    return fit;
}

inline ControlFit ml_fit_control(const PathPanel& panel) {
    const auto data = to_series(panel);
    return ml_fit_control(data);
}

/// Constant growth shift c: solve the alpha equation for the composite rate
/// (alpha - c) with C = 0 and fixed beta, sigma, D, V; c = alpha_hat - (alpha - c).
inline double ml_constant_growth_shift(std::span<const SubjectSeries> data, const ModelParams& p,
                                       const TherapyProfile& D, const TherapyProfile& V,
                                       int panels = kDefaultQuadraturePanels) {
    const LikelihoodWorkspace ws(data, p.beta, TherapyProfile::zero(Role::C), D, V, panels);
    const auto a = ws.aggregates(0.0, p.sigma2());
    const auto& X = a.x;
    if (!(X[1] > 0.0)) throw EstimationError("ml_constant_growth_shift: degenerate design (X1 = 0)");
    const double composite = (2.0 * X[2] + p.sigma2() * X[3] + 2.0 * X[4]) / (2.0 * X[1]);
    return p.alpha - composite;
}

/// Constant death shift d: solve the beta equation for the composite rate
/// (beta - d) with D = 0 and fixed alpha, sigma, C, V; d = beta_hat - (beta - d).
inline double ml_constant_death_shift(std::span<const SubjectSeries> data, const ModelParams& p,
                                      const TherapyProfile& C, const TherapyProfile& V,
                                      int panels = kDefaultQuadraturePanels) {
    const TherapyProfile D0 = TherapyProfile::zero(Role::D);
    const double s2 = p.sigma2();
    auto equation = [&](double b) {
        const LikelihoodWorkspace ws(data, b, C, D0, V, panels);
        return likelihood_equations(ws.aggregates(p.alpha, s2), p.alpha, s2).beta_eq;
    };
    auto loglik = [&](double b) {
        const LikelihoodWorkspace ws(data, b, C, D0, V, panels);
        return log_likelihood(ws.aggregates(p.alpha, s2), s2);
    };
    const double composite = detail::solve_scalar_equation(equation, loglik, 1e-4, 5.0, "ml_constant_death_shift",
                                                           nullptr);
    return p.beta - composite;
}

/// Constant variance scale v: positive root of the sigma^2 equation for the
/// composite sigma^2 v with V = 1 and fixed alpha, beta, C, D; v = (sigma^2 v) / sigma_hat^2.
inline double ml_constant_variance_scale(std::span<const SubjectSeries> data, const ModelParams& p,
                                         const TherapyProfile& C, const TherapyProfile& D,
                                         int panels = kDefaultQuadraturePanels) {
    const LikelihoodWorkspace ws(data, p.beta, C, D, TherapyProfile::one(Role::V), panels);
    const auto a = ws.aggregates(p.alpha, 0.0);
    const auto& X = a.x;
    const double R = a.residual0;
    if (!(R > 0.0)) throw EstimationError("ml_constant_variance_scale: no positive root");
    const double composite = 2.0 * R / (a.n + std::sqrt(a.n * a.n + X[13] * R));
    return composite / p.sigma2();
}

}  // namespace gompertz

#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <sstream>
#include <utility>
#include <vector>

#include "gompertz/error.hpp"
#include "gompertz/numeric/quadrature.hpp"
#include "gompertz/therapy.hpp"

namespace gompertz {

/// Baseline (alpha, beta, sigma) of the homogeneous Gompertz diffusion.
struct ModelParams {
    double alpha = 0.0;  // growth rate
    double beta = 0.0;   // death rate
    double sigma = 0.0;  // diffusion scale

    [[nodiscard]] double sigma2() const noexcept { return sigma * sigma; }

    void validate() const {
        detail::require(alpha > 0.0 && beta > 0.0 && sigma > 0.0,
                        "model parameters alpha, beta, sigma must be positive");
    }
};

/// Observation design shared by all subjects of a panel. grid[0] is t0 and
/// the process starts at x0 with probability one.
struct StudyDesign {
    std::vector<double> grid;
    double x0 = 1.0;

    [[nodiscard]] double t0() const { return grid.front(); }
    [[nodiscard]] double T() const { return grid.back(); }
    [[nodiscard]] std::size_t size() const noexcept { return grid.size(); }

    void validate() const {
        detail::require(grid.size() >= 2, "design grid needs at least two times");
        for (std::size_t i = 1; i < grid.size(); ++i)
            detail::require(grid[i] > grid[i - 1], "design grid must be strictly increasing");
        detail::require(x0 > 0.0, "initial state x0 must be positive");
    }

    /// n equally spaced times on [t0, T].
    static StudyDesign uniform(double t0, double T, std::size_t n, double x0 = 1.0) {
        StudyDesign d;
        d.x0 = x0;
        d.grid.resize(n);
        for (std::size_t j = 0; j < n; ++j)
            d.grid[j] = t0 + (T - t0) * static_cast<double>(j) / static_cast<double>(n - 1);
        d.grid.back() = T;
        return d;
    }
};

/// The full drift/variance specification of one group.
struct ModelSpec {
    ModelParams params;
    TherapyProfile C = TherapyProfile::zero(Role::C);
    TherapyProfile D = TherapyProfile::zero(Role::D);
    TherapyProfile V = TherapyProfile::one(Role::V);

    static ModelSpec homogeneous(const ModelParams& p) { return {p}; }
};

/// m1 = E[ln X], m2 = ln E[X], u = Var[ln X] and their time derivatives.
struct MomentCurves {
    std::vector<double> grid;
    std::vector<double> m1, m2, u;
    std::vector<double> dm1, dm2, du;

    [[nodiscard]] std::size_t size() const noexcept { return grid.size(); }
};

/// Composite Simpson panels per observation cell for non-closed-form integrals.
inline constexpr int kDefaultQuadraturePanels = 8;

// ---------------------------------------------------------------------------
// Weighted interval integrals
// ---------------------------------------------------------------------------

namespace detail {

/// I_l(a) = int_0^w tau^l exp(-a tau) dtau.
inline double exp_moment(int l, double a, double w) {
    const double x = a * w;
    if (std::abs(x) <= 4.0) {
        // Alternating series; 60 terms is ample for |x| <= 4.
        double term = std::pow(w, l + 1);  // (-a)^k w^(l+k+1) / k! without the 1/(l+k+1)
        double sum = term / (l + 1);
        for (int k = 1; k < 60; ++k) {
            term *= -x / k;
            const double add = term / (l + k + 1);
            sum += add;
            if (std::abs(add) < 1e-17 * std::abs(sum)) break;
        }
        return sum;
    }
    const double e = std::exp(-x);
    double I = (1.0 - e) / a;
    double wl = 1.0;
    for (int k = 1; k <= l; ++k) {
        wl *= w;
        I = (k * I - wl * e) / a;
    }
    return I;
}

}  // namespace detail

/// Integrating factor kbar(t|tau) = exp(-int_tau^t (beta - D(s)) ds).
inline double integrating_factor(double t, double tau, double beta, const TherapyProfile& D) {
    detail::require(tau <= t, "integrating_factor: requires tau <= t");
    if (t == tau) return 1.0;
    const double v = std::exp(-(beta * (t - tau) - D.integral(tau, t)));
    if (!std::isfinite(v)) {
        std::ostringstream os;
        os << "integrating factor is not finite on [" << tau << ", " << t << "]";
        throw NumericError(os.str());
    }
    return v;
}

/// The Psi integrals over one transition interval [s, t] that the transition
/// law and the likelihood equations need. Field psiLMPQ holds
/// int_s^t (t-r)^L C(r)^M V(r)^P kbar(t|r)^Q dr.
struct IntervalIntegrals {
    double kbar = 1.0;  // kbar(t|s)
    double psi0001 = 0.0, psi0101 = 0.0, psi0011 = 0.0, psi0012 = 0.0;
    double psi1012 = 0.0, psi1001 = 0.0, psi1101 = 0.0, psi1011 = 0.0;

    /// theta(t|s) = alpha Psi0001 - Psi0101 - sigma^2/2 Psi0011.
    [[nodiscard]] double theta(double alpha, double sigma2) const noexcept {
        return alpha * psi0001 - psi0101 - 0.5 * sigma2 * psi0011;
    }
    /// Omega(t|s) = Psi0012.
    [[nodiscard]] double omega() const noexcept { return psi0012; }
    /// d theta / d beta.
    [[nodiscard]] double phi(double alpha, double sigma2) const noexcept {
        return -alpha * psi1001 + psi1101 + 0.5 * sigma2 * psi1011;
    }
};

inline IntervalIntegrals interval_integrals(double s, double t, double beta, const TherapyProfile& C,
                                            const TherapyProfile& D, const TherapyProfile& V,
                                            int panels = kDefaultQuadraturePanels) {
    IntervalIntegrals r;
    const double w = t - s;
    if (C.is_constant() && D.is_constant() && V.is_constant()) {
        const double b = beta - D.constant_value();
        const double c = C.constant_value();
        const double v = V.constant_value();
        const double i01 = detail::exp_moment(0, b, w);
        const double i02 = detail::exp_moment(0, 2.0 * b, w);
        const double i11 = detail::exp_moment(1, b, w);
        const double i12 = detail::exp_moment(1, 2.0 * b, w);
        r.kbar = std::exp(-b * w);
        r.psi0001 = i01;
        r.psi0101 = c * i01;
        r.psi0011 = v * i01;
        r.psi0012 = v * i02;
        r.psi1012 = v * i12;
        r.psi1001 = i11;
        r.psi1101 = c * i11;
        r.psi1011 = v * i11;
        return r;
    }
    if (panels < 2) panels = 2;
    if (panels % 2 != 0) ++panels;
    const double h = w / panels;
    for (int k = 0; k <= panels; ++k) {
        const double node = s + k * h;
        const double weight = (k == 0 || k == panels) ? 1.0 : (k % 2 != 0 ? 4.0 : 2.0);
        const double tau = t - node;
        const double kb = k == panels ? 1.0 : std::exp(-(beta * tau - D.integral(node, t)));
        const double cv = C(node);
        const double vv = V(node);
        r.psi0001 += weight * kb;
        r.psi0101 += weight * cv * kb;
        r.psi0011 += weight * vv * kb;
        r.psi0012 += weight * vv * kb * kb;
        r.psi1012 += weight * tau * vv * kb * kb;
        r.psi1001 += weight * tau * kb;
        r.psi1101 += weight * tau * cv * kb;
        r.psi1011 += weight * tau * vv * kb;
    }
    const double f = h / 3.0;
    r.psi0001 *= f; r.psi0101 *= f; r.psi0011 *= f; r.psi0012 *= f;
    r.psi1012 *= f; r.psi1001 *= f; r.psi1101 *= f; r.psi1011 *= f;
    r.kbar = std::exp(-(beta * w - D.integral(s, t)));
    if (!std::isfinite(r.psi0001 + r.psi0012 + r.psi1012 + r.psi0101 + r.psi0011)) {
        std::ostringstream os;
        os << "interval integrals are not finite on [" << s << ", " << t << "]";
        throw NumericError(os.str());
    }
    return r;
}

/// Single Psi^{l,m,p,q} integral over [s, t]; closed form when C, D, V are
/// all constant.
inline double psi_integral(double s, double t, int l, int m, int p, int q, double beta, const TherapyProfile& C,
                           const TherapyProfile& D, const TherapyProfile& V,
                           int panels = kDefaultQuadraturePanels) {
    detail::require(l >= 0 && m >= 0 && p >= 0 && q >= 0, "psi_integral: indices must be non-negative");
    detail::require(s <= t, "psi_integral: requires s <= t");
    if (C.is_constant() && D.is_constant() && V.is_constant()) {
        const double c = m == 0 ? 1.0 : std::pow(C.constant_value(), m);
        const double v = p == 0 ? 1.0 : std::pow(V.constant_value(), p);
        return c * v * detail::exp_moment(l, q * (beta - D.constant_value()), t - s);
    }
    auto integrand = [&](double r) {
        const double kb = r == t ? 1.0 : std::exp(-(beta * (t - r) - D.integral(r, t)));
        double v = std::pow(t - r, l) * std::pow(kb, q);
        if (m != 0) v *= std::pow(C(r), m);
        if (p != 0) v *= std::pow(V(r), p);
        return v;
    };
    return numeric::simpson(integrand, s, t, panels);
}

// ---------------------------------------------------------------------------
// Moments and transition law
// ---------------------------------------------------------------------------

/// Lognormal parameters of X(t) | X(s) = y.
struct LognormalLaw {
    double log_mean;
    double log_variance;
};

inline LognormalLaw transition_law(const ModelSpec& model, double t, double s, double y,
                                   int panels = kDefaultQuadraturePanels) {
    detail::require(s < t, "transition_law: requires s < t");
    if (!(y > 0.0)) throw ValidationError("transition_law: state y must be positive");
    const IntervalIntegrals I = interval_integrals(s, t, model.params.beta, model.C, model.D, model.V, panels);
    const double s2 = model.params.sigma2();
    return {I.kbar * std::log(y) + I.theta(model.params.alpha, s2), s2 * I.omega()};
}

/// Per-cell transition coefficients on a design grid: ln X(t_{j+1}) =
/// kbar_j ln X(t_j) + theta_j + sqrt(sigma^2 Omega_j) N(0,1).
struct CellTransitions {
    std::vector<double> kbar, theta, variance;
};

inline CellTransitions cell_transitions(const ModelSpec& model, std::span<const double> grid,
                                        int panels = kDefaultQuadraturePanels) {
    CellTransitions out;
    const std::size_t cells = grid.size() - 1;
    out.kbar.resize(cells);
    out.theta.resize(cells);
    out.variance.resize(cells);
    const double s2 = model.params.sigma2();
    for (std::size_t j = 0; j < cells; ++j) {
        const IntervalIntegrals I =
            interval_integrals(grid[j], grid[j + 1], model.params.beta, model.C, model.D, model.V, panels);
        out.kbar[j] = I.kbar;
        out.theta[j] = I.theta(model.params.alpha, s2);
        out.variance[j] = s2 * I.omega();
    }
    return out;
}

/// Exact m1, u (and m2 = m1 + u/2) on the design grid for a degenerate start
/// at x0, with analytic time derivatives.
inline MomentCurves theoretical_moments(const ModelSpec& model, const StudyDesign& design,
                                        int panels = kDefaultQuadraturePanels) {
    design.validate();
    const std::size_t n = design.size();
    const CellTransitions cells = cell_transitions(model, design.grid, panels);
    const auto& p = model.params;
    const double s2 = p.sigma2();

    MomentCurves mc;
    mc.grid = design.grid;
    mc.m1.resize(n);
    mc.u.resize(n);
    mc.m2.resize(n);
    mc.dm1.resize(n);
    mc.du.resize(n);
    mc.dm2.resize(n);
    mc.m1[0] = std::log(design.x0);
    mc.u[0] = 0.0;
    for (std::size_t j = 1; j < n; ++j) {
        const double k = cells.kbar[j - 1];
        mc.m1[j] = k * mc.m1[j - 1] + cells.theta[j - 1];
        mc.u[j] = k * k * mc.u[j - 1] + cells.variance[j - 1];
    }
    for (std::size_t j = 0; j < n; ++j) {
        const double t = design.grid[j];
        const double rate = p.beta - model.D(t);
        const double vt = model.V(t);
        mc.m2[j] = mc.m1[j] + 0.5 * mc.u[j];
        mc.dm1[j] = (p.alpha - model.C(t) - 0.5 * s2 * vt) - rate * mc.m1[j];
        mc.du[j] = s2 * vt - 2.0 * rate * mc.u[j];
        mc.dm2[j] = mc.dm1[j] + 0.5 * mc.du[j];
    }
    return mc;
}

/// E[X(t)] = exp(m1 + u/2), Var[X(t)] = exp(2 m1 + u) (exp(u) - 1).
inline std::pair<std::vector<double>, std::vector<double>> mean_variance_X(const MomentCurves& curves) {
    const std::size_t n = curves.size();
    std::vector<double> mean(n), var(n);
    for (std::size_t j = 0; j < n; ++j) {
        const double m1 = curves.m1[j];
        const double u = curves.u[j];
        mean[j] = std::exp(m1 + 0.5 * u);
        var[j] = std::exp(2.0 * m1 + u) * std::expm1(u);
    }
    return {std::move(mean), std::move(var)};
}

// ---------------------------------------------------------------------------
// Moment relations recovering C, D, V
// ---------------------------------------------------------------------------

/// Which algebraic form of the moment relations to use: the m2-based form
/// needs no derivative of u; the m1/u form uses m1, u and both derivatives.
enum class RelationForm { M2, M1U };

struct RelationOptions {
    RelationForm form = RelationForm::M2;
    double denominator_guard = 1e-6;
    double variance_floor = 1e-8;
};

/// Pointwise estimates on the curve grid. NaN marks an excluded (guarded)
/// point; `flagged` marks guarded or floored points.
struct PointwiseEstimate {
    std::vector<double> values;
    std::vector<bool> flagged;

    [[nodiscard]] std::size_t missing() const {
        std::size_t k = 0;
        for (double v : values) k += std::isfinite(v) ? 0 : 1;
        return k;
    }
};

namespace detail {

inline void check_companion(const MomentCurves& c, std::span<const double> values) {
    require(values.size() == c.size(), "relation: companion profile length differs from the curve grid");
}

}  // namespace detail

/// C(t) = alpha - (beta - D)(2 m2 - m1) - m2'   (or the m1/u form).
inline PointwiseEstimate recover_C(const MomentCurves& c, const ModelParams& p, std::span<const double> D,
                                   const RelationOptions& opt = {}) {
    detail::check_companion(c, D);
    PointwiseEstimate out;
    out.values.resize(c.size());
    out.flagged.assign(c.size(), false);
    for (std::size_t j = 0; j < c.size(); ++j) {
        const double rate = p.beta - D[j];
        out.values[j] = opt.form == RelationForm::M2
                            ? p.alpha - rate * (2.0 * c.m2[j] - c.m1[j]) - c.dm2[j]
                            : p.alpha - rate * (c.m1[j] + c.u[j]) - c.dm1[j] - 0.5 * c.du[j];
        if (!std::isfinite(out.values[j])) out.flagged[j] = true;
    }
    return out;
}

/// D(t) = beta + (m2' - alpha + C) / (2 m2 - m1); points whose denominator is
/// below the guard are left missing.
inline PointwiseEstimate recover_D(const MomentCurves& c, const ModelParams& p, std::span<const double> C,
                                   const RelationOptions& opt = {}) {
    detail::check_companion(c, C);
    PointwiseEstimate out;
    out.values.resize(c.size());
    out.flagged.assign(c.size(), false);
    std::size_t usable = 0;
    for (std::size_t j = 0; j < c.size(); ++j) {
        const bool m2form = opt.form == RelationForm::M2;
        const double den = m2form ? 2.0 * c.m2[j] - c.m1[j] : c.m1[j] + c.u[j];
        const double num = (m2form ? c.dm2[j] : c.dm1[j] + 0.5 * c.du[j]) - p.alpha + C[j];
        if (std::abs(den) < opt.denominator_guard || !std::isfinite(num)) {
            out.values[j] = std::numeric_limits<double>::quiet_NaN();
            out.flagged[j] = true;
        } else {
            out.values[j] = p.beta + num / den;
            ++usable;
        }
    }
    if (usable == 0) throw EstimationError("recover_D: every grid point has a degenerate denominator");
    return out;
}

/// V(t) = (2/sigma^2)[(m2' - m1') + 2(beta - D)(m2 - m1)]   (or the m1/u form);
/// values below the floor are raised to it and flagged.
inline PointwiseEstimate recover_V(const MomentCurves& c, const ModelParams& p, std::span<const double> D,
                                   const RelationOptions& opt = {}) {
    detail::check_companion(c, D);
    PointwiseEstimate out;
    out.values.resize(c.size());
    out.flagged.assign(c.size(), false);
    const double s2 = p.sigma2();
    for (std::size_t j = 0; j < c.size(); ++j) {
        const bool m2form = opt.form == RelationForm::M2;
        const double level = m2form ? c.m2[j] - c.m1[j] : c.u[j];
        const double slope = m2form ? c.dm2[j] - c.dm1[j] : c.du[j];
        double shift = 0.0;
        if (level != 0.0) {
            if (!std::isfinite(D[j])) {
                out.values[j] = std::numeric_limits<double>::quiet_NaN();
                out.flagged[j] = true;
                continue;
            }
            shift = 2.0 * (p.beta - D[j]) * level;
        }
        double v = m2form ? 2.0 / s2 * (slope + shift) : (slope + shift) / s2;
        if (!(v >= opt.variance_floor)) {
            v = opt.variance_floor;
            out.flagged[j] = true;
        }
        out.values[j] = v;
    }
    return out;
}

/// Convenience overloads sampling the companion profile on the curve grid.
inline PointwiseEstimate recover_C(const MomentCurves& c, const ModelParams& p, const TherapyProfile& D,
                                   const RelationOptions& opt = {}) {
    return recover_C(c, p, D.sample(c.grid), opt);
}
inline PointwiseEstimate recover_D(const MomentCurves& c, const ModelParams& p, const TherapyProfile& C,
                                   const RelationOptions& opt = {}) {
    return recover_D(c, p, C.sample(c.grid), opt);
}
inline PointwiseEstimate recover_V(const MomentCurves& c, const ModelParams& p, const TherapyProfile& D,
                                   const RelationOptions& opt = {}) {
    return recover_V(c, p, D.sample(c.grid), opt);
}

}  // namespace gompertz

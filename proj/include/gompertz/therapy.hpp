#pragma once

#include <cmath>
#include <numbers>
#include <span>
#include <sstream>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "gompertz/error.hpp"
#include "gompertz/numeric/quadrature.hpp"
#include "gompertz/numeric/spline.hpp"

namespace gompertz {

/// Which slot of the model a profile occupies: growth-rate shift C,
/// death-rate shift D or variance modulation V.
enum class Role { C, D, V };

inline const char* to_string(Role r) {
    switch (r) {
        case Role::C: return "C";
        case Role::D: return "D";
        case Role::V: return "V";
    }
    return "?";
}

/// Lognormal density with log-mean mu and log-variance s2; zero for t <= 0.
inline double lognormal_pdf(double t, double mu, double s2) {
    if (t <= 0.0) return 0.0;
    const double z = std::log(t) - mu;
    return std::exp(-z * z / (2.0 * s2)) / (t * std::sqrt(2.0 * std::numbers::pi * s2));
}

namespace profile {

struct Zero {};
struct One {};
struct Constant {
    double value;
};
struct GridSpline {
    numeric::NaturalCubicSpline spline;
};
/// slope * t + intercept
struct Linear {
    double slope;
    double intercept = 0.0;
};
/// p t^2 / (q + t (t - r)); requires q > r^2 / 4 so the denominator never vanishes.
struct RationalBump {
    double p, q, r;
};
/// (a + b * lognormal_pdf(t, mu, s2))^2
struct LognormalOffsetSquared {
    double a, b, mu, s2;
};

using Kind = std::variant<Zero, One, Constant, GridSpline, Linear, RationalBump, LognormalOffsetSquared>;

}  // namespace profile

/// A therapy function C(t), D(t) or V(t). Immutable value type.
class TherapyProfile {
public:
    TherapyProfile() : role_(Role::C), kind_(profile::Zero{}) {}
    TherapyProfile(Role role, profile::Kind kind) : role_(role), kind_(std::move(kind)) {
        if (const auto* rb = std::get_if<profile::RationalBump>(&kind_))
            detail::require(rb->q > rb->r * rb->r / 4.0, "rational bump: q must exceed r^2/4");
        if (const auto* ln = std::get_if<profile::LognormalOffsetSquared>(&kind_))
            detail::require(ln->s2 > 0.0, "lognormal offset: s2 must be positive");
    }

    static TherapyProfile zero(Role r) { return {r, profile::Zero{}}; }
    static TherapyProfile one(Role r) { return {r, profile::One{}}; }
    static TherapyProfile constant(Role r, double v) { return {r, profile::Constant{v}}; }
    static TherapyProfile linear(Role r, double slope, double intercept = 0.0) {
        return {r, profile::Linear{slope, intercept}};
    }
    static TherapyProfile rational_bump(Role r, double p, double q, double rr) {
        return {r, profile::RationalBump{p, q, rr}};
    }
    static TherapyProfile lognormal_offset_squared(Role r, double a, double b, double mu, double s2) {
        return {r, profile::LognormalOffsetSquared{a, b, mu, s2}};
    }
    static TherapyProfile grid_spline(Role r, std::span<const double> grid, std::span<const double> values) {
        return {r, profile::GridSpline{numeric::NaturalCubicSpline(grid, values)}};
    }
    /// Neutral element for a role: 0 for rate shifts, 1 for variance modulation.
    static TherapyProfile neutral(Role r) { return r == Role::V ? one(r) : zero(r); }

    [[nodiscard]] Role role() const noexcept { return role_; }
    [[nodiscard]] const profile::Kind& kind() const noexcept { return kind_; }

    [[nodiscard]] bool is_constant() const noexcept {
        return std::holds_alternative<profile::Zero>(kind_) || std::holds_alternative<profile::One>(kind_) ||
               std::holds_alternative<profile::Constant>(kind_);
    }

    /// Value of a Zero/One/Constant profile.
    [[nodiscard]] double constant_value() const {
        if (std::holds_alternative<profile::Zero>(kind_)) return 0.0;
        if (std::holds_alternative<profile::One>(kind_)) return 1.0;
        if (const auto* c = std::get_if<profile::Constant>(&kind_)) return c->value;
        throw ValidationError("constant_value() on a non-constant profile");
    }

    [[nodiscard]] double operator()(double t) const {
        return std::visit(
            [t](const auto& k) -> double {
                using K = std::decay_t<decltype(k)>;
                if constexpr (std::is_same_v<K, profile::Zero>) return 0.0;
                else if constexpr (std::is_same_v<K, profile::One>) return 1.0;
                else if constexpr (std::is_same_v<K, profile::Constant>) return k.value;
                else if constexpr (std::is_same_v<K, profile::GridSpline>) return k.spline(t);
                else if constexpr (std::is_same_v<K, profile::Linear>) return k.slope * t + k.intercept;
                else if constexpr (std::is_same_v<K, profile::RationalBump>)
                    return k.p * t * t / (k.q + t * (t - k.r));
                else {
                    const double v = k.a + k.b * lognormal_pdf(t, k.mu, k.s2);
                    return v * v;
                }
            },
            kind_);
    }

    /// Integral over [a, b]; closed form for every kind except the lognormal offset.
    [[nodiscard]] double integral(double a, double b) const {
        return std::visit(
            [a, b, this](const auto& k) -> double {
                using K = std::decay_t<decltype(k)>;
                if constexpr (std::is_same_v<K, profile::Zero>) return 0.0;
                else if constexpr (std::is_same_v<K, profile::One>) return b - a;
                else if constexpr (std::is_same_v<K, profile::Constant>) return k.value * (b - a);
                else if constexpr (std::is_same_v<K, profile::GridSpline>) return k.spline.integral(a, b);
                else if constexpr (std::is_same_v<K, profile::Linear>)
                    return 0.5 * k.slope * (b * b - a * a) + k.intercept * (b - a);
                else if constexpr (std::is_same_v<K, profile::RationalBump>) {
                    const double w = std::sqrt(k.q - k.r * k.r / 4.0);
                    auto F = [&](double t) {
                        return k.p * (t + 0.5 * k.r * std::log(t * t - k.r * t + k.q) +
                                      (k.r * k.r / 2.0 - k.q) / w * std::atan((t - k.r / 2.0) / w));
                    };
                    return F(b) - F(a);
                } else {
                    return numeric::adaptive_simpson([this](double s) { return (*this)(s); }, a, b, 1e-13);
                }
            },
            kind_);
    }

    /// Human/machine readable description, e.g. "constant(0.025)".
    [[nodiscard]] std::string describe() const {
        std::ostringstream os;
        os.precision(17);
        std::visit(
            [&os](const auto& k) {
                using K = std::decay_t<decltype(k)>;
                if constexpr (std::is_same_v<K, profile::Zero>) os << "zero";
                else if constexpr (std::is_same_v<K, profile::One>) os << "one";
                else if constexpr (std::is_same_v<K, profile::Constant>) os << "constant(" << k.value << ")";
                else if constexpr (std::is_same_v<K, profile::GridSpline>)
                    os << "grid_spline(" << k.spline.knots().size() << " knots)";
                else if constexpr (std::is_same_v<K, profile::Linear>)
                    os << "linear(" << k.slope << "," << k.intercept << ")";
                else if constexpr (std::is_same_v<K, profile::RationalBump>)
                    os << "rational_bump(" << k.p << "," << k.q << "," << k.r << ")";
                else
                    os << "lognormal_offset_squared(" << k.a << "," << k.b << "," << k.mu << "," << k.s2 << ")";
            },
            kind_);
        return os.str();
    }

    /// Values on a grid.
    [[nodiscard]] std::vector<double> sample(std::span<const double> grid) const {
        std::vector<double> v(grid.size());
        for (std::size_t i = 0; i < grid.size(); ++i) v[i] = (*this)(grid[i]);
        return v;
    }

    /// Role-specific invariants on the design grid (V must be positive).
    void validate(std::span<const double> grid) const {
        for (double t : grid) {
            const double v = (*this)(t);
            if (!std::isfinite(v)) {
                std::ostringstream os;
                os << "profile " << to_string(role_) << " is not finite at t=" << t;
                throw ValidationError(os.str());
            }
            if (role_ == Role::V && !(v > 0.0)) {
                std::ostringstream os;
                os << "variance profile must be positive; V(" << t << ") = " << v;
                throw ValidationError(os.str());
            }
        }
    }

private:
    Role role_;
    profile::Kind kind_;
};

}  // namespace gompertz

#pragma once

// Closed-form theory: tail parameters (eps, gamma, r) of noncentral t and F
// alternatives, the pFDR floor alpha_*, power asymptotics of the ellipsoid
// and rectangle procedures, and their optimal parameters.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <variant>
#include <vector>

#include "mvfdr/error.hpp"
#include "mvfdr/special_functions.hpp"

namespace mvfdr {

struct NoncentralT {
    double p;
    double delta;
};

struct NoncentralF {
    double p;
    double q;
    double delta;
};

/// Local expansion g(u) = r (1 - gamma u^eps) + o(u^eps) of a density ratio near 0.
struct TailParams {
    double eps;
    double gamma;
    double r;
};

namespace detail {

inline TailParams t_tail(double p, double delta, const SeriesControl& ctl) {
    if (!(p > 0.0)) throw ParameterError("t_eps_gamma: degrees of freedom must be positive");
    if (!(delta >= 0.0)) throw ParameterError("t_eps_gamma: delta must be nonnegative");
    ctl.validate();
    const double eps = 2.0 / p;
    if (delta == 0.0) return {eps, 0.0, 1.0};
    const double log_y = std::log(std::numbers::sqrt2 * delta);
    const double shift = -0.5 * delta * delta;
    auto log_term = [&](int k) { return t_log_coeff(k, p) + k_log(k, log_y) + shift; };
    const auto s0 = sum_log_series(log_term, false, ctl, "t_eps_gamma");
    const auto s1 = sum_log_series([&](int k) { return std::log(double(k)) + log_term(k); }, false, ctl,
                                   "t_eps_gamma", 1);
    const double log_lead = std::log(p) + 0.5 * std::log(std::numbers::pi) + std::lgamma(0.5 * p) -
                            std::lgamma(0.5 * (p + 1.0));
    const double gamma = 0.5 * std::exp(eps * log_lead + s1.log_value() - s0.log_value());
    return {eps, gamma, s0.value()};
}

inline TailParams f_tail(double p, double q, double delta, const SeriesControl& ctl) {
    if (!(p > 0.0 && q > 0.0)) throw ParameterError("f_eps_gamma: degrees of freedom must be positive");
    if (!(delta >= 0.0)) throw ParameterError("f_eps_gamma: delta must be nonnegative");
    ctl.validate();
    const double eps = 2.0 / q;
    if (delta == 0.0) return {eps, 0.0, 1.0};
    const double log_h = std::log(0.5 * delta);
    const double shift = -0.5 * delta;
    const auto s0 = sum_log_series(
        [&](int k) { return f_log_coeff(k, p, q) + k_log(k, log_h) - std::lgamma(k + 1.0) + shift; }, false,
        ctl, "f_eps_gamma");
    const auto s1 = sum_log_series(
        [&](int k) { return f_log_coeff(k, p, q) + k * log_h - std::lgamma(double(k)) + shift; }, false, ctl,
        "f_eps_gamma", 1);
    // Tail constant of the central F: P(F >= x) ~ [2 rho^{-q/2} / (q B(p/2, q/2))] x^{-q/2}.
    const double lead = std::exp(eps * (std::log(0.5 * q) + ln_beta(0.5 * p, 0.5 * q)));
    return {eps, lead * std::exp(s1.log_value() - s0.log_value()), s0.value()};
}

}  // namespace detail

/// (eps, gamma, r) for a noncentral t alternative against the central t null.
inline TailParams t_eps_gamma(double p, double delta, const SeriesControl& ctl = {}) {
    return detail::t_tail(p, delta, ctl);
}

/// (eps, gamma, r) for a noncentral F alternative against the central F null.
inline TailParams f_eps_gamma(double p, double q, double delta, const SeriesControl& ctl = {}) {
    return detail::f_tail(p, q, delta, ctl);
}

/// psi(u) = F_0^{-1}(1 - u) followed by the density ratio f(psi)/f_0(psi), in log space.
inline double log_g_density_ratio_t(double u, double p, double delta) {
    if (!(u > 0.0 && u < 1.0)) detail::domain_fail("g_density_ratio_t: u must lie in (0, 1)");
    if (delta == 0.0) return 0.0;
    const double x = t_quantile_upper(u, p);
    return noncentral_t_log_density(x, p, delta) - t_log_density(x, p);
}

inline double log_g_density_ratio_f(double u, double p, double q, double delta) {
    if (!(u > 0.0 && u < 1.0)) detail::domain_fail("g_density_ratio_f: u must lie in (0, 1)");
    if (delta == 0.0) return 0.0;
    const double x = f_quantile_upper(u, p, q);
    return noncentral_f_log_density(x, p, q, delta) - f_log_density(x, p, q);
}

inline double g_density_ratio_t(double u, double p, double delta) {
    return std::exp(log_g_density_ratio_t(u, p, delta));
}

inline double g_density_ratio_f(double u, double p, double q, double delta) {
    return std::exp(log_g_density_ratio_f(u, p, q, delta));
}

/// Per-coordinate alternative law together with its derived tail parameters.
class AltSpec {
public:
    using Family = std::variant<NoncentralT, NoncentralF>;

    explicit AltSpec(NoncentralT t, const SeriesControl& ctl = {})
        : family_(t), tail_(t_eps_gamma(t.p, t.delta, ctl)) {}
    explicit AltSpec(NoncentralF f, const SeriesControl& ctl = {})
        : family_(f), tail_(f_eps_gamma(f.p, f.q, f.delta, ctl)) {}

    static AltSpec t(double p, double delta) { return AltSpec(NoncentralT{p, delta}); }
    static AltSpec f(double p, double q, double delta) { return AltSpec(NoncentralF{p, q, delta}); }

    const Family& family() const { return family_; }
    double eps() const { return tail_.eps; }
    double gamma() const { return tail_.gamma; }
    double r() const { return tail_.r; }
    const TailParams& tail() const { return tail_; }

    double delta() const {
        return std::visit([](const auto& f) { return f.delta; }, family_);
    }

    /// ln g_k(u), the log density ratio at null upper-tail probability u.
    double log_ratio(double u) const {
        return std::visit(
            [u](const auto& f) {
                if constexpr (std::is_same_v<std::decay_t<decltype(f)>, NoncentralT>) {
                    return log_g_density_ratio_t(u, f.p, f.delta);
                } else {
                    return log_g_density_ratio_f(u, f.p, f.q, f.delta);
                }
            },
            family_);
    }

private:
    Family family_;
    TailParams tail_;
};

struct AlphaStar {
    double alpha_star;
    double min_pfdr;
};

/// alpha_* = 1 / (1 - a + a g0); the pFDR of any procedure is at least (1 - a) alpha_*.
inline AlphaStar alpha_star(double a, double g0) {
    if (!(a > 0.0 && a < 1.0)) throw ParameterError("alpha_star: a must lie in (0, 1)");
    if (!(g0 >= 1.0)) throw ParameterError("alpha_star: g0 must be >= 1");
    const double as = 1.0 / (1.0 - a + a * g0);
    return {as, (1.0 - a) * as};
}

/// g(0) = prod r_k for independent coordinates.
inline double g0_of(std::span<const AltSpec> alts) {
    double g0 = 1.0;
    for (const auto& s : alts) g0 *= s.r();
    return g0;
}

/// The common eps of a list of alternatives; mixed eps is not supported.
inline double common_eps(std::span<const AltSpec> alts) {
    if (alts.empty()) throw ParameterError("common_eps: empty alternative list");
    const double eps = alts.front().eps();
    for (const auto& s : alts) {
        if (std::abs(s.eps() - eps) > 1e-12) {
            throw ParameterError("coordinates with different eps are not supported");
        }
    }
    return eps;
}

inline AlphaStar alpha_star(double a, std::span<const AltSpec> alts) {
    common_eps(alts);
    return alpha_star(a, g0_of(alts));
}

inline double min_pfdr_univariate_t(double a, double p, double delta) {
    return alpha_star(a, t_eps_gamma(p, delta).r).min_pfdr;
}

/// Parameters entering the power asymptotics near alpha_*.
struct PowerParams {
    double a;
    double g0;
    double alpha_star;
    int K;
    double eps;
    std::vector<double> gamma;

    static PowerParams from(double a, std::span<const AltSpec> alts) {
        PowerParams pp{a, g0_of(alts), 0.0, static_cast<int>(alts.size()), common_eps(alts), {}};
        pp.alpha_star = mvfdr::alpha_star(a, pp.g0).alpha_star;
        for (const auto& s : alts) pp.gamma.push_back(s.gamma());
        return pp;
    }
};

/// Volume of {x in [0,1]^K : sum x_k^eps <= 1}.
inline double v_eps(double eps, int K) {
    if (!(eps > 0.0)) throw ParameterError("v_eps: eps must be positive");
    if (K < 1) throw ParameterError("v_eps: K must be >= 1");
    const double ie = 1.0 / eps;
    return std::exp((K - 1) * std::log(ie) + K * std::lgamma(ie) - std::log(double(K)) - std::lgamma(K * ie));
}

inline double geometric_mean(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += std::log(x);
    return std::exp(s / static_cast<double>(v.size()));
}

namespace detail {

inline void check_power_args(double alpha, const PowerParams& pp, std::size_t n, const char* who) {
    if (!(alpha >= pp.alpha_star)) detail::domain_fail(std::string(who) + ": alpha must exceed alpha_*");
    if (n != static_cast<std::size_t>(pp.K) || pp.gamma.size() != n) {
        throw ParameterError(std::string(who) + ": parameter length must equal K");
    }
}

}  // namespace detail

/// Leading-order power of the ellipsoid procedure as alpha decreases to alpha_*.
inline double power_asymptote_ellipsoid(double alpha, const PowerParams& pp, std::span<const double> nu) {
    detail::check_power_args(alpha, pp, nu.size(), "power_asymptote_ellipsoid");
    const double nubar = geometric_mean(nu);
    double sum = 0.0;
    for (int k = 0; k < pp.K; ++k) sum += nubar * pp.gamma[k] / nu[k];
    const double ke = pp.K / pp.eps;
    const double base = (pp.K + pp.eps) / (pp.a * pp.alpha_star * pp.alpha_star * pp.g0) / sum;
    return pp.g0 * v_eps(pp.eps, pp.K) * std::pow(base, ke) * std::pow(alpha - pp.alpha_star, ke);
}

/// The same asymptote maximised over nu (attained at nu = gamma).
inline double power_asymptote_ellipsoid_sup(double alpha, const PowerParams& pp) {
    detail::check_power_args(alpha, pp, pp.gamma.size(), "power_asymptote_ellipsoid_sup");
    const double ke = pp.K / pp.eps;
    const double base = (1.0 + pp.eps / pp.K) / (pp.a * pp.alpha_star * pp.alpha_star * pp.g0 *
                                                  geometric_mean(pp.gamma));
    return pp.g0 * v_eps(pp.eps, pp.K) * std::pow(base, ke) * std::pow(alpha - pp.alpha_star, ke);
}

/// Leading-order power of the rectangle procedure; sum gamma_k c_k^eps sits in the denominator.
inline double power_asymptote_rectangle(double alpha, const PowerParams& pp, std::span<const double> c) {
    detail::check_power_args(alpha, pp, c.size(), "power_asymptote_rectangle");
    double prod = 1.0;
    double sum = 0.0;
    for (int k = 0; k < pp.K; ++k) {
        prod *= c[k];
        sum += pp.gamma[k] * std::pow(c[k], pp.eps);
    }
    if (std::abs(prod - 1.0) > 1e-12) throw InvariantError("power_asymptote_rectangle: prod(c) must be 1");
    const double ke = pp.K / pp.eps;
    const double base = (1.0 + pp.eps) / (pp.a * pp.alpha_star * pp.alpha_star * pp.g0) / sum;
    return pp.g0 * std::pow(base, ke) * std::pow(alpha - pp.alpha_star, ke);
}

/// Limit of rectangle power over ellipsoid power, both at their optimal parameters.
inline double rect_vs_ellipsoid_ratio(double eps, int K) {
    return std::pow((1.0 + eps) / (K + eps), K / eps) / v_eps(eps, K);
}

struct OptimalParams {
    std::vector<double> nu;
    std::vector<double> c;
};

/// nu = gamma for the ellipsoid procedure and c_k = (gbar / gamma_k)^{1/eps} for the rectangle.
inline OptimalParams optimal_params(std::span<const double> gamma, double eps) {
    if (!(eps > 0.0)) throw ParameterError("optimal_params: eps must be positive");
    for (double g : gamma) {
        if (!(g > 0.0)) throw DegenerateError("optimal_params: every gamma_k must be positive");
    }
    const double gbar = geometric_mean(gamma);
    OptimalParams out{{gamma.begin(), gamma.end()}, {}};
    for (double g : gamma) out.c.push_back(std::pow(gbar / g, 1.0 / eps));
    return out;
}

}  // namespace mvfdr

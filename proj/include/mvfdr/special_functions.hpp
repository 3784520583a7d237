#pragma once

// Special functions used throughout mvfdr: gamma/beta/normal/t/F laws and the
// noncentral t and F density series.
//
// The regularized incomplete gamma/beta functions come from Boost.Math; the
// noncentral densities are evaluated from their Poisson-type series in log
// space so that coefficient ratios of gamma functions never overflow.

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/erf.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "mvfdr/error.hpp"

namespace mvfdr {

/// Truncation control for the infinite series behind the noncentral laws.
struct SeriesControl {
    double rel_tol = 1e-14;  ///< a term is negligible below rel_tol * |partial sum|
    int max_terms = 500;

    void validate() const {
        if (!(rel_tol > 0.0 && rel_tol <= 1e-6)) {
            throw ParameterError("SeriesControl: rel_tol must lie in (0, 1e-6]");
        }
        if (max_terms < 50) throw ParameterError("SeriesControl: max_terms must be >= 50");
    }
};

namespace detail {

using boost_policy = boost::math::policies::policy<boost::math::policies::promote_double<false>>;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// k * log(x) with the convention 0 * log(0) = 0.
inline double k_log(int k, double log_x) { return k == 0 ? 0.0 : k * log_x; }

/// A series value held as sum * exp(scale), so that neither tiny leading
/// terms nor huge peak terms leave the double range.
struct SeriesSum {
    double sum = 0.0;           ///< scaled partial sum
    double scale = kNegInf;     ///< log of the scale factor
    double max_abs_term = 0.0;  ///< largest |term| on the same scale

    double log_value() const { return scale + std::log(sum); }
    double value() const { return sum * std::exp(scale); }
};

/// Sums sign(k) * exp(log_term(k)) for k = first, first+1, ...
///
/// Stops once |term| < rel_tol * |sum| for three consecutive terms. The
/// series handled here have unimodal term magnitudes, so the stopping rule
/// cannot fire before the peak unless every later term is smaller still.
template <class LogTerm>
SeriesSum sum_log_series(LogTerm&& log_term, bool alternating, const SeriesControl& ctl,
                         const char* name, int first = 0) {
    SeriesSum out;
    int quiet = 0;
    for (int k = first; k < first + ctl.max_terms; ++k) {
        const double lt = log_term(k);
        if (lt == kNegInf) continue;
        if (lt > out.scale) {
            const double shrink = out.scale == kNegInf ? 0.0 : std::exp(out.scale - lt);
            out.sum *= shrink;
            out.max_abs_term *= shrink;
            out.scale = lt;
        }
        const double mag = std::exp(lt - out.scale);
        out.sum += (alternating && (k % 2 == 1)) ? -mag : mag;
        out.max_abs_term = std::max(out.max_abs_term, mag);
        if (mag <= ctl.rel_tol * std::abs(out.sum)) {
            if (++quiet == 3) return out;
        } else {
            quiet = 0;
        }
    }
    throw ConvergenceError(std::string(name) + ": series did not converge within " +
                           std::to_string(ctl.max_terms) + " terms");
}

}  // namespace detail

inline double ln_gamma(double x) {
    if (!(x > 0.0)) detail::domain_fail("ln_gamma: x must be positive");
    return std::lgamma(x);
}

inline double ln_beta(double a, double b) { return ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b); }

/// Regularized lower incomplete gamma P(shape, x), unit scale.
inline double gamma_cdf(double shape, double x) {
    if (!(shape > 0.0)) detail::domain_fail("gamma_cdf: shape must be positive");
    if (!(x >= 0.0)) detail::domain_fail("gamma_cdf: x must be nonnegative");
    if (x == 0.0) return 0.0;
    if (std::isinf(x)) return 1.0;
    return boost::math::gamma_p(shape, x, detail::boost_policy());
}

/// Upper tail Q(shape, x) = 1 - P(shape, x), accurate when P is close to 1.
inline double gamma_sf(double shape, double x) {
    if (!(shape > 0.0)) detail::domain_fail("gamma_sf: shape must be positive");
    if (!(x >= 0.0)) detail::domain_fail("gamma_sf: x must be nonnegative");
    if (x == 0.0) return 1.0;
    if (std::isinf(x)) return 0.0;
    return boost::math::gamma_q(shape, x, detail::boost_policy());
}

/// Regularized incomplete beta I_x(a, b).
inline double beta_cdf(double x, double a, double b) {
    if (!(a > 0.0 && b > 0.0)) detail::domain_fail("beta_cdf: a and b must be positive");
    if (!(x >= 0.0 && x <= 1.0)) detail::domain_fail("beta_cdf: x must lie in [0, 1]");
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;
    return boost::math::ibeta(a, b, x, detail::boost_policy());
}

/// 1 - I_x(a, b) without cancellation.
inline double beta_sf(double x, double a, double b) {
    if (!(a > 0.0 && b > 0.0)) detail::domain_fail("beta_sf: a and b must be positive");
    if (!(x >= 0.0 && x <= 1.0)) detail::domain_fail("beta_sf: x must lie in [0, 1]");
    if (x == 0.0) return 1.0;
    if (x == 1.0) return 0.0;
    return boost::math::ibetac(a, b, x, detail::boost_policy());
}

// ---------------------------------------------------------------------------
// Standard normal
// ---------------------------------------------------------------------------

/// P(Z >= x).
inline double normal_cdf_upper(double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

/// Inverse of normal_cdf_upper.
inline double normal_quantile_upper(double p) {
    if (!(p > 0.0 && p < 1.0)) detail::domain_fail("normal_quantile_upper: p must lie in (0, 1)");
    return std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p, detail::boost_policy());
}

// ---------------------------------------------------------------------------
// Central Student t
// ---------------------------------------------------------------------------

/// Upper tail P(T >= x) of the central t law with p degrees of freedom.
inline double t_sf(double x, double p) {
    if (!(p > 0.0)) detail::domain_fail("t_sf: degrees of freedom must be positive");
    if (std::isnan(x)) detail::domain_fail("t_sf: x is NaN");
    if (x < 0.0) return 1.0 - t_sf(-x, p);
    if (std::isinf(x)) return 0.0;
    const double x2 = x * x;
    if (x2 > p) {
        const double z = std::isinf(x2) ? 0.0 : p / (p + x2);
        return z == 0.0 ? 0.0 : 0.5 * boost::math::ibeta(0.5 * p, 0.5, z, detail::boost_policy());
    }
    return 0.5 * boost::math::ibetac(0.5, 0.5 * p, x2 / (p + x2), detail::boost_policy());
}

inline double t_cdf(double x, double p) {
    if (x <= 0.0) return t_sf(-x, p);
    return 1.0 - t_sf(x, p);
}

namespace detail {

/// Inverts a decreasing survival function sf on [0, inf) by doubling then bisection.
template <class Sf>
double invert_upper_tail(Sf&& sf, double u) {
    double lo = 0.0;
    double hi = 1.0;
    while (sf(hi) > u) {
        lo = hi;
        hi *= 2.0;
        if (!std::isfinite(hi)) return std::numeric_limits<double>::infinity();
    }
    for (int it = 0; it < 400 && (hi - lo) > 1e-15 * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (sf(mid) > u) lo = mid; else hi = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace detail

/// psi(u) = F_p^{-1}(1 - u): the statistic value whose upper-tail probability is u.
inline double t_quantile_upper(double u, double p) {
    if (!(p > 0.0)) detail::domain_fail("t_quantile_upper: degrees of freedom must be positive");
    if (!(u > 0.0 && u < 1.0)) detail::domain_fail("t_quantile_upper: u must lie in (0, 1)");
    if (u == 0.5) return 0.0;
    if (u > 0.5) return -t_quantile_upper(1.0 - u, p);
    return detail::invert_upper_tail([p](double x) { return t_sf(x, p); }, u);
}

/// ln of the normalising constant A = p^{p/2} Gamma((p+1)/2) / (sqrt(pi) Gamma(p/2)).
inline double t_log_norm_const(double p) {
    return 0.5 * p * std::log(p) + ln_gamma(0.5 * (p + 1.0)) - 0.5 * std::log(std::numbers::pi) -
           ln_gamma(0.5 * p);
}

namespace detail {

/// ln(p + x^2) without overflowing for huge |x|.
inline double log_p_plus_x2(double p, double x) {
    const double ax = std::abs(x);
    if (ax > 1e100) return 2.0 * std::log(ax) + std::log1p(p / ax / ax);
    return std::log(p + x * x);
}

}  // namespace detail

inline double t_log_density(double x, double p) {
    if (!(p > 0.0)) detail::domain_fail("t_density: degrees of freedom must be positive");
    return t_log_norm_const(p) - 0.5 * (p + 1.0) * detail::log_p_plus_x2(p, x);
}

inline double t_density(double x, double p) { return std::exp(t_log_density(x, p)); }

// ---------------------------------------------------------------------------
// Central F
// ---------------------------------------------------------------------------

/// Upper tail P(F >= x) for F with (p, q) degrees of freedom.
inline double f_sf(double x, double p, double q) {
    if (!(p > 0.0 && q > 0.0)) detail::domain_fail("f_sf: degrees of freedom must be positive");
    if (!(x >= 0.0)) return 1.0;
    if (std::isinf(x)) return 0.0;
    const double px = p * x;
    if (px > q) return boost::math::ibeta(0.5 * q, 0.5 * p, q / (q + px), detail::boost_policy());
    return boost::math::ibetac(0.5 * p, 0.5 * q, px / (px + q), detail::boost_policy());
}

inline double f_cdf(double x, double p, double q) { return 1.0 - f_sf(x, p, q); }

inline double f_quantile_upper(double u, double p, double q) {
    if (!(p > 0.0 && q > 0.0)) detail::domain_fail("f_quantile_upper: degrees of freedom must be positive");
    if (!(u > 0.0 && u < 1.0)) detail::domain_fail("f_quantile_upper: u must lie in (0, 1)");
    return detail::invert_upper_tail([p, q](double x) { return f_sf(x, p, q); }, u);
}

// ---------------------------------------------------------------------------
// Noncentral t
// ---------------------------------------------------------------------------

namespace detail {

/// ln C_k with C_k = Gamma((p+1+k)/2) / (k! Gamma((p+1)/2)).
inline double t_log_coeff(int k, double p) {
    return std::lgamma(0.5 * (p + 1.0 + k)) - std::lgamma(0.5 * (p + 1.0)) - std::lgamma(k + 1.0);
}

/// ln of the noncentral t density from the mixture representation
/// f(x) = int_0^inf w phi(x w - delta) chi2_p(v) dv, w = sqrt(v / p).
/// Used where the alternating series loses its significant digits.
inline double noncentral_t_log_density_quadrature(double x, double p, double delta) {
    const double log_chi_norm = -0.5 * p * std::log(2.0) - std::lgamma(0.5 * p);
    // The factor exp(-delta^2 / 2) is pulled out of the integrand.
    auto integrand = [&](double v) {
        if (v <= 0.0) return 0.0;
        const double w = std::sqrt(v / p);
        const double expo = x * w * delta - 0.5 * x * x * w * w + std::log(w) + log_chi_norm +
                            (0.5 * p - 1.0) * std::log(v) - 0.5 * v;
        return std::exp(expo);
    };
    const double integral = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
        integrand, 0.0, std::numeric_limits<double>::infinity(), 15, 1e-12);
    return -0.5 * delta * delta - 0.5 * std::log(2.0 * std::numbers::pi) + std::log(integral);
}

}  // namespace detail

/// ln of the noncentral t density t_{p,delta}(x).
///
/// Series: A e^{-delta^2/2} (p+x^2)^{-(p+1)/2} sum_k C_k (sqrt2 delta)^k (x / sqrt(p+x^2))^k.
/// For x < 0 the series alternates; when more than eight digits cancel the
/// value is recomputed by quadrature of the normal/chi-square mixture.
inline double noncentral_t_log_density(double x, double p, double delta, const SeriesControl& ctl = {}) {
    if (!(p > 0.0)) detail::domain_fail("noncentral_t_density: degrees of freedom must be positive");
    if (!(delta >= 0.0)) detail::domain_fail("noncentral_t_density: delta must be nonnegative");
    ctl.validate();
    const double log_pre = t_log_density(x, p);
    if (delta == 0.0) return log_pre;
    const double y = std::numbers::sqrt2 * delta * (x / std::hypot(std::sqrt(p), x));
    if (y == 0.0) return log_pre - 0.5 * delta * delta;
    const double log_abs_y = std::log(std::abs(y));
    const double half_d2 = 0.5 * delta * delta;
    const auto s = detail::sum_log_series(
        [&](int k) { return detail::t_log_coeff(k, p) + detail::k_log(k, log_abs_y) - half_d2; },
        y < 0.0, ctl, "noncentral_t_density");
    if (y < 0.0 && !(s.sum > 1e-8 * s.max_abs_term)) {
        return detail::noncentral_t_log_density_quadrature(x, p, delta);
    }
    return log_pre + s.log_value();
}

inline double noncentral_t_density(double x, double p, double delta, const SeriesControl& ctl = {}) {
    return std::exp(noncentral_t_log_density(x, p, delta, ctl));
}

// ---------------------------------------------------------------------------
// Noncentral F
// ---------------------------------------------------------------------------

namespace detail {

/// ln C_{p,q,k} with C_{p,q,k} = B(p/2, q/2) / B(p/2 + k, q/2).
inline double f_log_coeff(int k, double p, double q) {
    return ln_beta(0.5 * p, 0.5 * q) - ln_beta(0.5 * p + k, 0.5 * q);
}

}  // namespace detail

/// ln of the noncentral F density f_{p,q,delta}(x), x > 0.
///
/// With rho = p/q and z = 1/(1 + rho x):
/// f = e^{-delta/2} x^{-1} (1-z)^{p/2} z^{q/2} sum_k (delta/2)^k (1-z)^k / (k! B(p/2+k, q/2)).
inline double noncentral_f_log_density(double x, double p, double q, double delta,
                                       const SeriesControl& ctl = {}) {
    if (!(p > 0.0 && q > 0.0)) detail::domain_fail("noncentral_f_density: degrees of freedom must be positive");
    if (!(delta >= 0.0)) detail::domain_fail("noncentral_f_density: delta must be nonnegative");
    if (!(x > 0.0)) detail::domain_fail("noncentral_f_density: x must be positive");
    ctl.validate();
    const double rho = p / q;
    const double log_z = -std::log1p(rho * x);
    const double log_1mz = std::log(rho * x) + log_z;
    const double log_pre = -std::log(x) + 0.5 * p * log_1mz + 0.5 * q * log_z;
    if (delta == 0.0) return log_pre - ln_beta(0.5 * p, 0.5 * q);
    const double log_h = std::log(0.5 * delta) + log_1mz;
    const double base = ln_beta(0.5 * p, 0.5 * q);
    const auto s = detail::sum_log_series(
        [&](int k) {
            return -0.5 * delta + k * log_h - std::lgamma(k + 1.0) - ln_beta(0.5 * p + k, 0.5 * q) + base;
        },
        false, ctl, "noncentral_f_density");
    return log_pre - base + s.log_value();
}

inline double noncentral_f_density(double x, double p, double q, double delta, const SeriesControl& ctl = {}) {
    return std::exp(noncentral_f_log_density(x, p, q, delta, ctl));
}

inline double f_log_density(double x, double p, double q) { return noncentral_f_log_density(x, p, q, 0.0); }

}  // namespace mvfdr

#pragma once

// Nested region families on [0,1]^K, represented by score functions J with
// the property that J(xi) is uniform when xi is uniform on the cube.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <mutex>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "mvfdr/error.hpp"
#include "mvfdr/special_functions.hpp"
#include "mvfdr/theory.hpp"

namespace mvfdr {

namespace detail {

inline void check_unit_cube(std::span<const double> x, const char* who) {
    for (double v : x) {
        if (!(v >= 0.0 && v <= 1.0)) detail::domain_fail(std::string(who) + ": point outside [0,1]^K");
    }
}

inline void check_dim(std::span<const double> x, std::size_t K, const char* who) {
    if (x.size() != K) throw ParameterError(std::string(who) + ": point dimension does not match region");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Simple score functions
// ---------------------------------------------------------------------------

/// 1 - (1 - min x)^K.
inline double score_min(std::span<const double> x) {
    detail::check_unit_cube(x, "score_min");
    const double m = *std::min_element(x.begin(), x.end());
    return -std::expm1(static_cast<double>(x.size()) * std::log1p(-m));
}

/// 1 - P(K, -sum ln x), the upper tail of Fisher's combination.
inline double score_product(std::span<const double> x) {
    detail::check_unit_cube(x, "score_product");
    double s = 0.0;
    for (double v : x) {
        if (v == 0.0) return 0.0;
        s -= std::log(v);
    }
    return gamma_sf(static_cast<double>(x.size()), s);
}

/// Phi-bar(Q / w) with Q = sum w_k Phi-bar^{-1}(x_k) and w = |w|_2.
inline double score_stouffer(std::span<const double> x, std::span<const double> w) {
    if (x.size() != w.size()) throw ParameterError("score_stouffer: weight count does not match dimension");
    double q = 0.0;
    double w2 = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        if (!(x[k] > 0.0 && x[k] < 1.0)) detail::domain_fail("score_stouffer: coordinates must lie in (0, 1)");
        q += w[k] * normal_quantile_upper(x[k]);
        w2 += w[k] * w[k];
    }
    return normal_cdf_upper(q / std::sqrt(w2));
}

inline void check_rectangle_c(std::span<const double> c) {
    double lp = 0.0;
    for (double v : c) {
        if (!(v > 0.0)) throw InvariantError("rectangle: every c_k must be positive");
        lp += std::log(v);
    }
    if (std::abs(std::expm1(lp)) > 1e-12) throw InvariantError("rectangle: prod(c) must equal 1");
}

/// min(1, (max_k x_k / c_k)^K); values above 1 are clamped.
inline double score_rectangle(std::span<const double> x, std::span<const double> c) {
    if (x.size() != c.size()) throw ParameterError("score_rectangle: c length does not match dimension");
    detail::check_unit_cube(x, "score_rectangle");
    double m = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) m = std::max(m, x[k] / c[k]);
    return std::min(1.0, std::pow(m, static_cast<double>(x.size())));
}

// ---------------------------------------------------------------------------
// Ellipsoid volumes h(u; nu) = l{x : sum nu_k x_k^eps <= u}
// ---------------------------------------------------------------------------

struct EllipsoidSpec {
    std::vector<double> nu;
    double eps = 1.0;

    int K() const { return static_cast<int>(nu.size()); }

    void validate() const {
        if (nu.empty()) throw ParameterError("EllipsoidSpec: nu must be nonempty");
        for (double v : nu) {
            if (!(v > 0.0)) throw ParameterError("EllipsoidSpec: every nu_k must be positive");
        }
        if (!(eps > 0.0)) throw ParameterError("EllipsoidSpec: eps must be positive");
    }

    double sum_nu() const {
        double s = 0.0;
        for (double v : nu) s += v;
        return s;
    }

    bool equal_nu() const {
        return std::all_of(nu.begin(), nu.end(), [&](double v) { return std::abs(v - nu.front()) <= 1e-12 * nu.front(); });
    }
};

/// Exact area for K = 2 via the incomplete beta function.
inline double h_exact_2d(double u, double nu1, double nu2, double eps) {
    if (!(nu1 > 0.0 && nu2 > 0.0)) throw ParameterError("h_exact_2d: nu must be positive");
    if (!(eps > 0.0)) throw ParameterError("h_exact_2d: eps must be positive");
    if (!(u > 0.0)) return 0.0;
    if (u >= nu1 + nu2) return 1.0;
    const double lo = std::min(nu1, nu2);
    const double hi = std::max(nu1, nu2);
    const double ie = 1.0 / eps;
    const double first = u > hi ? std::pow((u - hi) / lo, ie) : 0.0;
    const double x1 = std::min(lo / u, 1.0);
    const double x0 = std::max(1.0 - hi / u, 0.0);
    // F(x1) - F(x0), taken from whichever tail keeps the difference well conditioned.
    double diff;
    if (x0 > 0.5) {
        diff = beta_sf(x0, ie, 1.0 + ie) - beta_sf(x1, ie, 1.0 + ie);
    } else {
        diff = beta_cdf(x1, ie, 1.0 + ie) - beta_cdf(x0, ie, 1.0 + ie);
    }
    const double log_c = 2.0 * std::lgamma(ie) - std::log(2.0 * eps) - std::lgamma(2.0 * ie);
    const double log_scale = 2.0 * ie * (std::log(u) - 0.5 * (std::log(nu1) + std::log(nu2)));
    return std::clamp(first + std::exp(log_c + log_scale) * diff, 0.0, 1.0);
}

inline double h_exact_2d(double u, const EllipsoidSpec& spec) {
    if (spec.K() != 2) throw ParameterError("h_exact_2d: requires K = 2");
    return h_exact_2d(u, spec.nu[0], spec.nu[1], spec.eps);
}

/// Piecewise-polynomial CDF of a sum of K uniforms, h_K(i + t) = sum_k A_K(i, k) t^k.
class IrwinHallTable {
public:
    static constexpr int kMaxK = 20;

    explicit IrwinHallTable(int K) : K_(K) {
        if (K < 1 || K > kMaxK) throw ParameterError("irwin_hall: K must lie in [1, 20]");
        // A_1: h_1(t) = t on [0,1), h_1 = 1 beyond.
        std::vector<std::vector<double>> prev{{0.0, 1.0}, {1.0, 0.0}};
        for (int m = 2; m <= K; ++m) {
            std::vector<std::vector<double>> cur(m + 1, std::vector<double>(m + 1, 0.0));
            cur[0][m] = 1.0 / std::tgamma(m + 1.0);
            for (int i = 1; i <= m - 1; ++i) {
                double a0 = 0.0;
                for (int k = 0; k <= m - 1; ++k) a0 += prev[i - 1][k] / (k + 1);
                cur[i][0] = a0;
                for (int k = 1; k <= m; ++k) cur[i][k] = (prev[i][k - 1] - prev[i - 1][k - 1]) / k;
            }
            cur[m][0] = 1.0;
            prev = std::move(cur);
        }
        A_ = std::move(prev);
    }

    int K() const { return K_; }
    double coeff(int i, int k) const { return A_.at(i).at(k); }

    double operator()(double u) const {
        if (!(u >= 0.0 && u <= K_)) detail::domain_fail("irwin_hall_cdf: u must lie in [0, K]");
        if (u >= K_) return 1.0;
        const int i = static_cast<int>(std::floor(u));
        const double t = u - i;
        double acc = 0.0;
        for (int k = K_; k >= 0; --k) acc = acc * t + A_[i][k];
        return std::clamp(acc, 0.0, 1.0);
    }

    /// Shared immutable table for dimension K.
    static const IrwinHallTable& get(int K) {
        if (K < 1 || K > kMaxK) throw ParameterError("irwin_hall: K must lie in [1, 20]");
        static std::array<std::unique_ptr<IrwinHallTable>, kMaxK + 1> cache;
        static std::once_flag flags[kMaxK + 1];
        std::call_once(flags[K], [K] { cache[K] = std::make_unique<IrwinHallTable>(K); });
        return *cache[K];
    }

private:
    int K_;
    std::vector<std::vector<double>> A_;
};

inline double irwin_hall_cdf(double u, int K) { return IrwinHallTable::get(K)(u); }

/// min(1, V_eps (u / nu-bar)^{K/eps}); exact for u <= min nu_k.
inline double h_approx(double u, const EllipsoidSpec& spec) {
    if (!(u > 0.0)) return 0.0;
    const double nubar = geometric_mean(spec.nu);
    const double ke = spec.K() / spec.eps;
    const double lv = std::log(v_eps(spec.eps, spec.K())) + ke * (std::log(u) - std::log(nubar));
    return lv >= 0.0 ? 1.0 : std::exp(lv);
}

struct McEstimate {
    double value;
    double std_error;
};

inline double ellipsoid_u(std::span<const double> x, const EllipsoidSpec& spec) {
    double u = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) u += spec.nu[k] * std::pow(x[k], spec.eps);
    return u;
}

/// Monte Carlo volume with binomial standard error; deterministic in (seed, samples).
inline McEstimate h_mc(double u, const EllipsoidSpec& spec, std::int64_t samples, std::uint64_t seed) {
    spec.validate();
    if (samples < 1) throw ParameterError("h_mc: samples must be >= 1");
    if (u >= spec.sum_nu()) return {1.0, 0.0};
    if (!(u > 0.0)) return {0.0, 0.0};
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<double> x(spec.nu.size());
    std::int64_t hits = 0;
    for (std::int64_t s = 0; s < samples; ++s) {
        for (auto& v : x) v = unif(gen);
        if (ellipsoid_u(x, spec) <= u) ++hits;
    }
    const double p = static_cast<double>(hits) / static_cast<double>(samples);
    return {p, std::sqrt(p * (1.0 - p) / static_cast<double>(samples))};
}

struct Exact2D {};
struct IrwinHall {};
struct PowerLaw {};
struct MonteCarlo {
    std::int64_t samples = 1'000'000;
    std::uint64_t seed = 1;
};

using VolumeMode = std::variant<Exact2D, IrwinHall, PowerLaw, MonteCarlo>;

/// Default mode: exact for K = 2, Irwin-Hall for eps = 1 with equal nu, power law otherwise.
inline VolumeMode auto_volume_mode(const EllipsoidSpec& spec) {
    if (spec.K() == 2) return Exact2D{};
    if (spec.eps == 1.0 && spec.equal_nu()) return IrwinHall{};
    return PowerLaw{};
}

inline std::string mode_name(const VolumeMode& m) {
    return std::visit(
        [](const auto& v) -> std::string {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, Exact2D>) return "exact2d";
            else if constexpr (std::is_same_v<T, IrwinHall>) return "irwinhall";
            else if constexpr (std::is_same_v<T, PowerLaw>) return "powerlaw";
            else return "montecarlo";
        },
        m);
}

/// Score J(x) = h(nu' x^eps; nu) with the volume h evaluated in the chosen mode.
///
/// MonteCarlo mode draws its sample once at construction and scores by the
/// empirical CDF of nu' X^eps, so repeated scoring is cheap and deterministic.
class EllipsoidScorer {
public:
    EllipsoidScorer(EllipsoidSpec spec, VolumeMode mode) : spec_(std::move(spec)), mode_(mode) {
        spec_.validate();
        if (std::holds_alternative<Exact2D>(mode_) && spec_.K() != 2) {
            throw ParameterError("ellipsoid: exact2d mode requires K = 2");
        }
        if (std::holds_alternative<IrwinHall>(mode_)) {
            if (spec_.eps != 1.0 || !spec_.equal_nu()) {
                throw ParameterError("ellipsoid: irwinhall mode requires eps = 1 and equal nu");
            }
            IrwinHallTable::get(spec_.K());
        }
        if (const auto* mc = std::get_if<MonteCarlo>(&mode_)) {
            if (mc->samples < 1) throw ParameterError("ellipsoid: montecarlo samples must be >= 1");
            std::mt19937_64 gen(mc->seed);
            std::uniform_real_distribution<double> unif(0.0, 1.0);
            std::vector<double> x(spec_.nu.size());
            mc_sorted_.resize(static_cast<std::size_t>(mc->samples));
            for (auto& u : mc_sorted_) {
                for (auto& v : x) v = unif(gen);
                u = ellipsoid_u(x, spec_);
            }
            std::sort(mc_sorted_.begin(), mc_sorted_.end());
        }
    }

    explicit EllipsoidScorer(EllipsoidSpec spec) : EllipsoidScorer(spec, auto_volume_mode(spec)) {}

    const EllipsoidSpec& spec() const { return spec_; }
    const VolumeMode& mode() const { return mode_; }

    /// h(u) in the configured mode.
    double volume(double u) const {
        if (!(u > 0.0)) return 0.0;
        if (std::holds_alternative<Exact2D>(mode_)) return h_exact_2d(u, spec_);
        if (std::holds_alternative<IrwinHall>(mode_)) {
            const double K = spec_.K();
            return irwin_hall_cdf(std::min(u / spec_.nu.front(), K), spec_.K());
        }
        if (std::holds_alternative<PowerLaw>(mode_)) return h_approx(u, spec_);
        const auto it = std::upper_bound(mc_sorted_.begin(), mc_sorted_.end(), u);
        return static_cast<double>(it - mc_sorted_.begin()) / static_cast<double>(mc_sorted_.size());
    }

    double operator()(std::span<const double> x) const {
        detail::check_dim(x, spec_.nu.size(), "score_ellipsoid");
        detail::check_unit_cube(x, "score_ellipsoid");
        return volume(ellipsoid_u(x, spec_));
    }

private:
    EllipsoidSpec spec_;
    VolumeMode mode_;
    std::vector<double> mc_sorted_;
};

inline double score_ellipsoid(std::span<const double> x, const EllipsoidSpec& spec, const VolumeMode& mode) {
    return EllipsoidScorer(spec, mode)(x);
}

// ---------------------------------------------------------------------------
// Oracle likelihood-ratio regions {x : g(x) >= v}
// ---------------------------------------------------------------------------

/// ln g_k(u) tabulated on a logit(u) grid and interpolated linearly.
class TabulatedDensityRatio {
public:
    static constexpr double kLogitMin = -460.0;
    static constexpr double kLogitMid = -60.0;
    static constexpr double kLogitMax = 20.7;

    explicit TabulatedDensityRatio(const AltSpec& alt, int coarse_nodes = 1000, int fine_nodes = 6000) {
        if (coarse_nodes < 2 || fine_nodes < 2) throw ParameterError("TabulatedDensityRatio: too few nodes");
        for (int i = 0; i < coarse_nodes; ++i) {
            grid_.push_back(kLogitMin + (kLogitMid - kLogitMin) * i / coarse_nodes);
        }
        for (int i = 0; i <= fine_nodes; ++i) {
            grid_.push_back(kLogitMid + (kLogitMax - kLogitMid) * i / fine_nodes);
        }
        values_.reserve(grid_.size());
        for (double L : grid_) values_.push_back(alt.log_ratio(inv_logit(L)));
    }

    static double inv_logit(double L) { return L < 0.0 ? std::exp(L) / (1.0 + std::exp(L)) : 1.0 / (1.0 + std::exp(-L)); }

    static double logit(double u) { return std::log(u) - std::log1p(-u); }

    double log_ratio(double u) const {
        if (!(u >= 0.0 && u <= 1.0)) detail::domain_fail("density ratio: u must lie in [0, 1]");
        if (u == 0.0) return values_.front();
        if (u == 1.0) return values_.back();
        const double L = logit(u);
        if (L <= grid_.front()) return values_.front();
        if (L >= grid_.back()) return values_.back();
        const auto it = std::upper_bound(grid_.begin(), grid_.end(), L);
        const std::size_t j = static_cast<std::size_t>(it - grid_.begin());
        const double w = (L - grid_[j - 1]) / (grid_[j] - grid_[j - 1]);
        return values_[j - 1] + w * (values_[j] - values_[j - 1]);
    }

    double min_value() const { return *std::min_element(values_.begin(), values_.end()); }
    double max_value() const { return *std::max_element(values_.begin(), values_.end()); }

private:
    std::vector<double> grid_;
    std::vector<double> values_;
};

struct OracleMc {
    std::int64_t samples = 1'000'000;
    std::uint64_t seed = 20240601;
};

/// p(x) = h(g(x)) with h(v) = l{g >= v} estimated from a sorted Monte Carlo sample of ln g.
class OracleTable {
public:
    OracleTable(std::span<const AltSpec> alts, OracleMc mc) {
        if (alts.empty()) throw ParameterError("oracle: at least one coordinate is required");
        if (mc.samples < 2) throw ParameterError("oracle: at least two Monte Carlo samples are required");
        bool signal = false;
        for (const auto& a : alts) signal = signal || a.delta() > 0.0;
        if (!signal) throw DegenerateError("oracle: g is constant (no coordinate carries signal)");
        for (const auto& a : alts) ratios_.emplace_back(a);
        std::mt19937_64 gen(mc.seed);
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        neg_log_g_.resize(static_cast<std::size_t>(mc.samples));
        std::vector<double> x(alts.size());
        for (auto& z : neg_log_g_) {
            for (auto& v : x) v = unif(gen);
            z = -log_g(x);
        }
        std::sort(neg_log_g_.begin(), neg_log_g_.end());
        if (!(neg_log_g_.back() - neg_log_g_.front() > 1e-12)) {
            throw DegenerateError("oracle: g is numerically constant");
        }
    }

    int dim() const { return static_cast<int>(ratios_.size()); }

    double log_g(std::span<const double> x) const {
        double s = 0.0;
        for (std::size_t k = 0; k < ratios_.size(); ++k) s += ratios_[k].log_ratio(x[k]);
        return s;
    }

    /// h(g(x)); clamps to 0 above the largest sampled g and to 1 below the smallest.
    double p_value(std::span<const double> x) const {
        const double z = -log_g(x);
        const auto& a = neg_log_g_;
        if (z < a.front()) return 0.0;
        if (z >= a.back()) return 1.0;
        const auto it = std::upper_bound(a.begin(), a.end(), z);
        const std::size_t j = static_cast<std::size_t>(it - a.begin());
        const double span = a[j] - a[j - 1];
        const double frac = span > 0.0 ? (z - a[j - 1]) / span : 0.0;
        return (static_cast<double>(j) + frac) / static_cast<double>(a.size() + 1);
    }

private:
    std::vector<TabulatedDensityRatio> ratios_;
    std::vector<double> neg_log_g_;
};

// ---------------------------------------------------------------------------
// RegionFamily
// ---------------------------------------------------------------------------

struct MinRegion {
    int K;
};
struct ProductRegion {
    int K;
};
struct StoufferRegion {
    std::vector<double> w;
};
struct RectangleRegion {
    std::vector<double> c;
};
struct EllipsoidRegion {
    std::shared_ptr<const EllipsoidScorer> scorer;
};
struct OracleRegion {
    std::shared_ptr<const OracleTable> table;
};

/// A nested family {D_t} carried by its score function.
class RegionFamily {
public:
    using Kind = std::variant<MinRegion, ProductRegion, StoufferRegion, RectangleRegion, EllipsoidRegion, OracleRegion>;

    static RegionFamily min(int K) {
        if (K < 1) throw ParameterError("min region: K must be >= 1");
        return RegionFamily(MinRegion{K});
    }
    static RegionFamily product(int K) {
        if (K < 1) throw ParameterError("product region: K must be >= 1");
        return RegionFamily(ProductRegion{K});
    }
    static RegionFamily stouffer(std::vector<double> w) {
        if (w.empty()) throw ParameterError("stouffer region: weights must be nonempty");
        for (double v : w) {
            if (!(v > 0.0)) throw ParameterError("stouffer region: weights must be positive");
        }
        return RegionFamily(StoufferRegion{std::move(w)});
    }
    static RegionFamily rectangle(std::vector<double> c) {
        if (c.empty()) throw ParameterError("rectangle region: c must be nonempty");
        check_rectangle_c(c);
        return RegionFamily(RectangleRegion{std::move(c)});
    }
    static RegionFamily ellipsoid(EllipsoidSpec spec, VolumeMode mode) {
        return RegionFamily(EllipsoidRegion{std::make_shared<const EllipsoidScorer>(std::move(spec), mode)});
    }
    static RegionFamily ellipsoid(EllipsoidSpec spec) {
        auto mode = auto_volume_mode(spec);
        return ellipsoid(std::move(spec), mode);
    }
    static RegionFamily oracle(std::span<const AltSpec> alts, OracleMc mc = {}) {
        return RegionFamily(OracleRegion{std::make_shared<const OracleTable>(alts, mc)});
    }

    const Kind& kind() const { return kind_; }

    int dim() const {
        return std::visit(
            [](const auto& k) -> int {
                using T = std::decay_t<decltype(k)>;
                if constexpr (std::is_same_v<T, MinRegion> || std::is_same_v<T, ProductRegion>) return k.K;
                else if constexpr (std::is_same_v<T, StoufferRegion>) return static_cast<int>(k.w.size());
                else if constexpr (std::is_same_v<T, RectangleRegion>) return static_cast<int>(k.c.size());
                else if constexpr (std::is_same_v<T, EllipsoidRegion>) return k.scorer->spec().K();
                else return k.table->dim();
            },
            kind_);
    }

    std::string name() const {
        static constexpr const char* names[] = {"min", "product", "stouffer", "rectangle", "ellipsoid", "oracle"};
        return names[kind_.index()];
    }

    double score(std::span<const double> x) const {
        detail::check_dim(x, static_cast<std::size_t>(dim()), "RegionFamily::score");
        return std::visit(
            [x](const auto& k) -> double {
                using T = std::decay_t<decltype(k)>;
                if constexpr (std::is_same_v<T, MinRegion>) return score_min(x);
                else if constexpr (std::is_same_v<T, ProductRegion>) return score_product(x);
                else if constexpr (std::is_same_v<T, StoufferRegion>) return score_stouffer(x, k.w);
                else if constexpr (std::is_same_v<T, RectangleRegion>) return score_rectangle(x, k.c);
                else if constexpr (std::is_same_v<T, EllipsoidRegion>) return (*k.scorer)(x);
                else {
                    detail::check_unit_cube(x, "oracle score");
                    return k.table->p_value(x);
                }
            },
            kind_);
    }

private:
    explicit RegionFamily(Kind k) : kind_(std::move(k)) {}
    Kind kind_;
};

}  // namespace mvfdr

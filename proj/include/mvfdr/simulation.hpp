#pragma once

// Random-effects Monte Carlo harness: K-variate normal samples per null,
// one-sample t statistics, p-values under the central t law, and aggregated
// FDR / pFDR / power across independent runs.

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "mvfdr/error.hpp"
#include "mvfdr/procedures.hpp"
#include "mvfdr/regions.hpp"
#include "mvfdr/theory.hpp"

namespace mvfdr {

enum class SigmaForm { Form61, Form62 };

enum class MethodKind { Ellipsoid, Rectangle, Min, Product, Stouffer, Oracle };

enum class Baseline { ByProduct, BySum, ByMax };

inline std::string to_string(MethodKind m) {
    switch (m) {
        case MethodKind::Ellipsoid: return "ellipsoid";
        case MethodKind::Rectangle: return "rectangle";
        case MethodKind::Min: return "min";
        case MethodKind::Product: return "product";
        case MethodKind::Stouffer: return "stouffer";
        case MethodKind::Oracle: return "oracle";
    }
    return "?";
}

inline std::string to_string(Baseline b) {
    switch (b) {
        case Baseline::ByProduct: return "by-product";
        case Baseline::BySum: return "by-sum";
        case Baseline::ByMax: return "by-max";
    }
    return "?";
}

inline std::string to_string(SigmaForm f) { return f == SigmaForm::Form61 ? "form61" : "form62"; }

struct ExperimentConfig {
    double a = 0.05;
    double alpha = 0.15;
    int n_nulls = 5000;
    int n_runs = 500;
    int K = 2;
    int df = 8;
    std::vector<double> mu;
    double r = 0.0;
    SigmaForm sigma_form = SigmaForm::Form62;
    MethodKind method = MethodKind::Ellipsoid;
    /// nu, c or Stouffer weights depending on method; empty selects the defaults
    /// (nu = gamma, c_k = (gbar/gamma_k)^{1/eps}, unit weights).
    std::vector<double> method_params;
    std::optional<VolumeMode> volume_mode;
    std::uint64_t seed = 1;
    int threads = 1;

    void validate() const {
        if (!(a >= 0.0 && a < 1.0)) throw ParameterError("config: a must lie in [0, 1)");
        if (!(alpha > 0.0 && alpha < 1.0)) throw ParameterError("config: alpha must lie in (0, 1)");
        if (n_nulls < 1) throw ParameterError("config: n_nulls must be >= 1");
        if (n_runs < 1) throw ParameterError("config: n_runs must be >= 1");
        if (K < 1) throw ParameterError("config: K must be >= 1");
        if (df < 1) throw ParameterError("config: df must be >= 1");
        if (mu.size() != static_cast<std::size_t>(K)) throw ParameterError("config: mu must have K entries");
        for (double m : mu) {
            if (!(m > 0.0)) throw ParameterError("config: every mu_k must be positive");
        }
        if (!(std::abs(r) < 1.0)) throw ParameterError("config: |r| must be < 1");
        if (!method_params.empty() && method_params.size() != static_cast<std::size_t>(K)) {
            throw ParameterError("config: method parameters must have K entries");
        }
        if (threads < 1) throw ParameterError("config: threads must be >= 1");
    }

    /// Noncentrality sqrt(df + 1) mu_k of coordinate k's t statistic.
    double delta(int k) const { return std::sqrt(df + 1.0) * mu[k]; }

    std::vector<AltSpec> alternatives() const {
        std::vector<AltSpec> out;
        for (int k = 0; k < K; ++k) out.push_back(AltSpec::t(df, delta(k)));
        return out;
    }
};

// ---------------------------------------------------------------------------
// Covariances
// ---------------------------------------------------------------------------

inline void require_pd(const Eigen::MatrixXd& s, const char* who) {
    Eigen::LLT<Eigen::MatrixXd> llt(s);
    if (llt.info() != Eigen::Success) throw ParameterError(std::string(who) + ": covariance is not positive definite");
}

/// Unit diagonal, off-diagonal 2r / (1 + r^2).
inline Eigen::MatrixXd sigma_61(double r, int K = 2) {
    const double rho = 2.0 * r / (1.0 + r * r);
    Eigen::MatrixXd s = Eigen::MatrixXd::Constant(K, K, rho);
    s.diagonal().setOnes();
    require_pd(s, "sigma_61");
    return s;
}

/// [1 + (K-1) r^2]^{-1} M'M with M = I + r (11' - I).
inline Eigen::MatrixXd sigma_62(double r, int K) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Constant(K, K, r);
    m.diagonal().setOnes();
    Eigen::MatrixXd s = (m.transpose() * m) / (1.0 + (K - 1) * r * r);
    require_pd(s, "sigma_62");
    return s;
}

inline Eigen::MatrixXd sigma_of(const ExperimentConfig& cfg) {
    return cfg.sigma_form == SigmaForm::Form61 ? sigma_61(cfg.r, cfg.K) : sigma_62(cfg.r, cfg.K);
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace detail

inline std::uint64_t run_seed(std::uint64_t seed, std::uint64_t run_index) {
    return detail::splitmix64(detail::splitmix64(seed) ^ detail::splitmix64(run_index + 0x632be59bd9b4e019ULL));
}

struct RunSample {
    TruthVector truth;
    PValueMatrix pvals;
    std::vector<double> stats;  ///< row-major n x K t statistics

    StatMatrixView stat_view() const { return {stats, pvals.cols()}; }
};

/// Draws one run of the random-effects model; a pure function of (cfg, run_index).
inline RunSample sample_run(const ExperimentConfig& cfg, std::uint64_t run_index, const Eigen::MatrixXd& chol_lower) {
    const int K = cfg.K;
    const int m = cfg.df + 1;
    std::mt19937_64 gen(run_seed(cfg.seed, run_index));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::bernoulli_distribution coin(cfg.a);

    RunSample out;
    out.truth.resize(cfg.n_nulls);
    out.stats.resize(static_cast<std::size_t>(cfg.n_nulls) * K);
    std::vector<double> pv(out.stats.size());
    std::vector<double> z(K), sum(K), sumsq(K);
    const double sqrt_m = std::sqrt(static_cast<double>(m));
    for (int i = 0; i < cfg.n_nulls; ++i) {
        const bool alt = coin(gen);
        out.truth[i] = alt ? 1 : 0;
        std::fill(sum.begin(), sum.end(), 0.0);
        std::fill(sumsq.begin(), sumsq.end(), 0.0);
        for (int j = 0; j < m; ++j) {
            for (auto& v : z) v = normal(gen);
            for (int k = 0; k < K; ++k) {
                double x = z[k];
                if (alt) {
                    x = cfg.mu[k];
                    for (int l = 0; l <= k; ++l) x += chol_lower(k, l) * z[l];
                }
                sum[k] += x;
                sumsq[k] += x * x;
            }
        }
        for (int k = 0; k < K; ++k) {
            const double mean = sum[k] / m;
            const double var = std::max((sumsq[k] - m * mean * mean) / (m - 1), 0.0);
            const double t = sqrt_m * mean / std::sqrt(var);
            const std::size_t at = static_cast<std::size_t>(i) * K + k;
            out.stats[at] = t;
            pv[at] = t_sf(t, cfg.df);
        }
    }
    out.pvals = PValueMatrix(cfg.n_nulls, K, std::move(pv));
    return out;
}

inline RunSample sample_run(const ExperimentConfig& cfg, std::uint64_t run_index) {
    cfg.validate();
    const Eigen::MatrixXd L = Eigen::LLT<Eigen::MatrixXd>(sigma_of(cfg)).matrixL();
    return sample_run(cfg, run_index, L);
}

/// Moves exact 0 and 1 p-values inside (0, 1) so quantile transforms stay finite.
inline PValueMatrix nudge_open(const PValueMatrix& p) {
    std::vector<double> v(p.data().begin(), p.data().end());
    for (auto& x : v) x = std::clamp(x, 1e-300, std::nextafter(1.0, 0.0));
    return PValueMatrix(p.rows(), p.cols(), std::move(v));
}

// ---------------------------------------------------------------------------
// Methods
// ---------------------------------------------------------------------------

/// Builds the configured region, filling defaulted parameters from the alternative.
inline RegionFamily make_region(const ExperimentConfig& cfg) {
    const auto& mp = cfg.method_params;
    switch (cfg.method) {
        case MethodKind::Min: return RegionFamily::min(cfg.K);
        case MethodKind::Product: return RegionFamily::product(cfg.K);
        case MethodKind::Stouffer:
            return RegionFamily::stouffer(mp.empty() ? std::vector<double>(cfg.K, 1.0) : mp);
        case MethodKind::Oracle: {
            const auto alts = cfg.alternatives();
            return RegionFamily::oracle(alts);
        }
        case MethodKind::Ellipsoid:
        case MethodKind::Rectangle: break;
    }
    const auto alts = cfg.alternatives();
    const double eps = common_eps(alts);
    if (cfg.method == MethodKind::Rectangle) {
        if (!mp.empty()) return RegionFamily::rectangle(mp);
        std::vector<double> gamma;
        for (const auto& s : alts) gamma.push_back(s.gamma());
        return RegionFamily::rectangle(optimal_params(gamma, eps).c);
    }
    EllipsoidSpec spec{mp, eps};
    if (mp.empty()) {
        for (const auto& s : alts) spec.nu.push_back(s.gamma());
    }
    return cfg.volume_mode ? RegionFamily::ellipsoid(spec, *cfg.volume_mode) : RegionFamily::ellipsoid(spec);
}

// ---------------------------------------------------------------------------
// Aggregation
// ---------------------------------------------------------------------------

struct RunCounts {
    std::size_t R = 0;
    std::size_t V = 0;
    std::size_t n_false = 0;

    std::size_t D() const { return R - V; }
};

struct Estimate {
    double mean = 0.0;
    double se = 0.0;
    std::size_t count = 0;
};

inline Estimate estimate(const std::vector<double>& xs) {
    Estimate e;
    e.count = xs.size();
    if (xs.empty()) return e;
    double s = 0.0;
    for (double x : xs) s += x;
    e.mean = s / xs.size();
    if (xs.size() > 1) {
        double ss = 0.0;
        for (double x : xs) ss += (x - e.mean) * (x - e.mean);
        e.se = std::sqrt(ss / (xs.size() - 1) / xs.size());
    }
    return e;
}

struct RunStats {
    std::vector<RunCounts> runs;
    Estimate fdr;
    Estimate pfdr;  ///< over runs with R > 0; count is the number of such runs
    Estimate power;

    static RunStats from(std::vector<RunCounts> runs) {
        RunStats s;
        std::vector<double> fdp, pfdp, pow;
        for (const auto& c : runs) {
            const double q = c.R > 0 ? static_cast<double>(c.V) / c.R : 0.0;
            fdp.push_back(q);
            if (c.R > 0) pfdp.push_back(q);
            pow.push_back(static_cast<double>(c.D()) / std::max<std::size_t>(c.n_false, 1));
        }
        s.fdr = estimate(fdp);
        s.pfdr = estimate(pfdp);
        s.power = estimate(pow);
        s.runs = std::move(runs);
        return s;
    }
};

inline RunCounts count_rejections(const RejectionResult& res, const TruthVector& truth) {
    RunCounts c;
    c.R = res.rejected.size();
    for (std::size_t i : res.rejected) c.V += truth[i] ? 0 : 1;
    c.n_false = static_cast<std::size_t>(std::count(truth.begin(), truth.end(), std::uint8_t{1}));
    return c;
}

inline bool needs_open_pvalues(const RegionFamily& region) {
    return std::holds_alternative<StoufferRegion>(region.kind());
}

inline RejectionResult apply_region(const RegionFamily& region, const RunSample& run, double alpha) {
    if (needs_open_pvalues(region)) return nested_region_test(nudge_open(run.pvals), region, alpha);
    return nested_region_test(run.pvals, region, alpha);
}

namespace detail {

/// Calls body(run_index) for every run, spreading runs across threads by
/// index. Results are written by index, so the outcome is thread-count invariant.
template <class Body>
void for_each_run(int n_runs, int threads, Body&& body) {
    if (threads <= 1 || n_runs <= 1) {
        for (int i = 0; i < n_runs; ++i) body(i);
        return;
    }
    std::vector<std::exception_ptr> errors(threads);
    {
        std::vector<std::jthread> pool;
        for (int t = 0; t < threads; ++t) {
            pool.emplace_back([&, t] {
                try {
                    for (int i = t; i < n_runs; i += threads) body(i);
                } catch (...) {
                    errors[t] = std::current_exception();
                }
            });
        }
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

}  // namespace detail

/// Runs every region on the same simulated data (common random numbers).
inline std::vector<RunStats> run_experiment_multi(const ExperimentConfig& cfg, const std::vector<RegionFamily>& regions) {
    cfg.validate();
    for (const auto& reg : regions) {
        if (reg.dim() != cfg.K) throw ParameterError("run_experiment: region dimension does not match K");
    }
    const Eigen::MatrixXd L = Eigen::LLT<Eigen::MatrixXd>(sigma_of(cfg)).matrixL();
    std::vector<std::vector<RunCounts>> counts(regions.size(), std::vector<RunCounts>(cfg.n_runs));
    detail::for_each_run(cfg.n_runs, cfg.threads, [&](int i) {
        const RunSample run = sample_run(cfg, static_cast<std::uint64_t>(i), L);
        for (std::size_t m = 0; m < regions.size(); ++m) {
            counts[m][i] = count_rejections(apply_region(regions[m], run, cfg.alpha), run.truth);
        }
    });
    std::vector<RunStats> out;
    for (auto& c : counts) out.push_back(RunStats::from(std::move(c)));
    return out;
}

inline RunStats run_experiment(const ExperimentConfig& cfg) {
    return run_experiment_multi(cfg, {make_region(cfg)}).front();
}

// ---------------------------------------------------------------------------
// Matched-power comparison
// ---------------------------------------------------------------------------

/// Competitor order, ascending = more significant.
inline std::vector<double> baseline_order(Baseline b, const RunSample& run) {
    std::vector<double> out;
    switch (b) {
        case Baseline::ByProduct: return combine_log_product_pvals(run.pvals);
        case Baseline::BySum: {
            const std::vector<double> ones(run.pvals.cols(), 1.0);
            out = combine_sum(run.stat_view(), ones);
            break;
        }
        case Baseline::ByMax: out = combine_max(run.stat_view()); break;
    }
    for (auto& v : out) v = -v;
    return out;
}

struct BaselineRow {
    Baseline baseline;
    Estimate fdr;   ///< mean FDP over all runs, 0 where the reference rejected no false null
    Estimate pfdr;  ///< mean FDP over runs with D > 0
};

struct ComparisonTable {
    RunStats reference;
    std::vector<BaselineRow> rows;
};

inline ComparisonTable run_comparison(const ExperimentConfig& cfg, const std::vector<Baseline>& baselines) {
    cfg.validate();
    const RegionFamily region = make_region(cfg);
    const Eigen::MatrixXd L = Eigen::LLT<Eigen::MatrixXd>(sigma_of(cfg)).matrixL();
    std::vector<RunCounts> counts(cfg.n_runs);
    std::vector<std::vector<MatchedResult>> matched(baselines.size(), std::vector<MatchedResult>(cfg.n_runs));
    detail::for_each_run(cfg.n_runs, cfg.threads, [&](int i) {
        const RunSample run = sample_run(cfg, static_cast<std::uint64_t>(i), L);
        const RejectionResult ref = apply_region(region, run, cfg.alpha);
        counts[i] = count_rejections(ref, run.truth);
        for (std::size_t b = 0; b < baselines.size(); ++b) {
            matched[b][i] = matched_power_comparison(ref, baseline_order(baselines[b], run), run.truth);
        }
    });
    ComparisonTable table;
    table.reference = RunStats::from(std::move(counts));
    for (std::size_t b = 0; b < baselines.size(); ++b) {
        std::vector<double> all, hit;
        for (const auto& m : matched[b]) {
            all.push_back(m.matched ? m.fdp : 0.0);
            if (m.matched) hit.push_back(m.fdp);
        }
        table.rows.push_back({baselines[b], estimate(all), estimate(hit)});
    }
    return table;
}

// ---------------------------------------------------------------------------
// Tuning scan
// ---------------------------------------------------------------------------

struct ScanRow {
    double log2_s;
    MethodKind method;
    RunStats stats;
};

/// Power and (p)FDR of both procedures along nu = (s^eps g1, g2 / s^eps) and c = (s c1, c2 / s).
inline std::vector<ScanRow> tune_scan(const ExperimentConfig& cfg, const std::vector<double>& s_grid) {
    cfg.validate();
    if (cfg.K != 2) throw ParameterError("tune_scan: requires K = 2");
    const auto alts = cfg.alternatives();
    const double eps = common_eps(alts);
    const std::vector<double> gamma{alts[0].gamma(), alts[1].gamma()};
    const auto opt = optimal_params(gamma, eps);
    std::vector<RegionFamily> regions;
    for (double s : s_grid) {
        if (!(s > 0.0)) throw ParameterError("tune_scan: s must be positive");
        const double se = std::pow(s, eps);
        EllipsoidSpec spec{{se * gamma[0], gamma[1] / se}, eps};
        regions.push_back(cfg.volume_mode ? RegionFamily::ellipsoid(spec, *cfg.volume_mode) : RegionFamily::ellipsoid(spec));
        regions.push_back(RegionFamily::rectangle({s * opt.c[0], opt.c[1] / s}));
    }
    auto stats = run_experiment_multi(cfg, regions);
    std::vector<ScanRow> rows;
    for (std::size_t j = 0; j < s_grid.size(); ++j) {
        const double l2 = std::log2(s_grid[j]);
        rows.push_back({l2, MethodKind::Ellipsoid, std::move(stats[2 * j])});
        rows.push_back({l2, MethodKind::Rectangle, std::move(stats[2 * j + 1])});
    }
    return rows;
}

}  // namespace mvfdr

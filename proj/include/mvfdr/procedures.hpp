#pragma once

// BH on scores, nested-region testing, the oracle likelihood-ratio procedure,
// direct-combination baselines and the matched-power comparison.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "mvfdr/error.hpp"
#include "mvfdr/regions.hpp"
#include "mvfdr/theory.hpp"

namespace mvfdr {

/// Row-major n x K matrix of p-values in [0, 1].
class PValueMatrix {
public:
    PValueMatrix() = default;

    PValueMatrix(std::size_t n, std::size_t K, std::vector<double> values)
        : n_(n), K_(K), values_(std::move(values)) {
        if (n == 0 || K == 0) throw ParameterError("PValueMatrix: n and K must be >= 1");
        if (values_.size() != n * K) throw ParameterError("PValueMatrix: value count must equal n*K");
        for (std::size_t i = 0; i < values_.size(); ++i) {
            const double v = values_[i];
            if (!(v >= 0.0 && v <= 1.0)) {
                throw DomainError("PValueMatrix: entry (" + std::to_string(i / K) + ", " +
                                  std::to_string(i % K) + ") outside [0, 1]");
            }
        }
    }

    std::size_t rows() const { return n_; }
    std::size_t cols() const { return K_; }
    std::span<const double> row(std::size_t i) const { return {values_.data() + i * K_, K_}; }
    double operator()(std::size_t i, std::size_t k) const { return values_[i * K_ + k]; }
    std::span<const double> data() const { return values_; }

private:
    std::size_t n_ = 0;
    std::size_t K_ = 0;
    std::vector<double> values_;
};

struct RejectionResult {
    std::vector<std::size_t> rejected;  ///< ascending indices
    double cutoff = 0.0;                ///< s_(l), or 0 when nothing is rejected
    std::size_t l = 0;
    std::vector<double> scores;
    double tau = 0.0;

    bool is_rejected(std::size_t i) const { return std::binary_search(rejected.begin(), rejected.end(), i); }
};

/// theta_i = 1 marks a false null.
using TruthVector = std::vector<std::uint8_t>;

/// Benjamini-Hochberg step-up on scores; ties at the cutoff are rejected.
inline RejectionResult bh(std::vector<double> scores, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ParameterError("bh: alpha must lie in (0, 1)");
    for (double s : scores) {
        if (!(s >= 0.0 && s <= 1.0)) throw DomainError("bh: scores must lie in [0, 1]");
    }
    const std::size_t n = scores.size();
    std::vector<double> sorted = scores;
    std::sort(sorted.begin(), sorted.end());
    std::size_t l = 0;
    const double dn = static_cast<double>(n);
    for (std::size_t k = n; k >= 1; --k) {
        if (sorted[k - 1] * dn <= static_cast<double>(k) * alpha) {
            l = k;
            break;
        }
    }
    RejectionResult res;
    res.l = l;
    if (l > 0) {
        res.cutoff = sorted[l - 1];
        for (std::size_t i = 0; i < n; ++i) {
            if (scores[i] <= res.cutoff) res.rejected.push_back(i);
        }
        res.l = res.rejected.size();
    }
    res.tau = res.cutoff;
    res.scores = std::move(scores);
    return res;
}

/// Scores every row with J and applies BH; tau is the cutoff.
inline RejectionResult nested_region_test(const PValueMatrix& pvals, const RegionFamily& region, double alpha) {
    if (static_cast<std::size_t>(region.dim()) != pvals.cols()) {
        throw ParameterError("nested_region_test: region dimension " + std::to_string(region.dim()) +
                             " does not match K = " + std::to_string(pvals.cols()));
    }
    std::vector<double> scores(pvals.rows());
    for (std::size_t i = 0; i < pvals.rows(); ++i) scores[i] = region.score(pvals.row(i));
    return bh(std::move(scores), alpha);
}

/// BH on p_i = h(g(xi_i)) for the known product alternative.
inline RejectionResult oracle_lr_test(const PValueMatrix& pvals, std::span<const AltSpec> alts, double alpha,
                                      OracleMc mc = {}) {
    if (alts.size() != pvals.cols()) throw ParameterError("oracle_lr_test: one alternative per coordinate is required");
    return nested_region_test(pvals, RegionFamily::oracle(alts, mc), alpha);
}

// ---------------------------------------------------------------------------
// Direct combinations
// ---------------------------------------------------------------------------

/// Row-major statistic matrix view.
struct StatMatrixView {
    std::span<const double> values;
    std::size_t K;

    std::size_t rows() const { return K == 0 ? 0 : values.size() / K; }
    std::span<const double> row(std::size_t i) const { return values.subspan(i * K, K); }
};

/// max_k X_ik; larger is more significant.
inline std::vector<double> combine_max(StatMatrixView stats) {
    std::vector<double> out(stats.rows());
    for (std::size_t i = 0; i < out.size(); ++i) {
        auto r = stats.row(i);
        out[i] = *std::max_element(r.begin(), r.end());
    }
    return out;
}

/// sum_k c_k X_ik; larger is more significant.
inline std::vector<double> combine_sum(StatMatrixView stats, std::span<const double> c) {
    if (c.size() != stats.K) throw ParameterError("combine_sum: weight count does not match K");
    std::vector<double> out(stats.rows());
    for (std::size_t i = 0; i < out.size(); ++i) {
        auto r = stats.row(i);
        out[i] = std::inner_product(r.begin(), r.end(), c.begin(), 0.0);
    }
    return out;
}

/// prod_k xi_ik; smaller is more significant.
inline std::vector<double> combine_product_pvals(const PValueMatrix& pvals) {
    std::vector<double> out(pvals.rows());
    for (std::size_t i = 0; i < out.size(); ++i) {
        double p = 1.0;
        for (double v : pvals.row(i)) p *= v;
        out[i] = p;
    }
    return out;
}

/// Sum of ln xi_ik, the product ordering without underflow.
inline std::vector<double> combine_log_product_pvals(const PValueMatrix& pvals) {
    std::vector<double> out(pvals.rows());
    for (std::size_t i = 0; i < out.size(); ++i) {
        double s = 0.0;
        for (double v : pvals.row(i)) s += std::log(v);
        out[i] = s;
    }
    return out;
}

struct MatchedResult {
    double fdp = 0.0;
    bool matched = false;
    std::size_t R = 0;  ///< rejections made by the competitor
    std::size_t V = 0;  ///< true nulls among them
    std::size_t D = 0;  ///< false nulls rejected by the reference
};

/// Walks the competitor order (ascending = more significant) until it has
/// rejected as many false nulls as the reference procedure did.
inline MatchedResult matched_power_comparison(const RejectionResult& reference, std::span<const double> competitor_order,
                                              const TruthVector& truth) {
    if (competitor_order.size() != truth.size()) {
        throw ParameterError("matched_power_comparison: order and truth lengths differ");
    }
    MatchedResult out;
    for (std::size_t i : reference.rejected) {
        if (i >= truth.size()) throw ParameterError("matched_power_comparison: rejected index out of range");
        out.D += truth[i] ? 1 : 0;
    }
    if (out.D == 0) return out;
    const std::size_t total_false = static_cast<std::size_t>(std::count(truth.begin(), truth.end(), std::uint8_t{1}));
    if (total_false < out.D) throw ParameterError("matched_power_comparison: competitor cannot reach D false nulls");
    std::vector<std::size_t> idx(truth.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return competitor_order[a] < competitor_order[b]; });
    std::size_t found = 0;
    for (std::size_t i : idx) {
        ++out.R;
        if (truth[i]) {
            if (++found == out.D) break;
        } else {
            ++out.V;
        }
    }
    out.matched = true;
    out.fdp = static_cast<double>(out.V) / static_cast<double>(out.R);
    return out;
}

}  // namespace mvfdr

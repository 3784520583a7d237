#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <map>

#include "mvfdr/simulation.hpp"
#include "oracles.hpp"

using namespace mvfdr;

namespace {

ExperimentConfig group1_cfg() {
    ExperimentConfig c;
    c.a = 0.05;
    c.alpha = 0.15;
    c.df = 8;
    c.mu = {0.6, 0.4};
    c.K = 2;
    c.sigma_form = SigmaForm::Form61;
    c.seed = 42;
    return c;
}

/// Two-sample Kolmogorov-Smirnov distance.
double ks_two_sample(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x) ++i;
        while (j < b.size() && b[j] <= x) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / a.size() - static_cast<double>(j) / b.size()));
    }
    return d;
}

std::vector<RegionFamily> all_kinds(const ExperimentConfig& cfg) {
    const auto alts = cfg.alternatives();
    std::vector<double> gamma;
    for (const auto& a : alts) gamma.push_back(a.gamma());
    const auto opt = optimal_params(gamma, common_eps(alts));
    return {
        RegionFamily::ellipsoid({gamma, common_eps(alts)}),
        RegionFamily::rectangle(opt.c),
        RegionFamily::min(cfg.K),
        RegionFamily::product(cfg.K),
        RegionFamily::stouffer(std::vector<double>(cfg.K, 1.0)),
        RegionFamily::oracle(alts),
    };
}

}  // namespace

TEST(Sigma, Forms) {
    for (int K : {2, 3, 5}) {
        EXPECT_TRUE(sigma_61(0.0, K).isIdentity(0.0));
        EXPECT_TRUE(sigma_62(0.0, K).isIdentity(0.0));
    }
    const auto s61 = sigma_61(0.2);
    EXPECT_NEAR(s61(0, 1), 5.0 / 13.0, 1e-15);
    EXPECT_EQ(s61(0, 0), 1.0);
    for (double r : {0.2, -0.2, 0.5, -0.4}) {
        const auto s = sigma_62(r, 3);
        for (int k = 0; k < 3; ++k) EXPECT_NEAR(s(k, k), 1.0, 1e-15);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
        EXPECT_GT(es.eigenvalues().minCoeff(), 0.0);
    }
    // M = I + r(11' - I) is singular at r = -1/(K-1).
    EXPECT_THROW(sigma_62(-0.5, 3), ParameterError);
}

TEST(Config, Validation) {
    auto c = group1_cfg();
    EXPECT_NO_THROW(c.validate());
    c.mu = {0.6};
    EXPECT_THROW(c.validate(), ParameterError);
    c = group1_cfg();
    c.alpha = 1.0;
    EXPECT_THROW(c.validate(), ParameterError);
    c = group1_cfg();
    c.r = 1.0;
    EXPECT_THROW(c.validate(), ParameterError);
    c = group1_cfg();
    c.method_params = {1.0};
    EXPECT_THROW(c.validate(), ParameterError);
    c = group1_cfg();
    EXPECT_NEAR(c.delta(0), 1.8, 1e-15);
    EXPECT_NEAR(c.delta(1), 1.2, 1e-15);
}

TEST(SampleRun, NullCalibration) {
    auto c = group1_cfg();
    c.a = 0.0;
    c.n_nulls = 100000;
    const auto run = sample_run(c, 0);
    EXPECT_EQ(std::count(run.truth.begin(), run.truth.end(), 1), 0);
    const double crit = oracle::ks_critical_1pct(c.n_nulls);
    for (std::size_t k = 0; k < 2; ++k) {
        std::vector<double> col;
        for (std::size_t i = 0; i < run.pvals.rows(); ++i) col.push_back(run.pvals(i, k));
        EXPECT_LT(oracle::ks_uniform(col), crit) << k;
    }
    const auto open = nudge_open(run.pvals);
    const auto alts = c.alternatives();
    const auto c_opt = optimal_params(std::vector<double>{alts[0].gamma(), alts[1].gamma()}, common_eps(alts)).c;
    // The rectangle score is only a volume while every side t c_k stays inside the cube.
    const double rect_upper = std::pow(1.0 / std::max(c_opt[0], c_opt[1]), 2);
    for (const auto& reg : all_kinds(c)) {
        std::vector<double> s;
        for (std::size_t i = 0; i < open.rows(); ++i) s.push_back(reg.score(open.row(i)));
        const double upper = reg.name() == "rectangle" ? rect_upper : 1.0;
        const double d = upper < 1.0 ? oracle::ks_uniform_below(s, upper) : oracle::ks_uniform(s);
        EXPECT_LT(d, crit) << reg.name();
    }
}

TEST(SampleRun, FalseNullMarginalsAreNoncentralT) {
    for (double r : {0.0, 0.2}) {
        ExperimentConfig c;
        c.a = 0.5;
        c.df = 4;
        c.K = 3;
        c.mu = {0.5, 0.65, 0.8};
        c.r = r;
        c.n_nulls = 100000;
        c.seed = 8;
        const auto run = sample_run(c, 3);
        for (int k = 0; k < 3; ++k) {
            std::vector<double> t;
            for (std::size_t i = 0; i < run.truth.size(); ++i) {
                if (run.truth[i]) t.push_back(run.stats[i * 3 + k]);
            }
            const auto ref = oracle::sample_noncentral_t(c.df, c.delta(k), 100000, 100 + k);
            const double n = static_cast<double>(t.size()), m = static_cast<double>(ref.size());
            EXPECT_LT(ks_two_sample(t, ref), 1.628 * std::sqrt((n + m) / (n * m))) << "r=" << r << " k=" << k;
        }
    }
}

TEST(SampleRun, Deterministic) {
    auto c = group1_cfg();
    c.n_nulls = 500;
    const auto a = sample_run(c, 7), b = sample_run(c, 7), other = sample_run(c, 8);
    EXPECT_EQ(a.truth, b.truth);
    EXPECT_EQ(a.stats, b.stats);
    EXPECT_NE(a.stats, other.stats);
    EXPECT_NE(run_seed(1, 0), run_seed(2, 0));
    EXPECT_NE(run_seed(1, 0), run_seed(1, 1));
}

TEST(RunExperiment, IdenticalAcrossThreadCounts) {
    auto c = group1_cfg();
    c.n_nulls = 1000;
    c.n_runs = 40;
    c.threads = 1;
    const auto one = run_experiment(c);
    for (int t : {2, 3, 8}) {
        c.threads = t;
        const auto many = run_experiment(c);
        ASSERT_EQ(many.runs.size(), one.runs.size());
        for (std::size_t i = 0; i < one.runs.size(); ++i) {
            EXPECT_EQ(many.runs[i].R, one.runs[i].R);
            EXPECT_EQ(many.runs[i].V, one.runs[i].V);
            EXPECT_EQ(many.runs[i].n_false, one.runs[i].n_false);
        }
        EXPECT_EQ(many.fdr.mean, one.fdr.mean);
        EXPECT_EQ(many.power.mean, one.power.mean);
    }
}

TEST(RunExperiment, FdrEqualsScaledAlphaForEveryKind) {
    // 2000 runs of 1000 nulls; BH on uniform scores gives FDR = (1-a) alpha at any n.
    for (double r : {0.0, 0.2, -0.2}) {
        auto c = group1_cfg();
        c.r = r;
        c.n_nulls = 1000;
        c.n_runs = 2000;
        c.threads = 8;
        const auto regions = all_kinds(c);
        const auto stats = run_experiment_multi(c, regions);
        const double target = (1 - c.a) * c.alpha;
        for (std::size_t j = 0; j < regions.size(); ++j) {
            const auto& s = stats[j];
            EXPECT_NEAR(s.fdr.mean, target, 3 * s.fdr.se) << regions[j].name() << " r=" << r;
            EXPECT_GE(s.pfdr.mean, s.fdr.mean) << regions[j].name();
            if (r == 0.0) {
                const double floor = (1 - c.a) * alpha_star(c.a, c.alternatives()).alpha_star;
                EXPECT_GE(s.pfdr.mean, floor - 3 * s.pfdr.se) << regions[j].name();
            }
        }
    }
}

TEST(RunExperiment, PfdrBoundNearAlphaStar) {
    // Just above alpha_* the pFDR floor is the binding constraint.
    auto c = group1_cfg();
    c.n_nulls = 2000;
    c.n_runs = 400;
    c.threads = 8;
    const double as = alpha_star(c.a, c.alternatives()).alpha_star;
    for (double alpha : {1.5 * as, 3.0 * as}) {
        c.alpha = alpha;
        const auto s = run_experiment(c);
        EXPECT_GE(s.pfdr.mean, (1 - c.a) * as - 3 * s.pfdr.se) << alpha;
        EXPECT_GE(s.pfdr.mean, s.fdr.mean);
    }
}

TEST(RunComparison, ReferenceWithoutRejections) {
    auto c = group1_cfg();
    c.alpha = 1e-6;
    c.n_nulls = 300;
    c.n_runs = 20;
    const auto t = run_comparison(c, {Baseline::ByProduct, Baseline::BySum, Baseline::ByMax});
    EXPECT_EQ(t.reference.power.mean, 0.0);
    for (const auto& row : t.rows) {
        EXPECT_EQ(row.pfdr.count, 0u);
        EXPECT_EQ(row.fdr.mean, 0.0);
    }
}

TEST(RunComparison, BaselinesMatchTheReferencePower) {
    auto c = group1_cfg();
    c.n_nulls = 2000;
    c.n_runs = 60;
    c.threads = 4;
    const auto t = run_comparison(c, {Baseline::ByProduct, Baseline::ByMax});
    ASSERT_EQ(t.rows.size(), 2u);
    // By-max is the weakest ordering in this group, by-product sits between it and the region.
    EXPECT_GT(t.rows[1].fdr.mean, t.rows[0].fdr.mean);
    EXPECT_GT(t.rows[0].fdr.mean, t.reference.fdr.mean);
}

TEST(TuneScan, UnitScaleRecoversDefaults) {
    auto c = group1_cfg();
    c.n_nulls = 1000;
    c.n_runs = 30;
    const auto rows = tune_scan(c, {1.0});
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0].log2_s, 0.0);
    const auto e = run_experiment(c);
    c.method = MethodKind::Rectangle;
    const auto r = run_experiment(c);
    for (std::size_t i = 0; i < e.runs.size(); ++i) {
        EXPECT_EQ(rows[0].stats.runs[i].R, e.runs[i].R);
        EXPECT_EQ(rows[1].stats.runs[i].R, r.runs[i].R);
    }
    c.K = 3;
    c.mu = {0.5, 0.5, 0.5};
    EXPECT_THROW(tune_scan(c, {1.0}), ParameterError);
}

TEST(TuneScan, SymmetricAndPeakedForEqualGamma) {
    auto c = group1_cfg();
    c.mu = {0.5, 0.5};
    c.n_nulls = 5000;
    c.n_runs = 300;
    c.threads = 8;
    const std::vector<double> grid{0.25, 0.5, 1.0, 2.0, 4.0};
    const auto rows = tune_scan(c, grid);
    for (auto m : {MethodKind::Ellipsoid, MethodKind::Rectangle}) {
        std::map<double, Estimate> pw;
        for (const auto& row : rows) {
            if (row.method == m) pw[row.log2_s] = row.stats.power;
        }
        for (double l : {1.0, 2.0}) {
            const double hi = pw[l].mean, lo = pw[-l].mean;
            EXPECT_LT(std::abs(hi - lo) / std::max(hi, lo), 0.10) << to_string(m) << " " << l;
            EXPECT_LE(pw[l].mean, pw[l - 1].mean + 3 * pw[l].se) << to_string(m);
            EXPECT_LE(pw[-l].mean, pw[1 - l].mean + 3 * pw[-l].se) << to_string(m);
        }
        EXPECT_GT(pw[0.0].mean, pw[2.0].mean);
    }
}

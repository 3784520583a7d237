#pragma once

// The mvfdr command-line driver, callable in-process for tests.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "io.hpp"
#include "mvfdr/mvfdr.hpp"

namespace mvfdr::cli {

using json = nlohmann::ordered_json;

inline constexpr const char* kVersion = "1.0.0";

enum ExitCode { kOk = 0, kFailure = 1, kInputError = 2, kParameterError = 3, kInvariantError = 4 };

inline json to_json(const Estimate& e) { return {{"mean", e.mean}, {"se", e.se}, {"runs", e.count}}; }

inline json to_json(const RunStats& s) {
    return {{"fdr", to_json(s.fdr)}, {"pfdr", to_json(s.pfdr)}, {"power", to_json(s.power)}};
}

inline json config_echo(const ExperimentConfig& c) {
    json j{{"a", c.a},           {"alpha", c.alpha},   {"n_nulls", c.n_nulls},
           {"n_runs", c.n_runs}, {"K", c.K},           {"df", c.df},
           {"mu", c.mu},         {"r", c.r},           {"sigma_form", to_string(c.sigma_form)},
           {"method", to_string(c.method)}, {"method_params", c.method_params}, {"seed", c.seed}};
    if (c.volume_mode) j["volume_mode"] = mode_name(*c.volume_mode);
    return j;
}

inline void write_json(const json& doc, const std::string& path) {
    if (path.empty()) return;
    std::ofstream out(path);
    if (!out) throw InputError("cannot write '" + path + "'");
    out << doc.dump(2) << '\n';
}

inline std::string fmt(double v, int prec = 4) {
    std::ostringstream s;
    s << std::setprecision(prec) << v;
    return s.str();
}

/// Parses "t:p:delta" or "f:p:q:delta".
inline AltSpec parse_alt(const std::string& s) {
    const auto parts = io::split(s, ':');
    auto num = [&](std::size_t i) {
        const auto v = io::parse_double(parts[i]);
        if (!v) throw InputError("alternative '" + s + "': '" + std::string(parts[i]) + "' is not a number");
        return *v;
    };
    if (parts.size() == 3 && parts[0] == "t") return AltSpec::t(num(1), num(2));
    if (parts.size() == 4 && parts[0] == "f") return AltSpec::f(num(1), num(2), num(3));
    throw InputError("alternative '" + s + "' must read t:p:delta or f:p:q:delta");
}

struct TestArgs {
    std::string input, method, mode, output;
    double alpha = 0.05;
    std::vector<double> nu, c, weights;
    double eps = 0.0;
    std::vector<std::string> alts;
    std::int64_t samples = 1'000'000;
    std::uint64_t seed = 1;
};

inline RegionFamily region_from(const TestArgs& a, std::size_t K) {
    const MethodKind m = io::parse_method(a.method);
    switch (m) {
        case MethodKind::Min: return RegionFamily::min(static_cast<int>(K));
        case MethodKind::Product: return RegionFamily::product(static_cast<int>(K));
        case MethodKind::Stouffer: return RegionFamily::stouffer(a.weights.empty() ? std::vector<double>(K, 1.0) : a.weights);
        case MethodKind::Rectangle: return RegionFamily::rectangle(a.c.empty() ? std::vector<double>(K, 1.0) : a.c);
        case MethodKind::Ellipsoid: {
            if (a.nu.empty() || !(a.eps > 0.0)) throw ParameterError("ellipsoid needs --nu and --eps");
            EllipsoidSpec spec{a.nu, a.eps};
            if (a.mode.empty() || a.mode == "auto") return RegionFamily::ellipsoid(spec);
            return RegionFamily::ellipsoid(spec, io::parse_volume_mode(a.mode, a.samples, a.seed));
        }
        case MethodKind::Oracle: {
            std::vector<AltSpec> alts;
            for (const auto& s : a.alts) alts.push_back(parse_alt(s));
            if (alts.size() != K) throw ParameterError("oracle needs one --alt per column");
            return RegionFamily::oracle(alts, OracleMc{a.samples, a.seed});
        }
    }
    throw ParameterError("unknown method");
}

inline int cmd_test(const TestArgs& a, std::ostream& out) {
    PValueMatrix p = io::read_pvalue_csv(a.input);
    const RegionFamily region = region_from(a, p.cols());
    if (std::holds_alternative<StoufferRegion>(region.kind())) p = nudge_open(p);
    const RejectionResult res = nested_region_test(p, region, a.alpha);
    json doc{{"command", "test"},   {"version", kVersion}, {"input", a.input},     {"method", region.name()},
             {"alpha", a.alpha},    {"n", p.rows()},       {"K", p.cols()},         {"cutoff", res.cutoff},
             {"l", res.l},          {"rejected", res.rejected}, {"scores", res.scores}};
    write_json(doc, a.output);
    out << "method " << region.name() << "  n " << p.rows() << "  K " << p.cols() << "  alpha " << a.alpha << '\n';
    out << "cutoff " << fmt(res.cutoff, 10) << "  rejections " << res.l << '\n';
    out << "rejected:";
    for (auto i : res.rejected) out << ' ' << i;
    out << '\n';
    return kOk;
}

struct ParamsArgs {
    std::string family = "t", output;
    double p = 0.0, q = 0.0, delta = 0.0, a = -1.0;
};

inline int cmd_params(const ParamsArgs& a, std::ostream& out) {
    TailParams tp{};
    if (a.family == "t") {
        tp = t_eps_gamma(a.p, a.delta);
    } else if (a.family == "f") {
        tp = f_eps_gamma(a.p, a.q, a.delta);
    } else {
        throw InputError("--family must be t or f");
    }
    json doc{{"command", "params"}, {"version", kVersion}, {"family", a.family}, {"p", a.p}};
    if (a.family == "f") doc["q"] = a.q;
    doc["delta"] = a.delta;
    doc["eps"] = tp.eps;
    doc["gamma"] = tp.gamma;
    doc["r"] = tp.r;
    out << "eps " << fmt(tp.eps, 10) << "\ngamma " << fmt(tp.gamma, 10) << "\nr (g(0) factor) " << fmt(tp.r, 10) << '\n';
    if (a.a >= 0.0) {
        const auto as = alpha_star(a.a, tp.r);
        doc["a"] = a.a;
        doc["alpha_star"] = as.alpha_star;
        doc["min_pfdr"] = as.min_pfdr;
        out << "alpha_* " << fmt(as.alpha_star, 10) << "\nmin pFDR " << fmt(as.min_pfdr, 10) << '\n';
    }
    write_json(doc, a.output);
    return kOk;
}

struct VolumeArgs {
    double eps = 1.0;
    std::vector<double> nu;
    std::optional<double> u;
    std::string mode = "auto", output;
    int K = 0;
    std::int64_t samples = 1'000'000;
    std::uint64_t seed = 1;
};

inline int cmd_volume(const VolumeArgs& a, std::ostream& out) {
    const int K = a.nu.empty() ? a.K : static_cast<int>(a.nu.size());
    if (!a.nu.empty() && a.K != 0 && a.K != K) throw ParameterError("--K disagrees with the length of --nu");
    if (K < 1) throw ParameterError("give --nu or --K");
    json doc{{"command", "volume"}, {"version", kVersion}, {"eps", a.eps}, {"K", K}, {"v_eps", v_eps(a.eps, K)}};
    out << "v_eps(" << a.eps << ", " << K << ") = " << fmt(v_eps(a.eps, K), 15) << '\n';
    if (a.u) {
        if (a.nu.empty()) throw ParameterError("--u needs --nu");
        EllipsoidSpec spec{a.nu, a.eps};
        spec.validate();
        doc["nu"] = a.nu;
        doc["u"] = *a.u;
        if (a.mode == "montecarlo") {
            const auto est = h_mc(*a.u, spec, a.samples, a.seed);
            doc["mode"] = "montecarlo";
            doc["volume"] = est.value;
            doc["std_error"] = est.std_error;
            out << "h(" << *a.u << ") = " << fmt(est.value, 10) << " +- " << fmt(est.std_error, 3) << " (montecarlo)\n";
        } else {
            const VolumeMode mode = a.mode == "auto" ? auto_volume_mode(spec) : io::parse_volume_mode(a.mode);
            const EllipsoidScorer scorer(spec, mode);
            const double h = scorer.volume(*a.u);
            doc["mode"] = mode_name(mode);
            doc["volume"] = h;
            out << "h(" << *a.u << ") = " << fmt(h, 15) << " (" << mode_name(mode) << ")\n";
        }
    }
    write_json(doc, a.output);
    return kOk;
}

struct SimArgs {
    std::string config, output, plot_prefix;
    std::vector<std::string> overrides;
    std::string baselines;
};

inline io::ExperimentFile load_experiment(const SimArgs& a) {
    auto kv = io::KeyValues::read(a.config);
    for (const auto& o : a.overrides) {
        const auto eq = o.find('=');
        if (eq == std::string::npos) throw InputError("--set expects key=value, got '" + o + "'");
        kv.set(std::string(io::trim(o.substr(0, eq))), std::string(io::trim(o.substr(eq + 1))));
    }
    if (!a.baselines.empty()) kv.set("baselines", a.baselines);
    return io::to_experiment(kv);
}

inline void write_plot_csv(const std::string& path, const std::vector<std::pair<double, double>>& pts, const std::string& ylabel) {
    std::ofstream f(path);
    if (!f) throw InputError("cannot write '" + path + "'");
    f << "log2_s," << ylabel << '\n' << std::setprecision(17);
    for (const auto& [x, y] : pts) f << x << ',' << y << '\n';
}

inline int cmd_simulate(const SimArgs& a, std::ostream& out) {
    const auto file = load_experiment(a);
    json doc{{"command", "simulate"}, {"version", kVersion}, {"config", config_echo(file.base)}, {"results", json::array()}};
    for (double r : file.r_values) {
        ExperimentConfig cfg = file.base;
        cfg.r = r;
        if (!file.s_grid.empty()) {
            const auto rows = tune_scan(cfg, file.s_grid);
            json block{{"r", r}, {"scan", json::array()}};
            out << "r = " << r << "  (tuning scan)\n";
            out << std::setw(8) << "log2 s" << std::setw(11) << "method" << std::setw(10) << "power" << std::setw(10)
                << "FDR" << std::setw(10) << "pFDR" << '\n';
            std::map<std::string, std::vector<std::pair<double, double>>> curves;
            for (const auto& row : rows) {
                const std::string m = to_string(row.method);
                block["scan"].push_back({{"log2_s", row.log2_s}, {"method", m}, {"stats", to_json(row.stats)}});
                out << std::setw(8) << fmt(row.log2_s) << std::setw(11) << m << std::setw(10) << fmt(row.stats.power.mean)
                    << std::setw(10) << fmt(row.stats.fdr.mean) << std::setw(10) << fmt(row.stats.pfdr.mean) << '\n';
                curves[m + "_power"].emplace_back(row.log2_s, row.stats.power.mean);
                curves[m + "_fdr"].emplace_back(row.log2_s, row.stats.fdr.mean);
                curves[m + "_pfdr"].emplace_back(row.log2_s, row.stats.pfdr.mean);
            }
            if (!a.plot_prefix.empty()) {
                for (const auto& [name, pts] : curves) {
                    const auto metric = name.substr(name.rfind('_') + 1);
                    write_plot_csv(a.plot_prefix + "_r" + fmt(r) + "_" + name + ".csv", pts, metric);
                }
            }
            doc["results"].push_back(block);
        } else {
            const RunStats s = run_experiment(cfg);
            doc["results"].push_back({{"r", r}, {"stats", to_json(s)}});
            out << "r = " << r << "  method " << to_string(cfg.method) << "  power " << fmt(s.power.mean) << " ("
                << fmt(s.power.se, 2) << ")  FDR " << fmt(s.fdr.mean) << " (" << fmt(s.fdr.se, 2) << ")  pFDR "
                << fmt(s.pfdr.mean) << " (" << fmt(s.pfdr.se, 2) << ")\n";
        }
    }
    write_json(doc, a.output);
    return kOk;
}

inline int cmd_compare(const SimArgs& a, std::ostream& out) {
    const auto file = load_experiment(a);
    json doc{{"command", "compare"}, {"version", kVersion}, {"config", config_echo(file.base)}, {"results", json::array()}};
    for (double r : file.r_values) {
        ExperimentConfig cfg = file.base;
        cfg.r = r;
        const auto table = run_comparison(cfg, file.baselines);
        json block{{"r", r}, {"reference", to_json(table.reference)}, {"baselines", json::array()}};
        out << "r = " << r << "  reference " << to_string(cfg.method) << '\n';
        out << "  Power      " << fmt(table.reference.power.mean) << '\n';
        out << "  FDR, pFDR  " << fmt(table.reference.fdr.mean) << ", " << fmt(table.reference.pfdr.mean) << '\n';
        for (const auto& row : table.rows) {
            block["baselines"].push_back({{"baseline", to_string(row.baseline)}, {"fdr", to_json(row.fdr)}, {"pfdr", to_json(row.pfdr)}});
            out << "  " << std::left << std::setw(11) << to_string(row.baseline) << std::right << fmt(row.fdr.mean) << ", "
                << (row.pfdr.count ? fmt(row.pfdr.mean) : std::string("-")) << '\n';
        }
        doc["results"].push_back(block);
    }
    write_json(doc, a.output);
    return kOk;
}

/// Runs the tool; returns the process exit code.
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"False discovery rate control with multivariate p-values"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    TestArgs ta;
    auto* test = app.add_subcommand("test", "Apply a nested-region procedure to a p-value CSV");
    test->add_option("input", ta.input, "CSV of p-values, one row per null")->required();
    test->add_option("--method", ta.method, "min|product|stouffer|rectangle|ellipsoid|oracle")->required();
    test->add_option("--alpha", ta.alpha, "FDR control parameter");
    test->add_option("--nu", ta.nu, "ellipsoid weights")->delimiter(',');
    test->add_option("--eps", ta.eps, "ellipsoid exponent");
    test->add_option("--mode", ta.mode, "auto|exact2d|irwinhall|powerlaw|montecarlo");
    test->add_option("--c", ta.c, "rectangle sides, product 1")->delimiter(',');
    test->add_option("--weights", ta.weights, "Stouffer weights")->delimiter(',');
    test->add_option("--alt", ta.alts, "oracle alternative per column: t:p:delta or f:p:q:delta");
    test->add_option("--samples", ta.samples, "Monte Carlo sample budget");
    test->add_option("--seed", ta.seed, "Monte Carlo seed");
    test->add_option("-o,--output", ta.output, "JSON results path");

    ParamsArgs pa;
    auto* params = app.add_subcommand("params", "Tail parameters eps, gamma, r and the pFDR floor");
    params->add_option("--family", pa.family, "t or f");
    params->add_option("--p", pa.p, "degrees of freedom (numerator for f)")->required();
    params->add_option("--q", pa.q, "denominator degrees of freedom (f only)");
    params->add_option("--delta", pa.delta, "noncentrality")->required();
    params->add_option("--a", pa.a, "proportion of false nulls");
    params->add_option("-o,--output", pa.output, "JSON results path");

    VolumeArgs va;
    double u = -1.0;
    auto* volume = app.add_subcommand("volume", "Volume of {x : sum nu_k x_k^eps <= u}");
    volume->add_option("--eps", va.eps, "exponent")->required();
    volume->add_option("--nu", va.nu, "weights")->delimiter(',');
    auto* u_opt = volume->add_option("--u", u, "level");
    volume->add_option("--K", va.K, "dimension when --nu is omitted");
    volume->add_option("--mode", va.mode, "auto|exact2d|irwinhall|powerlaw|montecarlo");
    volume->add_option("--samples", va.samples, "Monte Carlo samples");
    volume->add_option("--seed", va.seed, "Monte Carlo seed");
    volume->add_option("-o,--output", va.output, "JSON results path");

    SimArgs sa;
    auto* simulate = app.add_subcommand("simulate", "Monte Carlo FDR, pFDR and power (tuning scan when s_grid is set)");
    simulate->add_option("config", sa.config, "experiment config file")->required();
    simulate->add_option("--set", sa.overrides, "override a config key: key=value");
    simulate->add_option("-o,--output", sa.output, "JSON results path");
    simulate->add_option("--plot-prefix", sa.plot_prefix, "write log2 s curves as CSV files with this prefix");

    auto* compare = app.add_subcommand("compare", "Matched-power comparison with direct combinations");
    compare->add_option("config", sa.config, "experiment config file")->required();
    compare->add_option("--set", sa.overrides, "override a config key: key=value");
    compare->add_option("--baselines", sa.baselines, "comma list of by-product, by-sum, by-max");
    compare->add_option("-o,--output", sa.output, "JSON results path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kInputError;
    }

    try {
        if (*test) return cmd_test(ta, out);
        if (*params) return cmd_params(pa, out);
        if (*volume) {
            if (u_opt->count() > 0) va.u = u;
            return cmd_volume(va, out);
        }
        if (*simulate) return cmd_simulate(sa, out);
        if (*compare) return cmd_compare(sa, out);
    } catch (const InputError& e) {
        err << "input error: " << e.what() << '\n';
        return kInputError;
    } catch (const InvariantError& e) {
        err << "invariant violation: " << e.what() << '\n';
        return kInvariantError;
    } catch (const ParameterError& e) {
        err << "parameter error: " << e.what() << '\n';
        return kParameterError;
    } catch (const DomainError& e) {
        err << "parameter error: " << e.what() << '\n';
        return kParameterError;
    } catch (const DegenerateError& e) {
        err << "parameter error: " << e.what() << '\n';
        return kParameterError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kFailure;
    }
    return kFailure;
}

}  // namespace mvfdr::cli

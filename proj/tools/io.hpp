#pragma once

// File formats for the command-line tool: p-value CSV, key=value experiment
// configs, and the plot CSVs emitted next to a JSON results document.

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "mvfdr/error.hpp"
#include "mvfdr/procedures.hpp"
#include "mvfdr/simulation.hpp"

namespace mvfdr::io {

inline std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::optional<double> parse_double(std::string_view s) {
    s = trim(s);
    if (s.empty()) return std::nullopt;
    if (s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline std::vector<double> parse_list(std::string_view s, const std::string& what) {
    std::vector<double> out;
    for (auto cell : split(s, ',')) {
        const auto v = parse_double(cell);
        if (!v) throw InputError(what + ": '" + std::string(cell) + "' is not a number");
        out.push_back(*v);
    }
    return out;
}

/// Parses an n x K p-value table. A first row that is not fully numeric is taken as a header.
inline PValueMatrix parse_pvalue_csv(std::istream& in) {
    std::vector<double> values;
    std::size_t K = 0;
    std::size_t n = 0;
    std::string line;
    std::size_t line_no = 0;
    bool first = true;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto cells = split(line, ',');
        std::vector<double> row;
        std::size_t bad = cells.size();
        for (std::size_t j = 0; j < cells.size(); ++j) {
            const auto v = parse_double(cells[j]);
            if (!v) {
                bad = j;
                break;
            }
            row.push_back(*v);
        }
        if (first) {
            first = false;
            if (bad != cells.size()) continue;  // header row
        }
        if (bad != cells.size()) {
            throw InputError("line " + std::to_string(line_no) + ", column " + std::to_string(bad + 1) + ": '" +
                             std::string(cells[bad]) + "' is not a number");
        }
        if (K == 0) K = row.size();
        if (row.size() != K) {
            throw InputError("line " + std::to_string(line_no) + ": expected " + std::to_string(K) + " columns, found " +
                             std::to_string(row.size()));
        }
        for (std::size_t j = 0; j < row.size(); ++j) {
            if (!(row[j] >= 0.0 && row[j] <= 1.0)) {
                throw InputError("line " + std::to_string(line_no) + ", column " + std::to_string(j + 1) + ": '" +
                                 std::string(cells[j]) + "' lies outside [0, 1]");
            }
        }
        values.insert(values.end(), row.begin(), row.end());
        ++n;
    }
    if (n == 0) throw InputError("no p-value rows found");
    return PValueMatrix(n, K, std::move(values));
}

inline PValueMatrix read_pvalue_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open '" + path + "'");
    return parse_pvalue_csv(in);
}

// ---------------------------------------------------------------------------
// Experiment configs
// ---------------------------------------------------------------------------

/// Flat key = value file; '#' starts a comment.
class KeyValues {
public:
    static KeyValues parse(std::istream& in) {
        KeyValues kv;
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            const auto hash = line.find('#');
            std::string_view body = trim(std::string_view(line).substr(0, hash));
            if (body.empty()) continue;
            const auto eq = body.find('=');
            if (eq == std::string_view::npos) {
                throw InputError("config line " + std::to_string(line_no) + ": expected key = value");
            }
            const std::string key(trim(body.substr(0, eq)));
            if (key.empty()) throw InputError("config line " + std::to_string(line_no) + ": empty key");
            kv.set(key, std::string(trim(body.substr(eq + 1))));
        }
        return kv;
    }

    static KeyValues read(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw InputError("cannot open config '" + path + "'");
        return parse(in);
    }

    void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
    bool has(const std::string& key) const { return values_.count(key) > 0; }

    const std::string& require(const std::string& key) const {
        const auto it = values_.find(key);
        if (it == values_.end()) throw InputError("config: missing required key '" + key + "'");
        return it->second;
    }

    double number(const std::string& key) const {
        const auto v = parse_double(require(key));
        if (!v) throw InputError("config: key '" + key + "' is not a number");
        return *v;
    }

    long long integer(const std::string& key) const {
        const double v = number(key);
        if (v != std::floor(v)) throw InputError("config: key '" + key + "' must be an integer");
        return static_cast<long long>(v);
    }

    std::vector<double> list(const std::string& key) const { return parse_list(require(key), "config key '" + key + "'"); }

    const std::map<std::string, std::string>& all() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

inline MethodKind parse_method(const std::string& s) {
    static const std::map<std::string, MethodKind> names{
        {"ellipsoid", MethodKind::Ellipsoid}, {"rectangle", MethodKind::Rectangle}, {"min", MethodKind::Min},
        {"product", MethodKind::Product},     {"stouffer", MethodKind::Stouffer},   {"oracle", MethodKind::Oracle}};
    const auto it = names.find(s);
    if (it == names.end()) throw InputError("unknown method '" + s + "'");
    return it->second;
}

inline Baseline parse_baseline(const std::string& s) {
    if (s == "by-product") return Baseline::ByProduct;
    if (s == "by-sum") return Baseline::BySum;
    if (s == "by-max") return Baseline::ByMax;
    throw InputError("unknown baseline '" + s + "'");
}

inline VolumeMode parse_volume_mode(const std::string& s, std::int64_t samples = 1'000'000, std::uint64_t seed = 1) {
    if (s == "exact2d") return Exact2D{};
    if (s == "irwinhall") return IrwinHall{};
    if (s == "powerlaw") return PowerLaw{};
    if (s == "montecarlo") return MonteCarlo{samples, seed};
    throw InputError("unknown volume mode '" + s + "'");
}

/// A parsed experiment file: one base config plus the r values and s grid to sweep.
struct ExperimentFile {
    ExperimentConfig base;
    std::vector<double> r_values;
    std::vector<double> s_grid;
    std::vector<Baseline> baselines;
    KeyValues raw;

    std::string method_param_key() const {
        switch (base.method) {
            case MethodKind::Ellipsoid: return "nu";
            case MethodKind::Rectangle: return "c";
            case MethodKind::Stouffer: return "weights";
            default: return "";
        }
    }
};

inline ExperimentFile to_experiment(const KeyValues& kv) {
    ExperimentFile f;
    f.raw = kv;
    auto& c = f.base;
    c.a = kv.number("a");
    c.alpha = kv.number("alpha");
    c.df = static_cast<int>(kv.integer("df"));
    c.mu = kv.list("mu");
    c.K = kv.has("K") ? static_cast<int>(kv.integer("K")) : static_cast<int>(c.mu.size());
    if (kv.has("n_nulls")) c.n_nulls = static_cast<int>(kv.integer("n_nulls"));
    if (kv.has("n_runs")) c.n_runs = static_cast<int>(kv.integer("n_runs"));
    if (kv.has("seed")) c.seed = static_cast<std::uint64_t>(kv.integer("seed"));
    if (kv.has("threads")) c.threads = static_cast<int>(kv.integer("threads"));
    f.r_values = kv.has("r") ? kv.list("r") : std::vector<double>{0.0};
    if (f.r_values.empty()) throw InputError("config: key 'r' is empty");
    c.r = f.r_values.front();
    if (kv.has("sigma_form")) {
        const auto& s = kv.require("sigma_form");
        if (s == "form61" || s == "61") c.sigma_form = SigmaForm::Form61;
        else if (s == "form62" || s == "62") c.sigma_form = SigmaForm::Form62;
        else throw InputError("config: sigma_form must be form61 or form62");
    }
    c.method = kv.has("method") ? parse_method(kv.require("method")) : MethodKind::Ellipsoid;
    for (const char* key : {"nu", "c", "weights"}) {
        if (!kv.has(key)) continue;
        if (f.method_param_key() != key) {
            throw ParameterError(std::string("config: key '") + key + "' does not apply to method " + to_string(c.method));
        }
        c.method_params = kv.list(key);
    }
    if (kv.has("volume_mode")) {
        const auto samples = kv.has("mc_samples") ? kv.integer("mc_samples") : 1'000'000;
        c.volume_mode = parse_volume_mode(kv.require("volume_mode"), samples, c.seed);
    }
    if (kv.has("s_grid")) f.s_grid = kv.list("s_grid");
    if (kv.has("baselines")) {
        for (auto b : split(kv.require("baselines"), ',')) f.baselines.push_back(parse_baseline(std::string(b)));
    } else {
        f.baselines = {Baseline::ByProduct, Baseline::BySum, Baseline::ByMax};
    }
    if (c.method == MethodKind::Rectangle && !c.method_params.empty()) check_rectangle_c(c.method_params);
    c.validate();
    return f;
}

}  // namespace mvfdr::io

#pragma once

#include <cctype>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "obsv/hybrid.hpp"

namespace obsv {

// Scenario files are plain key-value text with nested [section] tables:
//
//   name = "planar-example"
//   [system]
//   n = 2
//   a2 = "u1"
//   f2 = "x1 - x2^3"
//   [truth]
//   x0 = [2, 0]
//
// Values are numbers, booleans, quoted strings or numeric arrays. '#' starts
// a comment. The full format is documented in docs/scenario-format.md.

namespace detail {

struct ScnValue {
    enum class Kind { Number, String, Array, Bool } kind = Kind::Number;
    double num = 0.0;
    std::string str;
    std::vector<double> arr;
    bool boolean = false;
    std::string raw;  // original token text (exact integer seeds)
    int line = 0;
};

class ScnFile {
public:
    explicit ScnFile(const std::string& path) : path_(path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open scenario file: " + path);
        std::string line;
        std::string section;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            strip_comment(line);
            const std::string t = trim(line);
            if (t.empty()) continue;
            if (t.front() == '[') {
                if (t.back() != ']')
                    throw ConfigError("malformed section header", lineno);
                section = trim(t.substr(1, t.size() - 2));
                if (section.empty()) throw ConfigError("empty section name", lineno);
                continue;
            }
            const auto eq = t.find('=');
            if (eq == std::string::npos)
                throw ConfigError("expected 'key = value'", lineno);
            const std::string key = trim(t.substr(0, eq));
            const std::string val = trim(t.substr(eq + 1));
            if (key.empty()) throw ConfigError("empty key", lineno);
            const std::string full = section.empty() ? key : section + "." + key;
            if (values_.count(full))
                throw ConfigError("duplicate key '" + full + "'", lineno, full);
            values_[full] = parse_value(val, lineno, full);
        }
    }

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    const ScnValue& get(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end())
            throw ConfigError("missing required key '" + key + "'", 0, key);
        return it->second;
    }

    double number(const std::string& key) const {
        const ScnValue& v = get(key);
        if (v.kind != ScnValue::Kind::Number)
            throw ConfigError("'" + key + "' must be a number", v.line, key);
        return v.num;
    }
    double number(const std::string& key, double fallback) const {
        return has(key) ? number(key) : fallback;
    }
    long long integer(const std::string& key) const {
        const double d = number(key);
        const long long i = static_cast<long long>(d);
        if (static_cast<double>(i) != d)
            throw ConfigError("'" + key + "' must be an integer", get(key).line, key);
        return i;
    }
    long long integer(const std::string& key, long long fallback) const {
        return has(key) ? integer(key) : fallback;
    }
    std::uint64_t seed(const std::string& key, std::uint64_t fallback) const {
        if (!has(key)) return fallback;
        const ScnValue& v = get(key);
        try {
            return std::stoull(v.raw);
        } catch (...) {
            throw ConfigError("'" + key + "' must be an unsigned integer", v.line, key);
        }
    }
    std::string string(const std::string& key) const {
        const ScnValue& v = get(key);
        if (v.kind != ScnValue::Kind::String)
            throw ConfigError("'" + key + "' must be a quoted string", v.line, key);
        return v.str;
    }
    std::string string(const std::string& key, const std::string& fallback) const {
        return has(key) ? string(key) : fallback;
    }
    std::vector<double> array(const std::string& key) const {
        const ScnValue& v = get(key);
        if (v.kind != ScnValue::Kind::Array)
            throw ConfigError("'" + key + "' must be an array like [1, 2]", v.line, key);
        return v.arr;
    }
    bool boolean(const std::string& key, bool fallback) const {
        if (!has(key)) return fallback;
        const ScnValue& v = get(key);
        if (v.kind != ScnValue::Kind::Bool)
            throw ConfigError("'" + key + "' must be true or false", v.line, key);
        return v.boolean;
    }
    int line_of(const std::string& key) const { return has(key) ? get(key).line : 0; }
    const std::string& path() const { return path_; }

private:
    std::string path_;
    std::map<std::string, ScnValue> values_;

    static std::string trim(const std::string& s) {
        std::size_t a = 0, b = s.size();
        while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
        while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
        return s.substr(a, b - a);
    }

    static void strip_comment(std::string& line) {
        bool in_quote = false;
        for (std::size_t i = 0; i < line.size(); ++i) {
            if (line[i] == '"') in_quote = !in_quote;
            else if (line[i] == '#' && !in_quote) { line.erase(i); return; }
        }
    }

    static ScnValue parse_value(const std::string& text, int line, const std::string& key) {
        ScnValue v;
        v.line = line;
        v.raw = text;
        if (text.empty()) throw ConfigError("empty value for '" + key + "'", line, key);
        if (text.front() == '"') {
            if (text.size() < 2 || text.back() != '"')
                throw ConfigError("unterminated string for '" + key + "'", line, key);
            v.kind = ScnValue::Kind::String;
            v.str = text.substr(1, text.size() - 2);
            return v;
        }
        if (text.front() == '[') {
            if (text.back() != ']')
                throw ConfigError("unterminated array for '" + key + "'", line, key);
            v.kind = ScnValue::Kind::Array;
            std::string body = text.substr(1, text.size() - 2);
            std::stringstream ss(body);
            std::string item;
            while (std::getline(ss, item, ',')) {
                const std::string it = trim(item);
                if (it.empty()) throw ConfigError("empty array element in '" + key + "'", line, key);
                char* end = nullptr;
                const double d = std::strtod(it.c_str(), &end);
                if (end != it.c_str() + it.size())
                    throw ConfigError("non-numeric array element '" + it + "' in '" + key + "'", line, key);
                v.arr.push_back(d);
            }
            return v;
        }
        if (text == "true" || text == "false") {
            v.kind = ScnValue::Kind::Bool;
            v.boolean = text == "true";
            return v;
        }
        char* end = nullptr;
        v.num = std::strtod(text.c_str(), &end);
        if (end != text.c_str() + text.size())
            throw ConfigError("cannot parse value '" + text + "' for '" + key + "'", line, key);
        v.kind = ScnValue::Kind::Number;
        return v;
    }
};

inline Expr parse_expr_field(const ScnFile& f, const std::string& key) {
    const std::string src = f.string(key);
    try {
        return Expr::parse(src);
    } catch (const ParseError& e) {
        throw ConfigError("'" + key + "': " + e.what() + " (at byte " + std::to_string(e.offset) + ")",
                          f.line_of(key), key);
    }
}

}  // namespace detail

struct ObserverConfig {
    HybridParams params;
    int csv_stride = 1;
};

struct ScenarioConfig {
    std::string name;
    std::string path;
    TriangularSpec system;
    InputSignal input;

    Eigen::VectorXd x0;
    double t0 = 0.0;
    double t_end = 1.0;
    int truth_steps = 4096;
    int csv_stride = 1;

    char est_case = 'I';
    EstimatorParams est;
    int record_steps = 1 << 16;
    int lipschitz_samples = 20000;

    std::optional<ObserverConfig> observer;
    std::string out_dir = "out";

    SystemModel build_model() const { return build_triangular(system); }
    TimeGrid truth_grid() const { return TimeGrid(t0, t_end, truth_steps); }
    TimeGrid record_grid() const { return TimeGrid(t0, est.t_hi, record_steps); }
};

inline ScenarioConfig load_scenario(const std::string& path) {
    detail::ScnFile f(path);
    ScenarioConfig c;
    c.path = path;
    c.name = f.string("name", path);

    const int n = static_cast<int>(f.integer("system.n"));
    const int m = static_cast<int>(f.integer("system.m", 0));
    if (n < 1) throw ConfigError("system.n must be >= 1", f.line_of("system.n"), "system.n");
    if (m < 0) throw ConfigError("system.m must be >= 0", f.line_of("system.m"), "system.m");
    c.system.n = n;
    c.system.m = m;
    for (int i = 2; i <= n; ++i)
        c.system.a.push_back(detail::parse_expr_field(f, "system.a" + std::to_string(i)));
    for (int i = 1; i <= n; ++i)
        c.system.f.push_back(detail::parse_expr_field(f, "system.f" + std::to_string(i)));

    std::vector<InputSignal::Channel> channels;
    for (int j = 1; j <= m; ++j) {
        const std::string base = "input.u" + std::to_string(j);
        if (f.has(base)) {
            Expr e = detail::parse_expr_field(f, base);
            if (e.max_x_index() > 0 || e.uses_y() || e.max_u_index() > 0)
                throw ConfigError("input expressions may reference t only", f.line_of(base), base);
            channels.emplace_back(std::move(e));
        } else if (f.has(base + "_breaks")) {
            InputSignal::Table tab;
            tab.breaks = f.array(base + "_breaks");
            tab.values = f.array(base + "_values");
            if (tab.breaks.size() != tab.values.size() || tab.breaks.empty())
                throw ConfigError("table channels need matching nonempty " + base + "_breaks/_values",
                                  f.line_of(base + "_breaks"), base);
            for (std::size_t i = 1; i < tab.breaks.size(); ++i)
                if (!(tab.breaks[i] > tab.breaks[i - 1]))
                    throw ConfigError(base + "_breaks must be strictly increasing",
                                      f.line_of(base + "_breaks"), base);
            channels.emplace_back(std::move(tab));
        } else {
            throw ConfigError("missing input channel u" + std::to_string(j), 0, base);
        }
    }
    c.input = InputSignal(std::move(channels));

    const std::vector<double> x0 = f.array("truth.x0");
    if (static_cast<int>(x0.size()) != n)
        throw ConfigError("truth.x0 must have " + std::to_string(n) + " components",
                          f.line_of("truth.x0"), "truth.x0");
    c.x0 = Eigen::Map<const Eigen::VectorXd>(x0.data(), x0.size());
    c.t0 = f.number("truth.t0", 0.0);
    c.t_end = f.number("truth.t_end");
    c.truth_steps = static_cast<int>(f.integer("truth.n_steps"));
    c.csv_stride = static_cast<int>(f.integer("truth.csv_stride", 1));
    if (!(c.t_end > c.t0))
        throw ConfigError("truth.t_end must exceed truth.t0", f.line_of("truth.t_end"), "truth.t_end");
    if (c.truth_steps < 2)
        throw ConfigError("truth.n_steps must be >= 2", f.line_of("truth.n_steps"), "truth.n_steps");
    if (c.csv_stride < 1)
        throw ConfigError("truth.csv_stride must be >= 1", f.line_of("truth.csv_stride"),
                          "truth.csv_stride");

    const std::string kase = f.string("estimator.case", "I");
    if (kase == "I") c.est_case = 'I';
    else if (kase == "II") c.est_case = 'G';
    else throw ConfigError("estimator.case must be \"I\" or \"II\"", f.line_of("estimator.case"),
                           "estimator.case");

    c.est.R = f.number("estimator.R", 1.0);
    c.est.ell = f.number("estimator.ell", 0.5);
    c.est.n_iters = static_cast<int>(f.integer("estimator.n_iters", 10));
    c.est.seed = f.seed("estimator.seed", 0);
    c.est.gamma = f.number("estimator.gamma", 0.25);
    c.est.t_hi = f.number("estimator.t_hi");
    c.est.window_nodes = static_cast<int>(f.integer("estimator.window_nodes", 128));
    c.est.n_pairs = static_cast<int>(f.integer("estimator.n_pairs", 32));
    c.est.eps_rel_pe = f.number("estimator.eps_rel", 1e-10);
    c.est.tol_abs = f.number("estimator.tol_abs", 1e-6);
    c.record_steps = static_cast<int>(f.integer("estimator.record_steps", 1 << 16));
    c.lipschitz_samples = static_cast<int>(f.integer("estimator.lipschitz_samples", 20000));
    if (f.has("estimator.z_init")) {
        const std::vector<double> z = f.array("estimator.z_init");
        if (static_cast<int>(z.size()) != n)
            throw ConfigError("estimator.z_init must have " + std::to_string(n) + " components",
                              f.line_of("estimator.z_init"), "estimator.z_init");
        c.est.z_init = Eigen::Map<const Eigen::VectorXd>(z.data(), z.size());
    }

    if (!(c.est.ell > 0.0 && c.est.ell <= 0.5))
        throw ConfigError("estimator.ell must lie in (0, 0.5]", f.line_of("estimator.ell"),
                          "estimator.ell");
    if (!(c.est.t_hi > c.t0))
        throw ConfigError("estimator.t_hi must exceed truth.t0", f.line_of("estimator.t_hi"),
                          "estimator.t_hi");
    if (c.est.window_nodes < 64)
        throw ConfigError("estimator.window_nodes must be >= 64", f.line_of("estimator.window_nodes"),
                          "estimator.window_nodes");
    if (c.record_steps < 64)
        throw ConfigError("estimator.record_steps must be >= 64", f.line_of("estimator.record_steps"),
                          "estimator.record_steps");
    if (!(c.est.R > 0.0))
        throw ConfigError("estimator.R must be positive", f.line_of("estimator.R"), "estimator.R");

    if (f.has("observer.sigma")) {
        ObserverConfig oc;
        oc.params.t0 = c.t0;
        oc.params.sigma = f.number("observer.sigma");
        oc.params.n_resets = static_cast<int>(f.integer("observer.n_resets", 8));
        oc.params.span_steps = static_cast<int>(f.integer("observer.span_steps", 1 << 17));
        oc.params.record_steps = c.record_steps;
        oc.params.k_base = static_cast<int>(f.integer("observer.k_base", 3));
        oc.params.k_step = static_cast<int>(f.integer("observer.k_step", 1));
        oc.params.q = f.number("observer.q", 0.5);
        oc.params.lipschitz_samples = c.lipschitz_samples;
        oc.params.perfect_estimates = f.boolean("observer.perfect_estimates", false);
        if (f.has("observer.lipschitz_C"))
            oc.params.lipschitz_override = f.number("observer.lipschitz_C");
        oc.params.est = c.est;
        oc.csv_stride = static_cast<int>(f.integer("observer.csv_stride", 1));
        if (!(oc.params.sigma > 0.0))
            throw ConfigError("observer.sigma must be positive", f.line_of("observer.sigma"),
                              "observer.sigma");
        if (oc.params.n_resets < 1)
            throw ConfigError("observer.n_resets must be >= 1", f.line_of("observer.n_resets"),
                              "observer.n_resets");
        if (oc.params.span_steps % oc.params.n_resets != 0)
            throw ConfigError("observer.span_steps must be divisible by n_resets",
                              f.line_of("observer.span_steps"), "observer.span_steps");
        c.observer = std::move(oc);
    }

    c.out_dir = f.string("outputs.dir", "out");
    return c;
}

}  // namespace obsv

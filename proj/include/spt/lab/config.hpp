#pragma once

#include "spt/markets.hpp"
#include "spt/paths.hpp"

#include <Eigen/Dense>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace spt::lab {

using boost::property_tree::ptree;

// Every problem found while reading a config, one message per offending key.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(std::vector<std::string> errors)
        : std::runtime_error(join(errors)), errors_(std::move(errors)) {}
    const std::vector<std::string>& errors() const noexcept { return errors_; }

private:
    static std::string join(const std::vector<std::string>& e) {
        std::string s;
        for (const auto& x : e) s += (s.empty() ? "" : "\n") + x;
        return s;
    }
    std::vector<std::string> errors_;
};

inline const std::vector<std::string>& experiment_names() {
    static const std::vector<std::string> names{
        "simulate",          "diversity-report",     "arbitrage-45", "mirror-81",
        "examples-82-83",    "master-formula",       "ranked-decomposition", "local-time-oracle",
        "hedge-price",       "call-decay",           "parity-gap",   "instantaneous-dominance"};
    return names;
}

struct GridSpec {
    double horizon = 1.0;
    std::size_t steps = 1000;
    bool geometric = false;
    double first_time = 0.0;

    PathGrid build() const {
        return geometric ? make_geometric_grid(horizon, steps, first_time) : make_grid(horizon, steps);
    }
};

struct McSpec {
    std::size_t paths = 1000;
    std::uint64_t seed = 1;
    std::size_t threads = 0;  // 0: hardware concurrency
};

struct OutputSpec {
    enum class PerPath { automatic, on, off };
    std::string directory = "out";
    bool json = true;
    PerPath per_path = PerPath::automatic;
    bool time_series = false;

    // Per-path tables are written by default only up to 10^4 paths.
    bool write_per_path(std::size_t paths) const {
        return per_path == PerPath::on || (per_path == PerPath::automatic && paths <= 10000);
    }
};

struct ModelSpec {
    std::string kind;  // gbm, diverse, ou, patched, dominance
    std::size_t n = 0;
    Eigen::MatrixXd sigma;
    std::vector<double> b, g, x0;
    double rate = 0.0;
    double delta = 0.0, bound = 0.0, q_floor = 1e-8;
    double alpha = 0.0, switch_time = 1.0, x0_scalar = 1.0;
    double eta = 0.0, patch_horizon = 0.0;
    double eta_inner = 0.0, strength = 0.0, pole_floor = 1e-12;

    MarketModel build() const {
        if (kind == "gbm") return constant_coefficient_market(b, sigma, x0, rate);
        if (kind == "ou") return ou_two_stock(alpha, x0_scalar, switch_time);
        if (kind == "dominance") return instantaneous_dominance_market(alpha, eta, eta_inner, strength, pole_floor);
        MarketModel base = diverse_market(n, sigma, g, delta, bound, x0, q_floor).with_rate(rate);
        if (kind == "patched") return patched_weakly_diverse(base, eta, patch_horizon);
        return base;
    }
};

// Experiment-specific keys of the [experiment] section.
struct Params {
    std::optional<double> delta;
    std::optional<double> p;
    double margin = 1.1;          // p = margin * p(T) when p is not given
    std::size_t refinements = 2;  // grid levels, finest first, each half as many steps
    std::string claim = "call";   // call, exchange, zero
    std::size_t stock = 0;        // 0-based after parsing
    std::size_t other = 1;
    double strike = 1.0;
    std::vector<double> horizons;
    std::string witness = "pihat";  // pihat: market vs mirror portfolio; stocks: X_first vs X_second
    std::size_t first = 0, second = 1;
};

struct ExperimentConfig {
    std::string experiment;
    Params params;
    std::optional<ModelSpec> model;
    GridSpec grid;
    McSpec mc;
    OutputSpec output;
    ptree echo;  // the file contents after command-line overrides

    MarketModel build_model() const { return model->build(); }
};

struct Overrides {
    std::optional<std::string> out;
    std::optional<long long> paths;
    std::optional<long long> seed;
    std::optional<long long> steps;
    std::optional<long long> threads;
};

namespace detail {

inline std::string trim(std::string s) {
    const auto ws = " \t\r\n";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string::npos) return {};
    return s.substr(b, s.find_last_not_of(ws) - b + 1);
}

inline std::optional<double> parse_double(const std::string& s) {
    const std::string t = trim(s);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) return std::nullopt;
    return v;
}

inline std::optional<long long> parse_integer(const std::string& s) {
    const std::string t = trim(s);
    long long v = 0;
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) return std::nullopt;
    return v;
}

// Numbers separated by commas and/or whitespace.
inline std::optional<std::vector<double>> parse_list(const std::string& s) {
    std::string t = s;
    std::replace(t.begin(), t.end(), ',', ' ');
    std::istringstream in(t);
    std::vector<double> out;
    std::string tok;
    while (in >> tok) {
        auto v = parse_double(tok);
        if (!v) return std::nullopt;
        out.push_back(*v);
    }
    if (out.empty()) return std::nullopt;
    return out;
}

// "0.3" (times identity), "identity", "diag: a, b, c", or rows "a b; c d".
inline std::optional<Eigen::MatrixXd> parse_sigma(const std::string& s, std::size_t n) {
    const std::string t = trim(s);
    if (t == "identity") return Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    if (auto v = parse_double(t))
        return Eigen::MatrixXd(*v * Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n)));
    if (t.rfind("diag:", 0) == 0) {
        auto d = parse_list(t.substr(5));
        if (!d) return std::nullopt;
        Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d->size()), static_cast<Eigen::Index>(d->size()));
        for (std::size_t i = 0; i < d->size(); ++i) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = (*d)[i];
        return m;
    }
    std::vector<std::vector<double>> rows;
    std::istringstream in(t);
    std::string row;
    while (std::getline(in, row, ';')) {
        auto r = parse_list(row);
        if (!r) return std::nullopt;
        if (!rows.empty() && r->size() != rows.front().size()) return std::nullopt;
        rows.push_back(std::move(*r));
    }
    if (rows.empty()) return std::nullopt;
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j)
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    return m;
}

// Reads one section, recording an error per bad key and rejecting keys
// nobody asked for.
class SectionReader {
public:
    SectionReader(const ptree* sec, std::string name, std::vector<std::string>& errors)
        : sec_(sec), name_(std::move(name)), errors_(errors) {}

    bool has(const std::string& key) const { return find(key) != nullptr; }

    std::optional<std::string> text(const std::string& key, bool required = false) {
        used_.insert(key);
        const ptree* node = find(key);
        if (!node) {
            if (required) fail(key, "missing required key");
            return std::nullopt;
        }
        if (!node->empty()) {
            fail(key, "must be a value, not a section");
            return std::nullopt;
        }
        return trim(node->data());
    }

    std::optional<double> real(const std::string& key, bool required, const std::function<bool(double)>& ok,
                               const std::string& range) {
        auto s = text(key, required);
        if (!s) return std::nullopt;
        auto v = parse_double(*s);
        if (!v || !std::isfinite(*v)) {
            fail(key, "expected a number, got '" + *s + "'");
            return std::nullopt;
        }
        if (!ok(*v)) {
            fail(key, "must be " + range + ", got " + *s);
            return std::nullopt;
        }
        return v;
    }

    std::optional<long long> integer(const std::string& key, bool required, long long lo, long long hi = -1) {
        auto s = text(key, required);
        if (!s) return std::nullopt;
        auto v = parse_integer(*s);
        if (!v) {
            fail(key, "expected an integer, got '" + *s + "'");
            return std::nullopt;
        }
        if (*v < lo || (hi >= lo && *v > hi)) {
            fail(key, "must be " + range_text(lo, hi) + ", got " + *s);
            return std::nullopt;
        }
        return v;
    }

    std::optional<bool> boolean(const std::string& key) {
        auto s = text(key);
        if (!s) return std::nullopt;
        if (*s == "true" || *s == "yes" || *s == "1") return true;
        if (*s == "false" || *s == "no" || *s == "0") return false;
        fail(key, "expected true or false, got '" + *s + "'");
        return std::nullopt;
    }

    std::optional<std::string> choice(const std::string& key, const std::vector<std::string>& options,
                                      bool required = false) {
        auto s = text(key, required);
        if (!s) return std::nullopt;
        if (std::find(options.begin(), options.end(), *s) == options.end()) {
            std::string list;
            for (const auto& o : options) list += (list.empty() ? "" : ", ") + o;
            fail(key, "must be one of " + list + ", got '" + *s + "'");
            return std::nullopt;
        }
        return s;
    }

    std::optional<std::vector<double>> list(const std::string& key, bool required, std::size_t length,
                                            const std::function<bool(double)>& ok, const std::string& range) {
        auto s = text(key, required);
        if (!s) return std::nullopt;
        auto v = parse_list(*s);
        if (!v) {
            fail(key, "expected a list of numbers, got '" + *s + "'");
            return std::nullopt;
        }
        if (v->size() == 1 && length > 1) v->assign(length, v->front());
        if (length != 0 && v->size() != length) {
            fail(key, "expected " + std::to_string(length) + " entries, got " + std::to_string(v->size()));
            return std::nullopt;
        }
        for (double x : *v)
            if (!std::isfinite(x) || !ok(x)) {
                fail(key, "every entry must be " + range);
                return std::nullopt;
            }
        return v;
    }

    void fail(const std::string& key, const std::string& what) { errors_.push_back(name_ + "." + key + ": " + what); }

    void reject_unknown() {
        if (!sec_) return;
        for (const auto& [key, _] : *sec_)
            if (!used_.count(key)) errors_.push_back(name_ + "." + key + ": unknown key");
    }

private:
    const ptree* find(const std::string& key) const {
        if (!sec_) return nullptr;
        auto it = sec_->find(key);
        return it == sec_->not_found() ? nullptr : &it->second;
    }
    static std::string range_text(long long lo, long long hi) {
        if (hi < lo) return ">= " + std::to_string(lo);
        return "in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]";
    }

    const ptree* sec_;
    std::string name_;
    std::vector<std::string>& errors_;
    std::set<std::string> used_;
};

inline const ptree* section(const ptree& root, const std::string& name) {
    auto it = root.find(name);
    return it == root.not_found() ? nullptr : &it->second;
}

inline void put_override(ptree& root, const std::string& sec, const std::string& key, const std::string& value) {
    auto found = root.find(sec);
    ptree& s = found == root.not_found() ? root.push_back({sec, ptree()})->second : found->second;
    auto k = s.find(key);
    if (k == s.not_found())
        s.push_back({key, ptree(value)});
    else
        k->second.put_value(value);
}

inline bool positive(double x) { return x > 0.0; }
inline bool non_negative(double x) { return x >= 0.0; }
inline bool unit_open(double x) { return x > 0.0 && x < 1.0; }
inline bool any_value(double) { return true; }

inline std::optional<ModelSpec> read_model(const ptree* sec, double horizon, std::vector<std::string>& errors) {
    SectionReader r(sec, "model", errors);
    ModelSpec m;
    auto kind = r.choice("kind", {"gbm", "diverse", "ou", "patched", "dominance"}, true);
    if (!kind) {
        r.reject_unknown();
        return std::nullopt;
    }
    m.kind = *kind;
    const std::size_t before = errors.size();

    if (m.kind == "gbm" || m.kind == "diverse" || m.kind == "patched") {
        const long long min_n = m.kind == "gbm" ? 1 : 2;
        auto n = r.integer("n", true, min_n, 1000);
        m.n = n ? static_cast<std::size_t>(*n) : 0;
        if (m.n > 0) {
            auto s = r.text("sigma", m.kind == "gbm");
            if (!s) {
                m.sigma = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(m.n), static_cast<Eigen::Index>(m.n));
            } else if (auto sig = parse_sigma(*s, m.n)) {
                if (static_cast<std::size_t>(sig->rows()) != m.n)
                    r.fail("sigma", "expected " + std::to_string(m.n) + " rows, got " + std::to_string(sig->rows()));
                else if (sig->cols() < sig->rows())
                    r.fail("sigma", "needs at least as many columns (factors) as rows (stocks)");
                else
                    m.sigma = *sig;
            } else {
                r.fail("sigma", "expected a number, 'identity', 'diag: ...' or rows separated by ';'");
            }
            if (auto x = r.list("x0", false, m.n, positive, "positive")) m.x0 = *x;
            else if (m.kind == "gbm") m.x0.assign(m.n, 1.0);
            if (m.kind == "gbm") {
                if (auto b = r.list("b", true, m.n, any_value, "finite")) m.b = *b;
            } else {
                if (auto g = r.list("g", false, m.n, non_negative, ">= 0")) m.g = *g;
            }
        }
        if (auto v = r.real("rate", false, non_negative, ">= 0")) m.rate = *v;
        if (m.kind != "gbm") {
            if (auto v = r.real("delta", true, unit_open, "in (0, 1)")) m.delta = *v;
            if (auto v = r.real("bound", true, positive, "> 0")) m.bound = *v;
            if (auto v = r.real("q_floor", false, positive, "> 0")) m.q_floor = *v;
        }
        if (m.kind == "patched") {
            if (auto v = r.real("eta", true, unit_open, "in (0, 1)")) m.eta = *v;
            m.patch_horizon = horizon;
            if (auto v = r.real("patch_horizon", false, positive, "> 0")) m.patch_horizon = *v;
        }
    } else if (m.kind == "ou") {
        if (auto v = r.real("alpha", true, positive, "> 0")) m.alpha = *v;
        if (auto v = r.real("x0", false, positive, "> 0")) m.x0_scalar = *v;
        if (auto v = r.real("switch_time", false, non_negative, ">= 0")) m.switch_time = *v;
    } else {
        if (auto v = r.real("alpha", true, [](double a) { return a > 0.0 && a < 0.5; }, "in (0, 1/2)")) m.alpha = *v;
        if (auto v = r.real("eta", true, positive, "> 0")) m.eta = *v;
        if (auto v = r.real("eta_inner", true, positive, "> 0")) m.eta_inner = *v;
        if (auto v = r.real("strength", true, positive, "> 0")) m.strength = *v;
        if (auto v = r.real("pole_floor", false, positive, "> 0")) m.pole_floor = *v;
    }
    r.reject_unknown();
    if (errors.size() != before) return std::nullopt;

    // Module preconditions: build once and report what the constructors reject.
    try {
        (void)m.build();
    } catch (const invalid_initial_condition& e) {
        errors.push_back(std::string("model.x0: ") + e.what() +
                         " (the diverse drift keeps mu_(1) below 1 - delta only if it starts there)");
        return std::nullopt;
    } catch (const invalid_model& e) {
        const std::string what = e.what();
        const bool vol = what.find("volatility") != std::string::npos || what.find("covariance") != std::string::npos;
        errors.push_back((vol ? "model.sigma: " : "model: ") + what);
        return std::nullopt;
    } catch (const std::invalid_argument& e) {
        const std::string key = m.kind == "patched" ? "model.eta: " : m.kind == "dominance" ? "model.eta_inner: " : "model: ";
        errors.push_back(key + e.what());
        return std::nullopt;
    }
    return m;
}

} // namespace detail

inline ExperimentConfig parse_config_tree(ptree root, const Overrides& ov = {}) {
    using namespace detail;
    std::vector<std::string> errors;

    if (ov.out) put_override(root, "output", "directory", *ov.out);
    if (ov.paths) put_override(root, "mc", "paths", std::to_string(*ov.paths));
    if (ov.seed) put_override(root, "mc", "seed", std::to_string(*ov.seed));
    if (ov.steps) put_override(root, "grid", "steps", std::to_string(*ov.steps));
    if (ov.threads) put_override(root, "mc", "threads", std::to_string(*ov.threads));

    for (const auto& [key, node] : root) {
        static const std::set<std::string> known{"experiment", "model", "grid", "mc", "output"};
        if (node.empty() && !node.data().empty())
            errors.push_back(key + ": keys must live inside a section");
        else if (!known.count(key))
            errors.push_back(key + ": unknown section");
    }

    ExperimentConfig cfg;
    cfg.echo = root;

    SectionReader ex(section(root, "experiment"), "experiment", errors);
    auto name = ex.choice("name", experiment_names(), true);
    cfg.experiment = name.value_or("");

    SectionReader gr(section(root, "grid"), "grid", errors);
    if (auto v = gr.real("horizon", true, positive, "> 0")) cfg.grid.horizon = *v;
    if (auto v = gr.integer("steps", true, 1)) cfg.grid.steps = static_cast<std::size_t>(*v);
    if (auto v = gr.choice("spacing", {"uniform", "geometric"})) cfg.grid.geometric = *v == "geometric";
    if (cfg.grid.geometric) {
        if (auto v = gr.real("first_time", true, positive, "> 0")) {
            cfg.grid.first_time = *v;
            if (!(*v < cfg.grid.horizon)) gr.fail("first_time", "must be below grid.horizon");
        }
        if (cfg.grid.steps < 2) gr.fail("steps", "a geometric grid needs at least 2 steps");
    }
    gr.reject_unknown();

    SectionReader mc(section(root, "mc"), "mc", errors);
    if (auto v = mc.integer("paths", true, 1)) cfg.mc.paths = static_cast<std::size_t>(*v);
    if (auto v = mc.integer("seed", false, 0)) cfg.mc.seed = static_cast<std::uint64_t>(*v);
    if (auto v = mc.integer("threads", false, 0, 1024)) cfg.mc.threads = static_cast<std::size_t>(*v);
    mc.reject_unknown();

    SectionReader out(section(root, "output"), "output", errors);
    if (auto v = out.text("directory")) {
        if (v->empty()) out.fail("directory", "must not be empty");
        cfg.output.directory = *v;
    }
    if (auto v = out.boolean("json")) cfg.output.json = *v;
    if (auto v = out.choice("per_path", {"auto", "true", "false"}))
        cfg.output.per_path = *v == "auto" ? OutputSpec::PerPath::automatic
                              : *v == "true" ? OutputSpec::PerPath::on
                                             : OutputSpec::PerPath::off;
    if (auto v = out.boolean("time_series")) cfg.output.time_series = *v;
    out.reject_unknown();

    const ptree* model_sec = section(root, "model");
    if (cfg.experiment == "local-time-oracle") {
        if (model_sec) errors.push_back("model: local-time-oracle drives a scalar Brownian motion and takes no model section");
    } else if (!cfg.experiment.empty()) {
        if (!model_sec) errors.push_back("model.kind: missing required key");
        else cfg.model = read_model(model_sec, cfg.grid.horizon, errors);
    }

    // Experiment-specific keys.
    Params& p = cfg.params;
    const std::string& e = cfg.experiment;
    const bool needs_delta = e == "diversity-report" || e == "mirror-81" || e == "examples-82-83" ||
                             e == "call-decay" || e == "parity-gap";
    const bool mirror = e == "mirror-81" || e == "examples-82-83" || e == "parity-gap";
    if (needs_delta) p.delta = ex.real("delta", false, unit_open, "in (0, 1)");
    if (e == "arbitrage-45" || e == "master-formula" || e == "call-decay")
        p.p = ex.real("p", false, unit_open, "in (0, 1)");
    if (mirror) {
        p.p = ex.real("p", false, [](double x) { return x > 1.0; }, "> 1");
        if (auto v = ex.real("margin", false, [](double x) { return x > 1.0; }, "> 1")) p.margin = *v;
    }
    if (e == "master-formula" || e == "ranked-decomposition" || e == "local-time-oracle" ||
        e == "instantaneous-dominance") {
        if (auto v = ex.integer("refinements", false, 1, 12)) p.refinements = static_cast<std::size_t>(*v);
        if (cfg.grid.steps % (std::size_t{1} << (p.refinements - 1)) != 0)
            errors.push_back("grid.steps: must be divisible by 2^(refinements - 1) = " +
                             std::to_string(std::size_t{1} << (p.refinements - 1)));
    }
    const std::size_t n = cfg.model ? cfg.model->build().stocks() : 0;
    auto stock_index = [&](const std::string& key, std::size_t fallback) -> std::size_t {
        auto v = ex.integer(key, false, 1, n > 0 ? static_cast<long long>(n) : -1);
        return v ? static_cast<std::size_t>(*v - 1) : fallback;
    };
    if (e == "hedge-price") {
        if (auto v = ex.choice("claim", {"call", "exchange", "zero"})) p.claim = *v;
        p.stock = stock_index("stock", 0);
        if (p.claim == "exchange") {
            p.other = stock_index("other", 1);
            if (n > 0 && p.other >= n) errors.push_back("experiment.other: model has only one stock");
            if (p.other == p.stock) errors.push_back("experiment.other: must differ from experiment.stock");
        }
        if (p.claim == "call")
            if (auto v = ex.real("strike", false, non_negative, ">= 0")) p.strike = *v;
    }
    if (e == "call-decay") {
        // Defaults: strike X_1(0), horizons 5, 10, 20, 40, 80 up to grid.horizon.
        if (auto v = ex.real("strike", false, non_negative, ">= 0")) p.strike = *v;
        else if (cfg.model) p.strike = cfg.model->build().initial_prices()[0];
        if (auto v = ex.list("horizons", false, 0, positive, "> 0")) {
            p.horizons = *v;
        } else {
            for (double T : {5.0, 10.0, 20.0, 40.0, 80.0})
                if (T <= cfg.grid.horizon) p.horizons.push_back(T);
            if (p.horizons.empty()) p.horizons.push_back(cfg.grid.horizon);
        }
        if (!p.horizons.empty() && p.horizons.back() > cfg.grid.horizon)
            errors.push_back("experiment.horizons: largest horizon exceeds grid.horizon");
        if (!std::is_sorted(p.horizons.begin(), p.horizons.end()) ||
            std::adjacent_find(p.horizons.begin(), p.horizons.end()) != p.horizons.end())
            errors.push_back("experiment.horizons: must be strictly increasing");
        try {
            const PathGrid grid = cfg.grid.build();
            for (double T : p.horizons) {
                const std::size_t k = grid.first_index_at_or_after(T);
                if (k > grid.steps() || std::abs(grid.time(k) - T) > 1e-9 * std::max(1.0, T)) {
                    errors.push_back("experiment.horizons: " + std::to_string(T) + " is not a grid time");
                    break;
                }
            }
        } catch (const std::invalid_argument&) {
        }
    }
    if (e == "parity-gap") {
        if (auto v = ex.choice("witness", {"pihat", "stocks"})) p.witness = *v;
        if (p.witness == "stocks") {
            p.first = stock_index("first", 0);
            p.second = stock_index("second", 1);
            if (p.first == p.second) errors.push_back("experiment.second: must differ from experiment.first");
        }
    }
    ex.reject_unknown();
    if (cfg.output.time_series && !e.empty() && e != "simulate" && e != "diversity-report" &&
        e != "instantaneous-dominance")
        errors.push_back("output.time_series: not available for experiment " + e);

    // Cross-section checks that need a valid model.
    if (cfg.model) {
        const ModelSpec& m = *cfg.model;
        const bool diverse_kind = m.kind == "diverse" || m.kind == "patched";
        if (needs_delta && !p.delta) {
            if (diverse_kind) p.delta = m.delta;
            else errors.push_back("experiment.delta: required for model kind '" + m.kind + "'");
        }
        if ((e == "mirror-81" || e == "examples-82-83" || (e == "parity-gap" && p.witness == "pihat")) && n < 2)
            errors.push_back("model.n: mirror constructions need at least two stocks");
        if (e == "parity-gap" && m.rate != 0.0) errors.push_back("model.rate: parity comparison assumes rate = 0");
        if (e == "instantaneous-dominance" && m.kind != "dominance")
            errors.push_back("model.kind: instantaneous-dominance needs kind = dominance");
        if (e == "ranked-decomposition" && n < 2) errors.push_back("model.n: ranked decomposition needs two stocks");
        if (e == "master-formula" || e == "arbitrage-45")
            if (n < 2) errors.push_back("model.n: diversity-weighted portfolio needs two stocks");
    }

    if (!errors.empty()) throw ValidationError(std::move(errors));
    return cfg;
}

inline ExperimentConfig parse_config_text(const std::string& text, const Overrides& ov = {}) {
    ptree root;
    std::istringstream in(text);
    try {
        boost::property_tree::read_ini(in, root);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ValidationError({"line " + std::to_string(e.line()) + ": " + e.message()});
    }
    return parse_config_tree(std::move(root), ov);
}

inline ExperimentConfig parse_config(const std::filesystem::path& file, const Overrides& ov = {}) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw ValidationError({file.string() + ": cannot open config file"});
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), ov);
}

} // namespace spt::lab

#pragma once

#include "spt/lab/config.hpp"

#include <json.hpp>

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <string>
#include <variant>
#include <vector>

namespace spt::lab {

inline constexpr const char* artifact_name = "spt-lab";
inline constexpr const char* artifact_version = "1.0.0";

using Cell = std::variant<std::int64_t, double, std::string>;

struct Table {
    std::string name;  // file stem
    std::vector<std::string> columns;
    std::vector<std::vector<Cell>> rows;
    bool per_path = false;  // subject to the per-path opt-in rule

    void add(std::vector<Cell> row) { rows.push_back(std::move(row)); }
};

struct Provenance {
    std::string artifact = artifact_name;
    std::string version = artifact_version;
    std::uint64_t seed = 0;
    std::string started;
    std::string finished;
};

struct ExperimentReport {
    std::string experiment;
    ptree config;
    nlohmann::ordered_json summary = nlohmann::ordered_json::object();
    std::vector<Table> tables;
    std::vector<std::string> failed_claims;  // probability-one statements contradicted by the run
    std::vector<std::string> notes;
    Provenance provenance;
};

inline std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// Shortest text that round-trips is not enough for byte stability across
// platforms, so every double gets exactly 17 significant digits.
inline std::string format_number(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general, 17);
    return std::string(buf, ptr);
}

inline std::string format_cell(const Cell& c) {
    if (const auto* i = std::get_if<std::int64_t>(&c)) return std::to_string(*i);
    if (const auto* d = std::get_if<double>(&c)) return format_number(*d);
    return std::get<std::string>(c);
}

// RFC 4180: quote fields holding a comma, quote, CR or LF; double inner quotes.
inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"') out += '"';
        out += ch;
    }
    return out + "\"";
}

inline std::string to_csv(const Table& t) {
    std::string out;
    auto line = [&](const auto& cells, auto&& fmt) {
        for (std::size_t j = 0; j < cells.size(); ++j) {
            if (j) out += ',';
            out += csv_field(fmt(cells[j]));
        }
        out += "\r\n";
    };
    line(t.columns, [](const std::string& s) { return s; });
    for (const auto& r : t.rows) line(r, [](const Cell& c) { return format_cell(c); });
    return out;
}

namespace detail {

inline std::string ini_value(const nlohmann::ordered_json& v) {
    if (v.is_number_float()) return format_number(v.get<double>());
    if (v.is_string()) return v.get<std::string>();
    if (v.is_array()) {
        std::string s;
        for (const auto& x : v) s += (s.empty() ? "" : ", ") + ini_value(x);
        return s;
    }
    return v.dump();
}

// Scalars of an object go under [prefix]; nested objects get [prefix.key].
inline void ini_section(std::string& out, const std::string& prefix, const nlohmann::ordered_json& obj) {
    std::string body;
    for (const auto& [k, v] : obj.items())
        if (!v.is_object()) body += k + " = " + ini_value(v) + "\n";
    if (!body.empty()) out += "\n[" + prefix + "]\n" + body;
    for (const auto& [k, v] : obj.items())
        if (v.is_object()) ini_section(out, prefix + "." + k, v);
}

// Floats keep their 17-digit text in the JSON mirror too.
inline nlohmann::ordered_json stable_numbers(const nlohmann::ordered_json& v) {
    if (v.is_number_float()) {
        const double d = v.get<double>();
        if (!std::isfinite(d)) return format_number(d);
        return v;
    }
    if (v.is_object() || v.is_array()) {
        nlohmann::ordered_json out = v.is_object() ? nlohmann::ordered_json::object() : nlohmann::ordered_json::array();
        for (const auto& [k, x] : v.items()) {
            if (v.is_object()) out[k] = stable_numbers(x);
            else out.push_back(stable_numbers(x));
        }
        return out;
    }
    return v;
}

inline nlohmann::ordered_json config_json(const ptree& config) {
    nlohmann::ordered_json out = nlohmann::ordered_json::object();
    for (const auto& [sec, node] : config) {
        nlohmann::ordered_json s = nlohmann::ordered_json::object();
        for (const auto& [k, v] : node) s[k] = v.data();
        out[sec] = s;
    }
    return out;
}

inline nlohmann::ordered_json provenance_json(const ExperimentReport& r) {
    nlohmann::ordered_json p = nlohmann::ordered_json::object();
    p["artifact"] = r.provenance.artifact;
    p["version"] = r.provenance.version;
    p["seed"] = r.provenance.seed;
    p["started"] = r.provenance.started;
    p["finished"] = r.provenance.finished;
    return p;
}

} // namespace detail

// Structured-text summary: provenance, the config echo, results and claims.
inline std::string summary_text(const ExperimentReport& r) {
    std::string out = "; " + std::string(artifact_name) + " report for experiment " + r.experiment + "\n";
    detail::ini_section(out, "provenance", detail::provenance_json(r));
    for (const auto& [sec, node] : r.config) {
        out += "\n[config." + sec + "]\n";
        for (const auto& [k, v] : node) out += k + " = " + v.data() + "\n";
    }
    detail::ini_section(out, "summary", r.summary);
    out += "\n[claims]\nstatus = " + std::string(r.failed_claims.empty() ? "pass" : "fail") + "\n";
    for (std::size_t i = 0; i < r.failed_claims.size(); ++i)
        out += "failed." + std::to_string(i + 1) + " = " + r.failed_claims[i] + "\n";
    if (!r.notes.empty()) {
        out += "\n[notes]\n";
        for (std::size_t i = 0; i < r.notes.size(); ++i) out += "note." + std::to_string(i + 1) + " = " + r.notes[i] + "\n";
    }
    return out;
}

inline nlohmann::ordered_json summary_json(const ExperimentReport& r) {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    j["experiment"] = r.experiment;
    j["provenance"] = detail::provenance_json(r);
    j["config"] = detail::config_json(r.config);
    j["summary"] = detail::stable_numbers(r.summary);
    j["claims"] = {{"status", r.failed_claims.empty() ? "pass" : "fail"}, {"failed", r.failed_claims}};
    j["notes"] = r.notes;
    return j;
}

inline void write_file(const std::filesystem::path& path, const std::string& body) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << body;
    if (!f) throw std::runtime_error("write failed for " + path.string());
}

// Writes summary.txt, summary.json (if enabled) and one CSV per table; returns
// the files written.
inline std::vector<std::filesystem::path> write_report(const ExperimentReport& r, const OutputSpec& out,
                                                       std::size_t paths) {
    namespace fs = std::filesystem;
    const fs::path dir(out.directory);
    fs::create_directories(dir);
    std::vector<fs::path> files;
    for (const auto& t : r.tables) {
        if (t.per_path && !out.write_per_path(paths)) continue;
        files.push_back(dir / (t.name + ".csv"));
        write_file(files.back(), to_csv(t));
    }
    files.push_back(dir / "summary.txt");
    write_file(files.back(), summary_text(r));
    if (out.json) {
        files.push_back(dir / "summary.json");
        write_file(files.back(), summary_json(r).dump(2) + "\n");
    }
    return files;
}

} // namespace spt::lab

#include "spt/lab/config.hpp"
#include "spt/lab/experiments.hpp"
#include "spt/lab/report.hpp"

#include <catch_amalgamated.hpp>
#include <json.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
using spt::lab::parse_config_text;
using spt::lab::ValidationError;

namespace {

const char* minimal_gbm = R"([experiment]
name = simulate

[model]
kind = gbm
n = 2
b = 0.05, 0.03
sigma = 0.2

[grid]
horizon = 1
steps = 10

[mc]
paths = 5
seed = 1
)";

fs::path scratch() {
    static const fs::path dir = [] {
        auto d = fs::temp_directory_path() / ("spt-lab-cli-" + std::to_string(::getpid()));
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

fs::path write_config(const std::string& name, const std::string& text) {
    const auto p = scratch() / (name + ".ini");
    std::ofstream(p, std::ios::binary) << text;
    return p;
}

// Joined validation messages, or "" when the text parses.
std::string errors_of(const std::string& text) {
    try {
        parse_config_text(text);
    } catch (const ValidationError& e) {
        std::string all;
        for (const auto& m : e.errors()) all += m + "\n";
        return all;
    }
    return "";
}

std::string replace(std::string s, const std::string& from, const std::string& to) {
    const auto at = s.find(from);
    REQUIRE(at != std::string::npos);
    return s.replace(at, from.size(), to);
}

int run_lab(const std::string& args) {
    const char* exe = std::getenv("SPT_LAB");
    REQUIRE(exe);
    const std::string cmd = std::string(exe) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string first_line(const std::string& csv) { return csv.substr(0, csv.find("\r\n")); }

std::string small_arbitrage(const std::string& out) {
    return "[experiment]\nname = arbitrage-45\np = 0.5\n\n[model]\nkind = diverse\nn = 3\nsigma = identity\n"
           "delta = 0.3\nbound = 1\n\n[grid]\nhorizon = 4\nsteps = 4000\n\n[mc]\npaths = 40\nseed = 3\n\n"
           "[output]\ndirectory = " + out + "\n";
}

} // namespace

TEST_CASE("minimal GBM config is valid", "[cli]") {
    const auto cfg = parse_config_text(minimal_gbm);
    CHECK(cfg.experiment == "simulate");
    CHECK(cfg.mc.paths == 5);
    CHECK(cfg.grid.steps == 10);
    const auto model = cfg.build_model();
    CHECK(model.stocks() == 2);
    CHECK(model.volatility().variances()[0] == Catch::Approx(0.04));
}

TEST_CASE("diverse start outside the barrier names model.x0", "[cli]") {
    const std::string text = "[experiment]\nname = diversity-report\n[model]\nkind = diverse\nn = 2\nsigma = identity\n"
                             "delta = 0.3\nbound = 1\nx0 = 8, 2\n[grid]\nhorizon = 1\nsteps = 10\n[mc]\npaths = 5\nseed = 1\n";
    const auto err = errors_of(text);
    INFO(err);
    CHECK(err.find("model.x0") != std::string::npos);
    CHECK(err.find("1 - delta") != std::string::npos);
}

TEST_CASE("validation errors name the key", "[cli]") {
    CHECK(errors_of(replace(minimal_gbm, "paths = 5", "paths = -3")).find("mc.paths") != std::string::npos);
    CHECK(errors_of(replace(minimal_gbm, "name = simulate", "name = nonsense")).find("experiment.name") != std::string::npos);
    CHECK(errors_of(replace(minimal_gbm, "steps = 10", "steps = ten")).find("grid.steps") != std::string::npos);
    CHECK(errors_of(replace(minimal_gbm, "horizon = 1\n", "")).find("grid.horizon") != std::string::npos);
    CHECK(errors_of(replace(minimal_gbm, "seed = 1", "seed = 1\ncolour = blue")).find("mc.colour") != std::string::npos);
    CHECK(errors_of(replace(minimal_gbm, "sigma = 0.2", "sigma = 1 1; 1 1")).find("model.sigma") != std::string::npos);
    // every problem is reported, not just the first
    const auto many = errors_of(replace(replace(minimal_gbm, "paths = 5", "paths = 0"), "steps = 10", "steps = 0"));
    CHECK(many.find("mc.paths") != std::string::npos);
    CHECK(many.find("grid.steps") != std::string::npos);
}

TEST_CASE("overrides replace config values", "[cli]") {
    spt::lab::Overrides ov;
    ov.paths = 7;
    ov.seed = 99;
    ov.steps = 20;
    ov.out = "elsewhere";
    const auto cfg = parse_config_text(minimal_gbm, ov);
    CHECK(cfg.mc.paths == 7);
    CHECK(cfg.mc.seed == 99);
    CHECK(cfg.grid.steps == 20);
    CHECK(cfg.output.directory == "elsewhere");
    ov.paths = -1;
    CHECK_THROWS_AS(parse_config_text(minimal_gbm, ov), ValidationError);
}

TEST_CASE("CSV fields follow RFC 4180", "[cli]") {
    using spt::lab::csv_field;
    CHECK(csv_field("plain") == "plain");
    CHECK(csv_field("a,b") == "\"a,b\"");
    CHECK(csv_field("say \"hi\"") == "\"say \"\"hi\"\"\"");
    CHECK(csv_field("two\nlines") == "\"two\nlines\"");
    spt::lab::Table t{"x", {"name", "value"}, {}, false};
    t.add({std::string("a,b"), 0.1});
    t.add({std::string("c"), std::int64_t{3}});
    CHECK(spt::lab::to_csv(t) == "name,value\r\n\"a,b\",0.10000000000000001\r\nc,3\r\n");
}

TEST_CASE("numbers are written with 17 significant digits", "[cli]") {
    for (double x : {0.1, 1.0 / 3.0, -2.5e-300, 123456789.123456789, 1e22}) {
        const auto s = spt::lab::format_number(x);
        CHECK(std::stod(s) == x);
    }
    CHECK(spt::lab::format_number(0.1) == "0.10000000000000001");
    CHECK(spt::lab::format_number(std::nan("")) == "nan");
}

TEST_CASE("arbitrage-45 writes the documented columns", "[cli]") {
    const auto out = scratch() / "arb";
    const auto cfg = write_config("arb", small_arbitrage(out.string()));
    REQUIRE(run_lab("run " + cfg.string()) == 0);
    CHECK(first_line(slurp(out / "paths.csv")) == "path_id,terminal_log_ratio,a5_slack,delta_avg,delta_max");
    const auto summary = slurp(out / "summary.txt");
    CHECK(summary.find("[provenance]") != std::string::npos);
    CHECK(summary.find("[config.model]") != std::string::npos);
    CHECK(summary.find("[claims]") != std::string::npos);
    const auto j = nlohmann::json::parse(slurp(out / "summary.json"));
    CHECK(j["experiment"] == "arbitrage-45");
    CHECK(j["provenance"]["seed"] == 3);
    CHECK(j["provenance"]["version"] == spt::lab::artifact_version);
    CHECK(j["config"]["model"]["kind"] == "diverse");
}

TEST_CASE("call-decay writes (T, h_hat, stderr, envelope) rows", "[cli]") {
    const auto out = scratch() / "decay";
    const auto cfg = write_config("decay",
        "[experiment]\nname = call-decay\nhorizons = 1, 2\n[model]\nkind = diverse\nn = 3\nsigma = 0.2\ndelta = 0.3\n"
        "bound = 0.04\nrate = 0.02\n[grid]\nhorizon = 2\nsteps = 200\n[mc]\npaths = 50\nseed = 2\n[output]\ndirectory = " +
            out.string() + "\n");
    REQUIRE(run_lab("run " + cfg.string()) == 0);
    const auto csv = slurp(out / "call_decay.csv");
    CHECK(first_line(csv) == "T,h_hat,stderr,envelope");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
}

TEST_CASE("identical configs give byte-identical CSVs for any thread count", "[cli]") {
    const auto a = scratch() / "det_a", b = scratch() / "det_b", c = scratch() / "det_c";
    const auto cfg = write_config("det", small_arbitrage((scratch() / "det_unused").string()));
    REQUIRE(run_lab("run " + cfg.string() + " --out " + a.string()) == 0);
    REQUIRE(run_lab("run " + cfg.string() + " --out " + b.string()) == 0);
    REQUIRE(run_lab("run " + cfg.string() + " --out " + c.string() + " --threads 3") == 0);
    const auto base = slurp(a / "paths.csv");
    CHECK(!base.empty());
    CHECK(slurp(b / "paths.csv") == base);
    CHECK(slurp(c / "paths.csv") == base);
}

TEST_CASE("per-path records are opt-in above 10^4 paths", "[cli]") {
    const std::string big = replace(replace(minimal_gbm, "paths = 5", "paths = 10001"), "steps = 10", "steps = 1");
    const auto off = scratch() / "many_off", on = scratch() / "many_on";
    REQUIRE(run_lab("run " + write_config("many", big).string() + " --out " + off.string()) == 0);
    CHECK_FALSE(fs::exists(off / "paths.csv"));
    CHECK(fs::exists(off / "summary.txt"));
    REQUIRE(run_lab("run " + write_config("many_on", big + "\n[output]\nper_path = true\n").string() + " --out " +
                    on.string()) == 0);
    CHECK(fs::exists(on / "paths.csv"));
}

TEST_CASE("exit codes", "[cli]") {
    const auto dir = scratch();
    CHECK(run_lab("run " + write_config("ok", minimal_gbm).string() + " --out " + (dir / "ok").string()) == 0);
    CHECK(run_lab("run " + write_config("bad", replace(minimal_gbm, "paths = 5", "paths = -1")).string()) == 2);
    CHECK(run_lab("run " + (dir / "missing.ini").string()) == 2);
    CHECK(run_lab("frobnicate") == 2);
    CHECK(run_lab("run " + write_config("ok2", minimal_gbm).string() + " --paths -4") == 2);
    const std::string overflow = replace(replace(minimal_gbm, "b = 0.05, 0.03", "b = 1e308, 0"), "horizon = 1", "horizon = 10");
    CHECK(run_lab("run " + write_config("overflow", replace(overflow, "steps = 10", "steps = 1")).string() + " --out " +
                  (dir / "overflow").string()) == 3);
    const std::string coarse = "[experiment]\nname = instantaneous-dominance\n[model]\nkind = dominance\nalpha = 0.25\n"
                               "eta = 1\neta_inner = 0.5\nstrength = 1\n[grid]\nhorizon = 1\nsteps = 4\n[mc]\npaths = 50\n"
                               "seed = 1\n";
    CHECK(run_lab("run " + write_config("coarse", coarse).string() + " --out " + (dir / "coarse").string()) == 4);
}

TEST_CASE("shipped configs parse", "[cli]") {
    const char* dir = std::getenv("SPT_CONFIGS");
    if (!dir) SKIP("SPT_CONFIGS not set");
    std::size_t count = 0;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.path().extension() != ".ini") continue;
        INFO(e.path());
        CHECK_NOTHROW(spt::lab::parse_config(e.path()));
        ++count;
    }
    CHECK(count == spt::lab::experiment_names().size());
}

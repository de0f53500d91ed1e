#include "spt/error.hpp"
#include "spt/lab/config.hpp"
#include "spt/lab/experiments.hpp"
#include "spt/lab/report.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <string>

namespace {

enum Exit { ok = 0, validation = 2, numeric = 3, assertion = 4 };

int run_command(const std::string& file, const spt::lab::Overrides& ov) {
    using namespace spt::lab;
    ExperimentConfig cfg;
    try {
        cfg = parse_config(file, ov);
    } catch (const ValidationError& e) {
        for (const auto& msg : e.errors()) std::cerr << "validation error: " << msg << "\n";
        return validation;
    }
    try {
        const ExperimentReport report = run(cfg);
        const auto files = write_report(report, cfg.output, cfg.mc.paths);
        for (const auto& f : files) std::cout << f.string() << "\n";
        for (const auto& note : report.notes) std::cerr << "note: " << note << "\n";
        if (!report.failed_claims.empty()) {
            for (const auto& c : report.failed_claims) std::cerr << "claim failed: " << c << "\n";
            return assertion;
        }
        return ok;
    } catch (const spt::integration_failure& e) {
        std::cerr << "integration failure: " << e.what() << "\n";
        return numeric;
    } catch (const spt::numeric_failure& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return numeric;
    } catch (const std::invalid_argument& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return validation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return numeric;
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Simulation and verification lab for diverse equity markets"};
    app.require_subcommand(1);
    auto* run = app.add_subcommand("run", "Run the experiment described by a config file");
    std::string file;
    spt::lab::Overrides ov;
    run->add_option("config", file, "Config file (INI-style sections)")->required();
    run->add_option("--out", ov.out, "Output directory, overrides output.directory");
    run->add_option("--paths", ov.paths, "Number of paths, overrides mc.paths");
    run->add_option("--seed", ov.seed, "Master seed, overrides mc.seed");
    run->add_option("--steps", ov.steps, "Grid steps, overrides grid.steps");
    run->add_option("--threads", ov.threads, "Worker threads (0: all cores), overrides mc.threads");
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : validation;
    }
    return run_command(file, ov);
}

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "dtnprobe/experiments.hpp"

using namespace dtnprobe;

int main(int argc, char** argv) {
    CLI::App app{"dtn-probe: boundary-data probing workbench for semilinear elliptic problems"};
    app.require_subcommand(1);

    std::string config_path, experiment = "all", out_dir;
    int workers = 0;
    auto* run_cmd = app.add_subcommand("run", "run an experiment pipeline");
    run_cmd->add_option("--config", config_path, "configuration file (TOML)")->required();
    run_cmd->add_option("--experiment", experiment,
                        "identity|frechet|scaling|lambda1|recover-sigma|recover-aprime|stability|all");
    run_cmd->add_option("--workers", workers, "worker threads (default: from config)");
    run_cmd->add_option("--out", out_dir, "output directory (default: from config or DTN_PROBE_OUT)");

    std::string validate_path;
    auto* val_cmd = app.add_subcommand("validate-config", "check a configuration file");
    val_cmd->add_option("path", validate_path, "configuration file")->required();

    std::string report_dir;
    auto* rep_cmd = app.add_subcommand("report", "re-render plots from the CSVs in a run directory");
    rep_cmd->add_option("dir", report_dir, "run output directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (val_cmd->parsed()) {
            const RunConfig cfg = load_config(validate_path);
            const auto errs = validate_config(cfg);
            if (!errs.empty()) {
                std::cerr << "invalid configuration:\n";
                for (const auto& e : errs) std::cerr << "  " << e << "\n";
                return 2;
            }
            std::cout << "configuration ok\n";
            return 0;
        }
        if (rep_cmd->parsed()) {
            if (!std::filesystem::is_directory(report_dir)) {
                std::cerr << "not a directory: " << report_dir << "\n";
                return 2;
            }
            rerender_reports(report_dir);
            std::cout << "plots re-rendered in " << report_dir << "\n";
            return 0;
        }

        RunConfig cfg = load_config(config_path);
        if (workers > 0) cfg.workers = workers;
        std::string dir = cfg.output_dir;
        if (const char* env = std::getenv("DTN_PROBE_OUT")) dir = env;
        if (!out_dir.empty()) dir = out_dir;

        const RunReport report = run(cfg, experiment, dir);
        for (const auto& [name, exp] : report.summary["experiments"].items())
            std::cout << name << ": " << (exp.value("pass", false) ? "pass" : "FAIL") << "  ("
                      << exp.value("wall_seconds", 0.0) << " s)\n";
        std::cout << "summary: " << dir << "/summary.json\n";
        return report.all_pass() ? 0 : 1;
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 2;
    } catch (const SolveError& e) {
        std::cerr << "solver failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

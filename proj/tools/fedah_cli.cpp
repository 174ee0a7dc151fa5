// Command-line front end: `fedah run <config>` and `fedah describe <config>`.
//
// Exit codes: 0 success, 1 configuration error (nothing written), 2 runtime
// error (files written by this invocation are removed).

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fedah/experiment.hpp"

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

struct Overrides {
    std::string output_dir;
    std::string methods;
    std::size_t jobs = 0;
};

fedah::ExperimentConfig resolve(const std::string& path, const Overrides& o) {
    auto cfg = fedah::load_config(path);
    if (!o.output_dir.empty()) cfg.output_dir = o.output_dir;
    if (!o.methods.empty()) {
        cfg.methods.clear();
        for (const auto& m : fedah::detail::split_list(o.methods)) cfg.methods.push_back(fedah::parse_method(m));
    }
    if (o.jobs > 0) cfg.jobs = o.jobs;
    fedah::normalize(cfg);
    fedah::validate(cfg);
    return cfg;
}

int report(const fedah::Error& e) {
    std::cerr << "fedah: " << fedah::to_string(e.kind()) << ": " << e.what() << '\n';
    return e.kind() == fedah::ErrorKind::runtime ? kExitRuntime : kExitConfig;
}

int cmd_run(const std::string& path, const Overrides& o) {
    fedah::ExperimentConfig cfg;
    std::vector<fedah::PreparedRun> runs;
    try {
        cfg = resolve(path, o);
        runs = fedah::prepare_runs(cfg);
    } catch (const fedah::Error& e) {
        report(e);
        return kExitConfig;
    }

    const std::size_t n_runs = runs.size();
    std::vector<fedah::RunResult> results;
    try {
        results = fedah::execute_runs(std::move(runs), cfg.jobs);
    } catch (const std::exception& e) {
        std::cerr << "fedah: run failed: " << e.what() << '\n';
        return kExitRuntime;
    }

    try {
        fedah::write_outputs(cfg, results);
    } catch (const std::exception& e) {
        std::cerr << "fedah: writing outputs failed: " << e.what() << '\n';
        return kExitRuntime;
    }
    std::cout << "fedah: " << n_runs << " run(s) complete, results in " << cfg.output_dir.string() << '\n';
    return 0;
}

int cmd_describe(const std::string& path, const Overrides& o) {
    try {
        const auto cfg = resolve(path, o);
        fedah::describe(cfg, std::cout);
    } catch (const fedah::Error& e) {
        return report(e);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Federated learning simulator: FedAvg, FedPer, FedRep and FedAH on partitioned data"};
    app.require_subcommand(1);

    std::string config_path;
    Overrides overrides;

    auto* run = app.add_subcommand("run", "Run every (method, seed) pair of a config and write CSV results");
    run->add_option("config", config_path, "Experiment config (INI)")->required();
    run->add_option("--output-dir", overrides.output_dir, "Override experiment.output_dir");
    run->add_option("--methods", overrides.methods, "Override experiment.methods (comma-separated)");
    run->add_option("--jobs", overrides.jobs, "Runs to execute in parallel");

    auto* desc = app.add_subcommand("describe", "Print the resolved config, client sizes and parameter counts");
    desc->add_option("config", config_path, "Experiment config (INI)")->required();
    desc->add_option("--output-dir", overrides.output_dir, "Override experiment.output_dir");
    desc->add_option("--methods", overrides.methods, "Override experiment.methods (comma-separated)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    if (run->parsed()) return cmd_run(config_path, overrides);
    return cmd_describe(config_path, overrides);
}

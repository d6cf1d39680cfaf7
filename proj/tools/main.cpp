#include <iostream>

#include <CLI11.hpp>

#include "ddml/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Double/debiased machine learning estimation and simulation"};
    app.require_subcommand(1);

    ddml::CliOverrides overrides;
    std::string config;
    std::uint64_t seed = 0;
    int threads = 1;
    std::string out;
    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config,config", config, "JSON config file")->required();
        cmd->add_option("--seed", seed, "override the config seed");
        cmd->add_option("--threads", threads, "worker threads (1 = serial reference mode)")->check(CLI::PositiveNumber);
        cmd->add_option("--out", out, "output path (results JSON, or fold CSV for export-folds)");
    };

    auto* estimate = app.add_subcommand("estimate", "cross-fit and estimate on a CSV data set");
    add_common(estimate);
    auto* simulate = app.add_subcommand("simulate", "Monte Carlo run on a simulated design");
    add_common(simulate);
    auto* folds = app.add_subcommand("export-folds", "write the fold ids an estimate run would use");
    add_common(folds);

    auto* inspect = app.add_subcommand("inspect", "print tables from a results file");
    std::string results, what;
    inspect->add_option("results", results, "results JSON")->required();
    inspect->add_option("what", what, "weights | mspe | folds")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : ddml::kExitConfig;
    }

    for (auto* cmd : {estimate, simulate, folds}) {
        if (cmd->count("--seed")) overrides.seed = seed;
        if (cmd->count("--threads")) overrides.threads = threads;
        if (cmd->count("--out")) overrides.out = out;
    }

    if (*estimate) return ddml::cmd_estimate(config, overrides, std::cout, std::cerr);
    if (*simulate) return ddml::cmd_simulate(config, overrides, std::cout, std::cerr);
    if (*folds) return ddml::cmd_export_folds(config, overrides, std::cout, std::cerr);
    return ddml::cmd_inspect(results, what, std::cout, std::cerr);
}

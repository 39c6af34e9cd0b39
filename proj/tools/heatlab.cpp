#include "heatctl/config.hpp"
#include "heatctl/scenarios.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace {

std::string default_out_dir() {
    const char* env = std::getenv("HEATLAB_OUT");
    return env != nullptr ? env : "out";
}

std::vector<std::string> split_csv(const std::string& list) {
    std::vector<std::string> items;
    std::istringstream in(list);
    std::string item;
    while (std::getline(in, item, ','))
        if (!item.empty()) items.push_back(item);
    return items;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"heatctl experiment runner"};
    app.require_subcommand(1);

    std::string config_path, out_dir = default_out_dir();
    long long seed = -1;
    int workers = 1;
    std::string param, values_list;

    CLI::App* run = app.add_subcommand("run", "run one scenario from a config file");
    run->add_option("config", config_path, "config file")->required();
    run->add_option("--out", out_dir, "output directory");
    run->add_option("--seed", seed, "override the config seed");
    run->add_option("--workers", workers, "worker threads (used by sweeps)");

    CLI::App* sweep = app.add_subcommand("sweep", "run one scenario per value of a config key");
    sweep->add_option("config", config_path, "config file")->required();
    sweep->add_option("--param", param, "config key to sweep")->required();
    sweep->add_option("--values", values_list, "comma-separated values")->required();
    sweep->add_option("--out", out_dir, "output directory");
    sweep->add_option("--seed", seed, "override the config seed");
    sweep->add_option("--workers", workers, "worker threads");

    CLI11_PARSE(app, argc, argv);

    heatctl::KeyValueConfig cfg;
    try {
        cfg = heatctl::KeyValueConfig::from_file(config_path);
    } catch (const heatctl::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    }
    if (seed >= 0) cfg.set("seed", std::to_string(seed));

    heatctl::ScenarioOutcome outcome;
    if (run->parsed()) {
        outcome = heatctl::run_scenario(cfg, out_dir);
    } else {
        outcome = heatctl::run_sweep(cfg, param, split_csv(values_list), out_dir, workers);
    }

    if (!outcome.message.empty()) std::cerr << outcome.message << "\n";
    for (const auto& [name, ok] : outcome.manifest.assertions)
        std::cout << (ok ? "[pass] " : "[FAIL] ") << name << "\n";
    return outcome.exit_code;
}

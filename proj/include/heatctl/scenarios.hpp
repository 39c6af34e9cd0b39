#pragma once

#include "heatctl/config.hpp"
#include "heatctl/io.hpp"

#include <string>
#include <vector>

namespace heatctl {

struct ScenarioOutcome {
    int exit_code = 0; // 0 pass, 1 assertion failure, 2 config error, 3 I/O error
    std::string message;
    RunManifest manifest;
};

/// Executes the scenario named by the `scenario` key, writing CSV/JSON
/// artifacts and the manifest under out_dir.
ScenarioOutcome run_scenario(const KeyValueConfig& cfg, const std::string& out_dir);

/// One scenario run per value of the swept key, each in its own cell
/// directory; failures are recorded per cell and the sweep continues.
ScenarioOutcome run_sweep(const KeyValueConfig& cfg, const std::string& param,
                          const std::vector<std::string>& values, const std::string& out_dir,
                          int workers);

} // namespace heatctl

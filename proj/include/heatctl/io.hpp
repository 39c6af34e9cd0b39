#pragma once

#include "heatctl/grid.hpp"
#include "heatctl/parabolic.hpp"
#include "heatctl/time_grid.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace heatctl {

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// 17 significant digits: round-trips doubles exactly, so reruns with the
/// same seed produce byte-identical files.
std::string format_g17(double v);

std::uint64_t fnv1a64(std::string_view s);

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows);

/// Columns (t, x, value).
void write_trajectory_csv(const std::string& path, const Grid1D& grid,
                          const SpaceTimeField& field);

/// Columns (t, l1, l2, linf).
void write_norm_series_csv(const std::string& path, const SolveResult& result);

/// Columns (t, x, h).
void write_control_csv(const std::string& path, const Grid1D& grid,
                       const SpaceTimeField& control);

struct RunManifest {
    std::string version = "heatctl 1.0";
    std::uint64_t seed = 0;
    std::map<std::string, std::string> config_echo;
    std::map<std::string, double> constants; // calibrated values (C1_cal, delta_star, ...)
    std::map<std::string, double> metrics;
    std::map<std::string, bool> assertions;
    std::vector<std::string> outputs;
    double wall_clock_seconds = 0.0;

    bool all_assertions_pass() const {
        for (const auto& [name, ok] : assertions)
            if (!ok) return false;
        return true;
    }
};

/// JSON, written to a temporary file and renamed into place.
void write_manifest(const std::string& path, const RunManifest& manifest);

} // namespace heatctl

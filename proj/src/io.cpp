#include "heatctl/io.hpp"

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

namespace heatctl {

std::string format_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

namespace {

std::ofstream open_out(const std::string& path) {
    std::filesystem::path p(path);
    if (p.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(p.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open output file: " + path);
    return out;
}

} // namespace

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
    std::ofstream out = open_out(path);
    for (std::size_t i = 0; i < header.size(); ++i)
        out << (i ? "," : "") << header[i];
    out << "\n";
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i)
            out << (i ? "," : "") << format_g17(row[i]);
        out << "\n";
    }
    if (!out) throw IoError("write failed: " + path);
}

void write_trajectory_csv(const std::string& path, const Grid1D& grid,
                          const SpaceTimeField& field) {
    std::ofstream out = open_out(path);
    out << "t,x,value\n";
    for (int k = 0; k < field.values.rows(); ++k)
        for (int i = 0; i < grid.n_nodes; ++i)
            out << format_g17(field.tg.node(k)) << ',' << format_g17(grid.nodes(i)) << ','
                << format_g17(field.values(k, i)) << "\n";
    if (!out) throw IoError("write failed: " + path);
}

void write_norm_series_csv(const std::string& path, const SolveResult& result) {
    std::ofstream out = open_out(path);
    out << "t,l1,l2,linf\n";
    for (std::size_t k = 0; k < result.times.size(); ++k)
        out << format_g17(result.times[k]) << ',' << format_g17(result.norm_l1[k]) << ','
            << format_g17(result.norm_l2[k]) << ',' << format_g17(result.norm_linf[k]) << "\n";
    if (!out) throw IoError("write failed: " + path);
}

void write_control_csv(const std::string& path, const Grid1D& grid,
                       const SpaceTimeField& control) {
    std::ofstream out = open_out(path);
    out << "t,x,h\n";
    for (int k = 0; k < control.values.rows(); ++k)
        for (int i = 0; i < grid.n_nodes; ++i)
            out << format_g17(control.tg.node(k)) << ',' << format_g17(grid.nodes(i)) << ','
                << format_g17(control.values(k, i)) << "\n";
    if (!out) throw IoError("write failed: " + path);
}

void write_manifest(const std::string& path, const RunManifest& manifest) {
    nlohmann::json j;
    j["version"] = manifest.version;
    j["seed"] = manifest.seed;
    j["config"] = manifest.config_echo;
    j["constants"] = manifest.constants;
    j["metrics"] = manifest.metrics;
    j["assertions"] = manifest.assertions;
    j["outputs"] = manifest.outputs;
    j["wall_clock_seconds"] = manifest.wall_clock_seconds;
    j["pass"] = manifest.all_assertions_pass();

    const std::string tmp = path + ".tmp";
    {
        std::ofstream out = open_out(tmp);
        out << j.dump(2) << "\n";
        if (!out) throw IoError("write failed: " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("rename failed: " + path + " (" + ec.message() + ")");
}

} // namespace heatctl

#include <doctest.h>

#include "heatctl/config.hpp"
#include "heatctl/io.hpp"
#include "heatctl/scenarios.hpp"

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

using namespace heatctl;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string temp_dir(const std::string& tag) {
    auto p = std::filesystem::temp_directory_path() / ("heatctl_test_" + tag);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p.string();
}

} // namespace

TEST_CASE("config parsing") {
    KeyValueConfig cfg = KeyValueConfig::from_string(R"(
# comment line
scenario = SmoothingCheck
grid.n_nodes = 101   # trailing comment
grid.x_b = 2.5
flagged = true
hum.eps_schedule = 1e-1, 1e-2, 1e-3
)");
    CHECK(cfg.require_string("scenario") == "SmoothingCheck");
    CHECK(cfg.get_int("grid.n_nodes", 0) == 101);
    CHECK(cfg.get_double("grid.x_b", 0.0) == 2.5);
    CHECK(cfg.get_bool("flagged", false));
    CHECK(cfg.get_double("missing", 7.5) == 7.5);
    auto sched = cfg.get_double_list("hum.eps_schedule", {});
    REQUIRE(sched.size() == 3);
    CHECK(sched[2] == 1e-3);

    CHECK_THROWS_AS(cfg.require_string("nope"), ConfigError);
    CHECK_THROWS_AS(KeyValueConfig::from_string("a b c"), ConfigError);
    CHECK_THROWS_AS(KeyValueConfig::from_string("x = not_a_number").get_double("x", 0.0),
                    ConfigError);
    CHECK_THROWS_AS(KeyValueConfig::from_string("x = 1.5").get_int("x", 0), ConfigError);
    CHECK_THROWS_AS(KeyValueConfig::from_string("x = maybe").get_bool("x", false), ConfigError);
}

TEST_CASE("g17 formatting round-trips doubles") {
    std::mt19937_64 rng(77);
    std::normal_distribution<double> N(0.0, 1.0);
    for (int i = 0; i < 200; ++i) {
        const double v = N(rng) * std::pow(10.0, (i % 61) - 30);
        const double back = std::strtod(format_g17(v).c_str(), nullptr);
        CHECK(back == v);
    }
    CHECK(fnv1a64("") == 0xcbf29ce484222325ull);
    CHECK(fnv1a64("a") != fnv1a64("b"));
}

TEST_CASE("csv and manifest writers") {
    const std::string dir = temp_dir("io");
    write_csv(dir + "/t.csv", {"a", "b"}, {{1.0, 2.0}, {3.0, 0.1}});
    const std::string body = slurp(dir + "/t.csv");
    CHECK(body.substr(0, 4) == "a,b\n");
    CHECK(body.find("0.10000000000000001") != std::string::npos); // 17 digits

    RunManifest m;
    m.seed = 9;
    m.assertions["alpha"] = true;
    m.assertions["beta"] = false;
    m.metrics["x"] = 1.5;
    write_manifest(dir + "/manifest.json", m);
    auto j = nlohmann::json::parse(slurp(dir + "/manifest.json"));
    CHECK(j["seed"] == 9);
    CHECK(j["pass"] == false);
    CHECK(j["assertions"]["alpha"] == true);
    CHECK_FALSE(std::filesystem::exists(dir + "/manifest.json.tmp"));
}

TEST_CASE("scenario validation failures exit with code 2 and the offending key") {
    const std::string dir = temp_dir("cfg");

    KeyValueConfig missing;
    CHECK(run_scenario(missing, dir).exit_code == 2);

    KeyValueConfig unknown = KeyValueConfig::from_string("scenario = Nope");
    ScenarioOutcome u = run_scenario(unknown, dir);
    CHECK(u.exit_code == 2);
    CHECK(u.message.find("scenario") != std::string::npos);

    KeyValueConfig bad_grid =
        KeyValueConfig::from_string("scenario = SmoothingCheck\ngrid.n_nodes = 2");
    ScenarioOutcome b = run_scenario(bad_grid, dir);
    CHECK(b.exit_code == 2);
    CHECK(b.message.find("grid.n_nodes") != std::string::npos);
}

TEST_CASE("smoothing scenario runs, passes, and is byte-deterministic") {
    KeyValueConfig cfg = KeyValueConfig::from_string(R"(
scenario = SmoothingCheck
seed = 4
grid.n_nodes = 201
smoothing.steps_per_sample = 400
)");
    const std::string d1 = temp_dir("sm1");
    const std::string d2 = temp_dir("sm2");
    ScenarioOutcome o1 = run_scenario(cfg, d1);
    ScenarioOutcome o2 = run_scenario(cfg, d2);
    CHECK(o1.exit_code == 0);
    CHECK(o1.manifest.assertions.at("slope_near_minus_half"));
    CHECK(slurp(d1 + "/smoothing.csv") == slurp(d2 + "/smoothing.csv"));
    CHECK(std::filesystem::exists(d1 + "/manifest.json"));
}

TEST_CASE("sweep aggregates cells and tolerates failures") {
    KeyValueConfig cfg = KeyValueConfig::from_string(R"(
scenario = SmoothingCheck
seed = 4
grid.n_nodes = 151
smoothing.steps_per_sample = 300
)");
    const std::string dir = temp_dir("sweep");
    ScenarioOutcome ok =
        run_sweep(cfg, "smoothing.t_max", {"0.05", "0.1"}, dir, 2);
    CHECK(ok.exit_code == 0);
    const std::string body = slurp(dir + "/sweep.csv");
    CHECK(body.find("smoothing.t_max,exit_code,pass") == 0);
    CHECK(std::count(body.begin(), body.end(), '\n') == 3); // header + 2 cells

    ScenarioOutcome empty = run_sweep(cfg, "smoothing.t_max", {}, dir, 1);
    CHECK(empty.exit_code == 2);

    // a failing cell is recorded but the sweep continues
    ScenarioOutcome mixed =
        run_sweep(cfg, "grid.n_nodes", {"151", "2"}, temp_dir("sweep2"), 1);
    CHECK(mixed.exit_code == 1);
}

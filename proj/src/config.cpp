#include "heatctl/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

namespace heatctl {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& value) {
    char* end = nullptr;
    const double v = std::strtod(value.c_str(), &end);
    if (end == value.c_str() || *end != '\0')
        throw ConfigError(key, "config key '" + key + "' is not a number: '" + value + "'");
    return v;
}

} // namespace

KeyValueConfig KeyValueConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw ConfigError("", "cannot open config file: " + path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return from_string(buffer.str());
}

KeyValueConfig KeyValueConfig::from_string(const std::string& text) {
    KeyValueConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("", "config line " + std::to_string(lineno) +
                                      " has no '=': " + line);
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw ConfigError("", "config line " + std::to_string(lineno) + " has an empty key");
        cfg.entries_[key] = value;
    }
    return cfg;
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
    auto it = entries_.find(key);
    return it == entries_.end() ? fallback : it->second;
}

std::string KeyValueConfig::require_string(const std::string& key) const {
    auto it = entries_.find(key);
    if (it == entries_.end())
        throw ConfigError(key, "missing required config key '" + key + "'");
    return it->second;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    return parse_double(key, it->second);
}

int KeyValueConfig::get_int(const std::string& key, int fallback) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    const double v = parse_double(key, it->second);
    const int i = static_cast<int>(v);
    if (static_cast<double>(i) != v)
        throw ConfigError(key, "config key '" + key + "' is not an integer: " + it->second);
    return i;
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    const std::string& v = it->second;
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError(key, "config key '" + key + "' is not a boolean: " + v);
}

std::vector<double> KeyValueConfig::get_double_list(const std::string& key,
                                                    const std::vector<double>& fallback) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    std::vector<double> values;
    std::istringstream in(it->second);
    std::string item;
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        values.push_back(parse_double(key, item));
    }
    if (values.empty())
        throw ConfigError(key, "config key '" + key + "' is an empty list");
    return values;
}

} // namespace heatctl

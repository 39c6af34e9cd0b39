#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace heatctl {

/// Schema violation: carries the offending key for the exit-code-2 path.
struct ConfigError : std::runtime_error {
    std::string key;
    ConfigError(std::string k, const std::string& what)
        : std::runtime_error(what), key(std::move(k)) {}
};

/// Flat key-value configuration: one `section.key = value` per line,
/// '#' starts a comment. Values are strings, numbers, booleans, or
/// comma-separated numeric lists.
class KeyValueConfig {
public:
    static KeyValueConfig from_file(const std::string& path);
    static KeyValueConfig from_string(const std::string& text);

    bool has(const std::string& key) const { return entries_.count(key) > 0; }
    void set(const std::string& key, const std::string& value) { entries_[key] = value; }

    std::string get_string(const std::string& key, const std::string& fallback) const;
    std::string require_string(const std::string& key) const;
    double get_double(const std::string& key, double fallback) const;
    int get_int(const std::string& key, int fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<double> get_double_list(const std::string& key,
                                        const std::vector<double>& fallback) const;

    const std::map<std::string, std::string>& entries() const { return entries_; }

private:
    std::map<std::string, std::string> entries_;
};

} // namespace heatctl

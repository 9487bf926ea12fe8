#pragma once

// `key = value` run configuration (Listing-3 style keys).

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace morea {

using ConfigValue = std::variant<std::int64_t, double, bool, std::string>;

struct ConfigEntry {
    std::string key;
    ConfigValue value;
    int line = 0;
};

class RunConfig {
  public:
    /// Throws ConfigError on syntax errors, duplicate keys or unquoted strings.
    static RunConfig parse(const std::string &text);
    static RunConfig load(const std::filesystem::path &path);

    bool has(const std::string &key) const;
    const ConfigEntry *find(const std::string &key) const;

    /// Typed accessors; a present value of the wrong type throws ConfigError.
    std::int64_t get_int(const std::string &key, std::int64_t fallback) const;
    double get_double(const std::string &key, double fallback) const;
    bool get_bool(const std::string &key, bool fallback) const;
    std::string get_string(const std::string &key, const std::string &fallback) const;
    /// Throws ConfigError if absent.
    std::int64_t require_int(const std::string &key) const;

    /// Replaces or appends.
    void set(const std::string &key, ConfigValue value);

    const std::vector<ConfigEntry> &entries() const { return entries_; }
    /// Keys that no component reads, in file order.
    std::vector<std::string> unknown_keys() const;

    /// Canonical text: one `key = value` line per entry, in order.
    std::string serialize() const;

  private:
    std::vector<ConfigEntry> entries_;
};

/// Keys read by some component (exact names plus the `elasticity.` and
/// `morea_mesh_allocation.` prefixes).
bool is_known_config_key(const std::string &key);

std::string format_config_value(const ConfigValue &v);

} // namespace morea

#include "morea/config.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <string_view>
#include <cmath>
#include <fstream>
#include <sstream>

#include "morea/error.hpp"

namespace morea {

namespace {

constexpr std::array kKnownKeys = {
    "seed",
    "num_threads",
    "ea_num_generations",
    "ea_population_size",
    "ea_num_clusters",
    "ea_archive_size",
    "ea_adaptive_steering_enabled",
    "ea_adaptive_steering_activated_at_num_generations",
    "ea_adaptive_steering_guidance_threshold",
    "ea_selection_fraction",
    "morea_repair_method",
    "morea_repair_samples",
    "morea_init_noise_method",
    "morea_init_noise_factor",
    "morea_init_noise_kernel_count",
    "morea_init_noise_rounds",
    "morea_mesh_num_points",
    "morea_mesh_generation_method",
    "morea_mesh_random_fraction",
    "morea_mesh_surface_points",
    "morea_mesh_bbox_padding_mm",
    "morea_sampling_rate",
    "morea_magnitude_metric",
    "morea_image_metric",
    "morea_guidance_metric",
    "metrics_margin_mm",
    "export_tradeoff_indices",
};

std::string trim(const std::string &s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

[[noreturn]] void fail(int line, const std::string &msg) {
    throw ConfigError("config line " + std::to_string(line) + ": " + msg);
}

ConfigValue parse_value(const std::string &raw, int line) {
    if (raw.empty()) fail(line, "missing value");
    if (raw.front() == '"') {
        std::string out;
        std::size_t i = 1;
        for (; i < raw.size() && raw[i] != '"'; ++i) {
            if (raw[i] == '\\' && i + 1 < raw.size()) ++i;
            out.push_back(raw[i]);
        }
        if (i >= raw.size()) fail(line, "unterminated string");
        if (!trim(raw.substr(i + 1)).empty()) fail(line, "trailing characters after string");
        return out;
    }
    if (raw == "true") return true;
    if (raw == "false") return false;
    std::int64_t iv = 0;
    auto [p, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), iv);
    if (ec == std::errc() && p == raw.data() + raw.size()) return iv;
    double dv = 0.0;
    auto [q, ec2] = std::from_chars(raw.data(), raw.data() + raw.size(), dv);
    if (ec2 == std::errc() && q == raw.data() + raw.size() && std::isfinite(dv)) return dv;
    fail(line, "cannot parse value '" + raw + "' (strings must be quoted)");
}

// Drops a trailing comment that is not inside a quoted string.
std::string strip_comment(const std::string &s) {
    bool quoted = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '\\' && quoted) {
            ++i;
            continue;
        }
        if (s[i] == '"') quoted = !quoted;
        if (s[i] == '#' && !quoted) return s.substr(0, i);
    }
    return s;
}

const char *type_name(const ConfigValue &v) {
    switch (v.index()) {
    case 0: return "integer";
    case 1: return "real";
    case 2: return "boolean";
    default: return "string";
    }
}

[[noreturn]] void type_error(const ConfigEntry &e, const char *want) {
    throw ConfigError("config key '" + e.key + "' (line " + std::to_string(e.line) + ") must be " + want + ", got " +
                      type_name(e.value));
}

} // namespace

bool is_known_config_key(const std::string &key) {
    for (const std::string_view prefix : {"elasticity.", "morea_mesh_allocation."})
        if (key.size() > prefix.size() && key.starts_with(prefix)) return true;
    return std::find(kKnownKeys.begin(), kKnownKeys.end(), key) != kKnownKeys.end();
}

std::string format_config_value(const ConfigValue &v) {
    switch (v.index()) {
    case 0: return std::to_string(std::get<std::int64_t>(v));
    case 1: {
        char buf[64];
        const double d = std::get<double>(v);
        auto [p, ec] = std::to_chars(buf, buf + sizeof buf, d);
        std::string s(buf, p);
        // Keep reals recognizable as reals on re-parse.
        if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
        return s;
    }
    case 2: return std::get<bool>(v) ? "true" : "false";
    default: {
        std::string out = "\"";
        for (char c : std::get<std::string>(v)) {
            if (c == '"' || c == '\\') out.push_back('\\');
            out.push_back(c);
        }
        return out + "\"";
    }
    }
}

RunConfig RunConfig::parse(const std::string &text) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        const std::string s = trim(strip_comment(raw));
        if (s.empty()) continue;
        const auto eq = s.find('=');
        if (eq == std::string::npos) fail(line, "expected 'key = value'");
        const std::string key = trim(s.substr(0, eq));
        if (key.empty()) fail(line, "missing key");
        for (char c : key)
            if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '-'))
                fail(line, "invalid key '" + key + "'");
        if (cfg.has(key)) fail(line, "duplicate key '" + key + "'");
        cfg.entries_.push_back({key, parse_value(trim(s.substr(eq + 1)), line), line});
    }
    return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path &path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open config " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse(ss.str());
}

const ConfigEntry *RunConfig::find(const std::string &key) const {
    for (const ConfigEntry &e : entries_)
        if (e.key == key) return &e;
    return nullptr;
}

bool RunConfig::has(const std::string &key) const { return find(key) != nullptr; }

std::int64_t RunConfig::get_int(const std::string &key, std::int64_t fallback) const {
    const ConfigEntry *e = find(key);
    if (!e) return fallback;
    if (const auto *v = std::get_if<std::int64_t>(&e->value)) return *v;
    type_error(*e, "an integer");
}

double RunConfig::get_double(const std::string &key, double fallback) const {
    const ConfigEntry *e = find(key);
    if (!e) return fallback;
    if (const auto *v = std::get_if<double>(&e->value)) return *v;
    if (const auto *v = std::get_if<std::int64_t>(&e->value)) return static_cast<double>(*v);
    type_error(*e, "a number");
}

bool RunConfig::get_bool(const std::string &key, bool fallback) const {
    const ConfigEntry *e = find(key);
    if (!e) return fallback;
    if (const auto *v = std::get_if<bool>(&e->value)) return *v;
    type_error(*e, "true or false");
}

std::string RunConfig::get_string(const std::string &key, const std::string &fallback) const {
    const ConfigEntry *e = find(key);
    if (!e) return fallback;
    if (const auto *v = std::get_if<std::string>(&e->value)) return *v;
    type_error(*e, "a quoted string");
}

std::int64_t RunConfig::require_int(const std::string &key) const {
    if (!has(key)) throw ConfigError("missing required config key '" + key + "'");
    return get_int(key, 0);
}

void RunConfig::set(const std::string &key, ConfigValue value) {
    for (ConfigEntry &e : entries_)
        if (e.key == key) {
            e.value = std::move(value);
            return;
        }
    entries_.push_back({key, std::move(value), 0});
}

std::vector<std::string> RunConfig::unknown_keys() const {
    std::vector<std::string> out;
    for (const ConfigEntry &e : entries_)
        if (!is_known_config_key(e.key)) out.push_back(e.key);
    return out;
}

std::string RunConfig::serialize() const {
    std::string out;
    for (const ConfigEntry &e : entries_) out += e.key + " = " + format_config_value(e.value) + "\n";
    return out;
}

} // namespace morea

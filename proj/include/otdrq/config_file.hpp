#pragma once

// Reader for the `key = value` configuration format:
//
//   # comment
//   [fiber]
//   fiber_length_m = 40000
//   attenuation_db_per_km = 0.2
//
// Keys are unique across sections, which is what lets `--set key=value`
// overrides omit the section name.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/format.h>

#include "otdrq/config.hpp"

namespace otdrq {

struct ConfigFile {
    SystemConfig system;
    SweepSettings sweep;
};

namespace detail {

inline std::string trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

inline double parse_double(const std::string& key, const std::string& text)
{
    const std::string t = trim(text);
    double v = 0;
    const auto* first = t.data();
    const auto* last = t.data() + t.size();
    const auto [ptr, ec] = std::from_chars(first, last, v);
    if (t.empty() || ec != std::errc{} || ptr != last)
        throw ConfigError("bad-value", fmt::format("{}: '{}' is not a number", key, text));
    return v;
}

inline std::uint64_t parse_unsigned(const std::string& key, const std::string& text)
{
    const std::string t = trim(text);
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || ec != std::errc{} || ptr != t.data() + t.size())
        throw ConfigError("bad-value", fmt::format("{}: '{}' is not a non-negative integer", key, text));
    return v;
}

inline std::string format_number(double v) { return fmt::format("{}", v); }

inline std::string format_list(const std::vector<double>& v)
{
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i)
            out += ',';
        out += format_number(v[i]);
    }
    return out;
}

} // namespace detail

/// Parses "start:stop:step" (inclusive of stop within rounding), a
/// comma-separated list, or a single number.
inline std::vector<double> parse_grid(const std::string& key, const std::string& text)
{
    const std::string t = detail::trim(text);
    std::vector<double> out;
    if (std::count(t.begin(), t.end(), ':') == 2) {
        const auto a = t.find(':');
        const auto b = t.find(':', a + 1);
        const double start = detail::parse_double(key, t.substr(0, a));
        const double stop = detail::parse_double(key, t.substr(a + 1, b - a - 1));
        const double step = detail::parse_double(key, t.substr(b + 1));
        if (!(step > 0) || stop < start)
            throw ConfigError("bad-grid", fmt::format("{}: range '{}' needs step > 0 and stop >= start", key, text));
        const auto n = static_cast<std::size_t>(std::floor((stop - start) / step + 1e-9));
        for (std::size_t i = 0; i <= n; ++i)
            out.push_back(start + static_cast<double>(i) * step);
        return out;
    }
    std::stringstream ss(t);
    std::string item;
    while (std::getline(ss, item, ','))
        out.push_back(detail::parse_double(key, item));
    if (out.empty())
        throw ConfigError("empty-grid", fmt::format("{}: empty grid", key));
    return out;
}

struct ConfigKey {
    std::string section;
    std::string name;
    std::function<void(ConfigFile&, const std::string&)> set;
    std::function<std::string(const ConfigFile&)> get;
};

inline const std::vector<ConfigKey>& config_keys()
{
    using detail::format_number;
    using detail::parse_double;
    using detail::parse_unsigned;

    auto num = [](std::string section, std::string name, auto member) {
        return ConfigKey{section, name,
                         [name, member](ConfigFile& f, const std::string& v) { member(f) = parse_double(name, v); },
                         [member](const ConfigFile& f) { return format_number(member(const_cast<ConfigFile&>(f))); }};
    };
    auto count = [](std::string section, std::string name, auto member) {
        return ConfigKey{
            section, name,
            [name, member](ConfigFile& f, const std::string& v) {
                member(f) = static_cast<std::decay_t<decltype(member(f))>>(parse_unsigned(name, v));
            },
            [member](const ConfigFile& f) { return std::to_string(member(const_cast<ConfigFile&>(f))); }};
    };
    auto grid = [](std::string section, std::string name, auto member) {
        return ConfigKey{section, name,
                         [name, member](ConfigFile& f, const std::string& v) { member(f) = parse_grid(name, v); },
                         [member](const ConfigFile& f) { return detail::format_list(member(const_cast<ConfigFile&>(f))); }};
    };
    auto choice = [](std::string section, std::string name, auto member, std::vector<std::string> names) {
        return ConfigKey{
            section, name,
            [name, member, names](ConfigFile& f, const std::string& v) {
                const std::string t = detail::trim(v);
                const auto it = std::find(names.begin(), names.end(), t);
                if (it == names.end())
                    throw ConfigError("bad-value", fmt::format("{}: unknown choice '{}'", name, v));
                using E = std::decay_t<decltype(member(f))>;
                member(f) = static_cast<E>(it - names.begin());
            },
            [member, names](const ConfigFile& f) {
                return names[static_cast<std::size_t>(member(const_cast<ConfigFile&>(f)))];
            }};
    };

    static const std::vector<ConfigKey> keys = [&] {
        std::vector<ConfigKey> k;
        // [source]
        k.push_back(num("source", "wavelength_m", [](ConfigFile& f) -> double& { return f.system.wavelength_m; }));
        k.push_back(num("source", "pulse_rate_hz", [](ConfigFile& f) -> double& { return f.system.pulse_rate_hz; }));
        k.push_back(num("source", "pulse_duration_s", [](ConfigFile& f) -> double& { return f.system.pulse_duration_s; }));
        k.push_back(num("source", "booster_gain_db", [](ConfigFile& f) -> double& { return f.system.booster_gain_db; }));
        k.push_back(num("source", "booster_nf_db", [](ConfigFile& f) -> double& { return f.system.booster_nf_db; }));
        k.push_back(num("source", "launch_peak_power_dbm",
                        [](ConfigFile& f) -> double& { return f.system.launch_peak_power_dbm; }));
        // [fiber]
        k.push_back(num("fiber", "fiber_length_m", [](ConfigFile& f) -> double& { return f.system.fiber_length_m; }));
        k.push_back(num("fiber", "attenuation_db_per_km",
                        [](ConfigFile& f) -> double& { return f.system.attenuation_db_per_km; }));
        k.push_back(num("fiber", "group_index", [](ConfigFile& f) -> double& { return f.system.constants.group_index; }));
        k.push_back(num("fiber", "thermo_optic_coefficient",
                        [](ConfigFile& f) -> double& { return f.system.constants.thermo_optic_coefficient; }));
        k.push_back(num("fiber", "thermal_expansion_coefficient",
                        [](ConfigFile& f) -> double& { return f.system.constants.thermal_expansion_coefficient; }));
        k.push_back(count("fiber", "scatterers_per_cell",
                          [](ConfigFile& f) -> std::size_t& { return f.system.scatterers_per_cell; }));
        k.push_back(num("fiber", "backscatter_capture_db_per_cell",
                        [](ConfigFile& f) -> double& { return f.system.backscatter_capture_db_per_cell; }));
        k.push_back(ConfigKey{
            "fiber", "conversion_constant_cf",
            [](ConfigFile& f, const std::string& v) {
                if (detail::trim(v) == "auto")
                    f.system.conversion_constant_cf.reset();
                else
                    f.system.conversion_constant_cf = parse_double("conversion_constant_cf", v);
            },
            [](const ConfigFile& f) {
                return f.system.conversion_constant_cf ? format_number(*f.system.conversion_constant_cf)
                                                       : std::string("auto");
            }});
        // [receiver]
        k.push_back(num("receiver", "preamp_gain_db", [](ConfigFile& f) -> double& { return f.system.preamp_gain_db; }));
        k.push_back(num("receiver", "preamp_nf_db", [](ConfigFile& f) -> double& { return f.system.preamp_nf_db; }));
        k.push_back(num("receiver", "circulator_loss_db",
                        [](ConfigFile& f) -> double& { return f.system.circulator_loss_db; }));
        k.push_back(num("receiver", "lo_power_dbm", [](ConfigFile& f) -> double& { return f.system.lo_power_dbm; }));
        k.push_back(num("receiver", "receiver_bandwidth_hz",
                        [](ConfigFile& f) -> double& { return f.system.receiver_bandwidth_hz; }));
        k.push_back(num("receiver", "adc_rate_hz", [](ConfigFile& f) -> double& { return f.system.adc_rate_hz; }));
        k.push_back(count("receiver", "filter_taps_n", [](ConfigFile& f) -> std::size_t& { return f.system.filter_taps_n; }));
        k.push_back(num("receiver", "thermal_psd", [](ConfigFile& f) -> double& { return f.system.thermal_psd_w_per_hz; }));
        k.push_back(num("receiver", "fade_threshold", [](ConfigFile& f) -> double& { return f.system.fade_threshold; }));
        // [heating]
        k.push_back(num("heating", "heating_zone_start_m",
                        [](ConfigFile& f) -> double& { return f.system.heating_zone_start_m; }));
        k.push_back(num("heating", "heating_zone_end_m",
                        [](ConfigFile& f) -> double& { return f.system.heating_zone_end_m; }));
        k.push_back(num("heating", "heating_rate_k_per_frame",
                        [](ConfigFile& f) -> double& { return f.system.heating_rate_k_per_frame; }));
        k.push_back(choice("heating", "thermal_model", [](ConfigFile& f) -> ThermalModel& { return f.system.thermal_model; },
                           {"lumped", "distributed"}));
        // [experiment]
        k.push_back(count("experiment", "frames", [](ConfigFile& f) -> std::size_t& { return f.system.frames; }));
        k.push_back(count("experiment", "fibers", [](ConfigFile& f) -> std::size_t& { return f.sweep.fibers; }));
        k.push_back(count("experiment", "rng_seed", [](ConfigFile& f) -> std::uint64_t& { return f.system.rng_seed; }));
        k.push_back(num("experiment", "reference_k1_distance_m",
                        [](ConfigFile& f) -> double& { return f.system.reference_k1_distance_m; }));
        k.push_back(num("experiment", "monitor_k2_distance_m",
                        [](ConfigFile& f) -> double& { return f.system.monitor_k2_distance_m; }));
        k.push_back(num("experiment", "noise_scale", [](ConfigFile& f) -> double& { return f.system.noise_scale; }));
        k.push_back(choice("experiment", "timing_mode", [](ConfigFile& f) -> TimingMode& { return f.system.timing_mode; },
                           {"logical", "physical"}));
        k.push_back(grid("experiment", "snr_db_grid", [](ConfigFile& f) -> std::vector<double>& { return f.sweep.snr_db_grid; }));
        k.push_back(grid("experiment", "noise_scale_db_list",
                         [](ConfigFile& f) -> std::vector<double>& { return f.sweep.noise_scale_db_list; }));
        k.push_back(grid("experiment", "delta_L_list", [](ConfigFile& f) -> std::vector<double>& { return f.sweep.delta_L_list; }));
        k.push_back(grid("experiment", "frames_list", [](ConfigFile& f) -> std::vector<double>& { return f.sweep.frames_list; }));
        k.push_back(num("experiment", "snr_bin_width_db", [](ConfigFile& f) -> double& { return f.sweep.snr_bin_width_db; }));
        k.push_back(num("experiment", "snr_bin_min_db", [](ConfigFile& f) -> double& { return f.sweep.snr_bin_min_db; }));
        k.push_back(num("experiment", "snr_bin_max_db", [](ConfigFile& f) -> double& { return f.sweep.snr_bin_max_db; }));
        k.push_back(num("experiment", "wrap_sigma_limit_rad",
                        [](ConfigFile& f) -> double& { return f.sweep.wrap_sigma_limit_rad; }));
        k.push_back(count("experiment", "min_bin_count", [](ConfigFile& f) -> std::size_t& { return f.sweep.min_bin_count; }));
        k.push_back(num("experiment", "min_track_snr_db", [](ConfigFile& f) -> double& { return f.sweep.min_track_snr_db; }));
        k.push_back(choice("experiment", "step_detrend", [](ConfigFile& f) -> StepDetrend& { return f.sweep.step_detrend; },
                           {"injected", "estimated"}));
        return k;
    }();
    return keys;
}

inline const ConfigKey* find_key(std::string_view name)
{
    for (const auto& k : config_keys())
        if (k.name == name)
            return &k;
    return nullptr;
}

/// Applies one `key=value` override; unknown keys are rejected.
inline void apply_override(ConfigFile& file, const std::string& assignment)
{
    const auto eq = assignment.find('=');
    if (eq == std::string::npos)
        throw ConfigError("bad-override", fmt::format("'{}' is not key=value", assignment));
    const std::string key = detail::trim(assignment.substr(0, eq));
    const auto* entry = find_key(key);
    if (!entry)
        throw ConfigError("unknown-key", fmt::format("unknown configuration key '{}'", key));
    entry->set(file, assignment.substr(eq + 1));
}

inline ConfigFile parse_config(std::istream& in, const std::string& origin = "<config>")
{
    ConfigFile file;
    std::string line;
    std::string section;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find_first_of("#;");
        const std::string t = detail::trim(hash == std::string::npos ? line : line.substr(0, hash));
        if (t.empty())
            continue;
        if (t.front() == '[') {
            if (t.back() != ']')
                throw ConfigError("bad-syntax", fmt::format("{}:{}: unterminated section header", origin, lineno));
            section = detail::trim(t.substr(1, t.size() - 2));
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("bad-syntax", fmt::format("{}:{}: expected key = value", origin, lineno));
        const std::string key = detail::trim(t.substr(0, eq));
        const auto* entry = find_key(key);
        if (!entry)
            throw ConfigError("unknown-key", fmt::format("{}:{}: unknown key '{}'", origin, lineno, key));
        if (entry->section != section)
            throw ConfigError("wrong-section",
                              fmt::format("{}:{}: key '{}' belongs in [{}]", origin, lineno, key, entry->section));
        entry->set(file, t.substr(eq + 1));
    }
    return file;
}

inline ConfigFile load_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("config-unreadable", fmt::format("cannot open '{}'", path));
    return parse_config(in, path);
}

/// Ordered key/value dump of the full configuration.
inline std::vector<std::pair<std::string, std::string>> dump_config(const ConfigFile& file)
{
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& k : config_keys())
        out.emplace_back(k.section + "." + k.name, k.get(file));
    return out;
}

inline std::string write_config(const ConfigFile& file)
{
    std::string out;
    std::string section;
    for (const auto& k : config_keys()) {
        if (k.section != section) {
            if (!section.empty())
                out += '\n';
            section = k.section;
            out += "[" + section + "]\n";
        }
        out += k.name + " = " + k.get(file) + "\n";
    }
    return out;
}

} // namespace otdrq

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "otdrq/units.hpp"

namespace otdrq {

/// Thrown when a configuration violates one of its invariants. `invariant()`
/// names the violated rule so callers (and the CLI) can report it verbatim.
class ConfigError : public std::invalid_argument {
public:
    ConfigError(std::string invariant, const std::string& detail)
        : std::invalid_argument(invariant + ": " + detail), invariant_(std::move(invariant))
    {
    }

    const std::string& invariant() const noexcept { return invariant_; }

private:
    std::string invariant_;
};

struct PhysicalConstants {
    double speed_of_light = 299792458.0;    // m/s
    double planck_constant = 6.62607015e-34; // J s
    double group_index = 1.468;
    double thermo_optic_coefficient = 1.0e-5;       // dn/dT, 1/K
    double thermal_expansion_coefficient = 0.55e-6; // 1/K

    double group_velocity() const { return speed_of_light / group_index; }
};

enum class ThermalModel { lumped, distributed };
enum class TimingMode { logical, physical };
enum class StepDetrend { injected, estimated };

/// Every physical and numerical parameter of the chain, in the units used by
/// the configuration file (dB, dBm and dB/km where noted).
struct SystemConfig {
    PhysicalConstants constants;

    // [source]
    double wavelength_m = 1550e-9;
    double pulse_rate_hz = 100e3;
    double pulse_duration_s = 100e-9;
    double booster_gain_db = 22.0;
    double booster_nf_db = 3.0;
    double launch_peak_power_dbm = 23.0;

    // [fiber]
    double fiber_length_m = 40e3;
    double attenuation_db_per_km = 0.2;
    std::size_t scatterers_per_cell = 20;
    double backscatter_capture_db_per_cell = -72.0;
    std::optional<double> conversion_constant_cf; // rad/(K m); derived when unset

    // [receiver]
    double preamp_gain_db = 22.0;
    double preamp_nf_db = 3.0;
    double circulator_loss_db = 0.0;
    double lo_power_dbm = 0.0;
    double receiver_bandwidth_hz = 300e6;
    double adc_rate_hz = 625e6;
    std::size_t filter_taps_n = 127;
    double thermal_psd_w_per_hz = 0.0;
    double fade_threshold = 0.1;

    // [heating]
    double heating_zone_start_m = 10000.0;
    double heating_zone_end_m = 10060.0;
    double heating_rate_k_per_frame = 1e-4;
    ThermalModel thermal_model = ThermalModel::lumped;

    // [experiment]
    std::size_t frames = 100;
    double reference_k1_distance_m = 0.0; // 0 selects z_start minus one cell
    double monitor_k2_distance_m = 10010.0;
    std::uint64_t rng_seed = 1;
    double noise_scale = 1.0; // linear multiplier on the noise field amplitude
    TimingMode timing_mode = TimingMode::logical;
};

/// Sweep grids and harness knobs that are not part of the physical chain.
struct SweepSettings {
    std::size_t fibers = 100;
    std::vector<double> snr_db_grid;          // analytic curves (limits)
    std::vector<double> noise_scale_db_list;  // noise power increase per sweep point
    std::vector<double> delta_L_list;         // m
    std::vector<double> frames_list;
    double snr_bin_width_db = 1.0;
    double snr_bin_min_db = -10.0;
    double snr_bin_max_db = 60.0;
    double wrap_sigma_limit_rad = 0.5;
    std::size_t min_bin_count = 100;
    double min_track_snr_db = 10.0;
    StepDetrend step_detrend = StepDetrend::injected;

    SweepSettings()
    {
        for (int i = 0; i <= 30; ++i)
            snr_db_grid.push_back(i);
        noise_scale_db_list = {0.0};
        delta_L_list = {1.0, 2.0, 5.0, 10.0, 20.0, 50.0};
        frames_list = {10.0, 100.0};
    }
};

/// Linear SI values of every dB-valued field.
struct LinearParameters {
    double booster_gain = 0;
    double booster_nf = 0;
    double launch_peak_power_w = 0;
    double attenuation_alpha = 0; // field, 1/m
    double backscatter_capture = 0;
    double preamp_gain = 0;
    double preamp_nf = 0;
    double circulator_transmission = 1;
    double lo_power_w = 0;
    double conversion_constant_cf = 0;
};

struct ValidatedConfig {
    SystemConfig config;
    LinearParameters linear;
    std::vector<std::string> warnings;
};

/// Round-trip phase sensitivity per metre of heated fiber per kelvin,
/// (4 pi / lambda) (dn/dT + n alpha_th).
inline double cf_from_constants(double wavelength_m, const PhysicalConstants& c)
{
    return 4.0 * std::numbers::pi / wavelength_m *
           (c.thermo_optic_coefficient + c.group_index * c.thermal_expansion_coefficient);
}

inline double round_trip_time(const SystemConfig& c)
{
    return 2.0 * c.fiber_length_m * c.constants.group_index / c.constants.speed_of_light;
}

namespace detail {

inline void require(bool ok, const char* invariant, const std::string& detail)
{
    if (!ok)
        throw ConfigError(invariant, detail);
}

inline void require_positive(double v, const char* name)
{
    require(std::isfinite(v) && v > 0.0, "non-positive-parameter",
            std::string(name) + " must be strictly positive (got " + std::to_string(v) + ")");
}

} // namespace detail

inline ValidatedConfig validate(const SystemConfig& config)
{
    using detail::require;
    using detail::require_positive;
    const auto& c = config;
    const auto& k = c.constants;

    require_positive(k.speed_of_light, "speed_of_light");
    require_positive(k.planck_constant, "planck_constant");
    require_positive(k.thermo_optic_coefficient, "thermo_optic_coefficient");
    require_positive(k.thermal_expansion_coefficient, "thermal_expansion_coefficient");
    require(k.group_index > 1.0, "group-index", "group_index must exceed 1");

    require_positive(c.wavelength_m, "wavelength_m");
    require_positive(c.pulse_rate_hz, "pulse_rate_hz");
    require_positive(c.pulse_duration_s, "pulse_duration_s");
    require_positive(c.fiber_length_m, "fiber_length_m");
    require_positive(c.receiver_bandwidth_hz, "receiver_bandwidth_hz");
    require_positive(c.adc_rate_hz, "adc_rate_hz");
    require(c.attenuation_db_per_km >= 0.0, "attenuation", "attenuation_db_per_km must be >= 0");
    require(c.scatterers_per_cell >= 1, "scatterer-count", "scatterers_per_cell must be >= 1");
    require(c.filter_taps_n >= 3 && c.filter_taps_n % 2 == 1, "filter-taps",
            "filter_taps_n must be odd and >= 3");
    require(c.fade_threshold >= 0.0 && c.fade_threshold < 1.0, "fade-threshold",
            "fade_threshold must lie in [0, 1)");
    require(c.thermal_psd_w_per_hz >= 0.0, "thermal-psd", "thermal_psd must be >= 0");
    require(c.noise_scale >= 0.0 && std::isfinite(c.noise_scale), "noise-scale",
            "noise_scale must be finite and >= 0");
    require(c.frames >= 1, "frames", "frames must be >= 1");
    require(c.preamp_gain_db > 0.0, "preamp-gain", "preamp_gain_db must be > 0 dB");
    require(c.circulator_loss_db >= 0.0, "circulator-loss", "circulator_loss_db must be >= 0");

    require(c.pulse_duration_s * c.pulse_rate_hz < 1.0, "duty-cycle",
            "pulse_duration * pulse_rate must be < 1");
    require(c.adc_rate_hz > c.receiver_bandwidth_hz, "sampling-rate",
            "adc_rate_hz must exceed receiver_bandwidth_hz");

    const double z0 = c.heating_zone_start_m;
    const double z1 = c.heating_zone_end_m;
    require(z0 >= 0.0 && z0 < z1 && z1 <= c.fiber_length_m, "heating-zone",
            "need 0 <= z_start < z_end <= fiber_length");
    require(c.reference_k1_distance_m >= 0.0 && c.reference_k1_distance_m < z0, "reference-outside-zone",
            "reference_k1_distance_m must lie before the heating zone");
    require(c.monitor_k2_distance_m > z0 && c.monitor_k2_distance_m <= z1, "monitor-inside-zone",
            "monitor_k2_distance_m must satisfy z_start < L2 <= z_end");

    ValidatedConfig out;
    out.config = config;

    const double frame_period = 1.0 / c.pulse_rate_hz;
    const double rtt = round_trip_time(c);
    if (frame_period < rtt) {
        const std::string msg = "frame period " + std::to_string(frame_period * 1e6) +
                                " us is shorter than the round trip " + std::to_string(rtt * 1e6) + " us";
        require(c.timing_mode == TimingMode::logical, "pulse-overlap", msg);
        out.warnings.push_back("pulse-overlap: " + msg + "; frames are simulated one pulse at a time");
    }

    auto& lin = out.linear;
    lin.booster_gain = db_to_linear(c.booster_gain_db);
    lin.booster_nf = db_to_linear(c.booster_nf_db);
    lin.launch_peak_power_w = dbm_to_watts(c.launch_peak_power_dbm);
    lin.attenuation_alpha = db_per_km_to_field_alpha(c.attenuation_db_per_km);
    lin.backscatter_capture = db_to_linear(c.backscatter_capture_db_per_cell);
    lin.preamp_gain = db_to_linear(c.preamp_gain_db);
    lin.preamp_nf = db_to_linear(c.preamp_nf_db);
    lin.circulator_transmission = db_to_linear(-c.circulator_loss_db);
    lin.lo_power_w = dbm_to_watts(c.lo_power_dbm);
    lin.conversion_constant_cf = c.conversion_constant_cf.value_or(cf_from_constants(c.wavelength_m, k));
    require_positive(lin.conversion_constant_cf, "conversion_constant_cf");

    const double preamp_nf_min = 2.0 * (lin.preamp_gain - 1.0) / lin.preamp_gain;
    require(lin.preamp_nf >= preamp_nf_min * (1.0 - 1e-12), "noise-figure-below-quantum-limit",
            "preamp_nf_db is below 10log10(2(G-1)/G)");

    // Strong-LO check against the strongest expected signal (fiber input,
    // mean per-cell backscatter after the preamplifier).
    const double peak_signal =
        lin.launch_peak_power_w * lin.backscatter_capture * lin.circulator_transmission * lin.preamp_gain;
    if (lin.lo_power_w < 100.0 * peak_signal)
        out.warnings.push_back("weak-lo: LO power is less than 20 dB above the mean backscatter power");

    return out;
}

/// Fast-time sampling grid.
struct DerivedGrid {
    double sample_rate = 0;
    double sample_period = 0;
    std::size_t total_fast_samples = 0; // K
    double group_velocity = 0;
    double resolution_cell_length = 0;

    double distance_of_sample(double k) const { return k * group_velocity / (2.0 * sample_rate); }

    /// Nearest fast-time index to a distance (clamped to [0, K-1]).
    std::size_t index_of_distance(double z) const
    {
        const double k = std::round(z * 2.0 * sample_rate / group_velocity);
        if (k <= 0.0)
            return 0;
        return std::min(static_cast<std::size_t>(k), total_fast_samples - 1);
    }

    /// Number of samples spanned by one resolution cell.
    double samples_per_cell() const { return resolution_cell_length / distance_of_sample(1.0); }
};

inline DerivedGrid derive_grid(const ValidatedConfig& vc)
{
    const auto& c = vc.config;
    DerivedGrid g;
    g.sample_rate = c.adc_rate_hz;
    g.sample_period = 1.0 / c.adc_rate_hz;
    g.group_velocity = c.constants.group_velocity();
    g.resolution_cell_length = g.group_velocity * c.pulse_duration_s / 2.0;

    auto k = static_cast<std::size_t>(std::floor(2.0 * c.fiber_length_m * c.adc_rate_hz / g.group_velocity));
    // Settle rounding at the boundary so that L(K) <= L_FUT < L(K+1) holds.
    while (g.distance_of_sample(static_cast<double>(k + 1)) <= c.fiber_length_m)
        ++k;
    while (k > 0 && g.distance_of_sample(static_cast<double>(k)) > c.fiber_length_m)
        --k;
    g.total_fast_samples = k;
    return g;
}

} // namespace otdrq

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <span>
#include <vector>

#include "otdrq/config.hpp"
#include "otdrq/optical_path.hpp"
#include "otdrq/random.hpp"

namespace otdrq {

/// One random draw of discrete scatterers along the fiber.
struct FiberRealization {
    std::vector<double> positions;        // m, strictly increasing
    std::vector<double> amplitudes;       // field reflectivity weights
    std::vector<double> intrinsic_phases; // rad in [0, 2 pi)
    double attenuation_alpha = 0;         // field, 1/m

    std::size_t size() const { return positions.size(); }
};

struct HeatingZone {
    double start = 0;
    double end = 0;

    double length() const { return end - start; }

    /// Length of heated fiber between the zone start and z.
    double overlap(double z) const
    {
        if (z <= start)
            return 0.0;
        return std::min(z, end) - start;
    }

    bool contains(double z) const { return z > start && z <= end; }
};

/// Slow-time temperature trajectory of the heating zone.
struct TemperatureProfile {
    HeatingZone zone;
    std::vector<double> delta_T; // K, indexed by frame

    static TemperatureProfile linear_ramp(HeatingZone zone, double rate_k_per_frame, std::size_t frames)
    {
        TemperatureProfile p{zone, std::vector<double>(frames)};
        for (std::size_t i = 0; i < frames; ++i)
            p.delta_T[i] = rate_k_per_frame * static_cast<double>(i);
        return p;
    }

    std::size_t frames() const { return delta_T.size(); }
};

inline HeatingZone heating_zone(const SystemConfig& c) { return {c.heating_zone_start_m, c.heating_zone_end_m}; }

/// Number of scatterers for a fiber: Ns per resolution cell.
inline std::size_t scatterer_count(std::size_t per_cell, double fiber_length, double cell_length)
{
    return static_cast<std::size_t>(std::llround(static_cast<double>(per_cell) * fiber_length / cell_length));
}

/// Rayleigh scale so that the expected backscattered power of one cell
/// (Ns scatterers, E[a^2] = 2 sigma^2) equals `capture`.
inline double rayleigh_scale(double capture, std::size_t per_cell)
{
    return std::sqrt(capture / (2.0 * static_cast<double>(per_cell)));
}

inline FiberRealization sample_fiber(const ValidatedConfig& vc, const DerivedGrid& grid, std::uint64_t seed)
{
    const auto& c = vc.config;
    detail::require(c.scatterers_per_cell >= 1, "scatterer-count", "scatterers_per_cell must be >= 1");
    const std::size_t m = std::max<std::size_t>(
        1, scatterer_count(c.scatterers_per_cell, c.fiber_length_m, grid.resolution_cell_length));
    const double sigma = rayleigh_scale(vc.linear.backscatter_capture, c.scatterers_per_cell);

    FiberRng rng(seed);
    FiberRealization f;
    f.attenuation_alpha = vc.linear.attenuation_alpha;
    f.positions.resize(m);
    for (auto& z : f.positions)
        z = c.fiber_length_m * rng.uniform(); // (0, L]
    std::sort(f.positions.begin(), f.positions.end());
    // Ties have probability ~2^-53 per pair; nudge to keep strict ordering.
    for (std::size_t i = 1; i < m; ++i)
        if (f.positions[i] <= f.positions[i - 1])
            f.positions[i] = std::nextafter(f.positions[i - 1], c.fiber_length_m * 2);

    f.amplitudes.resize(m);
    f.intrinsic_phases.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
        f.amplitudes[i] = rng.rayleigh(sigma);
        f.intrinsic_phases[i] = 2.0 * std::numbers::pi * (1.0 - rng.uniform()); // [0, 2 pi)
    }
    return f;
}

/// Thermal phase of each scatterer at frame p: Cf * dT_p * overlap(z_m).
inline std::vector<double> scatterer_phase_offsets(const FiberRealization& fiber, const TemperatureProfile& profile,
                                                   double cf, std::size_t p)
{
    detail::require(p < profile.frames(), "frame-index", "frame index beyond the temperature profile");
    std::vector<double> out(fiber.size(), 0.0);
    const double dT = profile.delta_T[p];
    if (dT == 0.0)
        return out;
    for (std::size_t m = 0; m < fiber.size(); ++m)
        out[m] = cf * dT * profile.zone.overlap(fiber.positions[m]);
    return out;
}

/// Noiseless backscatter of one rectangular pulse:
///   y_k = peak * sum_m a_m exp(j(theta_m + dphi_m)) exp(-2 alpha z_m) 1[0 <= k Ts - 2 z_m / v_g < tau]
/// Scatterer delays are continuous; `offsets` may be empty (no thermal phase).
inline ComplexTrace synthesize_backscatter(const FiberRealization& fiber, std::span<const double> offsets,
                                           const PulseShape& pulse, const DerivedGrid& grid)
{
    const std::size_t m_total = fiber.size();
    detail::require(offsets.empty() || offsets.size() == m_total, "offset-count",
                    "phase offsets must match the scatterer count");

    std::vector<std::complex<double>> contrib(m_total);
    std::vector<double> delay(m_total);
    for (std::size_t m = 0; m < m_total; ++m) {
        const double z = fiber.positions[m];
        const double phase = fiber.intrinsic_phases[m] + (offsets.empty() ? 0.0 : offsets[m]);
        const double mag = pulse.peak_field * fiber.amplitudes[m] * std::exp(-2.0 * fiber.attenuation_alpha * z);
        contrib[m] = std::polar(mag, phase);
        delay[m] = 2.0 * z / grid.group_velocity;
    }

    ComplexTrace out;
    out.sample_rate = grid.sample_rate;
    out.samples.assign(grid.total_fast_samples, {0.0, 0.0});
    if (pulse.duration <= 0.0)
        return out;

    // Sliding window over sorted delays: scatterer m is lit at sample k when
    // t_k - tau < delay_m <= t_k.
    std::size_t lo = 0;
    std::size_t hi = 0;
    for (std::size_t k = 0; k < grid.total_fast_samples; ++k) {
        const double t = static_cast<double>(k) * grid.sample_period;
        while (hi < m_total && delay[hi] <= t)
            ++hi;
        while (lo < hi && !(t - delay[lo] < pulse.duration))
            ++lo;
        std::complex<double> acc{0.0, 0.0};
        for (std::size_t m = lo; m < hi; ++m)
            acc += contrib[m];
        out.samples[k] = acc;
    }
    return out;
}

} // namespace otdrq

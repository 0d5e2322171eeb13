#pragma once

// Analytic uncertainty references: shot-noise-limited phase, frame-to-frame
// temperature change, and frame averaging.

#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string_view>
#include <vector>

#include "otdrq/config.hpp"
#include "otdrq/units.hpp"

namespace otdrq {

/// sigma_phi = sqrt(1 / (2 SNR)), SNR linear.
inline double phase_limit(double snr)
{
    detail::require(snr > 0.0, "snr", "SNR must be > 0");
    return std::sqrt(1.0 / (2.0 * snr));
}

/// sigma_dT(p -> p+1) = sqrt(2) sigma_phi / (Cf dL).
inline double temperature_limit(double sigma_phi, double cf, double delta_L)
{
    detail::require(cf > 0.0, "conversion-constant", "Cf must be > 0");
    detail::require(delta_L > 0.0, "delta-L", "delta_L must be > 0");
    return std::numbers::sqrt2 * sigma_phi / (cf * delta_L);
}

inline double averaged_limit(double sigma, std::size_t frames)
{
    detail::require(frames >= 1, "frames", "frame count must be >= 1");
    return sigma / std::sqrt(static_cast<double>(frames));
}

enum class LimitKind { phase_vs_snr, temp_vs_length, temp_vs_snr, temp_vs_frames };

inline std::string_view to_string(LimitKind k)
{
    switch (k) {
    case LimitKind::phase_vs_snr: return "phase_vs_snr";
    case LimitKind::temp_vs_length: return "temp_vs_length";
    case LimitKind::temp_vs_snr: return "temp_vs_snr";
    case LimitKind::temp_vs_frames: return "temp_vs_frames";
    }
    return "unknown";
}

struct LimitCurve {
    LimitKind kind = LimitKind::phase_vs_snr;
    std::vector<double> abscissa;
    std::vector<double> sigma;
};

/// Parameters held fixed while the curve's abscissa varies.
struct LimitPoint {
    double snr = 50.0;        // linear
    double sigma_phi = 0.1;   // rad, used by temp_vs_length when snr <= 0
    double cf = 87.6;         // rad/(K m)
    double delta_L = 10.0;    // m
    double sigma_dT = 0.0;    // K, base value for temp_vs_frames (0: derive)
};

/// Vectorized composition of the three laws; abscissa is linear SNR,
/// dL in m, or a frame count depending on `kind`.
inline LimitCurve limit_curve(LimitKind kind, std::span<const double> abscissa, const LimitPoint& at)
{
    detail::require(!abscissa.empty(), "empty-sweep", "limit curve needs at least one abscissa value");
    LimitCurve c{kind, {abscissa.begin(), abscissa.end()}, {}};
    c.sigma.reserve(abscissa.size());
    for (double x : abscissa) {
        switch (kind) {
        case LimitKind::phase_vs_snr:
            c.sigma.push_back(phase_limit(x));
            break;
        case LimitKind::temp_vs_snr:
            c.sigma.push_back(temperature_limit(phase_limit(x), at.cf, at.delta_L));
            break;
        case LimitKind::temp_vs_length: {
            const double sp = at.snr > 0.0 ? phase_limit(at.snr) : at.sigma_phi;
            c.sigma.push_back(temperature_limit(sp, at.cf, x));
            break;
        }
        case LimitKind::temp_vs_frames: {
            const double base = at.sigma_dT > 0.0 ? at.sigma_dT
                                                  : temperature_limit(phase_limit(at.snr), at.cf, at.delta_L);
            detail::require(x >= 1.0, "frames", "frame count must be >= 1");
            c.sigma.push_back(averaged_limit(base, static_cast<std::size_t>(x)));
            break;
        }
        }
    }
    return c;
}

inline std::vector<double> db_grid_to_linear(std::span<const double> db)
{
    std::vector<double> out;
    out.reserve(db.size());
    for (double v : db)
        out.push_back(db_to_linear(v));
    return out;
}

} // namespace otdrq

#pragma once

// Phase extraction and the reference/monitor differencing pipeline.
// Missing (fade-invalid) values are carried as quiet NaN.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "otdrq/config.hpp"
#include "otdrq/fiber.hpp"

namespace otdrq {

inline constexpr double missing = std::numeric_limits<double>::quiet_NaN();

inline bool is_missing(double v) { return std::isnan(v); }

/// Wraps to (-pi, pi].
inline double wrap_phase(double x)
{
    double r = std::remainder(x, 2.0 * std::numbers::pi);
    if (r <= -std::numbers::pi)
        r += 2.0 * std::numbers::pi;
    return r;
}

/// Four-quadrant argument of the sample; nullopt for y == 0 (deep fade).
inline std::optional<double> estimate_phase(std::complex<double> y)
{
    if (y.real() == 0.0 && y.imag() == 0.0)
        return std::nullopt;
    return std::atan2(y.imag(), y.real());
}

/// Phase of `a` relative to `b`, i.e. wrap(arg a - arg b), from a single
/// product; exactly 0 when a == b.
inline double relative_phase(std::complex<double> a, std::complex<double> b)
{
    const double re = a.real() * b.real() + a.imag() * b.imag();
    const double im = a.imag() * b.real() - a.real() * b.imag();
    return std::atan2(im, re);
}

class ReferenceSelectionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Slow-time phases for a set of fast-time columns (frames x columns).
struct PhaseMatrix {
    std::size_t frames = 0;
    std::vector<std::size_t> columns; // fast-time index of each column
    std::vector<double> values;       // row-major, NaN = fade-invalid

    PhaseMatrix() = default;
    PhaseMatrix(std::size_t p, std::vector<std::size_t> cols)
        : frames(p), columns(std::move(cols)), values(frames * columns.size(), missing)
    {
    }

    double& at(std::size_t p, std::size_t c) { return values[p * columns.size() + c]; }
    double at(std::size_t p, std::size_t c) const { return values[p * columns.size() + c]; }

    std::vector<double> column(std::size_t c) const
    {
        std::vector<double> out(frames);
        for (std::size_t p = 0; p < frames; ++p)
            out[p] = at(p, c);
        return out;
    }
};

/// 1 - |mean(exp(j phi))| over the valid entries; NaN when none are valid.
inline double circular_variance(std::span<const double> phases)
{
    double s = 0.0;
    double c = 0.0;
    std::size_t n = 0;
    for (double v : phases) {
        if (is_missing(v))
            continue;
        s += std::sin(v);
        c += std::cos(v);
        ++n;
    }
    if (n == 0)
        return missing;
    return 1.0 - std::hypot(s, c) / static_cast<double>(n);
}

/// Picks the reference column: distance before the heating zone minus one
/// resolution cell (and not beyond `max_distance`), amplitude at or above its
/// fade floor, minimum slow-time circular variance.  Variances within 1e-12
/// count as tied and are resolved by the larger amplitude.
inline std::size_t select_reference(const PhaseMatrix& phases, std::span<const double> amplitude,
                                    std::span<const double> fade_floor, const HeatingZone& zone,
                                    const DerivedGrid& grid,
                                    double max_distance = std::numeric_limits<double>::infinity())
{
    const double limit = std::min(zone.start - grid.resolution_cell_length, max_distance);
    std::optional<std::size_t> best;
    double best_var = 0.0;
    std::vector<double> col(phases.frames);
    for (std::size_t c = 0; c < phases.columns.size(); ++c) {
        const std::size_t k = phases.columns[c];
        if (!(grid.distance_of_sample(static_cast<double>(k)) < limit))
            continue;
        if (amplitude[c] < fade_floor[c] || amplitude[c] <= 0.0)
            continue;
        for (std::size_t p = 0; p < phases.frames; ++p)
            col[p] = phases.at(p, c);
        const double v = circular_variance(col);
        if (is_missing(v))
            continue;
        if (!best || v < best_var - 1e-12 || (std::abs(v - best_var) <= 1e-12 && amplitude[c] > amplitude[*best])) {
            best = c;
            best_var = v;
        }
    }
    if (!best)
        throw ReferenceSelectionError(
            "no reference candidate before the heating zone passes the fade threshold; "
            "use a different seed or a lower fade_threshold");
    return phases.columns[*best];
}

/// wrap(phi_k2 - phi_k1) per frame; NaN where either side is missing.
inline std::vector<double> phase_difference(std::span<const double> phi_k2, std::span<const double> phi_k1)
{
    detail::require(phi_k1.size() == phi_k2.size(), "frame-count", "phase sequences differ in length");
    std::vector<double> out(phi_k1.size());
    for (std::size_t p = 0; p < out.size(); ++p)
        out[p] = (is_missing(phi_k1[p]) || is_missing(phi_k2[p])) ? missing : wrap_phase(phi_k2[p] - phi_k1[p]);
    return out;
}

struct UnwrapResult {
    std::vector<double> values;
    std::vector<bool> bridged;
    bool reliable = true;
};

/// Nearest-branch unwrapping along slow time.  Gaps are bridged by linear
/// continuation of the last increment (and flagged); an increment larger
/// than `jump_limit` between consecutive valid frames marks the track
/// unreliable.
inline UnwrapResult unwrap_slow_time(std::span<const double> wrapped, double jump_limit = 0.75 * std::numbers::pi)
{
    constexpr double two_pi = 2.0 * std::numbers::pi;
    const std::size_t n = wrapped.size();
    UnwrapResult r{std::vector<double>(n, missing), std::vector<bool>(n, false), true};

    std::size_t first = 0;
    while (first < n && is_missing(wrapped[first]))
        ++first;
    if (first == n) {
        r.reliable = false;
        r.bridged.assign(n, true);
        return r;
    }

    r.values[first] = wrapped[first];
    std::size_t prev = first;
    double slope = 0.0;
    for (std::size_t p = first + 1; p < n; ++p) {
        if (is_missing(wrapped[p]))
            continue;
        const auto gap = static_cast<double>(p - prev);
        const double predicted = r.values[prev] + slope * (gap - 1.0);
        const double v = wrapped[p] + two_pi * std::round((predicted - wrapped[p]) / two_pi);
        if (p == prev + 1 && std::abs(v - r.values[prev]) > jump_limit)
            r.reliable = false;
        for (std::size_t q = prev + 1; q < p; ++q) {
            r.values[q] = r.values[prev] + (v - r.values[prev]) * static_cast<double>(q - prev) / gap;
            r.bridged[q] = true;
        }
        r.values[p] = v;
        slope = (v - r.values[prev]) / gap;
        prev = p;
    }
    for (std::size_t q = prev + 1; q < n; ++q) {
        r.values[q] = r.values[prev] + slope * static_cast<double>(q - prev);
        r.bridged[q] = true;
    }
    for (std::size_t q = 0; q < first; ++q) {
        r.values[q] = r.values[first];
        r.bridged[q] = true;
    }
    return r;
}

/// dT(p) = (dphi(p) - dphi(0)) / (Cf dL).
inline std::vector<double> temperature_from_phase(std::span<const double> delta_phi_unwrapped, double cf,
                                                  double delta_L)
{
    detail::require(delta_L > 0.0, "delta-L", "delta_L must be > 0");
    detail::require(cf > 0.0, "conversion-constant", "Cf must be > 0");
    std::vector<double> out(delta_phi_unwrapped.size());
    if (out.empty())
        return out;
    const double origin = delta_phi_unwrapped[0];
    for (std::size_t p = 0; p < out.size(); ++p)
        out[p] = (delta_phi_unwrapped[p] - origin) / (cf * delta_L);
    return out;
}

/// Per-sample fade floor: `threshold` times the median amplitude of the
/// surrounding block of samples.
class FadeReference {
public:
    FadeReference() = default;

    FadeReference(std::span<const double> amplitude, std::size_t block, double threshold)
        : block_(std::max<std::size_t>(1, block)), threshold_(threshold)
    {
        const std::size_t n = amplitude.size();
        std::vector<double> tmp;
        for (std::size_t b = 0; b < n; b += block_) {
            const std::size_t e = std::min(n, b + block_);
            tmp.assign(amplitude.begin() + static_cast<std::ptrdiff_t>(b),
                       amplitude.begin() + static_cast<std::ptrdiff_t>(e));
            const auto mid = tmp.begin() + static_cast<std::ptrdiff_t>(tmp.size() / 2);
            std::nth_element(tmp.begin(), mid, tmp.end());
            medians_.push_back(*mid);
        }
    }

    double floor(std::size_t k) const { return threshold_ * medians_[k / block_]; }
    double median(std::size_t k) const { return medians_[k / block_]; }
    double threshold() const { return threshold_; }

private:
    std::size_t block_ = 1;
    double threshold_ = 0.0;
    std::vector<double> medians_;
};

/// Nearest index to `target_distance` inside the heating zone whose
/// amplitude clears its fade floor.
inline std::optional<std::size_t> select_monitor(std::span<const double> amplitude, const FadeReference& fades,
                                                 double target_distance, const HeatingZone& zone,
                                                 const DerivedGrid& grid)
{
    const std::size_t k0 = grid.index_of_distance(target_distance);
    auto ok = [&](std::size_t k) {
        const double z = grid.distance_of_sample(static_cast<double>(k));
        return k < amplitude.size() && zone.contains(z) && amplitude[k] > 0.0 && amplitude[k] >= fades.floor(k);
    };
    const std::size_t span = amplitude.size();
    for (std::size_t d = 0; d < span; ++d) {
        std::optional<std::size_t> cand;
        double cand_err = 0.0;
        for (int sgn : {-1, 1}) {
            if (sgn < 0 && d > k0)
                continue;
            const std::size_t k = sgn < 0 ? k0 - d : k0 + d;
            if (!ok(k))
                continue;
            const double err = std::abs(grid.distance_of_sample(static_cast<double>(k)) - target_distance);
            if (!cand || err < cand_err) {
                cand = k;
                cand_err = err;
            }
        }
        if (cand)
            return cand;
        const double lo = grid.distance_of_sample(static_cast<double>(k0 > d ? k0 - d : 0));
        const double hi = grid.distance_of_sample(static_cast<double>(k0 + d));
        if (lo <= zone.start && hi > zone.end)
            break;
    }
    return std::nullopt;
}

/// Reference/monitor pair followed over slow time.
struct PhaseTrack {
    std::size_t k1 = 0;
    std::size_t k2 = 0;
    double delta_L = 0;                // m, distance(k2) - z_start
    std::vector<double> wrapped;       // wrap(phi_k2 - phi_k1)
    std::vector<double> delta_phi;     // unwrapped
    std::vector<double> delta_T_hat;   // K, relative to frame 0
    std::vector<bool> bridged;
    bool reliable = true;
};

inline PhaseTrack make_phase_track(std::span<const double> phi_k1, std::span<const double> phi_k2, std::size_t k1,
                                   std::size_t k2, double delta_L, double cf)
{
    PhaseTrack t;
    t.k1 = k1;
    t.k2 = k2;
    t.delta_L = delta_L;
    t.wrapped = phase_difference(phi_k2, phi_k1);
    auto u = unwrap_slow_time(t.wrapped);
    t.delta_phi = std::move(u.values);
    t.bridged = std::move(u.bridged);
    t.reliable = u.reliable;
    t.delta_T_hat = temperature_from_phase(t.delta_phi, cf, delta_L);
    return t;
}

} // namespace otdrq

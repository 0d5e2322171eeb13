#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "otdrq/config.hpp"
#include "otdrq/optical_path.hpp"
#include "otdrq/random.hpp"

namespace otdrq {

/// Hamming-windowed sinc low-pass with its -6 dB edge at `cutoff_hz`,
/// normalized to unity DC gain.  `taps` must be odd (linear phase with an
/// integer group delay of (taps-1)/2 samples).
inline std::vector<double> design_lowpass(std::size_t taps, double cutoff_hz, double sample_rate)
{
    detail::require(taps >= 3 && taps % 2 == 1, "filter-taps", "tap count must be odd and >= 3");
    detail::require(cutoff_hz > 0 && cutoff_hz < sample_rate / 2, "filter-cutoff",
                    "cutoff must lie in (0, Nyquist)");
    const double fc = cutoff_hz / sample_rate;
    const auto half = static_cast<double>(taps - 1) / 2.0;
    std::vector<double> h(taps);
    for (std::size_t i = 0; i <= taps / 2; ++i) {
        const double n = static_cast<double>(i) - half;
        const double x = 2.0 * fc * n;
        const double sinc = (n == 0.0) ? 1.0 : std::sin(std::numbers::pi * x) / (std::numbers::pi * x);
        const double window =
            0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(taps - 1));
        h[i] = 2.0 * fc * sinc * window;
        h[taps - 1 - i] = h[i];
    }
    const double sum = std::accumulate(h.begin(), h.end(), 0.0);
    for (auto& v : h)
        v /= sum;
    return h;
}

/// Sum of squared taps: white-noise power gain of the filter.
inline double noise_gain(std::span<const double> taps)
{
    return std::inner_product(taps.begin(), taps.end(), taps.begin(), 0.0);
}

/// Delay-compensated FIR output at index k for an arbitrary sample source
/// `x(j)` over [0, n).  Both the full-trace and the sparse paths go through
/// this function so they agree bit for bit.
template <typename Source>
std::complex<double> filter_at(const Source& x, std::size_t n, std::span<const double> taps, std::size_t k)
{
    const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(taps.size() / 2);
    const auto kk = static_cast<std::ptrdiff_t>(k);
    const auto nn = static_cast<std::ptrdiff_t>(n);
    // j = k + half - i must stay inside [0, n)
    const std::ptrdiff_t i_begin = std::max<std::ptrdiff_t>(0, kk + half - (nn - 1));
    const std::ptrdiff_t i_end = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(taps.size()) - 1, kk + half);
    double re = 0.0;
    double im = 0.0;
    for (std::ptrdiff_t i = i_begin; i <= i_end; ++i) {
        const std::complex<double> v = x(static_cast<std::size_t>(kk + half - i));
        re += taps[static_cast<std::size_t>(i)] * v.real();
        im += taps[static_cast<std::size_t>(i)] * v.imag();
    }
    return {re, im};
}

inline ComplexTrace band_limit(const ComplexTrace& in, std::span<const double> taps)
{
    ComplexTrace out;
    out.sample_rate = in.sample_rate;
    out.frame_index = in.frame_index;
    out.samples.resize(in.size());
    const auto* data = in.samples.data();
    auto src = [data](std::size_t j) { return data[j]; };
    for (std::size_t k = 0; k < in.size(); ++k)
        out.samples[k] = filter_at(src, in.size(), taps, k);
    return out;
}

/// Band-limits to +-B with the default 127-tap design.
inline ComplexTrace band_limit(const ComplexTrace& in, double bandwidth_hz, std::size_t taps = 127)
{
    const auto h = design_lowpass(taps, bandwidth_hz, in.sample_rate);
    return band_limit(in, h);
}

struct ReceiverModel {
    double lo_power = 1e-3;     // W
    double bandwidth = 300e6;   // Hz
    double sample_rate = 625e6; // Hz
    double shot_psd_equiv = 0;  // W/Hz, h nu for shot-noise-limited detection
    double thermal_psd = 0;     // W/Hz
    double responsivity = 1.0;
    std::vector<double> filter_taps;

    double filter_noise_gain() const { return noise_gain(filter_taps); }
};

inline ReceiverModel make_receiver(const ValidatedConfig& vc)
{
    const auto& c = vc.config;
    ReceiverModel r;
    r.lo_power = vc.linear.lo_power_w;
    r.bandwidth = c.receiver_bandwidth_hz;
    r.sample_rate = c.adc_rate_hz;
    r.shot_psd_equiv = photon_energy(c.wavelength_m, c.constants);
    r.thermal_psd = c.thermal_psd_w_per_hz;
    r.filter_taps = design_lowpass(c.filter_taps_n, c.receiver_bandwidth_hz, c.adc_rate_hz);
    return r;
}

/// Ideal homodyne I/Q detection with a strong LO: the output is the input
/// field (times the responsivity) plus input-referred shot noise of PSD h nu
/// and optional thermal noise.  With `noise_enabled == false` the output is
/// the scaled field only.
inline ComplexTrace detect(const ComplexTrace& field, const ReceiverModel& model, const GaussianStream& shot,
                           const GaussianStream& thermal, bool noise_enabled, double noise_scale = 1.0)
{
    ComplexTrace out;
    out.sample_rate = field.sample_rate;
    out.frame_index = field.frame_index;
    out.samples.resize(field.size());
    const double s_shot =
        noise_enabled ? noise_scale * std::sqrt(white_sample_variance(model.shot_psd_equiv, field.sample_rate)) : 0.0;
    const double s_th =
        noise_enabled ? noise_scale * std::sqrt(white_sample_variance(model.thermal_psd, field.sample_rate)) : 0.0;
    for (std::size_t k = 0; k < field.size(); ++k) {
        std::complex<double> v = field.samples[k];
        if (s_shot > 0.0)
            v += s_shot * shot(k);
        if (s_th > 0.0)
            v += s_th * thermal(k);
        out.samples[k] = model.responsivity * v;
    }
    return out;
}

inline ComplexTrace detect(const ComplexTrace& field, const ReceiverModel& model, const GaussianStream& shot,
                           bool noise_enabled, double noise_scale = 1.0)
{
    return detect(field, model, shot, GaussianStream(derive_key(shot.key(), stream::thermal)), noise_enabled,
                  noise_scale);
}

/// Total complex noise power per sample at the sampler (after the
/// band-limit) for ASE + shot + thermal, with the field noise scaled by
/// `noise_scale`.
inline double in_band_noise_power(const AseModel& ase, const ReceiverModel& rx, double noise_scale = 1.0)
{
    const double psd = ase.psd_per_pol + rx.shot_psd_equiv + rx.thermal_psd;
    return noise_scale * noise_scale * rx.responsivity * rx.responsivity * white_sample_variance(psd, rx.sample_rate) *
           rx.filter_noise_gain();
}

struct SnrProfile {
    std::vector<double> snr; // linear, per sample
    double median_snr = 0;
    double noise_power = 0;
};

/// SNR_k = |s_k|^2 / sigma_n^2 for the noiseless band-limited trace.
inline SnrProfile measure_snr(const ComplexTrace& noiseless, double noise_power)
{
    detail::require(noise_power > 0.0 && std::isfinite(noise_power), "snr-undefined",
                    "noise power must be positive to define SNR");
    SnrProfile p;
    p.noise_power = noise_power;
    p.snr.resize(noiseless.size());
    for (std::size_t k = 0; k < noiseless.size(); ++k)
        p.snr[k] = std::norm(noiseless.samples[k]) / noise_power;
    if (!p.snr.empty()) {
        std::vector<double> tmp = p.snr;
        const auto mid = tmp.begin() + static_cast<std::ptrdiff_t>(tmp.size() / 2);
        std::nth_element(tmp.begin(), mid, tmp.end());
        p.median_snr = *mid;
    }
    return p;
}

} // namespace otdrq

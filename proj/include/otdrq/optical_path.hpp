#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <vector>

#include "otdrq/config.hpp"
#include "otdrq/random.hpp"

namespace otdrq {

/// One fast-time sequence of complex baseband samples.
struct ComplexTrace {
    std::vector<std::complex<double>> samples;
    double sample_rate = 0;
    std::size_t frame_index = 0;

    std::size_t size() const { return samples.size(); }
};

/// Rectangular probe pulse at the fiber input.
struct PulseShape {
    double duration = 0;   // s
    double peak_field = 0; // sqrt(W)
};

/// The launch peak power is the post-booster value entering the fiber, so
/// the booster gain is already folded into it.
inline PulseShape shape_pulse(const ValidatedConfig& vc)
{
    return {vc.config.pulse_duration_s, std::sqrt(vc.linear.launch_peak_power_w)};
}

inline double photon_energy(double wavelength_m, const PhysicalConstants& c = {})
{
    return c.planck_constant * c.speed_of_light / wavelength_m;
}

/// Optical amplifier with co-polarized ASE.
struct AseModel {
    double gain = 1;
    double noise_figure = 1;
    double photon_energy = 0;
    double spontaneous_emission_factor = 0; // n_sp
    double psd_per_pol = 0;                 // W/Hz

    double field_gain() const { return std::sqrt(gain); }

    static AseModel transparent(double hnu = 0) { return {1.0, 1.0, hnu, 0.0, 0.0}; }
};

/// psd = n_sp h nu (G - 1) with n_sp = F G / (2 (G - 1)).
inline AseModel ase_model(double gain, double noise_figure, double hnu)
{
    detail::require(gain > 1.0, "amplifier-gain", "ASE model needs G > 1 (use AseModel::transparent for G = 1)");
    const double nf_min = 2.0 * (gain - 1.0) / gain;
    detail::require(noise_figure >= nf_min * (1.0 - 1e-12), "noise-figure-below-quantum-limit",
                    "noise figure below 2(G-1)/G");
    AseModel m;
    m.gain = gain;
    m.noise_figure = noise_figure;
    m.photon_energy = hnu;
    m.spontaneous_emission_factor = noise_figure * gain / (2.0 * (gain - 1.0));
    m.psd_per_pol = m.spontaneous_emission_factor * hnu * (gain - 1.0);
    return m;
}

inline AseModel ase_psd(double gain_db, double nf_db, double wavelength_m, const PhysicalConstants& c = {})
{
    detail::require(gain_db > 0.0, "amplifier-gain", "gain must be > 0 dB");
    return ase_model(db_to_linear(gain_db), db_to_linear(nf_db), photon_energy(wavelength_m, c));
}

/// Per-sample complex variance of a white source with one-sided-equivalent
/// PSD `psd` at `sample_rate`; the receiver band-limit to +-B then leaves
/// psd * B of it in band.
inline double white_sample_variance(double psd, double sample_rate) { return psd * sample_rate / 2.0; }

/// Scales the field by sqrt(G) and adds white circular ASE drawn from `noise`
/// (sample k of the trace uses noise(k)).  `noise_scale` multiplies the
/// noise field amplitude.
inline ComplexTrace amplify_with_ase(const ComplexTrace& in, const AseModel& model, const GaussianStream& noise,
                                     double noise_scale = 1.0)
{
    ComplexTrace out;
    out.sample_rate = in.sample_rate;
    out.frame_index = in.frame_index;
    out.samples.resize(in.size());
    const double g = model.field_gain();
    const double sigma = noise_scale * std::sqrt(white_sample_variance(model.psd_per_pol, in.sample_rate));
    for (std::size_t k = 0; k < in.size(); ++k) {
        std::complex<double> v = in.samples[k] * g;
        if (sigma > 0.0)
            v += sigma * noise(k);
        out.samples[k] = v;
    }
    return out;
}

} // namespace otdrq

#pragma once

// Monte-Carlo harness: paired noisy/noiseless simulation of fiber ensembles,
// residual pooling by per-sample SNR, and temperature-track statistics.

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <fmt/format.h>

#include "otdrq/config.hpp"
#include "otdrq/config_file.hpp"
#include "otdrq/estimation.hpp"
#include "otdrq/fiber.hpp"
#include "otdrq/optical_path.hpp"
#include "otdrq/quantum_limit.hpp"
#include "otdrq/random.hpp"
#include "otdrq/receiver.hpp"
#include "otdrq/statistics.hpp"

namespace otdrq {

/// Immutable per-run quantities shared by every trial.
struct SimulationContext {
    ValidatedConfig vc;
    DerivedGrid grid;
    PulseShape pulse;
    AseModel preamp;
    ReceiverModel receiver;
    HeatingZone zone;
    TemperatureProfile profile;
    double cf = 0;
    double signal_field_gain = 1;  // circulator + preamplifier, field units
    double unit_noise_power = 0;   // in-band noise per sample at noise_scale = 1
    std::size_t fade_block = 1;    // samples per fade-reference block

    static SimulationContext make(const ValidatedConfig& vc)
    {
        SimulationContext ctx;
        ctx.vc = vc;
        const auto& c = vc.config;
        ctx.grid = derive_grid(vc);
        ctx.pulse = shape_pulse(vc);
        ctx.preamp = ase_psd(c.preamp_gain_db, c.preamp_nf_db, c.wavelength_m, c.constants);
        ctx.receiver = make_receiver(vc);
        ctx.zone = heating_zone(c);
        ctx.profile = TemperatureProfile::linear_ramp(ctx.zone, c.heating_rate_k_per_frame, c.frames);
        ctx.cf = vc.linear.conversion_constant_cf;
        ctx.signal_field_gain = std::sqrt(vc.linear.circulator_transmission) * ctx.preamp.field_gain();
        ctx.unit_noise_power = in_band_noise_power(ctx.preamp, ctx.receiver, 1.0);
        ctx.fade_block = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::llround(100.0 * ctx.grid.samples_per_cell())));
        return ctx;
    }

    std::size_t samples() const { return grid.total_fast_samples; }
    double distance(std::size_t k) const { return grid.distance_of_sample(static_cast<double>(k)); }

    /// Fast-time thermal phase of frame p under the lumped model.
    double lumped_phase(std::size_t k, std::size_t p) const
    {
        return cf * profile.delta_T[p] * zone.overlap(distance(k));
    }
};

/// White pre-filter receiver noise of one frame: ASE + shot (+ thermal).
class FrameNoise {
public:
    FrameNoise(const SimulationContext& ctx, std::uint64_t trial_key, std::size_t frame, double noise_scale)
        : ase_(frame_noise_key(trial_key, frame, stream::ase)),
          shot_(frame_noise_key(trial_key, frame, stream::shot)),
          thermal_(frame_noise_key(trial_key, frame, stream::thermal))
    {
        const double fs = ctx.grid.sample_rate;
        s_ase_ = noise_scale * std::sqrt(white_sample_variance(ctx.preamp.psd_per_pol, fs));
        s_shot_ = noise_scale * std::sqrt(white_sample_variance(ctx.receiver.shot_psd_equiv, fs));
        s_th_ = noise_scale * std::sqrt(white_sample_variance(ctx.receiver.thermal_psd, fs));
    }

    std::complex<double> operator()(std::size_t k) const
    {
        std::complex<double> v = s_ase_ * ase_(k) + s_shot_ * shot_(k);
        if (s_th_ > 0.0)
            v += s_th_ * thermal_(k);
        return v;
    }

private:
    GaussianStream ase_;
    GaussianStream shot_;
    GaussianStream thermal_;
    double s_ase_ = 0, s_shot_ = 0, s_th_ = 0;
};

/// One fiber of the ensemble with its noiseless frame-0 receiver output.
struct FiberChannel {
    std::size_t trial_index = 0;
    std::uint64_t key = 0;
    FiberRealization fiber;
    ComplexTrace truth0;
    std::vector<double> amplitude; // |truth0|
    FadeReference fades;
};

inline ComplexTrace noiseless_receiver_output(const SimulationContext& ctx, const FiberRealization& fiber,
                                              std::span<const double> offsets)
{
    ComplexTrace field = synthesize_backscatter(fiber, offsets, ctx.pulse, ctx.grid);
    for (auto& v : field.samples)
        v *= ctx.signal_field_gain;
    return band_limit(field, ctx.receiver.filter_taps);
}

inline FiberChannel prepare_channel(const SimulationContext& ctx, std::size_t trial_index)
{
    FiberChannel ch;
    ch.trial_index = trial_index;
    ch.key = trial_key(ctx.vc.config.rng_seed, trial_index);
    ch.fiber = sample_fiber(ctx.vc, ctx.grid, derive_key(ch.key, stream::fiber));
    ch.truth0 = noiseless_receiver_output(ctx, ch.fiber, {});
    ch.amplitude.resize(ch.truth0.size());
    for (std::size_t k = 0; k < ch.truth0.size(); ++k)
        ch.amplitude[k] = std::abs(ch.truth0.samples[k]);
    ch.fades = FadeReference(ch.amplitude, ctx.fade_block, ctx.vc.config.fade_threshold);
    return ch;
}

/// Noiseless receiver output of frame p.
inline ComplexTrace truth_frame(const SimulationContext& ctx, const FiberChannel& ch, std::size_t p)
{
    if (ctx.vc.config.thermal_model == ThermalModel::distributed) {
        const auto offsets = scatterer_phase_offsets(ch.fiber, ctx.profile, ctx.cf, p);
        auto t = noiseless_receiver_output(ctx, ch.fiber, offsets);
        t.frame_index = p;
        return t;
    }
    ComplexTrace t = ch.truth0;
    t.frame_index = p;
    if (ctx.profile.delta_T[p] != 0.0) {
        const std::size_t k_first = ctx.grid.index_of_distance(ctx.zone.start);
        for (std::size_t k = k_first; k < t.size(); ++k) {
            const double psi = ctx.lumped_phase(k, p);
            if (psi != 0.0)
                t.samples[k] *= std::polar(1.0, psi);
        }
    }
    return t;
}

/// Band-limited noise of frame p (full trace).
inline std::vector<std::complex<double>> filtered_noise(const SimulationContext& ctx, const FiberChannel& ch,
                                                        std::size_t p, double noise_scale)
{
    const FrameNoise w(ctx, ch.key, p, noise_scale);
    const std::size_t n = ctx.samples();
    std::vector<std::complex<double>> raw(n);
    for (std::size_t k = 0; k < n; ++k)
        raw[k] = w(k);
    std::vector<std::complex<double>> out(n);
    const auto* data = raw.data();
    auto src = [data](std::size_t j) { return data[j]; };
    for (std::size_t k = 0; k < n; ++k)
        out[k] = filter_at(src, n, ctx.receiver.filter_taps, k);
    return out;
}

/// Band-limited noise of frame p at a single index; identical to the
/// corresponding element of filtered_noise().
inline std::complex<double> filtered_noise_at(const SimulationContext& ctx, const FrameNoise& w, std::size_t k)
{
    return filter_at(w, ctx.samples(), ctx.receiver.filter_taps, k);
}

struct FramePair {
    ComplexTrace noisy;
    ComplexTrace truth;
};

/// Full noisy and noiseless receiver output for one frame.
inline FramePair simulate_frame(const SimulationContext& ctx, const FiberChannel& ch, std::size_t p,
                                double noise_scale, bool noise_enabled = true)
{
    FramePair f;
    f.truth = truth_frame(ctx, ch, p);
    f.noisy = f.truth;
    if (noise_enabled && noise_scale > 0.0) {
        const auto n = filtered_noise(ctx, ch, p, noise_scale);
        for (std::size_t k = 0; k < n.size(); ++k)
            f.noisy.samples[k] += n[k];
    }
    return f;
}

/// Residual histogram channels: r, r^2, 1/(2 SNR).
using PhaseHistogram = BinnedSums<3>;

struct TrialOptions {
    double noise_scale = 1.0;
    bool noise_enabled = true;
    bool collect_residuals = true;
    std::vector<double> delta_L_list; // empty: the configured monitor distance
    std::size_t reference_shortlist = 64;
};

struct MonitorTrack {
    double delta_L_nominal = 0;
    PhaseTrack noisy;
    PhaseTrack truth;
    std::vector<double> phase_error; // wrap(noisy - truth) of the wrapped difference, per frame
    double snr_reference = 0;
    double snr_monitor = 0;
    double snr_effective = 0;
};

struct TrialResult {
    std::size_t trial_index = 0;
    std::uint64_t seed = 0;
    double noise_scale = 1.0;
    std::size_t k1 = 0;
    std::vector<MonitorTrack> tracks;
    PhaseHistogram residuals;
    std::uint64_t samples_considered = 0;
    std::uint64_t fade_excluded = 0;
    double max_abs_residual = 0.0;
    double noise_power = 0.0;
};

namespace detail {

inline std::vector<std::size_t> reference_shortlist(const SimulationContext& ctx, const FiberChannel& ch,
                                                    std::size_t count)
{
    const auto& c = ctx.vc.config;
    double limit = ctx.zone.start - ctx.grid.resolution_cell_length;
    if (c.reference_k1_distance_m > 0.0)
        limit = std::min(limit, c.reference_k1_distance_m);
    std::vector<std::size_t> cand;
    for (std::size_t k = 0; k < ctx.samples() && ctx.distance(k) < limit; ++k)
        if (ch.amplitude[k] > 0.0 && ch.amplitude[k] >= ch.fades.floor(k))
            cand.push_back(k);
    auto better = [&](std::size_t a, std::size_t b) {
        return ch.amplitude[a] != ch.amplitude[b] ? ch.amplitude[a] > ch.amplitude[b] : a < b;
    };
    const std::size_t n = std::min(count, cand.size());
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(n), cand.end(), better);
    cand.resize(n);
    std::sort(cand.begin(), cand.end());
    return cand;
}

inline double phase_or_missing(std::complex<double> y) { return estimate_phase(y).value_or(missing); }

} // namespace detail

inline TrialResult run_trial(const SimulationContext& ctx, std::size_t trial_index, const TrialOptions& opt)
{
    const auto& c = ctx.vc.config;
    const std::size_t frames = ctx.profile.frames();
    const std::size_t n = ctx.samples();
    const bool noisy_run = opt.noise_enabled && opt.noise_scale > 0.0;

    FiberChannel ch = prepare_channel(ctx, trial_index);

    TrialResult res;
    res.trial_index = trial_index;
    res.seed = ch.key;
    res.noise_scale = noisy_run ? opt.noise_scale : 0.0;
    // Noiseless runs are binned against the unit-scale calibrated noise.
    res.noise_power = noisy_run ? ctx.unit_noise_power * opt.noise_scale * opt.noise_scale : ctx.unit_noise_power;

    // Monitor points.
    std::vector<double> dls = opt.delta_L_list;
    if (dls.empty())
        dls.push_back(c.monitor_k2_distance_m - ctx.zone.start);
    std::vector<std::size_t> k2s;
    for (double dl : dls) {
        detail::require(dl > 0.0 && dl <= ctx.zone.length(), "delta-L-outside-zone",
                        fmt::format("delta_L {} m exceeds the heating zone length {} m", dl, ctx.zone.length()));
        const auto k2 = select_monitor(ch.amplitude, ch.fades, ctx.zone.start + dl, ctx.zone, ctx.grid);
        if (!k2)
            throw std::runtime_error(fmt::format("trial {}: no non-fading monitor sample for delta_L = {} m",
                                                 trial_index, dl));
        k2s.push_back(*k2);
    }

    const auto shortlist = detail::reference_shortlist(ctx, ch, opt.reference_shortlist);
    PhaseMatrix ref_noisy(frames, shortlist);
    PhaseMatrix ref_truth(frames, shortlist);
    PhaseMatrix mon_noisy(frames, k2s);
    PhaseMatrix mon_truth(frames, k2s);

    // Per-sample SNR in dB (lumped model: frame independent).
    const bool distributed = c.thermal_model == ThermalModel::distributed;
    std::vector<double> snr_db;
    auto fill_snr = [&](const ComplexTrace& truth) {
        snr_db.resize(n);
        for (std::size_t k = 0; k < n; ++k)
            snr_db[k] = linear_to_db(std::norm(truth.samples[k]) / res.noise_power);
    };
    if (opt.collect_residuals && !distributed)
        fill_snr(ch.truth0);

    for (std::size_t p = 0; p < frames; ++p) {
        const FrameNoise w(ctx, ch.key, p, noisy_run ? opt.noise_scale : 0.0);
        if (opt.collect_residuals || distributed) {
            ComplexTrace truth = truth_frame(ctx, ch, p);
            std::vector<std::complex<double>> noise;
            if (noisy_run)
                noise = filtered_noise(ctx, ch, p, opt.noise_scale);
            auto noisy_at = [&](std::size_t k) { return noisy_run ? truth.samples[k] + noise[k] : truth.samples[k]; };

            if (opt.collect_residuals) {
                if (distributed)
                    fill_snr(truth);
                for (std::size_t k = 0; k < n; ++k) {
                    ++res.samples_considered;
                    if (ch.amplitude[k] <= 0.0 || ch.amplitude[k] < ch.fades.floor(k)) {
                        ++res.fade_excluded;
                        continue;
                    }
                    const double r = relative_phase(noisy_at(k), truth.samples[k]);
                    res.max_abs_residual = std::max(res.max_abs_residual, std::abs(r));
                    const double lim2 = 1.0 / (2.0 * std::pow(10.0, snr_db[k] / 10.0));
                    res.residuals.add(snr_db[k], {r, r * r, lim2});
                }
            }
            for (std::size_t j = 0; j < shortlist.size(); ++j) {
                ref_truth.at(p, j) = detail::phase_or_missing(truth.samples[shortlist[j]]);
                ref_noisy.at(p, j) = detail::phase_or_missing(noisy_at(shortlist[j]));
            }
            for (std::size_t j = 0; j < k2s.size(); ++j) {
                mon_truth.at(p, j) = detail::phase_or_missing(truth.samples[k2s[j]]);
                mon_noisy.at(p, j) = detail::phase_or_missing(noisy_at(k2s[j]));
            }
        } else {
            // Sparse path: only the reference shortlist and monitor samples.
            auto value = [&](std::size_t k, std::complex<double>& truth_v) {
                truth_v = ch.truth0.samples[k];
                if (ctx.profile.delta_T[p] != 0.0) {
                    const double psi = ctx.lumped_phase(k, p);
                    if (psi != 0.0)
                        truth_v *= std::polar(1.0, psi);
                }
                return noisy_run ? truth_v + filtered_noise_at(ctx, w, k) : truth_v;
            };
            std::complex<double> tv;
            for (std::size_t j = 0; j < shortlist.size(); ++j) {
                const auto nv = value(shortlist[j], tv);
                ref_truth.at(p, j) = detail::phase_or_missing(tv);
                ref_noisy.at(p, j) = detail::phase_or_missing(nv);
            }
            for (std::size_t j = 0; j < k2s.size(); ++j) {
                const auto nv = value(k2s[j], tv);
                mon_truth.at(p, j) = detail::phase_or_missing(tv);
                mon_noisy.at(p, j) = detail::phase_or_missing(nv);
            }
        }
    }

    std::vector<double> amp(shortlist.size()), floor(shortlist.size());
    for (std::size_t j = 0; j < shortlist.size(); ++j) {
        amp[j] = ch.amplitude[shortlist[j]];
        floor[j] = ch.fades.floor(shortlist[j]);
    }
    try {
        res.k1 = select_reference(ref_noisy, amp, floor, ctx.zone, ctx.grid);
    } catch (const ReferenceSelectionError& e) {
        throw ReferenceSelectionError(fmt::format("trial {}: {}", trial_index, e.what()));
    }
    const std::size_t col1 = static_cast<std::size_t>(
        std::find(shortlist.begin(), shortlist.end(), res.k1) - shortlist.begin());
    const auto phi1_noisy = ref_noisy.column(col1);
    const auto phi1_truth = ref_truth.column(col1);
    const double snr1 = std::norm(ch.truth0.samples[res.k1]) / res.noise_power;

    for (std::size_t j = 0; j < k2s.size(); ++j) {
        MonitorTrack t;
        t.delta_L_nominal = dls[j];
        const double dl_actual = ctx.distance(k2s[j]) - ctx.zone.start;
        t.noisy = make_phase_track(phi1_noisy, mon_noisy.column(j), res.k1, k2s[j], dl_actual, ctx.cf);
        t.truth = make_phase_track(phi1_truth, mon_truth.column(j), res.k1, k2s[j], dl_actual, ctx.cf);
        t.phase_error.resize(frames);
        for (std::size_t p = 0; p < frames; ++p) {
            const double a = t.noisy.wrapped[p];
            const double b = t.truth.wrapped[p];
            t.phase_error[p] = (is_missing(a) || is_missing(b)) ? missing : wrap_phase(a - b);
        }
        t.snr_reference = snr1;
        t.snr_monitor = std::norm(ch.truth0.samples[k2s[j]]) / res.noise_power;
        t.snr_effective = 1.0 / (1.0 / t.snr_reference + 1.0 / t.snr_monitor);
        res.tracks.push_back(std::move(t));
    }
    return res;
}

// ---------------------------------------------------------------------------
// Aggregation

struct BinFlags {
    bool low_confidence = false;
    bool wrap_dominated = false;

    std::string str() const
    {
        std::string s;
        if (low_confidence)
            s += "low_confidence";
        if (wrap_dominated)
            s += s.empty() ? "wrap_dominated" : "|wrap_dominated";
        return s;
    }
};

struct PhaseBinRow {
    double lo_db = 0, hi_db = 0, center_db = 0;
    std::uint64_t n = 0;
    double sigma_num = 0;
    double sigma_limit = 0; // RMS of per-sample sqrt(1/(2 SNR))
    BinFlags flags;
};

struct AggregationSettings {
    std::vector<double> edges_db;
    std::size_t min_bin_count = 100;
    double wrap_sigma_limit = 0.5;
    double min_track_snr_db = 10.0;
    StepDetrend step_detrend = StepDetrend::injected;

    static AggregationSettings from(const SweepSettings& s)
    {
        AggregationSettings a;
        a.edges_db = uniform_edges(s.snr_bin_min_db, s.snr_bin_max_db, s.snr_bin_width_db);
        a.min_bin_count = s.min_bin_count;
        a.wrap_sigma_limit = s.wrap_sigma_limit_rad;
        a.min_track_snr_db = s.min_track_snr_db;
        a.step_detrend = s.step_detrend;
        return a;
    }
};

inline std::vector<PhaseBinRow> phase_rows(const PhaseHistogram& pooled, const AggregationSettings& s)
{
    detail::require(pooled.total() > 0, "empty-pool", "no residuals to aggregate");
    const auto bins = pooled.coarse(s.edges_db);
    std::vector<PhaseBinRow> rows;
    for (std::size_t i = 0; i < bins.size(); ++i) {
        const auto& b = bins[i];
        if (b.n == 0)
            continue;
        PhaseBinRow r;
        r.lo_db = s.edges_db[i];
        r.hi_db = s.edges_db[i + 1];
        r.center_db = 0.5 * (r.lo_db + r.hi_db);
        r.n = b.n;
        Moments m;
        m.n = b.n;
        m.sum = b.sums[0];
        m.sumsq = b.sums[1];
        r.sigma_num = m.stddev();
        r.sigma_limit = std::sqrt(b.sums[2].value() / static_cast<double>(b.n));
        r.flags.low_confidence = b.n < s.min_bin_count;
        r.flags.wrap_dominated = r.sigma_limit > s.wrap_sigma_limit;
        rows.push_back(r);
    }
    return rows;
}

/// Pools residuals over trials (in the given order) and reports sigma per bin.
inline std::vector<PhaseBinRow> aggregate_phase(std::span<const TrialResult> trials, const AggregationSettings& s)
{
    PhaseHistogram pooled;
    for (const auto& t : trials)
        pooled.merge(t.residuals);
    return phase_rows(pooled, s);
}

/// Temperature-step channels: e, e^2, limit^2, pred^2, 1/SNR, dL_actual, track start.
using StepHistogram = BinnedSums<7>;

struct TempBinRow {
    double lo_db = 0, hi_db = 0, center_db = 0;
    std::uint64_t n_steps = 0;
    std::uint64_t n_tracks = 0;
    double sigma_num = 0;       // K
    double sigma_limit = 0;     // K, sqrt(2) sigma_phi(SNR) / (Cf dL), RMS over steps
    double sigma_pred_num = 0;   // K, sqrt(2) sigma_phi^num / (Cf dL)
    double snr_harmonic = 0;    // linear
    double delta_L_actual = 0;  // mean, m
    BinFlags flags;
};

/// Adds the frame-to-frame steps of one track to `h`.
inline void accumulate_steps(const MonitorTrack& t, double cf, double rate, StepDetrend detrend, StepHistogram& h)
{
    const auto& tr = t.noisy;
    const std::size_t frames = tr.delta_T_hat.size();
    if (frames < 2)
        return;
    double mean_step = rate;
    if (detrend == StepDetrend::estimated)
        mean_step = (tr.delta_T_hat[frames - 1] - tr.delta_T_hat[0]) / static_cast<double>(frames - 1);
    const double snr_db = linear_to_db(t.snr_effective);
    const double lim = temperature_limit(phase_limit(t.snr_effective), cf, tr.delta_L);
    const double scale = std::numbers::sqrt2 / (cf * tr.delta_L);
    bool first = true;
    for (std::size_t p = 0; p + 1 < frames; ++p) {
        if (tr.bridged[p] || tr.bridged[p + 1] || is_missing(t.phase_error[p]))
            continue;
        const double e = (tr.delta_T_hat[p + 1] - tr.delta_T_hat[p]) - mean_step;
        const double pred = scale * t.phase_error[p];
        h.add(snr_db, {e, e * e, lim * lim, pred * pred, 1.0 / t.snr_effective, tr.delta_L, first ? 1.0 : 0.0});
        first = false;
    }
}

inline std::vector<TempBinRow> temperature_rows(const StepHistogram& h, const AggregationSettings& s)
{
    const auto bins = h.coarse(s.edges_db);
    std::vector<TempBinRow> rows;
    for (std::size_t i = 0; i < bins.size(); ++i) {
        const auto& b = bins[i];
        if (b.n == 0)
            continue;
        const double nn = static_cast<double>(b.n);
        TempBinRow r;
        r.lo_db = s.edges_db[i];
        r.hi_db = s.edges_db[i + 1];
        r.center_db = 0.5 * (r.lo_db + r.hi_db);
        r.n_steps = b.n;
        r.n_tracks = static_cast<std::uint64_t>(std::llround(b.sums[6].value()));
        Moments m;
        m.n = b.n;
        m.sum = b.sums[0];
        m.sumsq = b.sums[1];
        r.sigma_num = m.stddev();
        r.sigma_limit = std::sqrt(b.sums[2].value() / nn);
        r.sigma_pred_num = std::sqrt(b.sums[3].value() / nn);
        r.snr_harmonic = nn / b.sums[4].value();
        r.delta_L_actual = b.sums[5].value() / nn;
        r.flags.low_confidence = b.n < s.min_bin_count;
        r.flags.wrap_dominated = phase_limit(r.snr_harmonic) > s.wrap_sigma_limit;
        rows.push_back(r);
    }
    return rows;
}

/// Frame-to-frame temperature-change statistics per nominal dL, binned by
/// the track's effective SNR.
inline std::map<double, std::vector<TempBinRow>> aggregate_temperature(std::span<const TrialResult> trials,
                                                                       std::span<const double> delta_L_list,
                                                                       double cf, double rate,
                                                                       const AggregationSettings& s)
{
    std::map<double, StepHistogram> per_dl;
    for (double dl : delta_L_list)
        per_dl.emplace(dl, StepHistogram());
    for (const auto& t : trials)
        for (const auto& tr : t.tracks) {
            const auto it = per_dl.find(tr.delta_L_nominal);
            detail::require(it != per_dl.end(), "delta-L-outside-zone",
                            fmt::format("track with delta_L {} m not in the requested list", tr.delta_L_nominal));
            accumulate_steps(tr, cf, rate, s.step_detrend, it->second);
        }
    std::map<double, std::vector<TempBinRow>> out;
    for (const auto& [dl, h] : per_dl)
        out[dl] = temperature_rows(h, s);
    return out;
}

struct FrameAverageRow {
    std::size_t frames = 0;
    std::uint64_t n_tracks = 0;
    double sigma_norm = 0;       // std of averaged error / its own limit
    double snr_harmonic = 0;     // linear, over included tracks
    double delta_L_ref = 0;      // m
    double sigma_avg_limit = 0;  // K, averaged per-frame limit at (snr_harmonic, delta_L_ref)
    double sigma_avg_num = 0;    // K, sigma_norm * sigma_avg_limit
};

/// P-frame average of the per-frame temperature error against the truth
/// path, normalized per track by sigma_phi(SNR_eff) / (Cf dL) / sqrt(P).
inline FrameAverageRow aggregate_frame_average(std::span<const TrialResult> trials, double cf, double delta_L_ref,
                                               const AggregationSettings& s)
{
    FrameAverageRow row;
    row.delta_L_ref = delta_L_ref;
    Moments z;
    NeumaierSum inv_snr;
    for (const auto& t : trials)
        for (const auto& tr : t.tracks) {
            if (linear_to_db(tr.snr_effective) < s.min_track_snr_db || !tr.noisy.reliable)
                continue;
            const std::size_t frames = tr.phase_error.size();
            row.frames = frames;
            NeumaierSum acc;
            bool complete = true;
            for (double e : tr.phase_error) {
                if (is_missing(e)) {
                    complete = false;
                    break;
                }
                acc.add(e);
            }
            if (!complete || frames == 0)
                continue;
            const double avg = acc.value() / static_cast<double>(frames) / (cf * tr.noisy.delta_L);
            const double per_frame = phase_limit(tr.snr_effective) / (cf * tr.noisy.delta_L);
            z.add(avg / averaged_limit(per_frame, frames));
            inv_snr.add(1.0 / tr.snr_effective);
        }
    row.n_tracks = z.n;
    if (z.n >= 2) {
        row.sigma_norm = z.stddev();
        row.snr_harmonic = static_cast<double>(z.n) / inv_snr.value();
        row.sigma_avg_limit = averaged_limit(phase_limit(row.snr_harmonic) / (cf * delta_L_ref), row.frames);
        row.sigma_avg_num = row.sigma_norm * row.sigma_avg_limit;
    }
    return row;
}

// ---------------------------------------------------------------------------
// Ensembles and sweeps

/// Runs fn(i) for i in [0, n) on up to `threads` workers (0 = hardware).
inline void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn)
{
    if (threads == 0)
        threads = std::max(1u, std::thread::hardware_concurrency());
    threads = std::min(threads, std::max<std::size_t>(n, 1));
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++)
            fn(i);
    };
    if (threads <= 1) {
        worker();
        return;
    }
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t)
        pool.emplace_back(worker);
}

struct EnsembleResult {
    std::vector<TrialResult> trials; // successful trials in index order
    std::vector<std::string> failures;
};

/// Runs `fibers` trials; results are stored by trial index so the merge
/// order never depends on scheduling.  Fails when more than 10% of trials
/// fail.
inline EnsembleResult run_ensemble(const SimulationContext& ctx, std::size_t fibers, const TrialOptions& opt,
                                   std::size_t threads)
{
    std::vector<std::optional<TrialResult>> slots(fibers);
    std::vector<std::string> errors(fibers);
    parallel_for(fibers, threads, [&](std::size_t i) {
        try {
            slots[i] = run_trial(ctx, i, opt);
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    });
    EnsembleResult out;
    for (std::size_t i = 0; i < fibers; ++i) {
        if (slots[i])
            out.trials.push_back(std::move(*slots[i]));
        else
            out.failures.push_back(errors[i]);
    }
    if (out.failures.size() * 10 > fibers)
        throw std::runtime_error(fmt::format("{} of {} trials failed; first error: {}", out.failures.size(), fibers,
                                             out.failures.front()));
    return out;
}

enum class SweepAxis { snr, delta_L, frames };

inline std::string_view to_string(SweepAxis a)
{
    switch (a) {
    case SweepAxis::snr: return "snr";
    case SweepAxis::delta_L: return "delta_L";
    case SweepAxis::frames: return "frames";
    }
    return "unknown";
}

struct SweepOptions {
    std::size_t threads = 0;
    bool noise_enabled = true;
    bool keep_trials = false; // retain per-trial results (tracks) in the report
};

struct UncertaintyReport {
    SweepAxis axis = SweepAxis::snr;
    std::vector<double> noise_scale_db;
    std::vector<double> delta_L_list;
    std::size_t ensemble_size = 0;
    std::size_t trials_run = 0;
    std::size_t trials_failed = 0;
    std::vector<std::string> failures;
    double fade_threshold = 0;
    double fade_exclusion_fraction = 0;
    double cf = 0;
    double heating_rate = 0;

    std::vector<PhaseBinRow> phase;                    // snr axis only
    std::map<double, std::vector<TempBinRow>> temperature;
    std::vector<FrameAverageRow> frames;               // frames axis only
    std::vector<TrialResult> trials;                   // with keep_trials
};

inline UncertaintyReport sweep(const ConfigFile& cfg, SweepAxis axis, const SweepOptions& options = {})
{
    const auto& s = cfg.sweep;
    detail::require(!s.noise_scale_db_list.empty(), "empty-sweep", "noise_scale_db_list is empty");
    detail::require(s.fibers >= 1, "fibers", "need at least one fiber");

    UncertaintyReport rep;
    rep.axis = axis;
    rep.noise_scale_db = s.noise_scale_db_list;
    rep.ensemble_size = s.fibers;
    rep.fade_threshold = cfg.system.fade_threshold;
    const auto agg = AggregationSettings::from(s);

    std::vector<double> dls = s.delta_L_list;
    std::sort(dls.begin(), dls.end());
    dls.erase(std::unique(dls.begin(), dls.end()), dls.end());
    rep.delta_L_list = dls;

    std::vector<double> frame_grid = {static_cast<double>(cfg.system.frames)};
    if (axis == SweepAxis::frames)
        frame_grid = s.frames_list;

    PhaseHistogram pooled;
    std::map<double, StepHistogram> steps;
    for (double dl : dls)
        steps.emplace(dl, StepHistogram());
    std::uint64_t considered = 0, excluded = 0;

    for (double frames_value : frame_grid) {
        SystemConfig sys = cfg.system;
        detail::require(frames_value >= 1.0, "frames", "frame counts must be >= 1");
        sys.frames = static_cast<std::size_t>(frames_value);
        const auto ctx = SimulationContext::make(validate(sys));
        rep.cf = ctx.cf;
        rep.heating_rate = sys.heating_rate_k_per_frame;

        std::vector<TrialResult> frame_trials;
        for (double ns_db : s.noise_scale_db_list) {
            TrialOptions opt;
            opt.noise_scale = sys.noise_scale * std::pow(10.0, ns_db / 20.0);
            opt.noise_enabled = options.noise_enabled;
            opt.collect_residuals = axis == SweepAxis::snr;
            opt.delta_L_list = dls;
            auto ens = run_ensemble(ctx, s.fibers, opt, options.threads);
            rep.trials_run += s.fibers;
            rep.trials_failed += ens.failures.size();
            rep.failures.insert(rep.failures.end(), ens.failures.begin(), ens.failures.end());
            for (auto& t : ens.trials) {
                pooled.merge(t.residuals);
                considered += t.samples_considered;
                excluded += t.fade_excluded;
                if (axis != SweepAxis::frames)
                    for (const auto& tr : t.tracks)
                        accumulate_steps(tr, ctx.cf, sys.heating_rate_k_per_frame, agg.step_detrend,
                                         steps.at(tr.delta_L_nominal));
                frame_trials.push_back(std::move(t));
            }
        }
        if (axis == SweepAxis::frames) {
            const double dl_ref = sys.monitor_k2_distance_m - sys.heating_zone_start_m;
            rep.frames.push_back(aggregate_frame_average(frame_trials, ctx.cf, dl_ref, agg));
        }
        if (options.keep_trials)
            for (auto& t : frame_trials)
                rep.trials.push_back(std::move(t));
    }

    if (axis == SweepAxis::snr)
        rep.phase = phase_rows(pooled, agg);
    if (axis != SweepAxis::frames)
        for (const auto& [dl, h] : steps)
            rep.temperature[dl] = temperature_rows(h, agg);
    rep.fade_exclusion_fraction =
        considered ? static_cast<double>(excluded) / static_cast<double>(considered) : 0.0;
    return rep;
}

// ---------------------------------------------------------------------------
// Bypass mode: constant tone through the receiver chain, no fiber.

struct BypassResult {
    double snr_measured = 0;
    double sigma_num = 0;
    double sigma_limit = 0;
    std::size_t samples = 0;
};

/// Sends a constant tone through preamplifier (ASE), detection (shot noise)
/// and band-limit, with the tone power set for `target_snr` against the
/// calibrated in-band noise.  Edge samples within one filter span are
/// dropped.
inline BypassResult run_bypass(const SimulationContext& ctx, double target_snr, std::size_t samples,
                               std::uint64_t seed)
{
    const double noise = ctx.unit_noise_power;
    const double amp_out = std::sqrt(target_snr * noise);
    const double amp_in = amp_out / ctx.preamp.field_gain();
    const std::size_t guard = ctx.receiver.filter_taps.size();
    const std::size_t n = samples + 2 * guard;

    ComplexTrace tone;
    tone.sample_rate = ctx.grid.sample_rate;
    tone.samples.assign(n, {amp_in, 0.0});

    const std::uint64_t key = derive_key(seed, stream::bypass);
    const GaussianStream ase(derive_key(key, stream::ase));
    const GaussianStream shot(derive_key(key, stream::shot));
    const GaussianStream thermal(derive_key(key, stream::thermal));

    auto amplified = amplify_with_ase(tone, ctx.preamp, ase);
    auto detected = detect(amplified, ctx.receiver, shot, thermal, true);
    auto noisy = band_limit(detected, ctx.receiver.filter_taps);

    ComplexTrace clean_in = tone;
    for (auto& v : clean_in.samples)
        v *= ctx.preamp.field_gain();
    auto truth = band_limit(detect(clean_in, ctx.receiver, shot, thermal, false), ctx.receiver.filter_taps);

    Moments m;
    NeumaierSum signal;
    for (std::size_t k = guard; k < n - guard; ++k) {
        m.add(relative_phase(noisy.samples[k], truth.samples[k]));
        signal.add(std::norm(truth.samples[k]));
    }
    BypassResult r;
    r.samples = m.n;
    r.snr_measured = signal.value() / static_cast<double>(m.n) / noise;
    r.sigma_num = m.stddev();
    r.sigma_limit = phase_limit(r.snr_measured);
    return r;
}

} // namespace otdrq

#include <cmath>
#include <complex>
#include <numbers>

#include <gtest/gtest.h>

#include "otdrq/estimation.hpp"
#include "otdrq/optical_path.hpp"
#include "otdrq/random.hpp"
#include "otdrq/receiver.hpp"
#include "otdrq/statistics.hpp"

using namespace otdrq;

namespace {

constexpr double fs = 625e6;
constexpr double bw = 300e6;
constexpr std::size_t K = 244836;

ComplexTrace zeros(std::size_t n = K)
{
    ComplexTrace t;
    t.sample_rate = fs;
    t.samples.assign(n, {0.0, 0.0});
    return t;
}

double mean_power(const ComplexTrace& t, std::size_t guard = 0)
{
    NeumaierSum s;
    for (std::size_t k = guard; k + guard < t.size(); ++k)
        s.add(std::norm(t.samples[k]));
    return s.value() / static_cast<double>(t.size() - 2 * guard);
}

} // namespace

TEST(OpticalPath, PhotonEnergyAndAsePsd)
{
    EXPECT_NEAR(photon_energy(1550e-9), 1.282e-19, 0.001e-19);
    const auto m = ase_psd(22.0, 3.0, 1550e-9);
    EXPECT_NEAR(m.gain, 158.49, 0.01);
    EXPECT_NEAR(m.spontaneous_emission_factor, 1.0040, 1e-4);
    EXPECT_NEAR(m.psd_per_pol, 2.027e-17, 0.001e-17);
    EXPECT_NEAR(watts_to_dbm(m.psd_per_pol * bw), -52.2, 0.05);
    EXPECT_NEAR(m.psd_per_pol * bw, 6.08e-9, 0.01e-9);
    // G -> 1+: the quantum-limited noise figure 2(G-1)/G keeps the PSD finite
    // and it vanishes with G - 1.
    const double g = 1.0 + 1e-6;
    const auto t = ase_model(g, 2.0 * (g - 1.0) / g, photon_energy(1550e-9));
    EXPECT_LT(t.psd_per_pol, 1e-24);
    EXPECT_THROW(ase_psd(0.0, 3.0, 1550e-9), ConfigError);
}

TEST(OpticalPath, TransparentAmplifierIsIdentity)
{
    auto in = zeros(1000);
    for (std::size_t k = 0; k < in.size(); ++k)
        in.samples[k] = {std::sin(0.1 * static_cast<double>(k)), 0.5};
    const auto out = amplify_with_ase(in, AseModel::transparent(), GaussianStream(1));
    EXPECT_EQ(out.samples, in.samples);
}

TEST(OpticalPath, NoiseDisabledGainIsExact)
{
    auto in = zeros(1000);
    for (std::size_t k = 0; k < in.size(); ++k)
        in.samples[k] = {0.3, -0.1 * static_cast<double>(k % 7)};
    const auto m = ase_psd(22.0, 3.0, 1550e-9);
    const auto out = amplify_with_ase(in, m, GaussianStream(1), 0.0);
    for (std::size_t k = 0; k < in.size(); ++k)
        EXPECT_NEAR(std::norm(out.samples[k]), m.gain * std::norm(in.samples[k]),
                    1e-12 * m.gain * std::norm(in.samples[k]) + 1e-300);
}

TEST(OpticalPath, AseInBandPowerCalibrated)
{
    const auto m = ase_psd(22.0, 3.0, 1550e-9);
    const auto out = band_limit(amplify_with_ase(zeros(), m, GaussianStream(derive_key(1, 2))), bw);
    EXPECT_NEAR(mean_power(out, 64) / (m.psd_per_pol * bw), 1.0, 0.02);
}

TEST(OpticalPath, AseIsCircularZeroMeanAndFrameIndependent)
{
    const auto m = ase_psd(22.0, 3.0, 1550e-9);
    const auto a = amplify_with_ase(zeros(), m, GaussianStream(frame_noise_key(5, 0, stream::ase)));
    const auto b = amplify_with_ase(zeros(), m, GaussianStream(frame_noise_key(5, 1, stream::ase)));
    const auto a2 = amplify_with_ase(zeros(), m, GaussianStream(frame_noise_key(5, 0, stream::ase)));
    EXPECT_EQ(a.samples, a2.samples);
    std::complex<double> mean{0, 0}, cross{0, 0};
    double vr = 0, vi = 0, pa = 0, pb = 0;
    for (std::size_t k = 0; k < K; ++k) {
        mean += a.samples[k];
        vr += a.samples[k].real() * a.samples[k].real();
        vi += a.samples[k].imag() * a.samples[k].imag();
        cross += a.samples[k] * std::conj(b.samples[k]);
        pa += std::norm(a.samples[k]);
        pb += std::norm(b.samples[k]);
    }
    const double kk = static_cast<double>(K);
    const double sigma = std::sqrt(pa / kk);
    EXPECT_LT(std::abs(mean / kk), 4.0 * sigma / std::sqrt(kk));
    EXPECT_NEAR(vr / vi, 1.0, 0.03);
    EXPECT_LT(std::abs(cross) / std::sqrt(pa * pb), 4.0 / std::sqrt(kk));
}

TEST(Filter, DesignAndResponse)
{
    const auto h = design_lowpass(127, bw, fs);
    ASSERT_EQ(h.size(), 127u);
    double sum = 0;
    for (std::size_t i = 0; i < h.size(); ++i) {
        sum += h[i];
        EXPECT_DOUBLE_EQ(h[i], h[h.size() - 1 - i]);
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
    EXPECT_THROW(design_lowpass(128, bw, fs), ConfigError);
    EXPECT_THROW(design_lowpass(127, 400e6, fs), ConfigError);

    const auto z = band_limit(zeros(500), h);
    for (const auto& v : z.samples)
        ASSERT_EQ(v, std::complex<double>(0.0, 0.0));

    auto dc = zeros(1000);
    for (auto& v : dc.samples)
        v = {0.7, -0.2};
    const auto out = band_limit(dc, h);
    for (std::size_t k = 63; k + 63 < out.size(); ++k)
        ASSERT_LT(std::abs(out.samples[k] - std::complex<double>(0.7, -0.2)), 1e-6 * std::abs(dc.samples[k]));
}

TEST(Filter, WhiteNoiseVarianceScalesWithBandwidth)
{
    const std::size_t n = 1000000;
    ComplexTrace w = zeros(n);
    const GaussianStream g(99);
    for (std::size_t k = 0; k < n; ++k)
        w.samples[k] = g(k);
    const auto out = band_limit(w, bw);
    EXPECT_NEAR(mean_power(w), 1.0, 0.01);
    EXPECT_NEAR(mean_power(out, 64) / (2.0 * bw / fs), 1.0, 0.02);
}

TEST(Filter, SparseEvaluationMatchesFullTrace)
{
    ComplexTrace w = zeros(3000);
    const GaussianStream g(7);
    for (std::size_t k = 0; k < w.size(); ++k)
        w.samples[k] = g(k);
    const auto h = design_lowpass(127, bw, fs);
    const auto full = band_limit(w, h);
    for (std::size_t k : {0u, 1u, 62u, 63u, 1500u, 2936u, 2999u})
        EXPECT_EQ(filter_at(g, w.size(), h, k), full.samples[k]);
}

TEST(Receiver, DetectionLinearWithoutNoise)
{
    SystemConfig c;
    const auto rx = make_receiver(validate(c));
    auto x = zeros(200), y = zeros(200), mix = zeros(200);
    for (std::size_t k = 0; k < 200; ++k) {
        x.samples[k] = {std::cos(0.01 * static_cast<double>(k)), 0.25};
        y.samples[k] = {0.5, std::sin(0.03 * static_cast<double>(k))};
        mix.samples[k] = 2.0 * x.samples[k] + 3.0 * y.samples[k];
    }
    const GaussianStream s(1), t(2);
    const auto dx = detect(x, rx, s, t, false);
    const auto dy = detect(y, rx, s, t, false);
    const auto dm = detect(mix, rx, s, t, false);
    for (std::size_t k = 0; k < 200; ++k) {
        EXPECT_EQ(dx.samples[k], rx.responsivity * x.samples[k]);
        EXPECT_LT(std::abs(dm.samples[k] - (2.0 * dx.samples[k] + 3.0 * dy.samples[k])), 1e-15);
    }
}

TEST(Receiver, InBandNoiseMatchesShotPlusAse)
{
    SystemConfig c;
    const auto vc = validate(c);
    const auto rx = make_receiver(vc);
    const auto m = ase_psd(c.preamp_gain_db, c.preamp_nf_db, c.wavelength_m);
    const auto amp = amplify_with_ase(zeros(), m, GaussianStream(11));
    const auto det = detect(amp, rx, GaussianStream(12), GaussianStream(13), true);
    const auto out = band_limit(det, rx.filter_taps);
    const double expected = (photon_energy(c.wavelength_m) + m.psd_per_pol) * bw;
    EXPECT_NEAR(mean_power(out, 64) / expected, 1.0, 0.02);
    // The calibrated model value uses the exact filter noise gain.
    EXPECT_NEAR(in_band_noise_power(m, rx) / expected, 1.0, 0.01);
    EXPECT_NEAR(mean_power(out, 64) / in_band_noise_power(m, rx), 1.0, 0.01);
}

TEST(Receiver, NoiseOnlyOutputIsNearlyWhite)
{
    SystemConfig c;
    const auto rx = make_receiver(validate(c));
    const auto det = detect(zeros(), rx, GaussianStream(21), GaussianStream(22), true);
    const auto out = band_limit(det, rx.filter_taps);
    std::vector<double> re(out.size());
    for (std::size_t k = 0; k < out.size(); ++k)
        re[k] = out.samples[k].real();
    for (std::size_t lag = 2; lag <= 10; ++lag)
        EXPECT_LT(std::abs(autocorrelation(re, lag)), 0.1) << lag;
}

TEST(Receiver, ToneAtSnr100GivesLimitPhaseSigma)
{
    SystemConfig c;
    const auto rx = make_receiver(validate(c));
    const double noise = in_band_noise_power(AseModel::transparent(), rx);
    auto tone = zeros();
    for (auto& v : tone.samples)
        v = {std::sqrt(100.0 * noise), 0.0};
    const auto truth = band_limit(detect(tone, rx, GaussianStream(1), GaussianStream(2), false), rx.filter_taps);
    const auto noisy = band_limit(detect(tone, rx, GaussianStream(31), GaussianStream(32), true), rx.filter_taps);
    const auto snr = measure_snr(truth, noise);
    EXPECT_NEAR(snr.snr[K / 2], 100.0, 2.0);
    Moments m;
    for (std::size_t k = 127; k + 127 < K; ++k)
        m.add(relative_phase(noisy.samples[k], truth.samples[k]));
    EXPECT_NEAR(m.stddev(), 0.0707, 0.0707 * 0.02);
}

TEST(Receiver, SnrScaling)
{
    auto t = zeros(10);
    for (std::size_t k = 0; k < 10; ++k)
        t.samples[k] = {static_cast<double>(k), 1.0};
    t.samples[3] = {0.0, 0.0};
    const auto a = measure_snr(t, 0.5);
    const auto b = measure_snr(t, 1.0);
    for (std::size_t k = 0; k < 10; ++k)
        EXPECT_EQ(b.snr[k], a.snr[k] / 2.0);
    EXPECT_EQ(a.snr[3], 0.0);
    EXPECT_THROW(measure_snr(t, 0.0), ConfigError);

    // Calibration fixture: tone of power 100 sigma^2.
    auto tone = zeros(1000);
    for (auto& v : tone.samples)
        v = std::polar(std::sqrt(100.0 * 2e-9), 0.3);
    EXPECT_NEAR(measure_snr(tone, 2e-9).median_snr, 100.0, 2.0);
}

#include <cmath>
#include <cstring>

#include <gtest/gtest.h>

#include "otdrq/experiment.hpp"
#include "otdrq/report.hpp"

using namespace otdrq;

namespace {

SystemConfig short_fiber(std::size_t frames = 12)
{
    SystemConfig c;
    c.fiber_length_m = 12e3;
    c.frames = frames;
    c.rng_seed = 2024;
    return c;
}

bool same_bits(const std::vector<double>& a, const std::vector<double>& b)
{
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

AggregationSettings settings()
{
    SweepSettings s;
    return AggregationSettings::from(s);
}

} // namespace

TEST(Experiment, SparsePathMatchesFullPath)
{
    const auto ctx = SimulationContext::make(validate(short_fiber()));
    TrialOptions full;
    full.delta_L_list = {1, 10, 50};
    TrialOptions sparse = full;
    sparse.collect_residuals = false;
    const auto a = run_trial(ctx, 3, full);
    const auto b = run_trial(ctx, 3, sparse);
    EXPECT_GT(a.residuals.total(), 0u);
    EXPECT_EQ(b.residuals.total(), 0u);
    EXPECT_EQ(a.k1, b.k1);
    ASSERT_EQ(a.tracks.size(), 3u);
    for (std::size_t i = 0; i < a.tracks.size(); ++i) {
        EXPECT_TRUE(same_bits(a.tracks[i].phase_error, b.tracks[i].phase_error));
        EXPECT_TRUE(same_bits(a.tracks[i].noisy.delta_T_hat, b.tracks[i].noisy.delta_T_hat));
        EXPECT_EQ(a.tracks[i].snr_effective, b.tracks[i].snr_effective);
    }
}

TEST(Experiment, SameTrialTwiceIsBitIdentical)
{
    const auto ctx = SimulationContext::make(validate(short_fiber()));
    const auto a = run_trial(ctx, 1, {});
    const auto b = run_trial(ctx, 1, {});
    EXPECT_EQ(a.seed, b.seed);
    EXPECT_EQ(phase_csv(aggregate_phase(std::vector{a}, settings())),
              phase_csv(aggregate_phase(std::vector{b}, settings())));
    EXPECT_TRUE(same_bits(a.tracks[0].noisy.delta_T_hat, b.tracks[0].noisy.delta_T_hat));
}

TEST(Experiment, NoiselessPipelineIsExact)
{
    const auto ctx = SimulationContext::make(validate(short_fiber(30)));
    TrialOptions opt;
    opt.noise_enabled = false;
    opt.delta_L_list = {1, 2, 5, 10, 20, 50};
    const auto r = run_trial(ctx, 0, opt);
    EXPECT_EQ(r.max_abs_residual, 0.0);
    EXPECT_GT(r.residuals.total(), 0u);
    const double rate = ctx.vc.config.heating_rate_k_per_frame;
    for (const auto& t : r.tracks) {
        EXPECT_TRUE(t.noisy.reliable);
        for (std::size_t p = 1; p < t.noisy.delta_T_hat.size(); ++p)
            EXPECT_NEAR(t.noisy.delta_T_hat[p] / (rate * static_cast<double>(p)), 1.0, 1e-9);
        for (double e : t.phase_error)
            EXPECT_EQ(e, 0.0);
    }
}

TEST(Experiment, DistributedModelNoiselessResidualsVanish)
{
    auto c = short_fiber(4);
    c.thermal_model = ThermalModel::distributed;
    c.heating_rate_k_per_frame = 1e-3;
    const auto ctx = SimulationContext::make(validate(c));
    TrialOptions opt;
    opt.noise_enabled = false;
    const auto r = run_trial(ctx, 0, opt);
    EXPECT_EQ(r.max_abs_residual, 0.0);
    // The monitor sample sums scatterers spread over one cell, each heated
    // over its own length, so the effective lever arm lies in (0, dL].
    const auto& t = r.tracks.front();
    const double ratio = t.noisy.delta_T_hat[3] / 3e-3;
    EXPECT_GT(ratio, 0.0);
    EXPECT_LE(ratio, 1.0 + 1e-9);
}

TEST(Experiment, NoiseScaleQuarticSnr)
{
    const auto ctx = SimulationContext::make(validate(short_fiber(3)));
    TrialOptions a;
    a.collect_residuals = false;
    TrialOptions b = a;
    b.noise_scale = 4.0;
    const auto ra = run_trial(ctx, 0, a);
    const auto rb = run_trial(ctx, 0, b);
    EXPECT_NEAR(rb.noise_power / ra.noise_power, 16.0, 1e-12);
    EXPECT_NEAR(rb.tracks[0].snr_monitor / ra.tracks[0].snr_monitor, 1.0 / 16.0, 1e-12);
}

TEST(Experiment, EnsembleIndependentOfThreadCount)
{
    const auto ctx = SimulationContext::make(validate(short_fiber(5)));
    TrialOptions opt;
    opt.delta_L_list = {10, 50};
    const auto one = run_ensemble(ctx, 4, opt, 1);
    const auto many = run_ensemble(ctx, 4, opt, 3);
    const auto s = settings();
    EXPECT_EQ(phase_csv(aggregate_phase(one.trials, s)), phase_csv(aggregate_phase(many.trials, s)));
    const std::vector<double> dl = {10, 50};
    const auto ta = aggregate_temperature(one.trials, dl, ctx.cf, 1e-4, s);
    const auto tb = aggregate_temperature(many.trials, dl, ctx.cf, 1e-4, s);
    EXPECT_EQ(temperature_csv(ta.at(10)), temperature_csv(tb.at(10)));
}

TEST(Experiment, TrialOrderOnlyAffectsRounding)
{
    const auto ctx = SimulationContext::make(validate(short_fiber(4)));
    const auto ens = run_ensemble(ctx, 3, {}, 1);
    auto rev = ens.trials;
    std::reverse(rev.begin(), rev.end());
    const auto a = aggregate_phase(ens.trials, settings());
    const auto b = aggregate_phase(rev, settings());
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].n, b[i].n);
        EXPECT_NEAR(a[i].sigma_num, b[i].sigma_num, 1e-12 * a[i].sigma_num);
    }
}

TEST(Experiment, AggregationEdgeCases)
{
    const auto ctx = SimulationContext::make(validate(short_fiber(2)));
    const auto ens = run_ensemble(ctx, 2, {}, 1);
    auto s = settings();
    s.edges_db = {-40.0, 80.0};
    EXPECT_EQ(aggregate_phase(ens.trials, s).size(), 1u);
    EXPECT_THROW(aggregate_phase(std::vector<TrialResult>{}, s), ConfigError);

    PhaseHistogram h;
    for (int i = 0; i < 500; ++i)
        h.add(12.0, {0.2, 0.04, 0.01});
    const auto rows = phase_rows(h, settings());
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_EQ(rows[0].sigma_num, 0.0);
    EXPECT_DOUBLE_EQ(rows[0].sigma_limit, 0.1);
}

TEST(Experiment, PhaseSigmaNotBelowLimitAndFlags)
{
    const auto ctx = SimulationContext::make(validate(short_fiber(4)));
    const auto ens = run_ensemble(ctx, 2, {}, 0);
    const auto rows = aggregate_phase(ens.trials, settings());
    std::size_t checked = 0;
    for (const auto& r : rows) {
        if (r.n >= 10000 && !r.flags.wrap_dominated) {
            EXPECT_GT(r.sigma_num, 0.95 * r.sigma_limit) << r.center_db;
            ++checked;
        }
        EXPECT_EQ(r.flags.wrap_dominated, r.sigma_limit > 0.5);
        EXPECT_EQ(r.flags.low_confidence, r.n < 100);
    }
    EXPECT_GT(checked, 5u);
}

TEST(Experiment, ResidualsAreWhiteAcrossFastTime)
{
    const auto ctx = SimulationContext::make(validate(short_fiber(1)));
    const auto ch = prepare_channel(ctx, 0);
    const auto f = simulate_frame(ctx, ch, 0, 1.0);
    std::vector<double> r;
    for (std::size_t k = 0; k < f.noisy.size(); ++k)
        if (ch.amplitude[k] >= ch.fades.floor(k) && ch.amplitude[k] > 0.0)
            r.push_back(relative_phase(f.noisy.samples[k], f.truth.samples[k]));
    for (std::size_t lag = 2; lag <= 8; ++lag)
        EXPECT_LT(std::abs(autocorrelation(r, lag)), 0.1) << lag;
}

TEST(Experiment, FailurePolicy)
{
    const auto ctx = SimulationContext::make(validate(short_fiber(2)));
    TrialOptions bad;
    bad.delta_L_list = {80.0}; // beyond the 60 m zone
    EXPECT_THROW(run_ensemble(ctx, 3, bad, 1), std::runtime_error);
}

TEST(Experiment, BypassModeMatchesPhaseLimit)
{
    const auto ctx = SimulationContext::make(validate(SystemConfig{}));
    const auto r = run_bypass(ctx, db_to_linear(20.0), 200000, 5);
    EXPECT_NEAR(r.snr_measured / 100.0, 1.0, 1e-9);
    EXPECT_NEAR(r.sigma_num / r.sigma_limit, 1.0, 0.03);
}

TEST(Experiment, SweepAxes)
{
    ConfigFile cfg;
    cfg.system = short_fiber(10);
    cfg.sweep.fibers = 2;
    cfg.sweep.noise_scale_db_list = {0, 6};
    cfg.sweep.delta_L_list = {5, 10};
    cfg.sweep.frames_list = {4, 16};
    const auto snr = sweep(cfg, SweepAxis::snr);
    EXPECT_FALSE(snr.phase.empty());
    EXPECT_EQ(snr.temperature.size(), 2u);
    EXPECT_EQ(snr.trials_run, 4u);
    EXPECT_GT(snr.fade_exclusion_fraction, 0.0);
    EXPECT_LT(snr.fade_exclusion_fraction, 0.2);

    const auto len = sweep(cfg, SweepAxis::delta_L);
    EXPECT_TRUE(len.phase.empty());
    EXPECT_EQ(len.temperature.size(), 2u);

    const auto fr = sweep(cfg, SweepAxis::frames);
    ASSERT_EQ(fr.frames.size(), 2u);
    EXPECT_EQ(fr.frames[0].frames, 4u);
    EXPECT_EQ(fr.frames[1].frames, 16u);
}

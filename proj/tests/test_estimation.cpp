#include <cmath>
#include <complex>
#include <numbers>

#include <gtest/gtest.h>

#include "otdrq/estimation.hpp"

using namespace otdrq;

namespace {

constexpr double pi = std::numbers::pi;

DerivedGrid grid()
{
    return derive_grid(validate(SystemConfig{}));
}

} // namespace

TEST(Estimation, PhaseExamples)
{
    EXPECT_EQ(*estimate_phase({1.0, 0.0}), 0.0);
    EXPECT_DOUBLE_EQ(*estimate_phase({0.0, 1.0}), pi / 2);
    EXPECT_DOUBLE_EQ(*estimate_phase({-1.0, -1.0}), -3.0 * pi / 4);
    EXPECT_FALSE(estimate_phase({0.0, 0.0}).has_value());
    for (double c : {1e-9, 0.3, 7.0, 1e9})
        EXPECT_EQ(*estimate_phase(c * std::complex<double>(0.3, -2.0)), *estimate_phase({0.3, -2.0}));
}

TEST(Estimation, WrapConvention)
{
    EXPECT_DOUBLE_EQ(wrap_phase(3.0 * pi / 2), -pi / 2);
    EXPECT_DOUBLE_EQ(wrap_phase(pi), pi);
    EXPECT_DOUBLE_EQ(wrap_phase(-pi), pi);
    EXPECT_NEAR(wrap_phase(7.0 * pi + 0.1), -pi + 0.1, 1e-12);
    EXPECT_EQ(relative_phase({0.3, 0.4}, {0.3, 0.4}), 0.0);
}

TEST(Estimation, PhaseDifference)
{
    const std::vector<double> k1 = {0.5, 0.0, missing, 1.0};
    const std::vector<double> k2 = {0.5, 3.0 * pi / 2, 1.0, -2.0};
    const auto d = phase_difference(k2, k1);
    EXPECT_EQ(d[0], 0.0);
    EXPECT_DOUBLE_EQ(d[1], -pi / 2);
    EXPECT_TRUE(is_missing(d[2]));
    const auto r = phase_difference(k1, k2);
    EXPECT_DOUBLE_EQ(r[3], -d[3]);
    EXPECT_DOUBLE_EQ(r[1], -d[1]);
}

TEST(Estimation, CircularVariance)
{
    EXPECT_EQ(circular_variance(std::vector<double>{0.2, 0.2, 0.2}), 0.0);
    EXPECT_NEAR(circular_variance(std::vector<double>{0.0, pi}), 1.0, 1e-12);
    EXPECT_TRUE(is_missing(circular_variance(std::vector<double>{missing})));
}

TEST(Estimation, ReferenceSelection)
{
    const auto g = grid();
    const HeatingZone zone{10000.0, 10060.0};
    // Synthetic fixture: column at index 100 has circular variance ~1e-6.
    std::vector<std::size_t> cols;
    for (std::size_t k = 90; k < 110; ++k)
        cols.push_back(k);
    PhaseMatrix m(50, cols);
    for (std::size_t p = 0; p < 50; ++p)
        for (std::size_t c = 0; c < cols.size(); ++c) {
            const double spread = cols[c] == 100 ? 1.4e-3 : 0.05 + 0.01 * static_cast<double>(c);
            m.at(p, c) = (p % 2 ? 1.0 : -1.0) * spread;
        }
    std::vector<double> amp(cols.size(), 1.0), floor(cols.size(), 0.1);
    EXPECT_EQ(select_reference(m, amp, floor, zone, g), 100u);

    // Degenerate tie (noiseless, no heating): largest amplitude wins.
    PhaseMatrix tie(5, cols);
    for (auto& v : tie.values)
        v = 0.25;
    amp[7] = 3.0;
    EXPECT_EQ(select_reference(tie, amp, floor, zone, g), cols[7]);

    // Candidates inside (or within one cell of) the zone are never chosen.
    const std::size_t inside = g.index_of_distance(10030.0);
    const std::size_t near = g.index_of_distance(9995.0);
    PhaseMatrix z(5, {inside, near, 1000});
    for (std::size_t p = 0; p < 5; ++p) {
        z.at(p, 0) = 0.0;
        z.at(p, 1) = 0.0;
        z.at(p, 2) = p * 0.1;
    }
    const std::vector<double> a3 = {1, 1, 1}, f3 = {0, 0, 0};
    EXPECT_EQ(select_reference(z, a3, f3, zone, g), 1000u);

    // Nothing usable.
    const std::vector<double> low = {0.01, 0.01, 0.01}, fl = {0.1, 0.1, 0.1};
    EXPECT_THROW(select_reference(z, low, fl, zone, g), ReferenceSelectionError);
}

TEST(Estimation, Unwrap)
{
    const std::vector<double> flat(10, 1.234);
    const auto u0 = unwrap_slow_time(flat);
    EXPECT_EQ(u0.values, flat);
    EXPECT_TRUE(u0.reliable);

    std::vector<double> ramp;
    for (int p = 0; p <= 20; ++p)
        ramp.push_back(wrap_phase(0.5 * p));
    const auto u1 = unwrap_slow_time(ramp);
    EXPECT_NEAR(u1.values.back(), 10.0, 1e-12);
    EXPECT_TRUE(u1.reliable);

    std::vector<double> alt;
    double acc = 0.0;
    for (int p = 0; p < 20; ++p) {
        alt.push_back(wrap_phase(acc));
        acc += (p % 2 ? -1.0 : 1.0) * 0.9 * pi;
    }
    EXPECT_FALSE(unwrap_slow_time(alt).reliable);

    const std::vector<double> gap = {0.0, 0.1, missing, 0.3, missing};
    const auto u2 = unwrap_slow_time(gap);
    EXPECT_NEAR(u2.values[2], 0.2, 1e-12);
    EXPECT_NEAR(u2.values[4], 0.4, 1e-12);
    EXPECT_TRUE(u2.bridged[2]);
    EXPECT_FALSE(u2.bridged[3]);
}

TEST(Estimation, TemperatureFromPhase)
{
    const std::vector<double> flat(5, 0.7);
    for (double v : temperature_from_phase(flat, 87.6, 10.0))
        EXPECT_EQ(v, 0.0);
    const std::vector<double> two = {0.1, 0.976};
    EXPECT_NEAR(temperature_from_phase(two, 87.6, 10.0)[1], 1e-3, 1e-15);
    const std::vector<double> ramp = {0.0, 0.3, 0.9, 1.7};
    const auto a = temperature_from_phase(ramp, 87.6, 10.0);
    const auto b = temperature_from_phase(ramp, 2.0 * 87.6, 10.0);
    for (std::size_t i = 0; i < a.size(); ++i)
        EXPECT_EQ(b[i], a[i] / 2.0);
    EXPECT_THROW(temperature_from_phase(ramp, 87.6, 0.0), ConfigError);
}

TEST(Estimation, NoiselessRampRecoveredExactly)
{
    // Cf * rate * dL = 0.01 rad per frame.
    const double cf = 87.6, dl = 10.0, rate = 0.01 / (cf * dl);
    std::vector<double> phi1, phi2;
    for (std::size_t p = 0; p < 200; ++p) {
        phi1.push_back(0.4);
        phi2.push_back(wrap_phase(-2.9 + cf * rate * static_cast<double>(p) * dl));
    }
    const auto t = make_phase_track(phi1, phi2, 1, 2, dl, cf);
    EXPECT_TRUE(t.reliable);
    for (std::size_t p = 0; p < 200; ++p) {
        EXPECT_NEAR(t.delta_phi[p] - t.delta_phi[0], 0.01 * static_cast<double>(p), 1e-12);
        if (p > 0) {
            EXPECT_NEAR(t.delta_T_hat[p] / (rate * static_cast<double>(p)), 1.0, 1e-9);
        }
    }
}

TEST(Estimation, FadesAndMonitor)
{
    const auto g = grid();
    const HeatingZone zone{10000.0, 10060.0};
    std::vector<double> amp(g.total_fast_samples, 1.0);
    const std::size_t target = g.index_of_distance(10010.0);
    amp[target] = 0.01;
    amp[target - 1] = 0.01;
    const FadeReference fades(amp, 6250, 0.1);
    EXPECT_EQ(fades.median(target), 1.0);
    EXPECT_DOUBLE_EQ(fades.floor(target), 0.1);
    const auto k2 = select_monitor(amp, fades, 10010.0, zone, g);
    ASSERT_TRUE(k2);
    EXPECT_EQ(*k2, target + 1);

    std::vector<double> dead(g.total_fast_samples, 1.0);
    for (std::size_t k = g.index_of_distance(9990.0); k < g.index_of_distance(10070.0); ++k)
        dead[k] = 0.0;
    EXPECT_FALSE(select_monitor(dead, FadeReference(dead, 6250, 0.1), 10010.0, zone, g));
}

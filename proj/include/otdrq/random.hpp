#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <random>

namespace otdrq {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept
{
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Derives an independent stream key from a parent key and a label.
/// Streams never depend on the order in which they are requested.
constexpr std::uint64_t derive_key(std::uint64_t parent, std::uint64_t label) noexcept
{
    return mix64(parent ^ mix64(label + 0x632BE59BD9B4E019ULL));
}

/// Uniform on (0, 1] from the top 53 bits.
constexpr double unit_open_closed(std::uint64_t bits) noexcept
{
    return static_cast<double>((bits >> 11) + 1) * 0x1.0p-53;
}

/// Counter-based circular complex Gaussian source: value(k) is a pure
/// function of (key, k), so any subset of a frame's noise can be drawn
/// without generating the rest.  E|z|^2 = 1, each quadrature has variance 1/2.
class GaussianStream {
public:
    constexpr explicit GaussianStream(std::uint64_t key) noexcept : key_(key) {}

    std::complex<double> operator()(std::uint64_t k) const noexcept
    {
        const std::uint64_t base = key_ + 2 * k * 0x9E3779B97F4A7C15ULL;
        const double u1 = unit_open_closed(mix64(base));
        const double u2 = unit_open_closed(mix64(base + 0x9E3779B97F4A7C15ULL));
        const double r = std::sqrt(-std::log(u1));
        const double theta = 2.0 * std::numbers::pi * u2;
        return {r * std::cos(theta), r * std::sin(theta)};
    }

    constexpr std::uint64_t key() const noexcept { return key_; }

private:
    std::uint64_t key_;
};

/// Sequential generator for fiber draws (positions, amplitudes, phases).
class FiberRng {
public:
    explicit FiberRng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform on (0, 1].
    double uniform() { return unit_open_closed(engine_()); }

    /// Rayleigh with scale sigma (mode sigma, E[a^2] = 2 sigma^2).
    double rayleigh(double sigma) { return sigma * std::sqrt(-2.0 * std::log(uniform())); }

private:
    std::mt19937_64 engine_;
};

namespace stream {
inline constexpr std::uint64_t fiber = 1;
inline constexpr std::uint64_t ase = 2;
inline constexpr std::uint64_t shot = 3;
inline constexpr std::uint64_t thermal = 4;
inline constexpr std::uint64_t bypass = 5;
} // namespace stream

inline std::uint64_t trial_key(std::uint64_t master_seed, std::uint64_t trial_index)
{
    return derive_key(master_seed, trial_index);
}

inline std::uint64_t frame_noise_key(std::uint64_t trial, std::uint64_t frame, std::uint64_t source)
{
    return derive_key(derive_key(trial, 0x1000 + source), frame);
}

} // namespace otdrq

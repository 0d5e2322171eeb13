#pragma once

// Binary trace dump: 32-byte header {"OTDRTRC1", u64 K, f64 Fs, u64 frame}
// followed by K little-endian f64 (re, im) pairs, plus a text sidecar.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>

#include <fmt/format.h>

#include "otdrq/optical_path.hpp"

namespace otdrq {

static_assert(std::endian::native == std::endian::little, "trace I/O assumes a little-endian host");

inline constexpr std::array<char, 8> trace_magic = {'O', 'T', 'D', 'R', 'T', 'R', 'C', '1'};

namespace detail {

template <typename T>
void put(std::ostream& out, T v)
{
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.write(buf, sizeof(T));
}

template <typename T>
T get(std::istream& in)
{
    char buf[sizeof(T)];
    in.read(buf, sizeof(T));
    if (!in)
        throw std::runtime_error("truncated trace file");
    T v;
    std::memcpy(&v, buf, sizeof(T));
    return v;
}

} // namespace detail

inline void write_trace(const std::filesystem::path& path, const ComplexTrace& trace)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error(fmt::format("cannot write {}", path.string()));
    out.write(trace_magic.data(), trace_magic.size());
    detail::put<std::uint64_t>(out, trace.size());
    detail::put<double>(out, trace.sample_rate);
    detail::put<std::uint64_t>(out, trace.frame_index);
    for (const auto& v : trace.samples) {
        detail::put<double>(out, v.real());
        detail::put<double>(out, v.imag());
    }
    if (!out)
        throw std::runtime_error(fmt::format("write failed: {}", path.string()));
}

inline ComplexTrace read_trace(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error(fmt::format("cannot read {}", path.string()));
    std::array<char, 8> magic{};
    in.read(magic.data(), magic.size());
    if (!in || magic != trace_magic)
        throw std::runtime_error(fmt::format("{}: not an OTDRTRC1 trace", path.string()));
    ComplexTrace t;
    const auto k = detail::get<std::uint64_t>(in);
    t.sample_rate = detail::get<double>(in);
    t.frame_index = detail::get<std::uint64_t>(in);
    t.samples.resize(k);
    for (auto& v : t.samples) {
        const double re = detail::get<double>(in);
        const double im = detail::get<double>(in);
        v = {re, im};
    }
    return t;
}

/// key = value sidecar describing a dumped trace.
inline void write_trace_sidecar(const std::filesystem::path& path, const ComplexTrace& trace, std::uint64_t seed,
                                std::size_t trial, double distance_per_sample, bool noise)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error(fmt::format("cannot write {}", path.string()));
    out << fmt::format("format = OTDRTRC1\nsamples = {}\nsample_rate_hz = {}\nframe = {}\nmaster_seed = {}\n"
                       "trial = {}\nmeters_per_sample = {}\nnoise = {}\nlayout = header 32 bytes, then "
                       "little-endian f64 re,im pairs\n",
                       trace.size(), trace.sample_rate, trace.frame_index, seed, trial, distance_per_sample,
                       noise ? "on" : "off");
}

} // namespace otdrq

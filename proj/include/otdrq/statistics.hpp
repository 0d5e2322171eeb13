#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "otdrq/config.hpp"

namespace otdrq {

/// Neumaier compensated summation.
class NeumaierSum {
public:
    void add(double x)
    {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x))
            comp_ += (sum_ - t) + x;
        else
            comp_ += (x - t) + sum_;
        sum_ = t;
    }

    void merge(const NeumaierSum& o)
    {
        add(o.sum_);
        add(o.comp_);
    }

    double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

/// Count, mean and standard deviation from compensated first/second sums.
struct Moments {
    std::uint64_t n = 0;
    NeumaierSum sum;
    NeumaierSum sumsq;

    void add(double x)
    {
        ++n;
        sum.add(x);
        sumsq.add(x * x);
    }

    void merge(const Moments& o)
    {
        n += o.n;
        sum.merge(o.sum);
        sumsq.merge(o.sumsq);
    }

    double mean() const { return n ? sum.value() / static_cast<double>(n) : 0.0; }

    /// Sample standard deviation (n - 1); 0 for fewer than two values.
    double stddev() const
    {
        if (n < 2)
            return 0.0;
        const double nn = static_cast<double>(n);
        const double m = sum.value() / nn;
        const double var = (sumsq.value() - nn * m * m) / (nn - 1.0);
        return var > 0.0 ? std::sqrt(var) : 0.0;
    }

    double rms() const { return n ? std::sqrt(std::max(0.0, sumsq.value() / static_cast<double>(n))) : 0.0; }
};

/// Fine-grained SNR histogram (in dB) where every bin carries a count and
/// `Channels` compensated sums.  Coarser bins are produced by merging fine
/// bins whose centre falls inside the requested edges.
template <std::size_t Channels>
class BinnedSums {
public:
    struct Bin {
        std::uint64_t n = 0;
        std::array<NeumaierSum, Channels> sums{};
    };

    BinnedSums() : BinnedSums(-40.0, 80.0, 0.1) {}

    BinnedSums(double min_db, double max_db, double width_db)
        : min_(min_db), width_(width_db),
          bins_(static_cast<std::size_t>(std::ceil((max_db - min_db) / width_db)))
    {
        detail::require(width_db > 0 && max_db > min_db, "bad-bins", "histogram needs max > min and width > 0");
    }

    /// Values outside the range are dropped (and counted).
    void add(double snr_db, const std::array<double, Channels>& values)
    {
        if (!(snr_db >= min_)) {
            ++dropped_;
            return;
        }
        const auto i = static_cast<std::size_t>((snr_db - min_) / width_);
        if (i >= bins_.size()) {
            ++dropped_;
            return;
        }
        auto& b = bins_[i];
        ++b.n;
        for (std::size_t c = 0; c < Channels; ++c)
            b.sums[c].add(values[c]);
    }

    void merge(const BinnedSums& o)
    {
        detail::require(o.bins_.size() == bins_.size() && o.min_ == min_ && o.width_ == width_, "bin-mismatch",
                        "cannot merge histograms with different binning");
        for (std::size_t i = 0; i < bins_.size(); ++i) {
            bins_[i].n += o.bins_[i].n;
            for (std::size_t c = 0; c < Channels; ++c)
                bins_[i].sums[c].merge(o.bins_[i].sums[c]);
        }
        dropped_ += o.dropped_;
    }

    double center(std::size_t i) const { return min_ + (static_cast<double>(i) + 0.5) * width_; }

    /// Merges fine bins into [edges[j], edges[j+1]).
    std::vector<Bin> coarse(std::span<const double> edges) const
    {
        detail::require(edges.size() >= 2, "bad-bins", "need at least two bin edges");
        std::vector<Bin> out(edges.size() - 1);
        for (std::size_t i = 0; i < bins_.size(); ++i) {
            if (bins_[i].n == 0)
                continue;
            const double c = center(i);
            const auto it = std::upper_bound(edges.begin(), edges.end(), c);
            if (it == edges.begin() || it == edges.end())
                continue;
            auto& dst = out[static_cast<std::size_t>(it - edges.begin()) - 1];
            dst.n += bins_[i].n;
            for (std::size_t ch = 0; ch < Channels; ++ch)
                dst.sums[ch].merge(bins_[i].sums[ch]);
        }
        return out;
    }

    std::uint64_t total() const
    {
        std::uint64_t n = 0;
        for (const auto& b : bins_)
            n += b.n;
        return n;
    }

    std::uint64_t dropped() const { return dropped_; }

private:
    double min_;
    double width_;
    std::vector<Bin> bins_;
    std::uint64_t dropped_ = 0;
};

/// Bin edges min, min+w, ..., up to and including max.
inline std::vector<double> uniform_edges(double min, double max, double width)
{
    detail::require(width > 0 && max > min, "bad-bins", "bin edges need max > min and width > 0");
    std::vector<double> e;
    const auto n = static_cast<std::size_t>(std::round((max - min) / width));
    for (std::size_t i = 0; i <= n; ++i)
        e.push_back(min + static_cast<double>(i) * width);
    return e;
}

/// Ordinary least-squares slope of y on x.
inline double fit_slope(std::span<const double> x, std::span<const double> y)
{
    detail::require(x.size() == y.size() && x.size() >= 2, "regression", "need at least two points");
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0;
    double sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    return sxy / sxx;
}

/// Slope of log(y) against log(x).
inline double loglog_slope(std::span<const double> x, std::span<const double> y)
{
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < x.size(); ++i) {
        lx.push_back(std::log(x[i]));
        ly.push_back(std::log(y[i]));
    }
    return fit_slope(lx, ly);
}

/// Normalized autocorrelation of a real sequence at `lag` (mean removed).
inline double autocorrelation(std::span<const double> x, std::size_t lag)
{
    const std::size_t n = x.size();
    if (lag >= n)
        return 0.0;
    const double m = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        den += (x[i] - m) * (x[i] - m);
        if (i + lag < n)
            num += (x[i] - m) * (x[i + lag] - m);
    }
    return den > 0.0 ? num / den : 0.0;
}

/// Kolmogorov-Smirnov distance between a sample and the Rayleigh CDF
/// 1 - exp(-x^2 / (2 sigma^2)).
inline double ks_rayleigh(std::vector<double> sample, double sigma)
{
    std::sort(sample.begin(), sample.end());
    const double n = static_cast<double>(sample.size());
    double d = 0.0;
    for (std::size_t i = 0; i < sample.size(); ++i) {
        const double f = 1.0 - std::exp(-sample[i] * sample[i] / (2.0 * sigma * sigma));
        d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
    }
    return d;
}

} // namespace otdrq

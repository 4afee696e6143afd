#include "photodyn/correlator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <thread>

#include "photodyn/errors.hpp"

namespace photodyn {

namespace {

struct BinGrid {
    std::int64_t width_ps;
    std::int64_t half_bins;
    std::int64_t window_ps; // largest |d| that lands in a bin

    BinGrid(double bin_width_ns, double max_delay_ns) {
        if (!std::isfinite(bin_width_ns) || bin_width_ns <= 0.0) throw DataError("bin width must be > 0");
        width_ps = std::llround(bin_width_ns * 1000.0);
        if (width_ps < 1) throw DataError("bin width must be at least 1 ps");
        if (!std::isfinite(max_delay_ns) || max_delay_ns < 10.0 * bin_width_ns * (1.0 - 1e-12)) {
            throw DataError("max delay must be at least 10 bin widths");
        }
        half_bins = std::llround(max_delay_ns * 1000.0 / static_cast<double>(width_ps));
        window_ps = window_for(width_ps, half_bins);
    }

    BinGrid(std::int64_t width, std::int64_t half) : width_ps(width), half_bins(half), window_ps(window_for(width, half)) {}

    // |d| < width * (M + 1/2)
    static std::int64_t window_for(std::int64_t width, std::int64_t half) { return (width * (2 * half + 1) - 1) / 2; }

    // Offset into the 2M+1 array, or -1 outside the window.
    [[nodiscard]] std::int64_t index(std::int64_t d) const {
        const std::int64_t mag = d < 0 ? -d : d;
        const std::int64_t k = (2 * mag + width_ps) / (2 * width_ps);
        if (k > half_bins) return -1;
        return half_bins + (d < 0 ? -k : k);
    }
};

bool is_detector(Channel c) { return c == Channel::Detector0 || c == Channel::Detector1; }

// Pairs every event in [begin, end) with earlier events inside the window.
void accumulate(std::span<const TimeTag> events, std::size_t begin, std::size_t end, const BinGrid& grid,
                std::vector<std::uint64_t>& counts) {
    for (std::size_t j = begin; j < end; ++j) {
        const TimeTag& later = events[j];
        if (!is_detector(later.channel)) continue;
        for (std::size_t i = j; i-- > 0;) {
            const TimeTag& earlier = events[i];
            if (later.timestamp_ps - earlier.timestamp_ps > grid.window_ps) break;
            if (!is_detector(earlier.channel) || earlier.channel == later.channel) continue;
            const std::int64_t d = later.channel == Channel::Detector1 ? later.timestamp_ps - earlier.timestamp_ps
                                                                       : earlier.timestamp_ps - later.timestamp_ps;
            const std::int64_t idx = grid.index(d);
            if (idx >= 0) ++counts[static_cast<std::size_t>(idx)];
        }
    }
}

void require_sorted(const TimeTagStream& stream) {
    if (!stream.is_sorted()) throw DataError("time-tag stream is not sorted by timestamp");
}

void finish_counts(CorrelationHistogram& h) {
    h.normalized.assign(h.counts.begin(), h.counts.end());
    h.sigma.resize(h.counts.size());
    for (std::size_t i = 0; i < h.counts.size(); ++i) {
        h.sigma[i] = std::sqrt(static_cast<double>(std::max<std::uint64_t>(h.counts[i], 1)));
    }
    if (h.n0 == 0 || h.n1 == 0) h.warnings.emplace_back("empty detector channel: histogram is empty");
}

} // namespace

std::uint64_t CorrelationHistogram::total() const {
    std::uint64_t s = 0;
    for (auto c : counts) s += c;
    return s;
}

CorrelationHistogram CorrelationHistogram::mirrored() const {
    CorrelationHistogram m = *this;
    std::reverse(m.counts.begin(), m.counts.end());
    std::reverse(m.normalized.begin(), m.normalized.end());
    std::reverse(m.sigma.begin(), m.sigma.end());
    std::swap(m.n0, m.n1);
    return m;
}

StreamingCorrelator::StreamingCorrelator(double bin_width_ns, double max_delay_ns) {
    const BinGrid grid(bin_width_ns, max_delay_ns);
    width_ps_ = grid.width_ps;
    half_bins_ = grid.half_bins;
    window_ps_ = grid.window_ps;
    counts_.assign(static_cast<std::size_t>(2 * half_bins_ + 1), 0);
    last_ps_ = std::numeric_limits<std::int64_t>::min();
}

void StreamingCorrelator::add(std::span<const TimeTag> chunk) {
    for (const TimeTag& t : chunk) {
        if (t.timestamp_ps < last_ps_) throw DataError("time-tag stream is not sorted by timestamp");
        last_ps_ = t.timestamp_ps;
        if (t.channel == Channel::Detector0) ++n0_;
        if (t.channel == Channel::Detector1) ++n1_;
    }
    buffer_.insert(buffer_.end(), chunk.begin(), chunk.end());
    const BinGrid grid(width_ps_, half_bins_);
    accumulate(buffer_, processed_, buffer_.size(), grid, counts_);
    processed_ = buffer_.size();

    // keep only what later events can still pair with
    if (!buffer_.empty()) {
        const std::int64_t horizon = buffer_.back().timestamp_ps - window_ps_;
        const auto keep = std::lower_bound(buffer_.begin(), buffer_.end(), horizon,
                                           [](const TimeTag& t, std::int64_t v) { return t.timestamp_ps < v; });
        const auto dropped = static_cast<std::size_t>(keep - buffer_.begin());
        if (dropped > buffer_.size() / 2) {
            buffer_.erase(buffer_.begin(), keep);
            processed_ -= dropped;
        }
    }
}

CorrelationHistogram StreamingCorrelator::result(std::int64_t duration_ps,
                                                 std::map<std::string, std::string> metadata) const {
    CorrelationHistogram h;
    h.bin_width_ns = static_cast<double>(width_ps_) / 1000.0;
    h.half_bins = half_bins_;
    h.counts = counts_;
    h.n0 = n0_;
    h.n1 = n1_;
    h.duration_ps = duration_ps;
    h.metadata = std::move(metadata);
    finish_counts(h);
    return h;
}

CorrelationHistogram correlate(const TimeTagStream& stream, double bin_width_ns, double max_delay_ns) {
    require_sorted(stream);
    StreamingCorrelator c(bin_width_ns, max_delay_ns);
    c.add(stream.events);
    return c.result(stream.duration_ps, stream.metadata);
}

CorrelationHistogram correlate_parallel(const TimeTagStream& stream, double bin_width_ns, double max_delay_ns,
                                        unsigned threads) {
    require_sorted(stream);
    const BinGrid grid(bin_width_ns, max_delay_ns);
    threads = std::max(1u, threads);
    const std::size_t n = stream.events.size();
    std::vector<std::vector<std::uint64_t>> partial(threads,
                                                    std::vector<std::uint64_t>(2 * grid.half_bins + 1, 0));
    {
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < threads; ++t) {
            const std::size_t begin = n * t / threads;
            const std::size_t end = n * (t + 1) / threads;
            pool.emplace_back([&, begin, end, t] { accumulate(stream.events, begin, end, grid, partial[t]); });
        }
    }
    CorrelationHistogram h;
    h.bin_width_ns = static_cast<double>(grid.width_ps) / 1000.0;
    h.half_bins = grid.half_bins;
    h.counts.assign(2 * grid.half_bins + 1, 0);
    for (const auto& p : partial) {
        for (std::size_t i = 0; i < p.size(); ++i) h.counts[i] += p[i];
    }
    h.n0 = stream.count(Channel::Detector0);
    h.n1 = stream.count(Channel::Detector1);
    h.duration_ps = stream.duration_ps;
    h.metadata = stream.metadata;
    finish_counts(h);
    return h;
}

TailWindow default_tail_window(const CorrelationHistogram& hist) {
    const double max = hist.max_delay_ns();
    return {0.75 * max, max};
}

CorrelationHistogram normalize(const CorrelationHistogram& hist, Normalization mode,
                               std::optional<TailWindow> tail_window) {
    CorrelationHistogram out = hist;
    out.normalization = mode;
    out.tail_window.reset();
    double norm = 1.0;
    switch (mode) {
    case Normalization::Raw:
        break;
    case Normalization::TailPlateau: {
        const TailWindow w = tail_window.value_or(default_tail_window(hist));
        const double max = hist.max_delay_ns();
        const double slack = 0.5 * hist.bin_width_ns;
        if (w.lo_ns < 0.5 * max - slack || w.hi_ns > max + slack || w.lo_ns > w.hi_ns) {
            throw NormalizationError("tail window must lie inside [max_delay/2, max_delay]");
        }
        double sum = 0.0;
        std::size_t bins = 0;
        for (std::size_t i = 0; i < hist.size(); ++i) {
            const double t = std::abs(hist.center_ns(i));
            if (t >= w.lo_ns - 1e-9 && t <= w.hi_ns + 1e-9) {
                sum += static_cast<double>(hist.counts[i]);
                ++bins;
            }
        }
        if (bins < 20) throw NormalizationError("tail window holds fewer than 20 bins");
        if (sum <= 0.0) throw NormalizationError("tail window is empty: cannot set the plateau");
        norm = sum / static_cast<double>(bins);
        out.tail_window = w;
        break;
    }
    case Normalization::RateProduct: {
        if (hist.duration_ps <= 0) throw NormalizationError("rate normalisation needs the stream duration");
        if (hist.n0 == 0 || hist.n1 == 0) throw NormalizationError("rate normalisation needs events on both detectors");
        norm = static_cast<double>(hist.n0) * static_cast<double>(hist.n1) * hist.bin_width_ns * 1000.0 /
               static_cast<double>(hist.duration_ps);
        break;
    }
    }
    out.norm_factor = norm;
    for (std::size_t i = 0; i < hist.size(); ++i) {
        out.normalized[i] = static_cast<double>(hist.counts[i]) / norm;
        out.sigma[i] = std::sqrt(static_cast<double>(std::max<std::uint64_t>(hist.counts[i], 1))) / norm;
    }
    return out;
}

CorrelationHistogram background_corrected(const CorrelationHistogram& hist, double rho) {
    if (!(rho > 0.0 && rho <= 1.0)) throw DomainError("signal fraction rho must lie in (0, 1]");
    CorrelationHistogram out = hist;
    const double r2 = rho * rho;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out.normalized[i] = (hist.normalized[i] - (1.0 - r2)) / r2;
        out.sigma[i] = hist.sigma[i] / r2;
    }
    out.metadata["background_rho"] = std::to_string(rho);
    return out;
}

PulsedG2 pulsed_g2_zero(const TimeTagStream& stream, double period_ns, int side_peaks_per_side) {
    require_sorted(stream);
    if (!(period_ns > 0.0)) throw DataError("pulse period must be > 0");
    if (2 * side_peaks_per_side < 5) throw StatisticsError("need at least 5 side peaks");
    const std::int64_t period = std::llround(period_ns * 1000.0);
    if (stream.duration_ps < period * (side_peaks_per_side + 1)) {
        throw StatisticsError("stream too short to hold the requested side peaks");
    }
    const std::int64_t half_window = period / 4;
    const std::int64_t reach = period * side_peaks_per_side + half_window;
    const auto n = static_cast<std::size_t>(2 * side_peaks_per_side + 1);
    std::vector<std::uint64_t> peaks(n, 0);

    const auto& ev = stream.events;
    for (std::size_t j = 0; j < ev.size(); ++j) {
        if (!is_detector(ev[j].channel)) continue;
        for (std::size_t i = j; i-- > 0;) {
            if (ev[j].timestamp_ps - ev[i].timestamp_ps > reach) break;
            if (!is_detector(ev[i].channel) || ev[i].channel == ev[j].channel) continue;
            const std::int64_t d = ev[j].channel == Channel::Detector1 ? ev[j].timestamp_ps - ev[i].timestamp_ps
                                                                       : ev[i].timestamp_ps - ev[j].timestamp_ps;
            const double m = std::round(static_cast<double>(d) / static_cast<double>(period));
            const auto mi = static_cast<std::int64_t>(m);
            if (std::abs(mi) > side_peaks_per_side) continue;
            if (std::abs(d - mi * period) >= half_window) continue;
            ++peaks[static_cast<std::size_t>(mi + side_peaks_per_side)];
        }
    }

    PulsedG2 r;
    r.center_counts = peaks[static_cast<std::size_t>(side_peaks_per_side)];
    std::uint64_t side_total = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (i == static_cast<std::size_t>(side_peaks_per_side)) continue;
        r.side_counts.push_back(peaks[i]);
        side_total += peaks[i];
    }
    if (side_total == 0) throw StatisticsError("no coincidences in the side peaks");
    r.side_mean = static_cast<double>(side_total) / static_cast<double>(r.side_counts.size());
    r.value = static_cast<double>(r.center_counts) / r.side_mean;
    const double rel2 = 1.0 / static_cast<double>(std::max<std::uint64_t>(r.center_counts, 1)) +
                        1.0 / static_cast<double>(side_total);
    r.sigma = std::max(r.value, 1.0 / r.side_mean) * std::sqrt(rel2);
    return r;
}

DecayHistogram decay_histogram(const TimeTagStream& stream, double period_ns, double bin_width_ns) {
    require_sorted(stream);
    if (!(period_ns > 0.0) || !(bin_width_ns > 0.0)) throw DataError("period and bin width must be > 0");
    if (bin_width_ns >= period_ns / 50.0) throw DataError("bin width must be below period/50");
    if (stream.count(Channel::Sync) == 0) throw DataError("stream has no sync channel");
    DecayHistogram h;
    h.bin_width_ns = bin_width_ns;
    h.period_ns = period_ns;
    h.metadata = stream.metadata;
    const auto bins = static_cast<std::size_t>(std::floor(period_ns / bin_width_ns));
    h.counts.assign(bins, 0);
    const double width_ps = bin_width_ns * 1000.0;
    std::int64_t last_sync = -1;
    for (const TimeTag& t : stream.events) {
        if (t.channel == Channel::Sync) {
            last_sync = t.timestamp_ps;
            continue;
        }
        if (last_sync < 0) continue;
        const auto b = static_cast<std::size_t>(static_cast<double>(t.timestamp_ps - last_sync) / width_ps);
        if (b < bins) ++h.counts[b];
    }
    return h;
}

} // namespace photodyn

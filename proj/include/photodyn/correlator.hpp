#pragma once

// Coincidence histograms from time-tag streams.
//
// Bin k (k = -M..M) is centred on delay k*width and collects delays d
// (detector-1 time minus detector-0 time) with
//   k = sign(d) * floor((|d| + width/2) / width),
// i.e. ties go away from zero, so mirroring a stream mirrors the histogram
// exactly. The covered range is |d| < (M + 1/2) * width.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "photodyn/timetags.hpp"

namespace photodyn {

enum class Normalization { Raw, TailPlateau, RateProduct };

/// Range of |tau| (ns) averaged for the plateau, applied to both signs.
struct TailWindow {
    double lo_ns = 0.0;
    double hi_ns = 0.0;
};

struct CorrelationHistogram {
    double bin_width_ns = 1.0;
    std::int64_t half_bins = 0; ///< M; there are 2M + 1 bins
    std::vector<std::uint64_t> counts;
    std::vector<double> normalized;
    std::vector<double> sigma;
    Normalization normalization = Normalization::Raw;
    std::optional<TailWindow> tail_window;
    double norm_factor = 1.0; ///< normalized = counts / norm_factor
    std::uint64_t n0 = 0;     ///< detector-0 events in the source stream
    std::uint64_t n1 = 0;
    std::int64_t duration_ps = 0;
    std::map<std::string, std::string> metadata;
    std::vector<std::string> warnings;

    [[nodiscard]] std::size_t size() const { return counts.size(); }
    [[nodiscard]] double center_ns(std::size_t i) const {
        return (static_cast<double>(i) - static_cast<double>(half_bins)) * bin_width_ns;
    }
    [[nodiscard]] double max_delay_ns() const { return static_cast<double>(half_bins) * bin_width_ns; }
    [[nodiscard]] std::uint64_t total() const;
    /// Copy with bins in reverse order (tau -> -tau).
    [[nodiscard]] CorrelationHistogram mirrored() const;
};

/// Accumulates coincidences chunk by chunk. Chunks must continue in time
/// order; only events within the correlation window are retained between
/// calls, so memory stays bounded for arbitrarily long streams.
class StreamingCorrelator {
public:
    StreamingCorrelator(double bin_width_ns, double max_delay_ns);

    /// Throws DataError if the chunk is not time-ordered (also across calls).
    void add(std::span<const TimeTag> chunk);

    /// Raw-count histogram of everything added so far.
    [[nodiscard]] CorrelationHistogram result(std::int64_t duration_ps,
                                              std::map<std::string, std::string> metadata = {}) const;

private:
    std::int64_t width_ps_;
    std::int64_t half_bins_;
    std::int64_t window_ps_;
    std::vector<TimeTag> buffer_;
    std::size_t processed_ = 0; // events of buffer_ already paired
    std::vector<std::uint64_t> counts_;
    std::uint64_t n0_ = 0, n1_ = 0;
    std::int64_t last_ps_ = 0;
};

/// Raw symmetric cross-correlation of detector 0 and detector 1.
/// Pre: bin_width > 0, max_delay >= 10 * bin_width, stream time-ordered.
[[nodiscard]] CorrelationHistogram correlate(const TimeTagStream& stream, double bin_width_ns, double max_delay_ns);

/// Same result computed on `threads` overlapping segments merged by bin-wise
/// addition; bit-identical to correlate().
[[nodiscard]] CorrelationHistogram correlate_parallel(const TimeTagStream& stream, double bin_width_ns,
                                                      double max_delay_ns, unsigned threads);

/// Outermost 25% of delays.
[[nodiscard]] TailWindow default_tail_window(const CorrelationHistogram& hist);

/// TailPlateau divides by the mean count over the tail window (default
/// window when none is given); RateProduct divides by n0 n1 width / T.
[[nodiscard]] CorrelationHistogram normalize(const CorrelationHistogram& hist, Normalization mode,
                                             std::optional<TailWindow> tail_window = std::nullopt);

/// g2_corr = (g2 - (1 - rho^2)) / rho^2 with signal fraction rho = S / (S + B).
[[nodiscard]] CorrelationHistogram background_corrected(const CorrelationHistogram& hist, double rho);

struct PulsedG2 {
    double value = 0.0;
    double sigma = 0.0;
    std::uint64_t center_counts = 0;
    double side_mean = 0.0;
    std::vector<std::uint64_t> side_counts; ///< peaks -n..-1, 1..n
};

/// Coincidences in the zero-delay peak over the mean of the side peaks, each
/// window period/2 wide and centred on m * period.
[[nodiscard]] PulsedG2 pulsed_g2_zero(const TimeTagStream& stream, double period_ns, int side_peaks_per_side = 5);

struct DecayHistogram {
    double bin_width_ns = 0.1;
    double period_ns = 100.0;
    std::vector<std::uint64_t> counts;
    std::map<std::string, std::string> metadata;

    [[nodiscard]] double time_ns(std::size_t i) const { return (static_cast<double>(i) + 0.5) * bin_width_ns; }
};

/// Histogram of detection time minus preceding sync. Pre: bin_width < period/50.
[[nodiscard]] DecayHistogram decay_histogram(const TimeTagStream& stream, double period_ns, double bin_width_ns);

} // namespace photodyn

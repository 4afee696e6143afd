#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace photodyn {

/// Detector 0 and 1 of the HBT arrangement, plus the laser sync channel of
/// pulsed acquisitions.
enum class Channel : std::uint8_t { Detector0 = 0, Detector1 = 1, Sync = 2 };

struct TimeTag {
    std::int64_t timestamp_ps = 0;
    Channel channel = Channel::Detector0;

    [[nodiscard]] bool operator==(const TimeTag&) const = default;
};

/// Ordered detection events. Metadata is a flat key/value record describing
/// the origin of the stream (simulation config, acquisition descriptor).
struct TimeTagStream {
    std::vector<TimeTag> events;
    std::int64_t duration_ps = 0;
    std::map<std::string, std::string> metadata;

    [[nodiscard]] bool is_sorted() const;
    [[nodiscard]] std::size_t count(Channel ch) const;

    [[nodiscard]] bool operator==(const TimeTagStream&) const = default;
};

/// Maps t -> duration - t, so every delay changes sign.
[[nodiscard]] TimeTagStream time_reversed(const TimeTagStream& stream);

} // namespace photodyn

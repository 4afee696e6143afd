#include "photodyn/timetags.hpp"

#include <algorithm>

namespace photodyn {

bool TimeTagStream::is_sorted() const {
    return std::is_sorted(events.begin(), events.end(),
                          [](const TimeTag& a, const TimeTag& b) { return a.timestamp_ps < b.timestamp_ps; });
}

std::size_t TimeTagStream::count(Channel ch) const {
    return static_cast<std::size_t>(
        std::count_if(events.begin(), events.end(), [ch](const TimeTag& t) { return t.channel == ch; }));
}

TimeTagStream time_reversed(const TimeTagStream& stream) {
    TimeTagStream out;
    out.duration_ps = stream.duration_ps;
    out.metadata = stream.metadata;
    out.events.reserve(stream.events.size());
    for (auto it = stream.events.rbegin(); it != stream.events.rend(); ++it) {
        out.events.push_back({stream.duration_ps - it->timestamp_ps, it->channel});
    }
    return out;
}

} // namespace photodyn

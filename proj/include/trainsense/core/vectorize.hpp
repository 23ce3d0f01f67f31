#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <span>
#include <vector>

#include "trainsense/core/types.hpp"

namespace trainsense {

inline constexpr Seconds kDefaultGapThreshold = 3600;

struct VectorizeResult {
  std::vector<Journey> journeys;
  std::size_t rejected = 0;  // records with a station outside the configured line
};

/// Collapse raw sensing records into journeys.
///
/// Records are grouped per device and sorted by time. A new journey starts
/// whenever two consecutive records of a device are more than
/// `gap_threshold` seconds apart. Each journey keeps, per station, only the
/// first and last timestamp. Output is sorted by (device, journey_seq) and
/// does not depend on input order.
inline VectorizeResult vectorize_journeys(std::span<const ObservationRecord> records,
                                          Seconds gap_threshold,
                                          const std::function<bool(StationId)>& valid_station) {
  if (gap_threshold <= 0) throw Error("gap_threshold must be positive");

  VectorizeResult out;
  std::map<DeviceId, std::vector<std::pair<Seconds, StationId>>> by_device;
  for (const auto& r : records) {
    if (!valid_station(r.station) || r.timestamp < 0) {
      ++out.rejected;
      continue;
    }
    by_device[r.device].emplace_back(r.timestamp, r.station);
  }

  for (auto& [device, events] : by_device) {
    std::sort(events.begin(), events.end());
    Journey current;
    current.device = device;
    current.journey_seq = 0;
    Seconds prev = events.front().first;
    for (const auto& [t, station] : events) {
      if (t - prev > gap_threshold) {
        out.journeys.push_back(current);
        current.stops.clear();
        ++current.journey_seq;
      }
      auto [it, inserted] = current.stops.try_emplace(station, StopTimes{t, t});
      if (!inserted) {
        it->second.first_seen = std::min(it->second.first_seen, t);
        it->second.last_seen = std::max(it->second.last_seen, t);
      }
      prev = t;
    }
    out.journeys.push_back(std::move(current));
  }
  return out;
}

inline VectorizeResult vectorize_journeys(std::span<const ObservationRecord> records,
                                          Seconds gap_threshold, const LineTopology& line) {
  return vectorize_journeys(records, gap_threshold,
                            [&line](StationId s) { return line.contains(s); });
}

/// Inverse view: one record per first-seen and last-seen time (one if equal).
/// With `fill` > 0, extra records every `fill` seconds inside each stop so
/// that vectorizing again with a gap threshold >= fill gives back the same
/// journeys.
inline std::vector<ObservationRecord> expand_journeys(std::span<const Journey> journeys, Seconds fill = 0) {
  std::vector<ObservationRecord> out;
  for (const auto& j : journeys) {
    for (const auto& [s, st] : j.stops) {
      out.push_back({j.device, s, st.first_seen});
      if (fill > 0)
        for (Seconds t = st.first_seen + fill; t < st.last_seen; t += fill) out.push_back({j.device, s, t});
      if (st.last_seen != st.first_seen) out.push_back({j.device, s, st.last_seen});
    }
  }
  return out;
}

}  // namespace trainsense

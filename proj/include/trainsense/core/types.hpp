#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace trainsense {

/// Integer seconds since epoch (or since an arbitrary day origin in simulation).
using Seconds = std::int64_t;

/// Station index along a line direction, contiguous 0..S-1.
using StationId = std::int32_t;

/// Opaque device token as emitted by the sensing layer.
using DeviceId = std::string;

/// Human-readable train label, e.g. "T007".
using TrainId = std::string;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ObservationRecord {
  DeviceId device;
  StationId station = 0;
  Seconds timestamp = 0;

  friend bool operator==(const ObservationRecord&, const ObservationRecord&) = default;
};

/// First and last time a device was seen at one station.
struct StopTimes {
  Seconds first_seen = 0;
  Seconds last_seen = 0;

  friend bool operator==(const StopTimes&, const StopTimes&) = default;
};

/// Which side of a stop the temporal comparisons use.
enum class TimeComponent { arrival, departure, both };

inline std::string to_string(TimeComponent c) {
  switch (c) {
    case TimeComponent::arrival: return "arrival";
    case TimeComponent::departure: return "departure";
    case TimeComponent::both: return "both";
  }
  return "both";
}

inline TimeComponent time_component_from_string(const std::string& s) {
  if (s == "arrival") return TimeComponent::arrival;
  if (s == "departure") return TimeComponent::departure;
  if (s == "both") return TimeComponent::both;
  throw Error("unknown time component '" + s + "'");
}

/// Per-device sparse vector of (first-seen, last-seen) per station.
struct Journey {
  DeviceId device;
  int journey_seq = 0;
  std::map<StationId, StopTimes> stops;

  StationId first_station() const { return stops.begin()->first; }
  StationId last_station() const { return stops.rbegin()->first; }

  Seconds start_time() const {
    Seconds t = stops.begin()->second.first_seen;
    for (const auto& [s, st] : stops) t = std::min(t, st.first_seen);
    return t;
  }

  Seconds end_time() const {
    Seconds t = stops.begin()->second.last_seen;
    for (const auto& [s, st] : stops) t = std::max(t, st.last_seen);
    return t;
  }

  friend bool operator==(const Journey&, const Journey&) = default;
};

enum class Direction { up, down };

struct LineTopology {
  std::string line_id = "L1";
  std::vector<StationId> stations;
  Direction direction = Direction::up;

  /// Line with stations 0..n-1.
  static LineTopology contiguous(std::string id, int n, Direction dir = Direction::up) {
    LineTopology t;
    t.line_id = std::move(id);
    t.direction = dir;
    for (int i = 0; i < n; ++i) t.stations.push_back(i);
    return t;
  }

  std::size_t size() const { return stations.size(); }

  bool contains(StationId s) const {
    for (auto x : stations)
      if (x == s) return true;
    return false;
  }

  /// Position of a station along the line, or -1.
  int position(StationId s) const {
    for (std::size_t i = 0; i < stations.size(); ++i)
      if (stations[i] == s) return static_cast<int>(i);
    return -1;
  }

  void validate() const {
    if (stations.size() < 2) throw Error("line '" + line_id + "' needs at least 2 stations");
    for (std::size_t i = 0; i < stations.size(); ++i)
      for (std::size_t j = i + 1; j < stations.size(); ++j)
        if (stations[i] == stations[j]) throw Error("line '" + line_id + "' has duplicate stations");
  }
};

}  // namespace trainsense

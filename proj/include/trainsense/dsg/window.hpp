#pragma once

#include <algorithm>
#include <map>
#include <span>
#include <vector>

#include "trainsense/core/types.hpp"

namespace trainsense::dsg {

/// Per-event estimate feeding the window aggregation.
struct EventEstimate {
  StationId station = 0;
  Seconds time = 0;
  double intending = 0.0;    // commuters whose first boarding chance is this event
  double left_behind = 0.0;  // of those, commuters that could not board
  bool flagged = false;
};

struct WindowEstimate {
  StationId station = 0;
  Seconds window_start = 0;
  double intending = 0.0;
  double left_behind = 0.0;
  double dsg_pct = 0.0;  // in [0, 100]
  bool flagged = false;
  int events = 0;
};

inline Seconds window_start(Seconds t, Seconds window) {
  return (t >= 0 ? t / window : -((-t + window - 1) / window)) * window;
}

/// Left-behind over intending-to-board per (station, window), as a
/// percentage. Windows with nothing intending to board are skipped.
inline std::vector<WindowEstimate> window_dsg_percentage(std::span<const EventEstimate> events, Seconds window = 1800) {
  if (window <= 0) throw Error("window must be positive");
  std::map<std::pair<StationId, Seconds>, WindowEstimate> acc;
  for (const auto& e : events) {
    const Seconds w = window_start(e.time, window);
    auto& a = acc[{e.station, w}];
    a.station = e.station;
    a.window_start = w;
    a.intending += e.intending;
    a.left_behind += e.left_behind;
    a.flagged = a.flagged || e.flagged;
    ++a.events;
  }
  std::vector<WindowEstimate> out;
  for (auto& [k, a] : acc) {
    if (a.intending <= 0) continue;
    a.dsg_pct = std::clamp(100.0 * a.left_behind / a.intending, 0.0, 100.0);
    out.push_back(a);
  }
  return out;
}

}  // namespace trainsense::dsg

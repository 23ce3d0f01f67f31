#pragma once

#include <algorithm>
#include <map>
#include <span>
#include <vector>

#include "trainsense/clustering/dbscan.hpp"
#include "trainsense/clustering/timetable.hpp"

namespace trainsense::clustering {

inline Seconds stop_time(const StopTimes& st, TimeComponent c) {
  return c == TimeComponent::arrival ? st.first_seen : st.last_seen;
}

/// DBSCAN result at one station; `journeys[i]` was clustered with timestamp `times[i]`.
struct StationClusters {
  StationId station = 0;
  std::vector<int> journeys;
  std::vector<Seconds> times;
  ClusterLabeling labeling;
};

struct BaselineOptions {
  Seconds eps = 30;
  int min_pts = 3;
  Seconds tolerance = 1800;
  TimeComponent component = TimeComponent::departure;
  EnvelopeOptions envelope;
};

struct BaselineResult {
  std::vector<StopLabel> stops;
  int trains = 0;
  EstimatedTimetable timetable;
};

/// Station-wise DBSCAN of one timestamp per journey stop.
inline std::vector<StationClusters> cluster_stations(std::span<const Journey> journeys, const BaselineOptions& opt) {
  std::map<StationId, StationClusters> per;
  for (std::size_t i = 0; i < journeys.size(); ++i)
    for (const auto& [s, st] : journeys[i].stops) {
      auto& sc = per[s];
      sc.station = s;
      sc.journeys.push_back(static_cast<int>(i));
      sc.times.push_back(stop_time(st, opt.component));
    }
  std::vector<StationClusters> out;
  for (auto& [s, sc] : per) {
    sc.labeling = dbscan_1d(sc.times, opt.eps, opt.min_pts);
    out.push_back(std::move(sc));
  }
  return out;
}

/// Cross-station re-identification in line order. A cluster at a station
/// collects one proposal per member that carries a label at an earlier
/// station within `tolerance`; the majority proposal wins (smallest label on
/// ties) and clusters without proposals open a new train.
inline BaselineResult baseline_reidentify(std::span<const StationClusters> per_station, std::span<const Journey> journeys,
                                          Seconds tolerance, TimeComponent component = TimeComponent::departure,
                                          const EnvelopeOptions& envelope = {}) {
  std::vector<const StationClusters*> order;
  for (const auto& sc : per_station) order.push_back(&sc);
  std::stable_sort(order.begin(), order.end(), [](auto a, auto b) { return a->station < b->station; });

  // journey -> (station -> label) for stops already labelled
  std::vector<std::map<StationId, int>> assigned(journeys.size());
  BaselineResult res;
  int next_label = 0;
  for (const auto* sc : order) {
    const auto groups = sc->labeling.members();
    for (const auto& group : groups) {
      if (group.empty()) continue;
      std::map<int, int> votes;
      for (int idx : group) {
        const int j = sc->journeys[idx];
        const Seconds t = sc->times[idx];
        const auto& prev = assigned[j];
        for (auto it = prev.rbegin(); it != prev.rend(); ++it) {
          if (it->first >= sc->station) continue;
          const Seconds tp = stop_time(journeys[j].stops.at(it->first), component);
          if (std::abs(t - tp) <= tolerance) ++votes[it->second];
          break;
        }
      }
      int label = -1;
      int best = 0;
      for (const auto& [l, n] : votes)
        if (n > best) {
          best = n;
          label = l;
        }
      if (label < 0) label = next_label++;
      for (int idx : group) assigned[sc->journeys[idx]][sc->station] = label;
    }
  }
  std::vector<char> used(static_cast<std::size_t>(next_label), 0);
  for (std::size_t j = 0; j < journeys.size(); ++j)
    for (const auto& [s, st] : journeys[j].stops) {
      auto it = assigned[j].find(s);
      const int l = it == assigned[j].end() ? kOutlier : it->second;
      if (l != kOutlier) used[l] = 1;
      res.stops.push_back({static_cast<int>(j), s, l});
    }
  res.trains = static_cast<int>(std::count(used.begin(), used.end(), 1));
  res.timetable = extract_timetable_from_stops(res.stops, journeys, envelope);
  return res;
}

inline BaselineResult baseline_cluster(std::span<const Journey> journeys, const BaselineOptions& opt) {
  const auto per = cluster_stations(journeys, opt);
  return baseline_reidentify(per, journeys, opt.tolerance, opt.component, opt.envelope);
}

}  // namespace trainsense::clustering

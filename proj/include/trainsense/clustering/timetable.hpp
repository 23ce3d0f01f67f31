#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "trainsense/clustering/labeling.hpp"
#include "trainsense/core/csv.hpp"
#include "trainsense/core/stats.hpp"
#include "trainsense/core/types.hpp"

namespace trainsense::clustering {

struct EnvelopeEntry {
  Seconds arrive_est = 0;
  Seconds depart_est = 0;
  int support = 0;         // members recorded at the station
  int arrive_support = 0;  // members that arrived here on the train
  int depart_support = 0;  // members that left here on the train

  friend bool operator==(const EnvelopeEntry&, const EnvelopeEntry&) = default;
};

struct TrainTrip {
  TrainId train;
  std::vector<int> members;  // journey indices
  std::map<StationId, EnvelopeEntry> envelope;

  Seconds reference_time() const {
    Seconds t = envelope.begin()->second.arrive_est;
    for (const auto& [s, e] : envelope) t = std::min(t, e.arrive_est);
    return t;
  }

  friend bool operator==(const TrainTrip&, const TrainTrip&) = default;
};

struct HeadwayPoint {
  Seconds time = 0;  // arrival that closes the headway
  Seconds headway = 0;

  friend bool operator==(const HeadwayPoint&, const HeadwayPoint&) = default;
};

struct EstimatedTimetable {
  std::vector<TrainTrip> trips;
  std::map<StationId, std::vector<HeadwayPoint>> headways;
  std::vector<std::string> warnings;

  /// Estimated (arrival, departure) pairs at a station, sorted by arrival.
  std::vector<std::pair<Seconds, Seconds>> events_at(StationId s) const {
    std::vector<std::pair<Seconds, Seconds>> out;
    for (const auto& t : trips)
      if (auto it = t.envelope.find(s); it != t.envelope.end())
        out.emplace_back(it->second.arrive_est, it->second.depart_est);
    std::sort(out.begin(), out.end());
    return out;
  }

  std::vector<Seconds> arrivals_at(StationId s) const {
    std::vector<Seconds> out;
    for (const auto& [a, d] : events_at(s)) out.push_back(a);
    return out;
  }

  std::set<StationId> stations() const {
    std::set<StationId> out;
    for (const auto& t : trips)
      for (const auto& [s, e] : t.envelope) out.insert(s);
    return out;
  }

  friend bool operator==(const EstimatedTimetable&, const EstimatedTimetable&) = default;
};

struct EnvelopeOptions {
  double q_lo = 0.1;
  double q_hi = 0.9;
};

/// One journey stop attributed to a trip label (kOutlier to ignore it).
struct StopLabel {
  int journey = 0;
  StationId station = 0;
  int label = kOutlier;
};

inline std::vector<StopLabel> stop_labels(const ClusterLabeling& labeling, std::span<const Journey> journeys) {
  std::vector<StopLabel> out;
  for (std::size_t i = 0; i < journeys.size(); ++i)
    for (const auto& [s, st] : journeys[i].stops) out.push_back({static_cast<int>(i), s, labeling.labels[i]});
  return out;
}

namespace detail {

inline Seconds round_s(double v) { return static_cast<Seconds>(std::llround(v)); }

/// Per-station quantile envelope of one trip. A side with no direct support
/// (nobody arrived on, or left on, this train there) is left for
/// fill_missing_sides.
inline std::map<StationId, EnvelopeEntry> envelope_of(std::span<const std::pair<int, StationId>> stops,
                                                      std::span<const Journey> journeys, const EnvelopeOptions& opt) {
  struct Samples {
    std::vector<double> arr, dep;
    int support = 0;
  };
  std::map<StationId, Samples> per;
  for (const auto& [j, s] : stops) {
    const auto& jr = journeys[j];
    const auto& st = jr.stops.at(s);
    auto& p = per[s];
    ++p.support;
    if (s != jr.first_station()) p.arr.push_back(static_cast<double>(st.first_seen));
    if (s != jr.last_station()) p.dep.push_back(static_cast<double>(st.last_seen));
  }
  std::map<StationId, EnvelopeEntry> env;
  for (const auto& [s, p] : per) {
    EnvelopeEntry e;
    e.support = p.support;
    e.arrive_support = static_cast<int>(p.arr.size());
    e.depart_support = static_cast<int>(p.dep.size());
    if (!p.arr.empty()) e.arrive_est = round_s(stats::quantile(p.arr, opt.q_lo));
    if (!p.dep.empty()) e.depart_est = round_s(stats::quantile(p.dep, opt.q_hi));
    env[s] = e;
  }
  return env;
}

/// Raw first/last-seen quantiles, used when no dwell time is known at all.
inline void raw_quantile_sides(EnvelopeEntry& e, StationId s, std::span<const std::pair<int, StationId>> stops,
                               std::span<const Journey> journeys, const EnvelopeOptions& opt) {
  std::vector<double> first, last;
  for (const auto& [j, st] : stops)
    if (st == s) {
      first.push_back(static_cast<double>(journeys[j].stops.at(s).first_seen));
      last.push_back(static_cast<double>(journeys[j].stops.at(s).last_seen));
    }
  if (e.arrive_support == 0) e.arrive_est = round_s(stats::quantile(first, opt.q_lo));
  if (e.depart_support == 0) e.depart_est = round_s(stats::quantile(last, opt.q_hi));
}

/// Infer unsupported arrival or departure sides from dwell times: the
/// station's median dwell over all trips, else the median over all stations,
/// else the trip's own median.
inline void fill_missing_sides(std::vector<std::map<StationId, EnvelopeEntry>>& envs,
                               std::span<const std::vector<std::pair<int, StationId>>> stops,
                               std::span<const Journey> journeys, const EnvelopeOptions& opt) {
  std::map<StationId, std::vector<double>> by_station;
  std::vector<double> all;
  for (const auto& env : envs)
    for (const auto& [s, e] : env)
      if (e.arrive_support > 0 && e.depart_support > 0) {
        by_station[s].push_back(static_cast<double>(e.depart_est - e.arrive_est));
        all.push_back(static_cast<double>(e.depart_est - e.arrive_est));
      }
  std::map<StationId, Seconds> station_dwell;
  for (auto& [s, v] : by_station) station_dwell[s] = round_s(stats::median(v));
  const std::optional<Seconds> global =
      all.empty() ? std::nullopt : std::optional<Seconds>(round_s(stats::median(all)));

  for (std::size_t t = 0; t < envs.size(); ++t) {
    std::vector<double> own;
    for (const auto& [s, e] : envs[t])
      if (e.arrive_support > 0 && e.depart_support > 0) own.push_back(static_cast<double>(e.depart_est - e.arrive_est));
    for (auto& [s, e] : envs[t]) {
      if (e.arrive_support > 0 && e.depart_support > 0) continue;
      std::optional<Seconds> dwell;
      if (auto it = station_dwell.find(s); it != station_dwell.end()) dwell = it->second;
      else if (global) dwell = global;
      else if (!own.empty()) dwell = round_s(stats::median(own));
      if (dwell && (e.arrive_support > 0 || e.depart_support > 0)) {
        const Seconds d = std::max<Seconds>(0, *dwell);
        if (e.arrive_support == 0) e.arrive_est = e.depart_est - d;
        else e.depart_est = e.arrive_est + d;
      } else {
        raw_quantile_sides(e, s, stops[t], journeys, opt);
      }
      if (e.arrive_est > e.depart_est)
        e.arrive_est = e.depart_est = round_s(0.5 * static_cast<double>(e.arrive_est + e.depart_est));
    }
  }
}

}  // namespace detail

/// Recompute per-station headways and give trips stable names in time order.
inline void finalize_timetable(EstimatedTimetable& tt) {
  std::stable_sort(tt.trips.begin(), tt.trips.end(), [](const TrainTrip& a, const TrainTrip& b) {
    const auto ra = a.reference_time(), rb = b.reference_time();
    if (ra != rb) return ra < rb;
    return a.members < b.members;
  });
  for (std::size_t i = 0; i < tt.trips.size(); ++i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "E%04zu", i);
    tt.trips[i].train = buf;
  }
  tt.headways.clear();
  for (auto s : tt.stations()) {
    const auto arr = tt.arrivals_at(s);
    auto& out = tt.headways[s];
    for (std::size_t i = 1; i < arr.size(); ++i)
      if (arr[i] > arr[i - 1]) out.push_back({arr[i], arr[i] - arr[i - 1]});
  }
}

/// Build trips from stop-level labels (the baseline attributes stops, not journeys).
inline EstimatedTimetable extract_timetable_from_stops(std::span<const StopLabel> stops,
                                                       std::span<const Journey> journeys,
                                                       const EnvelopeOptions& opt = {}) {
  std::map<int, std::vector<std::pair<int, StationId>>> by_label;
  for (const auto& s : stops)
    if (s.label != kOutlier) by_label[s.label].emplace_back(s.journey, s.station);
  EstimatedTimetable tt;
  if (by_label.empty()) tt.warnings.push_back("no labelled journeys");
  std::vector<std::map<StationId, EnvelopeEntry>> envs;
  std::vector<std::vector<std::pair<int, StationId>>> trip_stops;
  for (auto& [label, st] : by_label) {
    TrainTrip trip;
    std::set<int> mem;
    for (const auto& [j, s] : st) mem.insert(j);
    trip.members.assign(mem.begin(), mem.end());
    auto env = detail::envelope_of(st, journeys, opt);
    if (env.empty()) {
      tt.warnings.push_back("cluster " + std::to_string(label) + " has no station support; dropped");
      continue;
    }
    const bool moves = std::any_of(env.begin(), env.end(), [](const auto& kv) {
      return kv.second.arrive_support > 0 || kv.second.depart_support > 0;
    });
    if (!moves) {
      tt.warnings.push_back("cluster " + std::to_string(label) + " has no travelling member; dropped");
      continue;
    }
    envs.push_back(std::move(env));
    trip_stops.push_back(st);
    tt.trips.push_back(std::move(trip));
  }
  detail::fill_missing_sides(envs, trip_stops, journeys, opt);
  for (std::size_t t = 0; t < tt.trips.size(); ++t) tt.trips[t].envelope = std::move(envs[t]);
  finalize_timetable(tt);
  return tt;
}

/// Per trip and station: arrival at the q_lo quantile of members' first-seen
/// times, departure at the q_hi quantile of their last-seen times.
inline EstimatedTimetable extract_timetable(const ClusterLabeling& labeling, std::span<const Journey> journeys,
                                            const EnvelopeOptions& opt = {}) {
  const auto stops = stop_labels(labeling, journeys);
  return extract_timetable_from_stops(stops, journeys, opt);
}

/// Median run time per segment (keyed by upstream station) and dwell per station.
struct TravelTimeStats {
  std::map<StationId, Seconds> run;
  std::map<StationId, Seconds> dwell;
};

inline TravelTimeStats travel_time_stats(std::span<const TrainTrip> trips) {
  std::map<StationId, std::vector<double>> run, dwell;
  for (const auto& t : trips) {
    for (const auto& [s, e] : t.envelope) {
      if (e.arrive_support > 0 && e.depart_support > 0) dwell[s].push_back(static_cast<double>(e.depart_est - e.arrive_est));
      auto next = t.envelope.find(s + 1);
      if (next != t.envelope.end() && e.depart_support > 0 && next->second.arrive_support > 0)
        run[s].push_back(static_cast<double>(next->second.arrive_est - e.depart_est));
    }
  }
  TravelTimeStats out;
  for (auto& [s, v] : run) out.run[s] = detail::round_s(stats::median(v));
  for (auto& [s, v] : dwell) out.dwell[s] = detail::round_s(stats::median(v));
  return out;
}

/// Greedily merge trips with disjoint, ordered station support when carrying
/// the upstream trip forward by median run and dwell times lands within
/// `max_gap` of the downstream trip's first arrival.
inline std::vector<TrainTrip> reconcile_fragments(std::vector<TrainTrip> trips, const TravelTimeStats& stats,
                                                  Seconds max_gap) {
  auto predicted = [&](const TrainTrip& up, StationId target) -> std::optional<Seconds> {
    auto last = std::prev(up.envelope.end());
    Seconds t = last->second.depart_est;
    for (StationId s = last->first; s < target; ++s) {
      auto r = stats.run.find(s);
      if (r == stats.run.end()) return std::nullopt;
      t += r->second;
      if (s + 1 < target) {
        auto d = stats.dwell.find(s + 1);
        if (d == stats.dwell.end()) return std::nullopt;
        t += d->second;
      }
    }
    return t;
  };
  while (true) {
    std::optional<std::tuple<Seconds, std::size_t, std::size_t>> best;
    for (std::size_t a = 0; a < trips.size(); ++a) {
      for (std::size_t b = 0; b < trips.size(); ++b) {
        if (a == b || trips[a].envelope.empty() || trips[b].envelope.empty()) continue;
        const StationId a_last = trips[a].envelope.rbegin()->first;
        const StationId b_first = trips[b].envelope.begin()->first;
        if (a_last >= b_first) continue;
        const auto pred = predicted(trips[a], b_first);
        if (!pred) continue;
        const Seconds err = std::abs(*pred - trips[b].envelope.begin()->second.arrive_est);
        if (err > max_gap) continue;
        if (!best || err < std::get<0>(*best)) best = std::make_tuple(err, a, b);
      }
    }
    if (!best) break;
    auto [err, a, b] = *best;
    auto& up = trips[a];
    auto& down = trips[b];
    up.members.insert(up.members.end(), down.members.begin(), down.members.end());
    std::sort(up.members.begin(), up.members.end());
    up.members.erase(std::unique(up.members.begin(), up.members.end()), up.members.end());
    for (const auto& [s, e] : down.envelope) up.envelope[s] = e;
    trips.erase(trips.begin() + static_cast<std::ptrdiff_t>(b));
  }
  return trips;
}

inline void write_timetable_csv(const std::string& path, const EstimatedTimetable& tt) {
  csv::Writer w(path);
  w.row("train", "station", "arrive_est", "depart_est", "support");
  for (const auto& t : tt.trips)
    for (const auto& [s, e] : t.envelope) w.row(t.train, s, e.arrive_est, e.depart_est, e.support);
}

inline void write_headways_csv(const std::string& path, const EstimatedTimetable& tt) {
  csv::Writer w(path);
  w.row("station", "time", "headway_s");
  for (const auto& [s, hs] : tt.headways)
    for (const auto& h : hs) w.row(s, h.time, h.headway);
}

}  // namespace trainsense::clustering

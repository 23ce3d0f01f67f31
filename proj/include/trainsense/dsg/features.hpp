#pragma once

#include <algorithm>
#include <array>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "trainsense/clustering/timetable.hpp"
#include "trainsense/core/csv.hpp"
#include "trainsense/core/stats.hpp"
#include "trainsense/dsg/scaling.hpp"

namespace trainsense::dsg {

inline constexpr std::size_t kNumFeatures = 5;
inline constexpr std::array<const char*, kNumFeatures> kFeatureNames = {"waiting_count", "missed_count", "wait_q3",
                                                                         "wait_sd", "headway"};

struct DsgFeatures {
  double waiting_count = 0.0;
  double missed_count = 0.0;
  double wait_q3 = 0.0;
  double wait_sd = 0.0;
  double headway = 0.0;

  std::array<double, kNumFeatures> as_array() const { return {waiting_count, missed_count, wait_q3, wait_sd, headway}; }
  static DsgFeatures from_array(const std::array<double, kNumFeatures>& a) { return {a[0], a[1], a[2], a[3], a[4]}; }
};

struct FeatureConfig {
  Seconds grace = 60;             // "still waiting" means seen this long after the departure
  Seconds nominal_headway = 180;  // used when an event has no previous departure
  Seconds lookback = 3600;        // ignore devices first seen longer ago than this
};

/// Platform presence of one device at its boarding station.
struct Visit {
  Seconds first = 0;
  Seconds last = 0;
};

/// One estimated departure at a station with its features.
struct FeatureRow {
  StationId station = 0;
  Seconds depart = 0;
  Seconds prev_depart = 0;
  bool headway_nominal = false;  // no previous departure; headway is the configured nominal
  double theta = 1.0;
  DsgFeatures features;
  double new_arrivals = 0.0;  // scaled devices first seen since the previous departure
  double new_missed = 0.0;    // of those, scaled devices still there after this one
  int raw_waiting = 0;
  int raw_missed = 0;
};

/// Boarding-station visits per station: journeys whose first station it is.
inline std::map<StationId, std::vector<Visit>> boarding_visits(std::span<const Journey> journeys) {
  std::map<StationId, std::vector<Visit>> out;
  for (const auto& j : journeys) {
    if (j.stops.empty()) continue;
    const auto& st = j.stops.begin()->second;
    out[j.first_station()].push_back({st.first_seen, st.last_seen});
  }
  for (auto& [s, v] : out)
    std::sort(v.begin(), v.end(), [](const Visit& a, const Visit& b) {
      return a.first != b.first ? a.first < b.first : a.last < b.last;
    });
  return out;
}

/// Features of the departure at `depart` from a station with sorted boarding visits.
///
/// waiting: present in (prev, depart], i.e. first seen by the departure and
/// either arrived after the previous departure or still seen `grace` after it.
/// missed: first seen by the departure and still seen `grace` after it.
/// Wait statistics use devices that left with this train (last seen in
/// (prev + grace, depart + grace]); wait = last - first.
inline FeatureRow extract_features(StationId station, Seconds depart, std::optional<Seconds> prev_depart,
                                   std::span<const Visit> visits, double theta, const FeatureConfig& cfg = {}) {
  if (!(theta > 0)) throw Error("theta must be positive");
  FeatureRow row;
  row.station = station;
  row.depart = depart;
  row.theta = theta;
  row.headway_nominal = !prev_depart;
  const Seconds prev = prev_depart ? *prev_depart : depart - cfg.nominal_headway;
  row.prev_depart = prev;

  auto lo = std::lower_bound(visits.begin(), visits.end(), depart - cfg.lookback,
                             [](const Visit& v, Seconds t) { return v.first < t; });
  auto hi = std::upper_bound(visits.begin(), visits.end(), depart, [](Seconds t, const Visit& v) { return t < v.first; });
  int waiting = 0, missed = 0, fresh = 0, fresh_missed = 0;
  std::vector<double> waits;
  for (auto it = lo; it != hi; ++it) {
    const bool is_new = it->first > prev;
    const bool stays = it->last > depart + cfg.grace;
    if (is_new || it->last > prev + cfg.grace) ++waiting;
    if (stays) ++missed;
    if (is_new) {
      ++fresh;
      if (stays) ++fresh_missed;
    }
    if (!stays && it->last > prev + cfg.grace) waits.push_back(static_cast<double>(it->last - it->first));
  }
  row.raw_waiting = waiting;
  row.raw_missed = missed;
  row.features.waiting_count = theta * waiting;
  row.features.missed_count = theta * missed;
  row.features.wait_q3 = waits.empty() ? 0.0 : stats::quantile(waits, 0.75);
  row.features.wait_sd = stats::stddev(waits);
  row.features.headway = static_cast<double>(depart - prev);
  row.new_arrivals = theta * fresh;
  row.new_missed = theta * fresh_missed;
  return row;
}

/// Features for every estimated departure in the timetable. Departures at a
/// station closer together than `merge_within` are treated as one event.
inline std::vector<FeatureRow> extract_all_features(std::span<const Journey> journeys,
                                                    const clustering::EstimatedTimetable& tt, const ScalingTable& scaling,
                                                    const FeatureConfig& cfg = {}, Seconds merge_within = 0) {
  const auto visits = boarding_visits(journeys);
  std::vector<FeatureRow> out;
  for (StationId s : tt.stations()) {
    std::vector<Seconds> deps;
    for (const auto& [a, d] : tt.events_at(s)) deps.push_back(d);
    std::sort(deps.begin(), deps.end());
    std::vector<Seconds> events;
    for (Seconds d : deps)
      if (events.empty() || d - events.back() > merge_within) events.push_back(d);
    auto it = visits.find(s);
    const std::span<const Visit> v = it == visits.end() ? std::span<const Visit>{} : std::span<const Visit>(it->second);
    for (std::size_t k = 0; k < events.size(); ++k) {
      const std::optional<Seconds> prev = k == 0 ? std::nullopt : std::optional<Seconds>(events[k - 1]);
      out.push_back(extract_features(s, events[k], prev, v, scaling.theta(s, events[k]), cfg));
    }
  }
  return out;
}

/// Device counts X per (station, bin): journeys first seen at their boarding station.
inline std::vector<BinCount> device_counts(std::span<const Journey> journeys, Seconds bin = kScalingBin) {
  std::map<std::pair<StationId, int>, double> acc;
  for (const auto& j : journeys)
    if (!j.stops.empty()) acc[{j.first_station(), time_bin(j.stops.begin()->second.first_seen, bin)}] += 1.0;
  std::vector<BinCount> out;
  for (const auto& [k, c] : acc) out.push_back({k.first, k.second, c});
  return out;
}

inline void write_features_csv(const std::string& path, std::span<const FeatureRow> rows) {
  csv::Writer w(path);
  w.row("station", "depart", "prev_depart", "headway_nominal", "theta", "waiting_count", "missed_count", "wait_q3",
        "wait_sd", "headway", "new_arrivals", "new_missed");
  for (const auto& r : rows)
    w.row(r.station, r.depart, r.prev_depart, r.headway_nominal ? 1 : 0, csv::num(r.theta, 4),
          csv::num(r.features.waiting_count, 3), csv::num(r.features.missed_count, 3), csv::num(r.features.wait_q3, 1),
          csv::num(r.features.wait_sd, 2), csv::num(r.features.headway, 0), csv::num(r.new_arrivals, 3),
          csv::num(r.new_missed, 3));
}

}  // namespace trainsense::dsg

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "trainsense/core/csv.hpp"
#include "trainsense/core/types.hpp"

namespace trainsense::sim {

struct TimetableEntry {
  TrainId train;
  StationId station = 0;
  Seconds arrive = 0;
  Seconds depart = 0;

  friend bool operator==(const TimetableEntry&, const TimetableEntry&) = default;
};

inline TrainId train_label(int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "T%04d", index);
  return buf;
}

/// Ground-truth train movements on one line direction. Entries are stored
/// train by train in dispatch order, stations in line order within a train.
struct GroundTruthTimetable {
  LineTopology line;
  std::vector<TimetableEntry> entries;
  std::vector<std::string> warnings;

  bool empty() const { return entries.empty(); }

  std::vector<TrainId> trains() const {
    std::vector<TrainId> out;
    for (const auto& e : entries)
      if (out.empty() || out.back() != e.train) out.push_back(e.train);
    return out;
  }

  /// Entries of one train, in line order.
  std::vector<TimetableEntry> of_train(const TrainId& id) const {
    std::vector<TimetableEntry> out;
    for (const auto& e : entries)
      if (e.train == id) out.push_back(e);
    return out;
  }

  /// Entries at one station sorted by arrival.
  std::vector<TimetableEntry> at_station(StationId s) const {
    std::vector<TimetableEntry> out;
    for (const auto& e : entries)
      if (e.station == s) out.push_back(e);
    std::stable_sort(out.begin(), out.end(),
                     [](const auto& a, const auto& b) { return a.arrive < b.arrive; });
    return out;
  }

  /// Per-train station-indexed runs, dispatch order.
  std::vector<std::vector<TimetableEntry>> runs() const {
    std::vector<std::vector<TimetableEntry>> out;
    for (const auto& e : entries) {
      if (out.empty() || out.back().front().train != e.train) out.emplace_back();
      out.back().push_back(e);
    }
    return out;
  }
};

/// Nominal operating pattern for one line.
struct ServicePattern {
  Seconds headway = 180;
  Seconds dwell = 30;
  std::vector<Seconds> run_times = {120};  // one per segment (size S-1); a single value is broadcast
  Seconds span_start = 0;
  Seconds span_end = 3600;

  Seconds run_time(std::size_t segment) const {
    if (run_times.empty()) return 0;
    return run_times.size() == 1 ? run_times.front() : run_times.at(segment);
  }
};

/// Dispatch a train every `headway` seconds from the first station, for
/// every dispatch time in [span_start, span_end). A span shorter than one
/// complete run yields an empty timetable and a warning.
inline GroundTruthTimetable generate_timetable(const LineTopology& line, const ServicePattern& p) {
  line.validate();
  if (p.headway <= 0) throw Error("headway must be positive");
  if (p.dwell < 0) throw Error("dwell must be non-negative");
  if (p.run_times.size() > 1 && p.run_times.size() != line.size() - 1)
    throw Error("run_times needs one value per segment");

  GroundTruthTimetable tt;
  tt.line = line;
  const auto n = line.size();
  Seconds full_run = static_cast<Seconds>(n) * p.dwell;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    if (p.run_time(i) < 0) throw Error("run time must be non-negative");
    full_run += p.run_time(i);
  }
  const Seconds span = p.span_end - p.span_start;
  if (span < full_run) {
    tt.warnings.push_back("span shorter than one full run; timetable is empty");
    return tt;
  }

  int index = 0;
  for (Seconds dispatch = p.span_start; dispatch < p.span_end; dispatch += p.headway, ++index) {
    Seconds t = dispatch;
    for (std::size_t i = 0; i < n; ++i) {
      TimetableEntry e{train_label(index), line.stations[i], t, t + p.dwell};
      tt.entries.push_back(e);
      t = e.depart + (i + 1 < n ? p.run_time(i) : 0);
    }
  }
  return tt;
}

struct IncidentSpec {
  StationId station = 0;
  Seconds start = 0;
  Seconds hold = 1800;
  double recovery_factor = 1.0;
  Seconds min_separation = 60;   // between one train's departure and the next's arrival
  Seconds recovery_period = -1;  // stretched spacing after release; <0 means equal to hold
  Seconds headway = 0;           // nominal headway; 0 infers it from dispatch times
};

struct IncidentResult {
  GroundTruthTimetable timetable;
  std::vector<TrainId> held;  // trains that reached the station during the hold
};

/// Re-propagate every train through the line under a platform hold.
///
/// A train arriving at the incident station inside [start, start+hold]
/// departs no earlier than start+hold. Trains never enter a station less than
/// `min_separation` after the previous train left it; a train that cannot
/// enter its next station waits at its current platform. For departures from
/// the incident station during the recovery period the spacing is at least
/// headway * recovery_factor. Afterwards late trains close up at minimum
/// separation until they are back on their nominal times.
inline IncidentResult inject_incident(const GroundTruthTimetable& nominal, const IncidentSpec& spec) {
  const auto& line = nominal.line;
  const int incident_pos = line.position(spec.station);
  if (incident_pos < 0) throw Error("incident station " + std::to_string(spec.station) + " is not on line " + line.line_id);
  if (spec.hold <= 0) throw Error("incident hold must be positive");
  if (spec.recovery_factor < 1.0) throw Error("recovery_factor must be >= 1");

  auto runs = nominal.runs();
  Seconds headway = spec.headway;
  if (headway <= 0 && runs.size() >= 2) headway = runs[1].front().arrive - runs[0].front().arrive;
  const Seconds release = spec.start + spec.hold;
  const Seconds recovery = spec.recovery_period < 0 ? spec.hold : spec.recovery_period;
  const auto stretched = static_cast<Seconds>(std::llround(static_cast<double>(headway) * spec.recovery_factor));

  IncidentResult out;
  out.timetable.line = line;
  out.timetable.warnings = nominal.warnings;
  std::vector<TimetableEntry> prev;  // perturbed times of the previous train
  for (const auto& run : runs) {
    const auto n = run.size();
    std::vector<TimetableEntry> cur = run;
    bool held = false;
    for (std::size_t j = 0; j < n; ++j) {
      const Seconds dwell = run[j].depart - run[j].arrive;
      Seconds arrive = run[j].arrive;
      if (j > 0) arrive = cur[j - 1].depart + (run[j].arrive - run[j - 1].depart);
      if (!prev.empty()) arrive = std::max(arrive, prev[j].depart + spec.min_separation);
      Seconds depart = arrive + dwell;
      if (static_cast<int>(j) == incident_pos) {
        if (arrive >= spec.start && arrive <= release) {
          depart = std::max(depart, release);
          held = true;
        } else if (!prev.empty() && prev[j].depart >= release && prev[j].depart < release + recovery) {
          depart = std::max(depart, prev[j].depart + stretched);
        }
      }
      // Wait at this platform until the next station is clear.
      if (!prev.empty() && j + 1 < n) {
        const Seconds run_time = run[j + 1].arrive - run[j].depart;
        depart = std::max(depart, prev[j + 1].depart + spec.min_separation - run_time);
      }
      cur[j].arrive = arrive;
      cur[j].depart = depart;
    }
    if (held) out.held.push_back(run.front().train);
    for (const auto& e : cur) out.timetable.entries.push_back(e);
    prev = std::move(cur);
  }
  return out;
}

/// Checks ordering invariants; returns a description of the first violation or "".
inline std::string check_timetable(const GroundTruthTimetable& tt) {
  for (const auto& run : tt.runs()) {
    if (run.size() != tt.line.size()) return "train " + run.front().train + " does not cover the line";
    for (std::size_t j = 0; j < run.size(); ++j) {
      if (run[j].station != tt.line.stations[j]) return "train " + run[j].train + " visits stations out of order";
      if (run[j].arrive > run[j].depart) return "train " + run[j].train + " departs before arriving";
      if (j > 0 && run[j].arrive < run[j - 1].depart) return "train " + run[j].train + " runs backwards in time";
    }
  }
  for (auto s : tt.line.stations) {
    auto at = tt.at_station(s);
    for (std::size_t i = 1; i < at.size(); ++i)
      if (at[i].arrive < at[i - 1].depart)
        return "trains overlap at station " + std::to_string(s);
  }
  // no overtaking: station order of trains is the dispatch order everywhere
  auto order = tt.trains();
  for (auto s : tt.line.stations) {
    auto at = tt.at_station(s);
    for (std::size_t i = 0; i < at.size(); ++i)
      if (at[i].train != order[i]) return "overtaking at station " + std::to_string(s);
  }
  return "";
}

inline void write_timetable_csv(const std::string& path, const GroundTruthTimetable& tt) {
  csv::Writer w(path);
  w.row("train", "station", "arrive", "depart");
  for (const auto& e : tt.entries) w.row(e.train, e.station, e.arrive, e.depart);
}

}  // namespace trainsense::sim

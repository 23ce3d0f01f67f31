#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "trainsense/clustering/pipeline.hpp"
#include "trainsense/core/csv.hpp"
#include "trainsense/dsg/features.hpp"
#include "trainsense/dsg/hierarchy.hpp"
#include "trainsense/dsg/scaling.hpp"
#include "trainsense/dsg/window.hpp"
#include "trainsense/eval/metrics.hpp"
#include "trainsense/eval/scenario.hpp"

namespace trainsense::eval {

/// Offset between simulated days when they are scored together.
inline constexpr Seconds kDaySeconds = 86400;

/// One estimated departure event with its features and, when it could be
/// matched to a true departure, the true left-behind counts.
struct LabelledEvent {
  dsg::FeatureRow row;
  std::optional<TrainId> train;
  int left_behind = 0;
  int repeat_left = 0;
};

struct DayRecord {
  int day = 0;
  std::uint64_t seed = 0;
  double demand_scale = 1.0;
  ScenarioData data;
  clustering::EstimatedTimetable timetable;
  std::vector<LabelledEvent> events;
  std::size_t unmatched_events = 0;
};

/// Nearest true departure at the same station within `window`.
inline std::vector<LabelledEvent> label_events(std::span<const dsg::FeatureRow> rows,
                                               std::span<const sim::DepartureStat> truth, Seconds window,
                                               std::size_t* unmatched = nullptr) {
  std::map<StationId, std::vector<const sim::DepartureStat*>> by_station;
  for (const auto& d : truth) by_station[d.station].push_back(&d);
  for (auto& [s, v] : by_station)
    std::sort(v.begin(), v.end(), [](const auto* a, const auto* b) { return a->depart < b->depart; });
  std::vector<LabelledEvent> out;
  std::size_t missing = 0;
  for (const auto& r : rows) {
    LabelledEvent e;
    e.row = r;
    const sim::DepartureStat* best = nullptr;
    if (auto it = by_station.find(r.station); it != by_station.end())
      for (const auto* d : it->second) {
        const Seconds gap = std::abs(d->depart - r.depart);
        if (gap <= window && (!best || gap < std::abs(best->depart - r.depart))) best = d;
      }
    if (best) {
      e.train = best->train;
      e.left_behind = best->left_behind;
      e.repeat_left = best->repeat_left;
    } else {
      ++missing;
    }
    out.push_back(std::move(e));
  }
  if (unmatched) *unmatched = missing;
  return out;
}

inline std::vector<dsg::Sample> training_samples(std::span<const LabelledEvent> events, const std::string& line) {
  std::vector<dsg::Sample> out;
  for (const auto& e : events) {
    if (!e.train) continue;
    dsg::Sample s;
    s.station = e.row.station;
    s.line = line;
    s.time = e.row.depart;
    s.features = e.row.features;
    s.label = e.left_behind > 0;
    s.severe = e.repeat_left > 0;
    out.push_back(s);
  }
  return out;
}

/// Features for one day's journeys: the spectral timetable supplies the
/// departure events, gate counts update the scaling table first.
inline std::pair<clustering::EstimatedTimetable, std::vector<dsg::FeatureRow>> day_features(
    const Scenario& s, std::span<const Journey> journeys, std::span<const dsg::BinCount> gate, dsg::ScalingTable& scaling) {
  auto tt = clustering::run_spectral_pipeline(journeys, s.spectral).timetable;
  const auto x = dsg::device_counts(journeys);
  scaling.update(gate, x);
  auto rows = dsg::extract_all_features(journeys, tt, scaling, s.dsg.features);
  return {std::move(tt), std::move(rows)};
}

inline double day_demand_scale(const Scenario& s, std::uint64_t seed, int day) {
  if (s.dsg.demand_variation <= 0) return 1.0;
  std::mt19937_64 rng(derive_seed(seed, 1000 + static_cast<std::uint64_t>(day)));
  std::uniform_real_distribution<double> u(1.0 - s.dsg.demand_variation, 1.0 + s.dsg.demand_variation);
  return u(rng);
}

inline DayRecord simulate_day(const Scenario& s, std::uint64_t seed, int day, dsg::ScalingTable& scaling) {
  DayRecord d;
  d.day = day;
  d.seed = derive_seed(seed, 100 + static_cast<std::uint64_t>(day));
  d.demand_scale = day_demand_scale(s, seed, day);
  d.data = simulate_scenario(s, d.seed, d.demand_scale);
  auto [tt, rows] = day_features(s, d.data.journeys, d.data.gate_counts, scaling);
  d.timetable = std::move(tt);
  d.events = label_events(rows, d.data.sim.departures, s.dsg.match_window, &d.unmatched_events);
  return d;
}

/// Window-level comparison of flagged events against simulated ground truth.
struct WindowScore {
  eval::ClassificationReport report;
  std::size_t windows = 0;
};

using EventFlags = std::vector<std::pair<const LabelledEvent*, dsg::Prediction>>;

/// A (station, window) is predicted positive when any of its events is
/// flagged. Every window with someone intending to board is scored.
inline WindowScore score_windows(const EventFlags& flags, std::span<const sim::DsgWindowLabel> truth,
                                 Seconds window = sim::kDsgWindow, std::optional<StationId> only = std::nullopt) {
  std::map<std::pair<StationId, Seconds>, bool> predicted;
  for (const auto& [e, p] : flags)
    if (p.dsg_flag) predicted[{e->row.station, dsg::window_start(e->row.depart, window)}] = true;
  std::vector<bool> pred, lab;
  for (const auto& w : truth) {
    if (only && w.station != *only) continue;
    if (w.intending <= 0) continue;
    pred.push_back(predicted.count({w.station, w.window_start}) > 0);
    lab.push_back(w.positive);
  }
  WindowScore s;
  s.windows = lab.size();
  s.report = classification_report(pred, lab);
  return s;
}

/// Estimated DSG percentage per window: new arrivals intend to board, and
/// those still present after a flagged departure count as left behind.
inline std::vector<dsg::WindowEstimate> estimate_dsg_percentage(const EventFlags& flags, Seconds window = sim::kDsgWindow) {
  std::vector<dsg::EventEstimate> ev;
  for (const auto& [e, p] : flags)
    ev.push_back({e->row.station, e->row.depart, e->row.new_arrivals, p.dsg_flag ? e->row.new_missed : 0.0, p.dsg_flag});
  return dsg::window_dsg_percentage(ev, window);
}

struct StationDsgError {
  StationId station = 0;
  std::size_t windows = 0;
  std::optional<double> mae;  // percentage points
};

inline std::vector<StationDsgError> dsg_percentage_mae(std::span<const dsg::WindowEstimate> est,
                                                       std::span<const sim::DsgWindowLabel> truth) {
  std::map<std::pair<StationId, Seconds>, double> t;
  for (const auto& w : truth)
    if (w.intending > 0) t[{w.station, w.window_start}] = w.dsg_pct;
  std::map<StationId, std::pair<double, std::size_t>> acc;
  for (const auto& e : est) {
    auto it = t.find({e.station, e.window_start});
    if (it == t.end()) continue;
    auto& a = acc[e.station];
    a.first += std::abs(e.dsg_pct - it->second);
    ++a.second;
  }
  std::vector<StationDsgError> out;
  for (const auto& [s, a] : acc)
    out.push_back({s, a.second, a.second ? std::optional<double>(a.first / static_cast<double>(a.second)) : std::nullopt});
  return out;
}

struct DsgReport {
  std::string scenario;
  std::uint64_t seed = 0;
  std::size_t train_samples = 0;
  std::size_t train_positives = 0;
  std::size_t test_events = 0;
  std::size_t unmatched_events = 0;
  std::vector<std::string> levels;  // trained hierarchy nodes
  WindowScore hierarchy;            // most specific model per station
  WindowScore network;              // network model everywhere
  std::map<StationId, WindowScore> per_station_hierarchy;
  std::map<StationId, WindowScore> per_station_network;
  std::vector<StationDsgError> dsg_mae;
  std::optional<double> median_mae;
  std::optional<double> missed_correlation;  // raw missed count vs true left-behind
};

struct DsgExperiment {
  dsg::ModelHierarchy model;
  std::vector<DayRecord> train;
  std::vector<DayRecord> test;
  DsgReport report;
};

inline std::optional<double> median_of(std::vector<double> v) {
  if (v.empty()) return std::nullopt;
  return stats::median(v);
}

/// Predictions for the events of the given days with the hierarchy, or with
/// the network model only.
inline EventFlags flag_events(const dsg::ModelHierarchy& h, std::span<const DayRecord> days, bool network_only) {
  EventFlags out;
  for (const auto& d : days)
    for (const auto& e : d.events)
      out.emplace_back(&e, network_only ? dsg::predict_network(h, e.row.features) : dsg::predict(h, e.row.features, e.row.station));
  return out;
}

inline std::vector<sim::DsgWindowLabel> window_truth(std::span<const DayRecord> days) {
  std::vector<sim::DsgWindowLabel> out;
  for (const auto& d : days)
    for (auto w : d.data.sim.windows) {
      w.window_start += static_cast<Seconds>(d.day) * kDaySeconds;
      out.push_back(w);
    }
  return out;
}

/// Days are scored together, so each day's events and windows are shifted by
/// whole days to keep their keys apart.
inline std::vector<DayRecord> shift_days(std::vector<DayRecord> days) {
  for (auto& d : days)
    for (auto& e : d.events) e.row.depart += static_cast<Seconds>(d.day) * kDaySeconds;
  return days;
}

inline void score_report(DsgReport& r, const dsg::ModelHierarchy& h, std::span<const DayRecord> test,
                         std::span<const StationId> stations) {
  const auto truth = window_truth(test);
  const auto hf = flag_events(h, test, false);
  const auto nf = flag_events(h, test, true);
  r.hierarchy = score_windows(hf, truth);
  r.network = score_windows(nf, truth);
  for (StationId s : stations) {
    r.per_station_hierarchy[s] = score_windows(hf, truth, sim::kDsgWindow, s);
    r.per_station_network[s] = score_windows(nf, truth, sim::kDsgWindow, s);
  }
  r.dsg_mae = dsg_percentage_mae(estimate_dsg_percentage(hf), truth);
  std::vector<double> maes;
  for (const auto& m : r.dsg_mae)
    if (m.mae) maes.push_back(*m.mae);
  r.median_mae = median_of(maes);
  r.test_events = hf.size();
}

inline std::optional<double> missed_correlation(std::span<const DayRecord> days) {
  std::vector<double> a, b;
  for (const auto& d : days)
    for (const auto& e : d.events)
      if (e.train) {
        a.push_back(static_cast<double>(e.row.raw_missed));
        b.push_back(static_cast<double>(e.left_behind));
      }
  return stats::pearson(a, b);
}

/// Train on the first `train_days` simulated days, test on the next
/// `test_days`. Scaling factors are updated online across all days.
inline DsgExperiment run_dsg_experiment(const Scenario& s, std::uint64_t seed) {
  if (s.dsg.train_days < 1 || s.dsg.test_days < 1) throw Error("DSG experiment needs at least one train and one test day");
  DsgExperiment ex;
  dsg::ScalingTable scaling(s.dsg.scaling_alpha);
  for (int d = 0; d < s.dsg.train_days + s.dsg.test_days; ++d) {
    auto day = simulate_day(s, seed, d, scaling);
    (d < s.dsg.train_days ? ex.train : ex.test).push_back(std::move(day));
  }
  ex.train = shift_days(std::move(ex.train));
  ex.test = shift_days(std::move(ex.test));

  std::vector<dsg::Sample> samples;
  for (const auto& d : ex.train) {
    auto part = training_samples(d.events, s.line.line_id);
    samples.insert(samples.end(), part.begin(), part.end());
  }
  ex.model = dsg::train_hierarchy(samples, s.dsg.hierarchy);

  auto& r = ex.report;
  r.scenario = s.name;
  r.seed = seed;
  r.train_samples = samples.size();
  r.train_positives = static_cast<std::size_t>(std::count_if(samples.begin(), samples.end(), [](const auto& x) { return x.label; }));
  r.levels.push_back(ex.model.network.level);
  for (const auto& [l, m] : ex.model.lines) r.levels.push_back(m.level);
  for (const auto& [st, m] : ex.model.stations) r.levels.push_back(m.level);
  for (const auto& d : ex.test) r.unmatched_events += d.unmatched_events;
  score_report(r, ex.model, ex.test, s.line.stations);
  r.missed_correlation = missed_correlation(ex.test);
  return ex;
}

/// Stable device hash for reproducible down-sampling: FNV-1a, then a
/// splitmix finaliser so the high bits depend on every character.
inline std::uint64_t device_hash(const std::string& s, std::uint64_t seed) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return derive_seed(h, seed);
}

/// Keep a device when its hash falls below `level`; the kept set grows
/// monotonically with the level.
inline std::vector<ObservationRecord> downsample_devices(std::span<const ObservationRecord> records, double level,
                                                        std::uint64_t seed) {
  std::vector<ObservationRecord> out;
  for (const auto& r : records) {
    const double u = static_cast<double>(device_hash(r.device, seed) >> 11) * 0x1.0p-53;
    if (u < level) out.push_back(r);
  }
  return out;
}

struct RobustnessPoint {
  double level = 0.0;
  std::size_t records = 0;
  std::size_t events = 0;
  WindowScore score;
  bool degenerate = false;  // nothing left to extract features from
};

/// The hierarchy trained at full sampling is applied to test days whose
/// devices are down-sampled to each level. Journeys, timetable and scaling
/// factors are all recomputed from the reduced data.
inline std::vector<RobustnessPoint> run_robustness_sweep(const Scenario& s, const DsgExperiment& ex, std::uint64_t seed) {
  std::vector<RobustnessPoint> out;
  for (double level : s.dsg.robustness_levels) {
    RobustnessPoint p;
    p.level = level;
    std::vector<DayRecord> days;
    if (level >= 1.0) {
      days = ex.test;
      for (const auto& d : days) p.records += d.data.observed.records.size();
    } else {
      dsg::ScalingTable scaling(s.dsg.scaling_alpha);
      for (const auto& d : ex.train) scaling.update(d.data.gate_counts, dsg::device_counts(vectorize_journeys(
                                                                            downsample_devices(d.data.observed.records, level, seed),
                                                                            s.gap_threshold, s.line).journeys));
      for (const auto& src : ex.test) {
        DayRecord d;
        d.day = src.day;
        d.seed = src.seed;
        d.data.sim = src.data.sim;
        const auto kept = downsample_devices(src.data.observed.records, level, seed);
        p.records += kept.size();
        auto journeys = vectorize_journeys(kept, s.gap_threshold, s.line).journeys;
        if (!journeys.empty()) {
          auto [tt, rows] = day_features(s, journeys, src.data.gate_counts, scaling);
          d.events = label_events(rows, src.data.sim.departures, s.dsg.match_window, &d.unmatched_events);
        }
        days.push_back(std::move(d));
      }
      for (auto& d : days)
        for (auto& e : d.events) e.row.depart += static_cast<Seconds>(d.day) * kDaySeconds;
    }
    for (const auto& d : days) p.events += d.events.size();
    p.degenerate = p.events == 0;
    p.score = score_windows(flag_events(ex.model, days, false), window_truth(days));
    out.push_back(p);
  }
  return out;
}

inline void write_robustness_csv(const std::string& path, std::span<const RobustnessPoint> curve) {
  csv::Writer w(path);
  w.row("sampling_level", "records", "events", "windows", "precision", "recall", "accuracy", "f1", "degenerate");
  auto opt = [](const std::optional<double>& v) { return v ? csv::num(*v, 6) : std::string(); };
  for (const auto& p : curve)
    w.row(csv::num(p.level, 2), p.records, p.events, p.score.windows, opt(p.score.report.precision),
          opt(p.score.report.recall), opt(p.score.report.accuracy), opt(p.score.report.f1), p.degenerate ? 1 : 0);
}

inline json to_json(const ClassificationReport& r) {
  auto o = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  return {{"tp", r.tp},           {"fp", r.fp},         {"tn", r.tn},           {"fn", r.fn},
          {"precision", o(r.precision)}, {"recall", o(r.recall)}, {"accuracy", o(r.accuracy)}, {"f1", o(r.f1)}};
}

inline json to_json(const WindowScore& w) {
  auto j = to_json(w.report);
  j["windows"] = w.windows;
  return j;
}

inline json to_json(const DsgReport& r) {
  json j;
  j["scenario"] = r.scenario;
  j["seed"] = r.seed;
  j["train_samples"] = r.train_samples;
  j["train_positives"] = r.train_positives;
  j["test_events"] = r.test_events;
  j["unmatched_events"] = r.unmatched_events;
  j["models"] = r.levels;
  j["hierarchy"] = to_json(r.hierarchy);
  j["network"] = to_json(r.network);
  auto per = json::array();
  for (const auto& [s, w] : r.per_station_hierarchy) {
    json e{{"station", s}, {"hierarchy", to_json(w)}, {"network", to_json(r.per_station_network.at(s))}};
    for (const auto& m : r.dsg_mae)
      if (m.station == s) e["dsg_mae_pct"] = m.mae ? json(*m.mae) : json(nullptr);
    per.push_back(e);
  }
  j["per_station"] = per;
  j["median_dsg_mae_pct"] = r.median_mae ? json(*r.median_mae) : json(nullptr);
  j["missed_count_correlation"] = r.missed_correlation ? json(*r.missed_correlation) : json(nullptr);
  return j;
}

inline json to_json(const RobustnessPoint& p) {
  auto j = to_json(p.score);
  j["sampling_level"] = p.level;
  j["records"] = p.records;
  j["events"] = p.events;
  j["degenerate"] = p.degenerate;
  return j;
}

}  // namespace trainsense::eval

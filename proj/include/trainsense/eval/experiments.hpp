#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <vector>

#include "trainsense/clustering/baseline.hpp"
#include "trainsense/clustering/pipeline.hpp"
#include "trainsense/eval/metrics.hpp"
#include "trainsense/eval/scenario.hpp"

namespace trainsense::eval {

struct StationMetrics {
  StationId station = 0;
  std::size_t truths = 0;
  std::size_t matched = 0;
  std::optional<double> hit_rate;
  std::optional<double> rmse;
};

struct MethodReport {
  std::string method;
  std::size_t truths = 0;
  std::size_t matched = 0;
  std::optional<double> hit_rate;
  std::optional<double> rmse;  // minutes, over the same matched pairs
  std::optional<double> ari;   // journeys with a known train only
  int trains = 0;
  double seconds = 0.0;
  std::vector<StationMetrics> per_station;
};

struct MovementReport {
  std::string scenario;
  std::uint64_t seed = 0;
  std::size_t journeys = 0;
  int true_trains = 0;
  MethodReport spectral;
  MethodReport baseline;
};

inline bool in_peak(Seconds t, const std::vector<PeakWindow>& peaks, Seconds margin = 0) {
  if (peaks.empty()) return true;
  for (const auto& p : peaks)
    if (t >= p.start - margin && t < p.end + margin) return true;
  return false;
}

/// Hit rate and RMSE of estimated arrivals against the true timetable, per
/// station and pooled, restricted to true arrivals inside the peak windows.
inline MethodReport score_timetable(const clustering::EstimatedTimetable& est, const sim::GroundTruthTimetable& truth,
                                    const EvaluationConfig& cfg) {
  MethodReport r;
  r.trains = static_cast<int>(est.trips.size());
  std::vector<std::pair<Seconds, Seconds>> pooled;
  for (StationId s : truth.line.stations) {
    std::vector<Seconds> t, e;
    for (const auto& entry : truth.at_station(s))
      if (in_peak(entry.arrive, cfg.peak_windows)) t.push_back(entry.arrive);
    for (Seconds a : est.arrivals_at(s))
      if (in_peak(a, cfg.peak_windows, cfg.hit_window)) e.push_back(a);
    const auto m = match_arrivals(e, t, cfg.hit_window);
    StationMetrics sm;
    sm.station = s;
    sm.truths = t.size();
    sm.matched = m.pairs.size();
    sm.hit_rate = hit_rate(m);
    sm.rmse = rmse_minutes(m.pairs);
    r.per_station.push_back(sm);
    r.truths += sm.truths;
    r.matched += sm.matched;
    pooled.insert(pooled.end(), m.pairs.begin(), m.pairs.end());
  }
  if (r.truths > 0) r.hit_rate = static_cast<double>(r.matched) / static_cast<double>(r.truths);
  r.rmse = rmse_minutes(pooled);
  return r;
}

inline std::optional<double> known_train_ari(std::span<const int> predicted, std::span<const int> truth) {
  std::vector<int> a, b;
  for (std::size_t i = 0; i < truth.size(); ++i)
    if (truth[i] >= 0) {
      a.push_back(predicted[i]);
      b.push_back(truth[i]);
    }
  if (a.empty()) return std::nullopt;
  return adjusted_rand_index(a, b);
}

inline clustering::PipelineResult run_spectral(const Scenario& s, std::span<const Journey> journeys) {
  return clustering::run_spectral_pipeline(journeys, s.spectral);
}

inline clustering::BaselineResult run_baseline(const Scenario& s, std::span<const Journey> journeys) {
  return clustering::baseline_cluster(journeys, s.baseline);
}

/// Simulate, observe, run both clustering paths and score them.
inline MovementReport run_movement_experiment(const Scenario& s, std::uint64_t seed) {
  using clock = std::chrono::steady_clock;
  MovementReport rep;
  rep.scenario = s.name;
  rep.seed = seed;
  const auto data = simulate_scenario(s, seed);
  rep.journeys = data.journeys.size();
  rep.true_trains = static_cast<int>(data.timetable.trains().size());

  auto t0 = clock::now();
  const auto spectral = run_spectral(s, data.journeys);
  const double spectral_s = std::chrono::duration<double>(clock::now() - t0).count();
  rep.spectral = score_timetable(spectral.timetable, data.timetable, s.evaluation);
  rep.spectral.method = "spectral";
  rep.spectral.seconds = spectral_s;
  rep.spectral.ari = known_train_ari(spectral.labeling.labels, data.truth);

  t0 = clock::now();
  const auto baseline = run_baseline(s, data.journeys);
  const double baseline_s = std::chrono::duration<double>(clock::now() - t0).count();
  rep.baseline = score_timetable(baseline.timetable, data.timetable, s.evaluation);
  rep.baseline.method = "baseline";
  rep.baseline.seconds = baseline_s;
  return rep;
}

inline json to_json(const MethodReport& m) {
  json j;
  j["method"] = m.method;
  j["hit_rate"] = m.hit_rate ? json(*m.hit_rate) : json(nullptr);
  j["rmse_min"] = m.rmse ? json(*m.rmse) : json(nullptr);
  j["ari"] = m.ari ? json(*m.ari) : json(nullptr);
  j["truths"] = m.truths;
  j["matched"] = m.matched;
  j["trains"] = m.trains;
  auto per = json::array();
  for (const auto& s : m.per_station)
    per.push_back({{"station", s.station},
                   {"truths", s.truths},
                   {"matched", s.matched},
                   {"hit_rate", s.hit_rate ? json(*s.hit_rate) : json(nullptr)},
                   {"rmse_min", s.rmse ? json(*s.rmse) : json(nullptr)}});
  j["per_station"] = per;
  return j;
}

inline json to_json(const MovementReport& r) {
  return {{"scenario", r.scenario}, {"seed", r.seed},           {"journeys", r.journeys},
          {"true_trains", r.true_trains}, {"spectral", to_json(r.spectral)}, {"baseline", to_json(r.baseline)}};
}

}  // namespace trainsense::eval

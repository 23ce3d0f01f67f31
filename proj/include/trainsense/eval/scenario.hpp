#pragma once

#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "trainsense/clustering/baseline.hpp"
#include "trainsense/clustering/pipeline.hpp"
#include "trainsense/core/vectorize.hpp"
#include "trainsense/dsg/features.hpp"
#include "trainsense/dsg/hierarchy.hpp"
#include "trainsense/sim/commuters.hpp"
#include "trainsense/sim/observe.hpp"
#include "trainsense/sim/timetable.hpp"

namespace trainsense::eval {

using nlohmann::json;

struct PeakWindow {
  Seconds start = 0;
  Seconds end = 0;
};

struct EvaluationConfig {
  Seconds hit_window = 60;
  std::vector<PeakWindow> peak_windows;  // empty means the whole span
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
};

struct DsgExperimentConfig {
  int train_days = 8;
  int test_days = 4;
  dsg::FeatureConfig features;
  Seconds match_window = 90;  // estimated departure to true departure
  double scaling_alpha = 0.3;
  dsg::HierarchyConfig hierarchy;
  std::vector<double> robustness_levels = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  // day-to-day variation of demand (multiplicative, uniform in [1 - v, 1 + v])
  double demand_variation = 0.0;
};

/// Everything needed to simulate and analyse one line.
struct Scenario {
  std::string name = "scenario";
  LineTopology line = LineTopology::contiguous("L1", 10);
  sim::ServicePattern service;
  sim::DemandConfig demand;
  int capacity = 1000;
  sim::SensingConfig sensing;
  std::optional<sim::IncidentSpec> incident;
  Seconds gap_threshold = kDefaultGapThreshold;
  clustering::SpectralPipelineConfig spectral;
  clustering::BaselineOptions baseline;
  EvaluationConfig evaluation;
  DsgExperimentConfig dsg;
};

namespace detail {

template <typename T>
void get_to(const json& j, const char* key, T& out) {
  if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<T>();
}

inline sim::TimeProfile parse_profile(const json& j) {
  sim::TimeProfile p;
  for (const auto& piece : j) p.pieces.push_back({piece.at("start").get<Seconds>(), piece.at("end").get<Seconds>(), piece.at("factor").get<double>()});
  return p;
}

inline std::map<StationId, double> parse_station_map(const json& j) {
  std::map<StationId, double> out;
  for (const auto& [k, v] : j.items()) out[static_cast<StationId>(std::stol(k))] = v.get<double>();
  return out;
}

inline std::vector<double> number_or_list(const json& j) {
  if (j.is_array()) return j.get<std::vector<double>>();
  return {j.get<double>()};
}

}  // namespace detail

/// Parse a scenario document; absent keys keep their defaults.
inline Scenario parse_scenario(const json& j) {
  using detail::get_to;
  Scenario s;
  get_to(j, "name", s.name);
  if (j.contains("line")) {
    const auto& l = j["line"];
    std::string id = l.value("id", "L1");
    if (l.contains("stations") && l["stations"].is_array()) {
      s.line.line_id = id;
      s.line.stations = l["stations"].get<std::vector<StationId>>();
    } else {
      s.line = LineTopology::contiguous(id, l.value("stations", 10));
    }
    if (l.value("direction", "up") == "down") s.line.direction = Direction::down;
    s.line.validate();
  }
  if (j.contains("timetable")) {
    const auto& t = j["timetable"];
    get_to(t, "headway_s", s.service.headway);
    get_to(t, "dwell_s", s.service.dwell);
    if (t.contains("run_s")) {
      s.service.run_times.clear();
      for (double v : detail::number_or_list(t["run_s"])) s.service.run_times.push_back(static_cast<Seconds>(v));
    }
    if (t.contains("span")) {
      const auto span = t["span"].get<std::vector<Seconds>>();
      if (span.size() != 2) throw Error("timetable.span must be [start, end]");
      s.service.span_start = span[0];
      s.service.span_end = span[1];
    }
  }
  if (j.contains("demand")) {
    const auto& d = j["demand"];
    if (d.contains("rate_per_s")) s.demand.rate_per_s = detail::number_or_list(d["rate_per_s"]);
    if (d.contains("profile")) s.demand.profile = detail::parse_profile(d["profile"]);
    get_to(d, "lead_s", s.demand.lead);
    get_to(d, "tail_s", s.demand.tail);
  }
  get_to(j, "capacity", s.capacity);
  if (j.contains("sensing")) {
    const auto& o = j["sensing"];
    get_to(o, "sampling", s.sensing.base_sampling);
    if (o.contains("station_factor")) s.sensing.station_factor = detail::parse_station_map(o["station_factor"]);
    if (o.contains("modulation")) s.sensing.modulation = detail::parse_profile(o["modulation"]);
    get_to(o, "jitter_sd_s", s.sensing.timestamp_jitter_sd);
    get_to(o, "dropout_tail", s.sensing.dropout_tail);
    get_to(o, "id_split", s.sensing.id_split);
    get_to(o, "emit_interval_s", s.sensing.emit_interval);
    if (o.contains("idle_rate")) {
      if (o["idle_rate"].is_object()) {
        s.sensing.idle_rate = detail::parse_station_map(o["idle_rate"]);
      } else {
        const double r = o["idle_rate"].get<double>();
        for (StationId st : s.line.stations) s.sensing.idle_rate[st] = r;
      }
    }
    get_to(o, "idle_stay_s", s.sensing.idle_stay);
    s.sensing.validate();
  }
  if (j.contains("incident") && !j["incident"].is_null()) {
    const auto& i = j["incident"];
    sim::IncidentSpec spec;
    spec.station = i.at("station").get<StationId>();
    spec.start = i.at("start").get<Seconds>();
    get_to(i, "hold_s", spec.hold);
    get_to(i, "recovery_factor", spec.recovery_factor);
    get_to(i, "min_separation_s", spec.min_separation);
    get_to(i, "recovery_period_s", spec.recovery_period);
    get_to(i, "headway_s", spec.headway);
    s.incident = spec;
  }
  get_to(j, "gap_threshold_s", s.gap_threshold);
  if (j.contains("similarity")) {
    const auto& m = j["similarity"];
    auto& p = s.spectral.similarity;
    if (m.contains("kind")) p.kind = similarity::kind_from_string(m["kind"].get<std::string>());
    get_to(m, "two_sigma_sq", p.two_sigma_sq);
    get_to(m, "tau_s", p.tau);
    get_to(m, "min_weight", p.min_weight);
    if (m.contains("component")) p.component = time_component_from_string(m["component"].get<std::string>());
    p.validate();
  }
  if (j.contains("clustering")) {
    const auto& c = j["clustering"];
    auto& p = s.spectral;
    get_to(c, "window_s", p.window);
    get_to(c, "stride_s", p.stride);
    if (c.contains("k") && !c["k"].is_null() && !(c["k"].is_string() && c["k"] == "auto")) p.k = c["k"].get<int>();
    get_to(c, "k_max", p.k_max);
    if (c.value("k_max_from_headway", true)) p.nominal_headway = s.service.headway;
    get_to(c, "knn", p.knn);
    get_to(c, "agreement", p.agreement);
    get_to(c, "quantile_floor", p.quantile_floor);
    get_to(c, "prune", p.prune);
    get_to(c, "dedup_overlap", p.dedup_overlap);
    if (c.contains("reconcile_gap_s")) {
      if (c["reconcile_gap_s"].is_null()) p.reconcile_gap.reset();
      else p.reconcile_gap = c["reconcile_gap_s"].get<Seconds>();
    }
    get_to(c, "q_lo", p.envelope.q_lo);
    get_to(c, "q_hi", p.envelope.q_hi);
    get_to(c, "seed", p.seed);
    p.validate();
  } else {
    s.spectral.nominal_headway = s.service.headway;
  }
  if (j.contains("baseline")) {
    const auto& b = j["baseline"];
    get_to(b, "eps_s", s.baseline.eps);
    get_to(b, "min_pts", s.baseline.min_pts);
    get_to(b, "tolerance_s", s.baseline.tolerance);
    if (b.contains("component")) s.baseline.component = time_component_from_string(b["component"].get<std::string>());
  }
  s.baseline.envelope = s.spectral.envelope;
  if (j.contains("evaluation")) {
    const auto& e = j["evaluation"];
    get_to(e, "hit_window_s", s.evaluation.hit_window);
    if (e.contains("peak_windows"))
      for (const auto& w : e["peak_windows"]) {
        const auto v = w.get<std::vector<Seconds>>();
        if (v.size() != 2 || v[1] <= v[0]) throw Error("peak windows must be [start, end] with end > start");
        s.evaluation.peak_windows.push_back({v[0], v[1]});
      }
    get_to(e, "seeds", s.evaluation.seeds);
  }
  if (j.contains("dsg")) {
    const auto& d = j["dsg"];
    auto& c = s.dsg;
    get_to(d, "train_days", c.train_days);
    get_to(d, "test_days", c.test_days);
    get_to(d, "grace_s", c.features.grace);
    c.features.nominal_headway = s.service.headway;
    get_to(d, "lookback_s", c.features.lookback);
    get_to(d, "match_window_s", c.match_window);
    get_to(d, "scaling_alpha", c.scaling_alpha);
    get_to(d, "demand_variation", c.demand_variation);
    get_to(d, "robustness_levels", c.robustness_levels);
    auto& h = c.hierarchy;
    get_to(d, "min_positive_samples", h.min_positive_samples);
    get_to(d, "winsor_percentile", h.winsor_percentile);
    get_to(d, "cutoff_grid", h.cutoff_grid);
    get_to(d, "select_features", h.select_features);
    get_to(d, "folds", h.folds);
    get_to(d, "epsilon", h.epsilon);
    get_to(d, "severity", h.severity);
    get_to(d, "child_l2", h.child_l2);
    get_to(d, "cv_cutoff", h.cv_cutoff);
    get_to(d, "bootstrap_rounds", h.logistic.bootstrap_rounds);
    get_to(d, "l2", h.logistic.l2);
    get_to(d, "balance", h.logistic.balance);
    get_to(d, "seed", h.logistic.seed);
  } else {
    s.dsg.features.nominal_headway = s.service.headway;
  }
  return s;
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config '" + path + "'");
  try {
    return parse_scenario(json::parse(in));
  } catch (const json::exception& e) {
    throw Error("malformed config '" + path + "': " + e.what());
  }
}

/// SplitMix64 step; derives independent stream seeds from one run seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// One simulated day with its observations and ground truth.
struct ScenarioData {
  sim::GroundTruthTimetable nominal;
  sim::GroundTruthTimetable timetable;  // after the incident, if any
  std::vector<TrainId> held;
  sim::SimulationResult sim;
  sim::ObservationResult observed;
  std::vector<Journey> journeys;
  std::size_t rejected_records = 0;
  std::vector<int> truth;  // per journey: index into timetable.trains(), -1 if none
  std::vector<dsg::BinCount> gate_counts;
};

/// Ground-truth train index of each journey (commuter's boarded train).
inline std::vector<int> journey_truth(std::span<const Journey> journeys, const ScenarioData& d) {
  std::map<TrainId, int> train_index;
  const auto trains = d.timetable.trains();
  for (std::size_t i = 0; i < trains.size(); ++i) train_index[trains[i]] = static_cast<int>(i);
  std::vector<int> out;
  out.reserve(journeys.size());
  for (const auto& j : journeys) {
    int t = -1;
    auto it = d.observed.device_commuter.find(j.device);
    if (it != d.observed.device_commuter.end() && it->second >= 0) {
      const auto& c = d.sim.commuters[static_cast<std::size_t>(it->second)];
      if (c.boarded_train) t = train_index.at(*c.boarded_train);
    }
    out.push_back(t);
  }
  return out;
}

/// Fare-gate entries Y per (station, bin): commuters reaching their origin platform.
inline std::vector<dsg::BinCount> gate_counts(std::span<const sim::Commuter> commuters, Seconds bin = dsg::kScalingBin) {
  std::map<std::pair<StationId, int>, double> acc;
  for (const auto& c : commuters) acc[{c.origin, dsg::time_bin(c.platform_arrival, bin)}] += 1.0;
  std::vector<dsg::BinCount> out;
  for (const auto& [k, v] : acc) out.push_back({k.first, k.second, v});
  return out;
}

/// Simulate timetable, demand, boarding and sensing for one seed.
inline ScenarioData simulate_scenario(const Scenario& s, std::uint64_t seed, double demand_scale = 1.0) {
  ScenarioData d;
  d.nominal = sim::generate_timetable(s.line, s.service);
  if (d.nominal.empty()) throw Error("scenario '" + s.name + "' produced no trains: " +
                                     (d.nominal.warnings.empty() ? std::string("empty span") : d.nominal.warnings.front()));
  d.timetable = d.nominal;
  if (s.incident) {
    auto inc = sim::inject_incident(d.nominal, *s.incident);
    d.timetable = std::move(inc.timetable);
    d.held = std::move(inc.held);
  }
  auto demand = s.demand;
  for (auto& r : demand.rate_per_s) r *= demand_scale;
  d.sim = sim::simulate_commuters(d.timetable, demand, s.capacity, derive_seed(seed, 1));
  d.observed = sim::observe(d.sim.commuters, d.timetable, s.sensing, derive_seed(seed, 2));
  auto vec = vectorize_journeys(d.observed.records, s.gap_threshold, s.line);
  d.journeys = std::move(vec.journeys);
  d.rejected_records = vec.rejected;
  d.truth = journey_truth(d.journeys, d);
  d.gate_counts = gate_counts(d.sim.commuters);
  return d;
}

}  // namespace trainsense::eval

#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "trainsense/core/types.hpp"
#include "trainsense/sim/commuters.hpp"

namespace trainsense::sim {

/// Noise channels of the passive sensing layer.
struct SensingConfig {
  double base_sampling = 1.0;
  std::map<StationId, double> station_factor;  // missing stations use 1
  TimeProfile modulation;                      // multiplies sampling by visit start time
  double timestamp_jitter_sd = 0.0;
  double dropout_tail = 0.0;  // probability a visit loses its trailing records
  double id_split = 0.0;      // probability the device id changes once mid-journey
  double emit_interval = 20.0;  // mean seconds between probe records inside a visit
  std::map<StationId, double> idle_rate;  // non-travelling devices appearing per second
  double idle_stay = 900.0;               // mean idle dwell, seconds

  double sampling(StationId s, Seconds t) const {
    double f = base_sampling * modulation.at(t);
    if (auto it = station_factor.find(s); it != station_factor.end()) f *= it->second;
    return std::clamp(f, 0.0, 1.0);
  }

  void validate() const {
    auto prob = [](double p, const char* what) {
      if (!(p >= 0.0 && p <= 1.0)) throw Error(std::string(what) + " must be a probability");
    };
    prob(base_sampling, "base_sampling");
    prob(dropout_tail, "dropout_tail");
    prob(id_split, "id_split");
    if (!(timestamp_jitter_sd >= 0.0)) throw Error("timestamp_jitter_sd must be non-negative");
    if (!(emit_interval > 0.0)) throw Error("emit_interval must be positive");
    for (const auto& [s, f] : station_factor)
      if (f < 0) throw Error("station sampling factor must be non-negative");
  }
};

struct PresenceInterval {
  StationId station = 0;
  Seconds from = 0;
  Seconds to = 0;
};

struct ObservationResult {
  std::vector<ObservationRecord> records;
  std::map<DeviceId, int> device_commuter;  // -1 for idle devices
  std::size_t true_visits = 0;
  std::size_t observed_visits = 0;
};

inline DeviceId commuter_device(int id) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "c%06d", id);
  return buf;
}

/// Where a commuter physically is: the origin platform from arrival until
/// the boarded train leaves, then each station the train serves up to and
/// including the destination, for the train's dwell there.
inline std::vector<PresenceInterval> presence(const Commuter& c, const GroundTruthTimetable& tt,
                                              const std::map<TrainId, std::vector<TimetableEntry>>& runs) {
  std::vector<PresenceInterval> out;
  if (!c.boarded_train) {
    Seconds end = c.platform_arrival;
    for (const auto& e : tt.entries)
      if (e.station == c.origin) end = std::max(end, e.depart);
    out.push_back({c.origin, c.platform_arrival, end});
    return out;
  }
  const auto& run = runs.at(*c.boarded_train);
  bool riding = false;
  for (const auto& e : run) {
    if (e.station == c.origin) {
      out.push_back({c.origin, c.platform_arrival, e.depart});
      riding = true;
    } else if (riding) {
      out.push_back({e.station, e.arrive, e.depart});
      if (e.station == c.destination) break;
    }
  }
  return out;
}

/// Turn true platform presence into noisy sensing records.
///
/// Each visit is kept with the station/time sampling probability. A kept
/// visit emits a record at its start, at its end and at Poisson times in
/// between; with probability `dropout_tail` everything after a uniform cut
/// point is lost. Timestamps receive Gaussian jitter. With probability
/// `id_split` the device id changes between two observed visits. Idle
/// devices loiter at stations without travelling.
inline ObservationResult observe(std::span<const Commuter> commuters, const GroundTruthTimetable& tt,
                                 const SensingConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ObservationResult out;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::map<TrainId, std::vector<TimetableEntry>> runs;
  for (const auto& e : tt.entries) runs[e.train].push_back(e);

  auto emit_visit = [&](const PresenceInterval& v, std::vector<Seconds>& times) {
    times.clear();
    times.push_back(v.from);
    if (v.to > v.from) {
      double t = static_cast<double>(v.from);
      std::exponential_distribution<double> gap(1.0 / cfg.emit_interval);
      while ((t += gap(rng)) < static_cast<double>(v.to)) times.push_back(static_cast<Seconds>(t));
      times.push_back(v.to);
    }
    if (cfg.dropout_tail > 0 && unit(rng) < cfg.dropout_tail) {
      const double cut = static_cast<double>(v.from) + unit(rng) * static_cast<double>(v.to - v.from);
      std::erase_if(times, [&](Seconds t) { return t != v.from && static_cast<double>(t) > cut; });
    }
    if (cfg.timestamp_jitter_sd > 0)
      for (auto& t : times)
        t = std::max<Seconds>(0, t + std::llround(cfg.timestamp_jitter_sd * gauss(rng)));
  };

  std::vector<Seconds> times;
  for (const auto& c : commuters) {
    const auto visits = presence(c, tt, runs);
    out.true_visits += visits.size();
    std::vector<std::pair<StationId, std::vector<Seconds>>> seen;
    for (const auto& v : visits) {
      if (unit(rng) >= cfg.sampling(v.station, v.from)) continue;
      emit_visit(v, times);
      seen.emplace_back(v.station, times);
    }
    out.observed_visits += seen.size();
    std::size_t split_at = seen.size();
    if (cfg.id_split > 0 && unit(rng) < cfg.id_split && seen.size() >= 2) {
      std::uniform_int_distribution<std::size_t> pick(1, seen.size() - 1);
      split_at = pick(rng);
    }
    const DeviceId base = commuter_device(c.id);
    if (!seen.empty()) out.device_commuter[base] = c.id;
    if (split_at < seen.size()) out.device_commuter[base + "~1"] = c.id;
    for (std::size_t k = 0; k < seen.size(); ++k) {
      const DeviceId dev = k < split_at ? base : base + "~1";
      for (Seconds t : seen[k].second) out.records.push_back({dev, seen[k].first, t});
    }
  }

  if (!cfg.idle_rate.empty() && !tt.empty()) {
    Seconds lo = tt.entries.front().arrive, hi = lo;
    for (const auto& e : tt.entries) {
      lo = std::min(lo, e.arrive);
      hi = std::max(hi, e.depart);
    }
    int idle_id = 0;
    for (const auto& [station, rate] : cfg.idle_rate) {
      if (rate <= 0) continue;
      std::exponential_distribution<double> gap(rate);
      std::exponential_distribution<double> stay(1.0 / cfg.idle_stay);
      double t = static_cast<double>(lo);
      while ((t += gap(rng)) < static_cast<double>(hi)) {
        const auto from = static_cast<Seconds>(t);
        PresenceInterval v{station, from, from + static_cast<Seconds>(stay(rng))};
        if (unit(rng) >= cfg.sampling(station, from)) continue;
        emit_visit(v, times);
        char buf[32];
        std::snprintf(buf, sizeof buf, "idle%02d-%05d", station, idle_id++);
        out.device_commuter[buf] = -1;
        for (Seconds ts : times) out.records.push_back({buf, station, ts});
      }
    }
  }

  std::sort(out.records.begin(), out.records.end(), [](const auto& a, const auto& b) {
    if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
    if (a.device != b.device) return a.device < b.device;
    return a.station < b.station;
  });
  return out;
}

}  // namespace trainsense::sim

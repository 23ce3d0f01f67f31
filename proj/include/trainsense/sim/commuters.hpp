#pragma once

#include <algorithm>
#include <deque>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "trainsense/core/csv.hpp"
#include "trainsense/sim/timetable.hpp"

namespace trainsense::sim {

inline constexpr Seconds kDsgWindow = 1800;

struct Commuter {
  int id = 0;
  StationId origin = 0;
  StationId destination = 0;
  Seconds platform_arrival = 0;
  std::optional<TrainId> boarded_train;
  int trains_missed = 0;
  Seconds first_opportunity = -1;  // first departure at the origin after arriving; -1 if none
};

/// Piecewise multiplier over time; outside every interval the factor is 1.
struct TimeProfile {
  struct Piece {
    Seconds start = 0;
    Seconds end = 0;
    double factor = 1.0;
  };
  std::vector<Piece> pieces;

  double at(Seconds t) const {
    for (const auto& p : pieces)
      if (t >= p.start && t < p.end) return p.factor;
    return 1.0;
  }

  double max_factor() const {
    double m = 1.0;
    for (const auto& p : pieces) m = std::max(m, p.factor);
    return m;
  }
};

struct DemandConfig {
  std::vector<double> rate_per_s;  // per station position; one value is broadcast
  TimeProfile profile;
  Seconds lead = 120;          // arrivals start this long before a station's first train
  Seconds tail = 60;           // and stop this long before its last departure

  double rate(std::size_t pos) const {
    if (rate_per_s.empty()) return 0.0;
    return rate_per_s.size() == 1 ? rate_per_s.front() : rate_per_s.at(pos);
  }
};

/// Ground truth for one train leaving one station.
struct DepartureStat {
  TrainId train;
  StationId station = 0;
  Seconds arrive = 0;
  Seconds depart = 0;
  int waiting = 0;       // commuters on the platform wanting to board
  int boarded = 0;
  int left_behind = 0;
  int new_arrivals = 0;  // commuters for whom this is the first boarding opportunity
  int new_left = 0;      // of those, how many could not board
  int repeat_left = 0;   // commuters left behind for the second time or more
};

/// DSG ground truth for one (station, 30-min window), commuters keyed by
/// their first boarding opportunity.
struct DsgWindowLabel {
  StationId station = 0;
  Seconds window_start = 0;
  int intending = 0;
  int left_behind = 0;
  double dsg_pct = 0.0;
  double mean_missed = 0.0;  // average trains missed by impacted commuters
  bool positive = false;
  int severity = 0;          // 0 none, 1 DSG-1, 2 DSG-2+
};

struct SimulationResult {
  std::vector<Commuter> commuters;
  std::vector<DepartureStat> departures;
  std::vector<DsgWindowLabel> windows;
};

/// Poisson arrivals per station, uniform destination among downstream stations.
inline std::vector<Commuter> generate_demand(const GroundTruthTimetable& tt, const DemandConfig& demand,
                                             std::uint64_t seed) {
  std::vector<Commuter> out;
  if (tt.empty()) return out;
  std::mt19937_64 rng(seed);
  const auto& line = tt.line;
  const double peak = demand.profile.max_factor();
  for (std::size_t pos = 0; pos + 1 < line.size(); ++pos) {
    const double base = demand.rate(pos);
    if (base < 0) throw Error("demand rate must be non-negative");
    if (base == 0) continue;
    const auto at = tt.at_station(line.stations[pos]);
    const Seconds open = at.front().arrive - demand.lead;
    const Seconds close = at.back().depart - demand.tail;
    // thinning of a homogeneous process at the peak rate
    std::exponential_distribution<double> gap(base * peak);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> dest(pos + 1, line.size() - 1);
    double t = static_cast<double>(open);
    while (true) {
      t += gap(rng);
      if (t >= static_cast<double>(close)) break;
      const auto ts = static_cast<Seconds>(t);
      const bool keep = unit(rng) < demand.profile.at(ts) / peak;
      const auto d = dest(rng);
      if (!keep) continue;
      Commuter c;
      c.origin = line.stations[pos];
      c.destination = line.stations[d];
      c.platform_arrival = ts;
      out.push_back(c);
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const Commuter& a, const Commuter& b) {
    return a.platform_arrival != b.platform_arrival ? a.platform_arrival < b.platform_arrival
                                                    : a.origin < b.origin;
  });
  for (std::size_t i = 0; i < out.size(); ++i) out[i].id = static_cast<int>(i);
  return out;
}

inline std::vector<DsgWindowLabel> label_windows(std::span<const Commuter> commuters, Seconds window = kDsgWindow) {
  std::map<std::pair<StationId, Seconds>, DsgWindowLabel> acc;
  std::map<std::pair<StationId, Seconds>, int> missed_total;
  for (const auto& c : commuters) {
    if (c.first_opportunity < 0) continue;
    const Seconds w = (c.first_opportunity / window) * window;
    auto& l = acc[{c.origin, w}];
    l.station = c.origin;
    l.window_start = w;
    ++l.intending;
    if (c.trains_missed > 0) {
      ++l.left_behind;
      missed_total[{c.origin, w}] += c.trains_missed;
    }
  }
  std::vector<DsgWindowLabel> out;
  for (auto& [key, l] : acc) {
    l.dsg_pct = 100.0 * l.left_behind / l.intending;
    l.positive = l.left_behind > 0;
    if (l.positive) {
      l.mean_missed = static_cast<double>(missed_total[key]) / l.left_behind;
      l.severity = l.mean_missed >= 2.0 ? 2 : 1;
    }
    out.push_back(l);
  }
  return out;
}

/// FIFO boarding under a per-train capacity. Trains are processed in
/// dispatch order; at each station alighting happens first, then waiting
/// commuters who reached the platform before the departure board in arrival
/// order. Anyone still waiting when a train leaves has missed it.
inline SimulationResult board_commuters(const GroundTruthTimetable& tt, std::vector<Commuter> commuters,
                                        int capacity, Seconds window = kDsgWindow) {
  if (capacity <= 0) throw Error("train capacity must be positive");
  SimulationResult res;
  const auto& line = tt.line;

  std::map<StationId, std::vector<int>> pending;  // by origin, sorted by arrival
  for (std::size_t i = 0; i < commuters.size(); ++i) {
    auto& c = commuters[i];
    c.boarded_train.reset();
    c.trains_missed = 0;
    c.first_opportunity = -1;
    if (c.origin == c.destination) throw Error("commuter origin equals destination");
    if (line.position(c.origin) < 0 || line.position(c.destination) < 0) throw Error("commuter station not on line");
    pending[c.origin].push_back(static_cast<int>(i));
  }
  for (auto& [s, idx] : pending)
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
      return commuters[a].platform_arrival < commuters[b].platform_arrival;
    });
  std::map<StationId, std::size_t> next_pending;
  std::map<StationId, std::deque<int>> waiting;

  for (const auto& run : tt.runs()) {
    std::vector<int> onboard;
    for (const auto& e : run) {
      std::erase_if(onboard, [&](int i) { return commuters[i].destination == e.station; });
      auto& queue = waiting[e.station];
      auto& next = next_pending[e.station];
      const auto& pend = pending[e.station];
      while (next < pend.size() && commuters[pend[next]].platform_arrival < e.depart) queue.push_back(pend[next++]);

      DepartureStat st{e.train, e.station, e.arrive, e.depart};
      st.waiting = static_cast<int>(queue.size());
      for (int i : queue)
        if (commuters[i].first_opportunity < 0) {
          commuters[i].first_opportunity = e.depart;
          ++st.new_arrivals;
        }
      while (!queue.empty() && static_cast<int>(onboard.size()) < capacity) {
        const int i = queue.front();
        queue.pop_front();
        commuters[i].boarded_train = e.train;
        onboard.push_back(i);
        ++st.boarded;
      }
      for (int i : queue) {
        auto& c = commuters[i];
        ++c.trains_missed;
        ++st.left_behind;
        if (c.trains_missed == 1) ++st.new_left;
        else ++st.repeat_left;
      }
      res.departures.push_back(st);
    }
  }
  res.windows = label_windows(commuters, window);
  res.commuters = std::move(commuters);
  return res;
}

inline SimulationResult simulate_commuters(const GroundTruthTimetable& tt, const DemandConfig& demand, int capacity,
                                           std::uint64_t seed) {
  return board_commuters(tt, generate_demand(tt, demand, seed), capacity);
}

inline void write_dsg_labels_csv(const std::string& path, std::span<const DsgWindowLabel> labels) {
  csv::Writer w(path);
  w.row("station", "window_start", "intending", "left_behind", "dsg_pct", "positive", "severity");
  for (const auto& l : labels)
    w.row(l.station, l.window_start, l.intending, l.left_behind, csv::num(l.dsg_pct, 3), l.positive ? 1 : 0,
          l.severity);
}

inline void write_commuters_csv(const std::string& path, std::span<const Commuter> commuters) {
  csv::Writer w(path);
  w.row("id", "origin", "destination", "platform_arrival", "boarded_train", "trains_missed");
  for (const auto& c : commuters)
    w.row(c.id, c.origin, c.destination, c.platform_arrival, c.boarded_train.value_or(""), c.trains_missed);
}

}  // namespace trainsense::sim

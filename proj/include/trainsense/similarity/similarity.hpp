#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "trainsense/core/csv.hpp"
#include "trainsense/core/types.hpp"

namespace trainsense::similarity {

enum class Kind { soft, hard };

struct SimilarityParams {
  Kind kind = Kind::soft;
  double two_sigma_sq = 30.0;  // seconds^2, soft kernel width
  double tau = 60.0;           // seconds, hard threshold (inclusive)
  double min_weight = -1.0;    // edge floor; negative selects the kind's default
  TimeComponent component = TimeComponent::both;

  double effective_min_weight() const {
    if (min_weight >= 0) return min_weight;
    return kind == Kind::soft ? std::exp(-9.0) : 0.0;
  }

  void validate() const {
    if (!(two_sigma_sq > 0)) throw Error("two_sigma_sq must be positive");
    if (!(tau >= 0)) throw Error("tau must be non-negative");
  }
};

struct Overlap {
  int common = 0;
  std::optional<Seconds> max_diff;  // empty when no common station
};

inline Seconds stop_diff(const StopTimes& a, const StopTimes& b, TimeComponent c) {
  const Seconds da = a.first_seen > b.first_seen ? a.first_seen - b.first_seen : b.first_seen - a.first_seen;
  const Seconds dd = a.last_seen > b.last_seen ? a.last_seen - b.last_seen : b.last_seen - a.last_seen;
  switch (c) {
    case TimeComponent::arrival: return da;
    case TimeComponent::departure: return dd;
    case TimeComponent::both: return std::max(da, dd);
  }
  return std::max(da, dd);
}

/// Count of stations recorded in both journeys and the largest absolute
/// time difference over those stations.
inline Overlap overlap(const Journey& a, const Journey& b, TimeComponent c = TimeComponent::both) {
  Overlap out;
  auto ia = a.stops.begin();
  auto ib = b.stops.begin();
  while (ia != a.stops.end() && ib != b.stops.end()) {
    if (ia->first < ib->first) {
      ++ia;
    } else if (ib->first < ia->first) {
      ++ib;
    } else {
      ++out.common;
      const Seconds d = stop_diff(ia->second, ib->second, c);
      out.max_diff = out.max_diff ? std::max(*out.max_diff, d) : d;
      ++ia;
      ++ib;
    }
  }
  return out;
}

inline double soft_similarity(const Journey& a, const Journey& b, const SimilarityParams& p) {
  const auto o = overlap(a, b, p.component);
  if (o.common == 0) return 0.0;
  const double d = static_cast<double>(*o.max_diff);
  return o.common * std::exp(-d * d / p.two_sigma_sq);
}

inline double hard_similarity(const Journey& a, const Journey& b, const SimilarityParams& p) {
  const auto o = overlap(a, b, p.component);
  if (o.common == 0) return 0.0;
  return static_cast<double>(*o.max_diff) <= p.tau ? static_cast<double>(o.common) : 0.0;
}

inline double similarity(const Journey& a, const Journey& b, const SimilarityParams& p) {
  return p.kind == Kind::soft ? soft_similarity(a, b, p) : hard_similarity(a, b, p);
}

struct Edge {
  int i = 0;
  int j = 0;
  double weight = 0.0;

  friend bool operator==(const Edge&, const Edge&) = default;
};

/// Sparse symmetric weighted graph; each undirected edge is stored once with i < j.
struct SimilarityGraph {
  int n = 0;
  std::vector<Edge> edges;

  std::vector<std::vector<std::pair<int, double>>> adjacency() const {
    std::vector<std::vector<std::pair<int, double>>> adj(static_cast<std::size_t>(n));
    for (const auto& e : edges) {
      adj[e.i].emplace_back(e.j, e.weight);
      adj[e.j].emplace_back(e.i, e.weight);
    }
    return adj;
  }

  std::vector<double> degrees() const {
    std::vector<double> d(static_cast<std::size_t>(n), 0.0);
    for (const auto& e : edges) {
      d[e.i] += e.weight;
      d[e.j] += e.weight;
    }
    return d;
  }
};

/// Largest per-station time difference any edge can have. Every edge needs
/// the difference at each common station to be within this bound.
inline double max_edge_diff(const SimilarityParams& p, std::size_t max_common) {
  if (p.kind == Kind::hard) return p.tau;
  const double floor = p.effective_min_weight();
  if (floor <= 0) return std::numeric_limits<double>::infinity();
  const double ratio = static_cast<double>(max_common) / floor;
  if (ratio <= 1.0) return -1.0;  // no edge can beat the floor
  return std::sqrt(p.two_sigma_sq * std::log(ratio));
}

/// Build the similarity graph. Candidate pairs are generated per station from
/// a time-sorted sweep bounded by max_edge_diff, and each pair is evaluated
/// only at its first common station, so the result equals the all-pairs graph.
inline SimilarityGraph build_graph(std::span<const Journey> journeys, const SimilarityParams& p) {
  p.validate();
  SimilarityGraph g;
  g.n = static_cast<int>(journeys.size());
  if (journeys.empty()) return g;

  std::size_t max_stops = 0;
  StationId max_station = 0;
  for (const auto& j : journeys) {
    max_stops = std::max(max_stops, j.stops.size());
    if (!j.stops.empty()) max_station = std::max(max_station, j.last_station());
  }
  const double bound = max_edge_diff(p, max_stops);
  if (bound < 0) return g;
  const double floor = p.effective_min_weight();

  auto key = [&](const StopTimes& st) {
    return p.component == TimeComponent::departure ? st.last_seen : st.first_seen;
  };

  std::vector<std::vector<std::pair<Seconds, int>>> at(static_cast<std::size_t>(max_station) + 1);
  for (int idx = 0; idx < g.n; ++idx)
    for (const auto& [s, st] : journeys[idx].stops)
      if (s >= 0) at[s].emplace_back(key(st), idx);

  for (std::size_t s = 0; s < at.size(); ++s) {
    auto& list = at[s];
    std::sort(list.begin(), list.end());
    for (std::size_t x = 0; x < list.size(); ++x) {
      for (std::size_t y = x + 1; y < list.size(); ++y) {
        if (static_cast<double>(list[y].first - list[x].first) > bound) break;
        const int a = std::min(list[x].second, list[y].second);
        const int b = std::max(list[x].second, list[y].second);
        const auto& ja = journeys[a];
        const auto& jb = journeys[b];
        // evaluate each pair once, at its lowest common station
        StationId first_common = -1;
        for (auto ia = ja.stops.begin(), ib = jb.stops.begin(); ia != ja.stops.end() && ib != jb.stops.end();) {
          if (ia->first < ib->first) ++ia;
          else if (ib->first < ia->first) ++ib;
          else { first_common = ia->first; break; }
        }
        if (first_common != static_cast<StationId>(s)) continue;
        const double w = similarity(ja, jb, p);
        if (w > floor) g.edges.push_back({a, b, w});
      }
    }
  }
  std::sort(g.edges.begin(), g.edges.end(),
            [](const Edge& l, const Edge& r) { return l.i != r.i ? l.i < r.i : l.j < r.j; });
  return g;
}

/// Sub-graph induced by `vertices`, re-indexed in the given order.
inline SimilarityGraph induced(const SimilarityGraph& g, std::span<const int> vertices) {
  std::vector<int> map(static_cast<std::size_t>(g.n), -1);
  for (std::size_t k = 0; k < vertices.size(); ++k) map[vertices[k]] = static_cast<int>(k);
  SimilarityGraph out;
  out.n = static_cast<int>(vertices.size());
  for (const auto& e : g.edges) {
    const int a = map[e.i], b = map[e.j];
    if (a >= 0 && b >= 0) out.edges.push_back({std::min(a, b), std::max(a, b), e.weight});
  }
  return out;
}

inline void write_graph_csv(const std::string& path, const SimilarityGraph& g) {
  csv::Writer w(path);
  w.row("i", "j", "weight");
  for (const auto& e : g.edges) w.row(e.i, e.j, csv::num(e.weight, 9));
}

inline std::string to_string(Kind k) { return k == Kind::soft ? "soft" : "hard"; }

inline Kind kind_from_string(const std::string& s) {
  if (s == "soft") return Kind::soft;
  if (s == "hard") return Kind::hard;
  throw Error("unknown similarity kind '" + s + "'");
}

}  // namespace trainsense::similarity

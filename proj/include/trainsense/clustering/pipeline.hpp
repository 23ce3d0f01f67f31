#pragma once

#include <algorithm>
#include <iterator>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "trainsense/clustering/baseline.hpp"
#include "trainsense/clustering/pruning.hpp"
#include "trainsense/clustering/spectral.hpp"
#include "trainsense/clustering/timetable.hpp"
#include "trainsense/similarity/similarity.hpp"

namespace trainsense::clustering {

struct SpectralPipelineConfig {
  similarity::SimilarityParams similarity{similarity::Kind::soft, 1800.0, 60.0, -1.0, TimeComponent::departure};
  Seconds window = 3600;
  Seconds stride = 1800;
  std::optional<int> k;                  // fixed k per window; empty selects by eigengap
  int k_max = 50;                        // used when no nominal headway is known
  std::optional<Seconds> nominal_headway;
  int knn = 10;
  double agreement = 0.5;
  double quantile_floor = 0.1;
  bool prune = true;
  double dedup_overlap = 0.5;
  std::optional<Seconds> reconcile_gap = 60;
  EnvelopeOptions envelope;
  std::uint64_t seed = 7;

  int effective_k_max() const {
    if (nominal_headway && *nominal_headway > 0) return std::max<int>(2, static_cast<int>(2 * window / *nominal_headway));
    return k_max;
  }

  void validate() const {
    similarity.validate();
    if (window <= 0 || stride <= 0 || stride > window) throw Error("window and stride must satisfy 0 < stride <= window");
    if (!(dedup_overlap > 0 && dedup_overlap <= 1)) throw Error("dedup_overlap must be in (0, 1]");
  }
};

struct WindowResult {
  Seconds start = 0;
  std::vector<int> journeys;  // global indices, ascending
  ClusterLabeling labeling;   // local, aligned with `journeys`
  int auto_k = 0;
};

/// Per-window results kept between incremental runs, keyed by window start.
struct WindowCache {
  struct Entry {
    std::vector<Journey> content;
    WindowResult result;
  };
  std::map<Seconds, Entry> entries;
  int hits = 0;
  int misses = 0;
};

struct PipelineResult {
  ClusterLabeling labeling;
  EstimatedTimetable timetable;
  std::vector<WindowResult> windows;
};

/// Window starts on the stride grid covering every reference time.
inline std::vector<Seconds> window_starts(std::span<const Seconds> refs, Seconds window, Seconds stride) {
  std::vector<Seconds> out;
  if (refs.empty()) return out;
  const auto [lo, hi] = std::minmax_element(refs.begin(), refs.end());
  auto floor_div = [](Seconds a, Seconds b) { return a >= 0 ? a / b : -((-a + b - 1) / b); };
  Seconds s = (floor_div(*lo, stride) - (window / stride) + 1) * stride;
  for (; s <= *hi; s += stride)
    if (s + window > *lo) out.push_back(s);
  return out;
}

/// Cluster one window: graph, spectral clustering, then both pruning stages.
inline WindowResult cluster_window(std::span<const Journey> journeys, std::vector<int> members,
                                   const SpectralPipelineConfig& cfg, Seconds start) {
  WindowResult w;
  w.start = start;
  w.journeys = std::move(members);
  w.labeling.labels.assign(w.journeys.size(), kOutlier);
  if (w.journeys.size() < 2) return w;
  std::vector<Journey> local;
  local.reserve(w.journeys.size());
  for (int j : w.journeys) local.push_back(journeys[j]);
  const auto g = similarity::build_graph(local, cfg.similarity);
  SpectralOptions so;
  so.k = cfg.k ? std::optional<int>(std::min<int>(*cfg.k, g.n)) : std::nullopt;
  so.k_max = cfg.effective_k_max();
  so.seed = cfg.seed;
  auto res = spectral_cluster_detailed(g, so);
  w.auto_k = res.k;
  w.labeling = std::move(res.labeling);
  if (cfg.prune) {
    w.labeling = prune_knn_outliers(g, w.labeling, cfg.knn, cfg.agreement);
    w.labeling = prune_similarity_outliers(g, w.labeling, cfg.quantile_floor);
  }
  return w;
}

namespace detail {

struct UnionFind {
  std::vector<int> p;
  explicit UnionFind(int n) : p(static_cast<std::size_t>(n)) { std::iota(p.begin(), p.end(), 0); }
  int find(int x) {
    while (p[x] != x) x = p[x] = p[p[x]];
    return x;
  }
  void unite(int a, int b) {
    a = find(a), b = find(b);
    if (a != b) p[std::max(a, b)] = std::min(a, b);
  }
};

}  // namespace detail

/// Merge per-window clusters into global labels. Clusters of consecutive
/// windows are matched one-to-one, greedily by overlap coefficient
/// |A ∩ B| / min(|A|, |B|) >= threshold; each journey takes its label from
/// the window whose centre is closest to its reference time.
inline ClusterLabeling merge_windows(std::span<const WindowResult> windows, std::span<const Seconds> refs,
                                     double threshold, Seconds window_len) {
  std::vector<int> base(windows.size() + 1, 0);
  for (std::size_t w = 0; w < windows.size(); ++w) base[w + 1] = base[w] + std::max(0, windows[w].labeling.k);
  detail::UnionFind uf(base.back());

  std::vector<std::vector<std::vector<int>>> groups(windows.size());
  for (std::size_t w = 0; w < windows.size(); ++w) {
    groups[w].assign(static_cast<std::size_t>(std::max(0, windows[w].labeling.k)), {});
    for (std::size_t i = 0; i < windows[w].journeys.size(); ++i)
      if (int l = windows[w].labeling.labels[i]; l != kOutlier) groups[w][l].push_back(windows[w].journeys[i]);
  }
  for (std::size_t w = 0; w + 1 < windows.size(); ++w) {
    struct Cand {
      double overlap;
      int a, b;
    };
    std::vector<Cand> cands;
    for (std::size_t a = 0; a < groups[w].size(); ++a)
      for (std::size_t b = 0; b < groups[w + 1].size(); ++b) {
        const auto& A = groups[w][a];
        const auto& B = groups[w + 1][b];
        if (A.empty() || B.empty()) continue;
        std::vector<int> common;
        std::set_intersection(A.begin(), A.end(), B.begin(), B.end(), std::back_inserter(common));
        const double ov = static_cast<double>(common.size()) / static_cast<double>(std::min(A.size(), B.size()));
        if (ov >= threshold) cands.push_back({ov, static_cast<int>(a), static_cast<int>(b)});
      }
    std::stable_sort(cands.begin(), cands.end(), [](const Cand& x, const Cand& y) { return x.overlap > y.overlap; });
    std::vector<char> used_a(groups[w].size(), 0), used_b(groups[w + 1].size(), 0);
    for (const auto& c : cands) {
      if (used_a[c.a] || used_b[c.b]) continue;
      used_a[c.a] = used_b[c.b] = 1;
      uf.unite(base[w] + c.a, base[w + 1] + c.b);
    }
  }

  ClusterLabeling out;
  out.labels.assign(refs.size(), kOutlier);
  std::vector<Seconds> best_dist(refs.size(), std::numeric_limits<Seconds>::max());
  for (std::size_t w = 0; w < windows.size(); ++w) {
    const Seconds centre2 = 2 * windows[w].start + window_len;
    for (std::size_t i = 0; i < windows[w].journeys.size(); ++i) {
      const int j = windows[w].journeys[i];
      const Seconds d = std::abs(2 * refs[j] - centre2);
      if (d >= best_dist[j]) continue;
      best_dist[j] = d;
      const int l = windows[w].labeling.labels[i];
      out.labels[j] = l == kOutlier ? kOutlier : uf.find(base[w] + l);
    }
  }
  out.k = base.back();
  out.compact();
  return out;
}

inline ClusterLabeling labeling_from_trips(std::span<const TrainTrip> trips, std::size_t n) {
  ClusterLabeling out;
  out.labels.assign(n, kOutlier);
  for (std::size_t t = 0; t < trips.size(); ++t)
    for (int j : trips[t].members) out.labels[j] = static_cast<int>(t);
  out.k = static_cast<int>(trips.size());
  out.compact();
  return out;
}

/// Windowed robust spectral pipeline over all journeys of one line and
/// direction. With a cache, a window whose journeys are unchanged reuses its
/// previous clustering.
inline PipelineResult run_spectral_pipeline(std::span<const Journey> journeys, const SpectralPipelineConfig& cfg,
                                            WindowCache* cache = nullptr) {
  cfg.validate();
  PipelineResult res;
  std::vector<Seconds> refs;
  refs.reserve(journeys.size());
  for (const auto& j : journeys) refs.push_back(j.start_time());
  for (Seconds s : window_starts(refs, cfg.window, cfg.stride)) {
    std::vector<int> members;
    for (std::size_t j = 0; j < journeys.size(); ++j)
      if (refs[j] >= s && refs[j] < s + cfg.window) members.push_back(static_cast<int>(j));
    if (members.empty()) continue;
    if (cache) {
      std::vector<Journey> content;
      content.reserve(members.size());
      for (int j : members) content.push_back(journeys[j]);
      auto it = cache->entries.find(s);
      if (it != cache->entries.end() && it->second.content == content) {
        ++cache->hits;
        res.windows.push_back(it->second.result);
        res.windows.back().journeys = members;
        continue;
      }
      ++cache->misses;
      res.windows.push_back(cluster_window(journeys, members, cfg, s));
      cache->entries[s] = {std::move(content), res.windows.back()};
      continue;
    }
    res.windows.push_back(cluster_window(journeys, std::move(members), cfg, s));
  }
  res.labeling = merge_windows(res.windows, refs, cfg.dedup_overlap, cfg.window);
  res.timetable = extract_timetable(res.labeling, journeys, cfg.envelope);
  if (cfg.reconcile_gap && res.timetable.trips.size() > 1) {
    const auto stats = travel_time_stats(res.timetable.trips);
    auto merged = reconcile_fragments(res.timetable.trips, stats, *cfg.reconcile_gap);
    if (merged.size() != res.timetable.trips.size()) {
      res.labeling = labeling_from_trips(merged, journeys.size());
      res.timetable = extract_timetable(res.labeling, journeys, cfg.envelope);
    }
  }
  return res;
}

}  // namespace trainsense::clustering

#pragma once

#include <algorithm>
#include <vector>

#include "trainsense/clustering/labeling.hpp"
#include "trainsense/core/stats.hpp"
#include "trainsense/similarity/similarity.hpp"

namespace trainsense::clustering {

/// k-NN label agreement. A labelled vertex whose k_nn strongest neighbours
/// carry its own label less than `agreement` of the time becomes an outlier.
/// Single pass over the input labels; labels are never changed otherwise.
inline ClusterLabeling prune_knn_outliers(const similarity::SimilarityGraph& g, const ClusterLabeling& in,
                                          int k_nn, double agreement) {
  if (!(agreement > 0 && agreement <= 1)) throw Error("agreement must be in (0, 1]");
  if (k_nn < 1) throw Error("k_nn must be positive");
  ClusterLabeling out = in;
  auto adj = g.adjacency();
  for (int v = 0; v < g.n; ++v) {
    if (in.labels[v] == kOutlier) continue;
    auto& nb = adj[v];
    if (nb.empty()) {
      out.labels[v] = kOutlier;
      continue;
    }
    const auto take = std::min<std::size_t>(static_cast<std::size_t>(k_nn), nb.size());
    std::partial_sort(nb.begin(), nb.begin() + static_cast<std::ptrdiff_t>(take), nb.end(),
                      [](const auto& a, const auto& b) { return a.second != b.second ? a.second > b.second : a.first < b.first; });
    std::size_t same = 0;
    for (std::size_t i = 0; i < take; ++i)
      if (in.labels[nb[i].first] == in.labels[v]) ++same;
    if (static_cast<double>(same) < agreement * static_cast<double>(take)) out.labels[v] = kOutlier;
  }
  return out;
}

/// Per-cluster similarity floor. For each member, its mean similarity to the
/// other members is compared with `quantile_floor` times the cluster median
/// of that quantity; members below it become outliers.
inline ClusterLabeling prune_similarity_outliers(const similarity::SimilarityGraph& g, const ClusterLabeling& in,
                                                 double quantile_floor) {
  if (!(quantile_floor > 0 && quantile_floor < 1)) throw Error("quantile_floor must be in (0, 1)");
  ClusterLabeling out = in;
  const auto groups = in.members();
  std::vector<double> to_cluster(static_cast<std::size_t>(g.n), 0.0);
  for (const auto& e : g.edges) {
    if (in.labels[e.i] == kOutlier || in.labels[e.i] != in.labels[e.j]) continue;
    to_cluster[e.i] += e.weight;
    to_cluster[e.j] += e.weight;
  }
  for (const auto& m : groups) {
    if (m.size() < 2) continue;
    std::vector<double> means;
    means.reserve(m.size());
    for (int v : m) means.push_back(to_cluster[v] / static_cast<double>(m.size() - 1));
    const double threshold = quantile_floor * stats::median(means);
    for (std::size_t i = 0; i < m.size(); ++i)
      if (means[i] < threshold) out.labels[m[i]] = kOutlier;
  }
  return out;
}

}  // namespace trainsense::clustering

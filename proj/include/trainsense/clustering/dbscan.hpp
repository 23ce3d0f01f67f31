#pragma once

#include <algorithm>
#include <numeric>
#include <span>
#include <vector>

#include "trainsense/clustering/labeling.hpp"
#include "trainsense/core/types.hpp"

namespace trainsense::clustering {

/// DBSCAN over scalar timestamps in O(n log n).
///
/// Neighbourhoods are closed (|a - b| <= eps) and include the point itself.
/// In one dimension a cluster is a maximal run of core points whose
/// successive gaps are at most eps, plus the border points they reach. A
/// border point reachable from two clusters joins the earlier one. Clusters
/// are numbered in time order; labels are returned in input order.
inline ClusterLabeling dbscan_1d(std::span<const Seconds> times, Seconds eps, int min_pts) {
  if (eps <= 0) throw Error("dbscan eps must be positive");
  if (min_pts < 1) throw Error("dbscan min_pts must be >= 1");
  ClusterLabeling out;
  const std::size_t n = times.size();
  out.labels.assign(n, kOutlier);
  if (n == 0) return out;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return times[a] < times[b]; });
  std::vector<Seconds> t(n);
  for (std::size_t i = 0; i < n; ++i) t[i] = times[order[i]];

  std::vector<char> core(n, 0);
  std::size_t lo = 0, hi = 0;
  for (std::size_t i = 0; i < n; ++i) {
    while (t[i] - t[lo] > eps) ++lo;
    if (hi < i) hi = i;
    while (hi + 1 < n && t[hi + 1] - t[i] <= eps) ++hi;
    core[i] = static_cast<int>(hi - lo + 1) >= min_pts;
  }

  std::vector<int> sorted_label(n, kOutlier);
  int cluster = -1;
  std::ptrdiff_t last_core = -1;
  for (std::size_t i = 0; i < n; ++i) {
    if (!core[i]) continue;
    if (last_core < 0 || t[i] - t[static_cast<std::size_t>(last_core)] > eps) ++cluster;
    sorted_label[i] = cluster;
    last_core = static_cast<std::ptrdiff_t>(i);
  }
  out.k = cluster + 1;

  // Border points: nearest core on the left wins if it reaches, else the right one.
  std::ptrdiff_t left = -1;
  for (std::size_t i = 0; i < n; ++i) {
    if (core[i]) {
      left = static_cast<std::ptrdiff_t>(i);
      continue;
    }
    if (left >= 0 && t[i] - t[static_cast<std::size_t>(left)] <= eps) sorted_label[i] = sorted_label[left];
  }
  std::ptrdiff_t right = -1;
  for (std::size_t r = n; r-- > 0;) {
    if (core[r]) {
      right = static_cast<std::ptrdiff_t>(r);
      continue;
    }
    if (sorted_label[r] == kOutlier && right >= 0 && t[static_cast<std::size_t>(right)] - t[r] <= eps)
      sorted_label[r] = sorted_label[right];
  }

  for (std::size_t i = 0; i < n; ++i) out.labels[order[i]] = sorted_label[i];
  return out;
}

}  // namespace trainsense::clustering

#pragma once

#include <algorithm>
#include <map>
#include <vector>

namespace trainsense::clustering {

inline constexpr int kOutlier = -1;

/// Per-item cluster labels in {0..k-1} or kOutlier.
struct ClusterLabeling {
  std::vector<int> labels;
  int k = 0;

  std::size_t size() const { return labels.size(); }

  std::size_t outliers() const {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), kOutlier));
  }

  std::vector<std::vector<int>> members() const {
    std::vector<std::vector<int>> out(static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] != kOutlier) out[labels[i]].push_back(static_cast<int>(i));
    return out;
  }

  /// Renumber labels densely by first appearance, dropping empty clusters.
  void compact() {
    std::map<int, int> remap;
    for (auto& l : labels) {
      if (l == kOutlier) continue;
      auto [it, inserted] = remap.try_emplace(l, static_cast<int>(remap.size()));
      l = it->second;
    }
    k = static_cast<int>(remap.size());
  }
};

}  // namespace trainsense::clustering

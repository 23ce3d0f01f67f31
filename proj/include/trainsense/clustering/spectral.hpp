#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <lapacke.h>

#include "trainsense/clustering/labeling.hpp"
#include "trainsense/similarity/similarity.hpp"

namespace trainsense::clustering {

using similarity::SimilarityGraph;

/// Cluster count from the largest gap in an ascending eigenvalue sequence:
/// argmax over 1 <= m < k_max of (lambda_{m+1} - lambda_m), smallest m on ties.
inline int eigengap_k(std::span<const double> eigenvalues, int k_max) {
  const int limit = std::min<int>(k_max, static_cast<int>(eigenvalues.size()));
  if (limit < 2) return 1;
  int best = 1;
  double best_gap = -std::numeric_limits<double>::infinity();
  for (int m = 1; m < limit; ++m) {
    const double gap = eigenvalues[m] - eigenvalues[m - 1];
    if (gap > best_gap) {
      best_gap = gap;
      best = m;
    }
  }
  return best;
}

/// Connected components by union-find; isolated vertices get their own id.
inline std::vector<int> connected_components(const SimilarityGraph& g, int* count = nullptr) {
  std::vector<int> parent(static_cast<std::size_t>(g.n));
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& e : g.edges) {
    const int a = find(e.i), b = find(e.j);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
  std::vector<int> comp(static_cast<std::size_t>(g.n), -1);
  int next = 0;
  std::vector<int> root_id(static_cast<std::size_t>(g.n), -1);
  for (int v = 0; v < g.n; ++v) {
    const int r = find(v);
    if (root_id[r] < 0) root_id[r] = next++;
    comp[v] = root_id[r];
  }
  if (count) *count = next;
  return comp;
}

/// Lloyd's k-means with farthest-first seeding. The first centre is drawn
/// from `seed`; each further centre is the row farthest from all chosen ones.
inline std::vector<int> kmeans(const Eigen::MatrixXd& x, int k, std::uint64_t seed, int max_iter = 100) {
  const auto n = static_cast<int>(x.rows());
  std::vector<int> assign(static_cast<std::size_t>(n), 0);
  if (n == 0 || k <= 1) return assign;
  k = std::min(k, n);

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick(0, n - 1);
  Eigen::MatrixXd centres(k, x.cols());
  centres.row(0) = x.row(pick(rng));
  Eigen::VectorXd mind = (x.rowwise() - centres.row(0)).rowwise().squaredNorm();
  for (int c = 1; c < k; ++c) {
    Eigen::Index far = 0;
    mind.maxCoeff(&far);
    centres.row(c) = x.row(far);
    mind = mind.cwiseMin((x.rowwise() - centres.row(c)).rowwise().squaredNorm());
  }

  for (int iter = 0; iter < max_iter; ++iter) {
    bool changed = iter == 0;
    for (int i = 0; i < n; ++i) {
      Eigen::Index best = 0;
      (centres.rowwise() - x.row(i)).rowwise().squaredNorm().minCoeff(&best);
      if (static_cast<int>(best) != assign[i]) {
        assign[i] = static_cast<int>(best);
        changed = true;
      }
    }
    if (!changed) break;
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, x.cols());
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (int i = 0; i < n; ++i) {
      sums.row(assign[i]) += x.row(i);
      ++counts[assign[i]];
    }
    for (int c = 0; c < k; ++c)
      if (counts[c] > 0) centres.row(c) = sums.row(c) / counts[c];
  }
  return assign;
}

struct SpectralOptions {
  std::optional<int> k;  // empty selects k by eigengap
  int k_max = 50;
  std::uint64_t seed = 7;
};

struct SpectralResult {
  ClusterLabeling labeling;
  int k = 0;                        // clusters requested from k-means
  int components = 0;               // non-trivial connected components
  std::vector<double> eigenvalues;  // ascending; the smallest ones the k choice looks at
};

/// Smallest `count` eigenpairs of a dense symmetric matrix (column-major,
/// overwritten), ascending.
inline std::pair<Eigen::VectorXd, Eigen::MatrixXd> smallest_eigenpairs(Eigen::MatrixXd& a, int count) {
  const auto n = static_cast<lapack_int>(a.rows());
  count = std::clamp(count, 1, static_cast<int>(n));
  Eigen::VectorXd w(n);
  Eigen::MatrixXd z(n, count);
  std::vector<lapack_int> support(2 * static_cast<std::size_t>(count));
  lapack_int found = 0;
  const lapack_int info = LAPACKE_dsyevr(LAPACK_COL_MAJOR, 'V', 'I', 'L', n, a.data(), n, 0.0, 0.0, 1, count, 0.0,
                                         &found, w.data(), z.data(), n, support.data());
  if (info != 0 || found != count) throw Error("eigendecomposition failed");
  return {w.head(count), z};
}

/// Spectral clustering on the symmetric normalised Laplacian
/// L = I - D^{-1/2} W D^{-1/2}.
///
/// Isolated vertices are outliers. L is block diagonal over connected
/// components, so its low spectrum is assembled from a partial eigensolve per
/// component; the bottom-k eigenvectors of L are taken from that union
/// (each supported on one component), rows are normalised to unit length and
/// clustered with k-means. In AUTO mode the search range is widened to at
/// least components+1 so the zero eigenvalue multiplicity is always visible.
inline SpectralResult spectral_cluster_detailed(const SimilarityGraph& g, const SpectralOptions& opt) {
  if (g.n <= 0) throw Error("spectral clustering needs a non-empty graph");
  if (opt.k && *opt.k > g.n) throw Error("k exceeds the number of vertices");
  if (opt.k && *opt.k < 1) throw Error("k must be positive");
  if (!opt.k && opt.k_max < 2) throw Error("k_max must be at least 2");

  SpectralResult res;
  res.labeling.labels.assign(static_cast<std::size_t>(g.n), kOutlier);

  int ncomp = 0;
  const auto comp = connected_components(g, &ncomp);
  std::vector<std::vector<int>> members(static_cast<std::size_t>(ncomp));
  for (int v = 0; v < g.n; ++v) members[comp[v]].push_back(v);
  std::erase_if(members, [](const auto& m) { return m.size() < 2; });
  res.components = static_cast<int>(members.size());
  if (members.empty()) return res;

  const auto adj = g.adjacency();
  const auto deg = g.degrees();
  // eigengap_k only looks at the first k_max values
  const int wanted = opt.k ? *opt.k : std::max(opt.k_max, res.components + 1);

  struct Pair {
    double value;
    int comp;
    int index;
  };
  std::vector<Pair> pairs;
  std::vector<Eigen::MatrixXd> vectors;
  std::vector<int> local(static_cast<std::size_t>(g.n), -1);
  int total = 0;
  for (std::size_t c = 0; c < members.size(); ++c) {
    const auto& m = members[c];
    const auto sz = static_cast<Eigen::Index>(m.size());
    for (Eigen::Index a = 0; a < sz; ++a) local[m[a]] = static_cast<int>(a);
    Eigen::MatrixXd lap = Eigen::MatrixXd::Identity(sz, sz);
    for (Eigen::Index a = 0; a < sz; ++a)
      for (const auto& [b, w] : adj[m[a]])
        lap(a, local[b]) -= w / std::sqrt(deg[m[a]] * deg[b]);
    auto [values, vecs] = smallest_eigenpairs(lap, static_cast<int>(std::min<Eigen::Index>(sz, wanted)));
    for (Eigen::Index a = 0; a < values.size(); ++a)
      pairs.push_back({std::max(0.0, values(a)), static_cast<int>(c), static_cast<int>(a)});
    vectors.push_back(std::move(vecs));
    total += static_cast<int>(sz);
  }
  std::stable_sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
    if (a.value != b.value) return a.value < b.value;
    if (a.comp != b.comp) return a.comp < b.comp;
    return a.index < b.index;
  });
  if (pairs.size() > static_cast<std::size_t>(wanted)) pairs.resize(static_cast<std::size_t>(wanted));
  for (const auto& p : pairs) res.eigenvalues.push_back(p.value);

  int k = 0;
  if (opt.k) {
    k = std::min(*opt.k, total);
  } else {
    const int k_max = std::min(total, std::max(opt.k_max, res.components + 1));
    k = eigengap_k(res.eigenvalues, k_max);
  }
  res.k = k;

  std::vector<int> verts;
  for (const auto& m : members) verts.insert(verts.end(), m.begin(), m.end());
  std::sort(verts.begin(), verts.end());
  std::vector<int> row_of(static_cast<std::size_t>(g.n), -1);
  for (std::size_t r = 0; r < verts.size(); ++r) row_of[verts[r]] = static_cast<int>(r);

  Eigen::MatrixXd emb = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(verts.size()), k);
  for (int col = 0; col < k; ++col) {
    const auto& p = pairs[col];
    const auto& m = members[p.comp];
    auto v = vectors[p.comp].col(p.index);
    Eigen::Index big = 0;
    v.cwiseAbs().maxCoeff(&big);
    const double sign = v(big) < 0 ? -1.0 : 1.0;
    for (std::size_t a = 0; a < m.size(); ++a) emb(row_of[m[a]], col) = sign * v(static_cast<Eigen::Index>(a));
  }
  for (Eigen::Index r = 0; r < emb.rows(); ++r) {
    const double norm = emb.row(r).norm();
    if (norm > 0) emb.row(r) /= norm;
  }

  const auto assign = kmeans(emb, k, opt.seed);
  for (std::size_t r = 0; r < verts.size(); ++r) res.labeling.labels[verts[r]] = assign[r];
  res.labeling.k = k;
  res.labeling.compact();
  return res;
}

inline ClusterLabeling spectral_cluster(const SimilarityGraph& g, std::optional<int> k, int k_max,
                                        std::uint64_t seed = 7) {
  return spectral_cluster_detailed(g, SpectralOptions{k, k_max, seed}).labeling;
}

}  // namespace trainsense::clustering

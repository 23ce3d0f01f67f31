#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "trainsense/clustering/labeling.hpp"
#include "trainsense/core/types.hpp"

namespace trainsense::eval {

struct ArrivalMatch {
  std::vector<std::pair<Seconds, Seconds>> pairs;  // (estimated, true)
  std::vector<Seconds> unmatched_est;
  std::vector<Seconds> unmatched_true;

  Seconds total_abs_error() const {
    Seconds s = 0;
    for (const auto& [e, t] : pairs) s += std::abs(e - t);
    return s;
  }
};

/// One-to-one matching of estimated to true arrivals with |est - true| <= window.
/// Maximises the number of matched truths and, among those matchings,
/// minimises total absolute error. For absolute costs on a line an optimal
/// matching never crosses, so a DP over both sorted sequences is exact.
inline ArrivalMatch match_arrivals(std::vector<Seconds> est, std::vector<Seconds> truth, Seconds window) {
  std::sort(est.begin(), est.end());
  std::sort(truth.begin(), truth.end());
  const std::size_t n = est.size(), m = truth.size();
  struct Cell {
    int count = 0;
    Seconds cost = 0;
    char move = 0;  // 0 start, 1 skip est, 2 skip truth, 3 match
  };
  auto better = [](const Cell& a, const Cell& b) { return a.count != b.count ? a.count > b.count : a.cost < b.cost; };
  std::vector<Cell> dp((n + 1) * (m + 1));
  auto at = [&](std::size_t i, std::size_t j) -> Cell& { return dp[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i)
    for (std::size_t j = 0; j <= m; ++j) {
      if (i == 0 && j == 0) continue;
      Cell best;
      bool have = false;
      if (i > 0) {
        Cell c = at(i - 1, j);
        c.move = 1;
        best = c;
        have = true;
      }
      if (j > 0) {
        Cell c = at(i, j - 1);
        c.move = 2;
        if (!have || better(c, best)) best = c;
        have = true;
      }
      if (i > 0 && j > 0) {
        const Seconds d = std::abs(est[i - 1] - truth[j - 1]);
        if (d <= window) {
          Cell c = at(i - 1, j - 1);
          c.count += 1;
          c.cost += d;
          c.move = 3;
          if (better(c, best)) best = c;
        }
      }
      at(i, j) = best;
    }
  ArrivalMatch out;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    const char mv = at(i, j).move;
    if (mv == 3) {
      out.pairs.emplace_back(est[i - 1], truth[j - 1]);
      --i, --j;
    } else if (mv == 1) {
      out.unmatched_est.push_back(est[--i]);
    } else {
      out.unmatched_true.push_back(truth[--j]);
    }
  }
  std::reverse(out.pairs.begin(), out.pairs.end());
  std::reverse(out.unmatched_est.begin(), out.unmatched_est.end());
  std::reverse(out.unmatched_true.begin(), out.unmatched_true.end());
  return out;
}

/// Fraction of truths matched within the window; none when there is no truth.
inline std::optional<double> hit_rate(const ArrivalMatch& m) {
  const std::size_t total = m.pairs.size() + m.unmatched_true.size();
  if (total == 0) return std::nullopt;
  return static_cast<double>(m.pairs.size()) / static_cast<double>(total);
}

inline std::optional<double> hit_rate(std::span<const Seconds> est, std::span<const Seconds> truth, Seconds window = 60) {
  return hit_rate(match_arrivals({est.begin(), est.end()}, {truth.begin(), truth.end()}, window));
}

/// Root mean squared error of matched pairs, in minutes.
inline std::optional<double> rmse_minutes(std::span<const std::pair<Seconds, Seconds>> pairs) {
  if (pairs.empty()) return std::nullopt;
  double s = 0;
  for (const auto& [e, t] : pairs) {
    const double d = static_cast<double>(e - t);
    s += d * d;
  }
  return std::sqrt(s / static_cast<double>(pairs.size())) / 60.0;
}

struct ClassificationReport {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::optional<double> precision, recall, accuracy, f1;
  std::vector<std::string> diagnostics;
};

inline ClassificationReport classification_report(const std::vector<bool>& predictions, const std::vector<bool>& labels) {
  if (predictions.size() != labels.size()) throw Error("predictions and labels differ in length");
  ClassificationReport r;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (predictions[i] && labels[i]) ++r.tp;
    else if (predictions[i]) ++r.fp;
    else if (labels[i]) ++r.fn;
    else ++r.tn;
  }
  auto ratio = [&](std::size_t num, std::size_t den, const char* what) -> std::optional<double> {
    if (den == 0) {
      r.diagnostics.push_back(std::string(what) + ": zero division");
      return std::nullopt;
    }
    return static_cast<double>(num) / static_cast<double>(den);
  };
  r.precision = ratio(r.tp, r.tp + r.fp, "precision");
  r.recall = ratio(r.tp, r.tp + r.fn, "recall");
  r.accuracy = ratio(r.tp + r.tn, labels.size(), "accuracy");
  r.f1 = ratio(2 * r.tp, 2 * r.tp + r.fp + r.fn, "f1");
  return r;
}

/// F1 with zero-division mapped to 0 (used as an optimisation target).
inline double f1_score(const std::vector<bool>& predictions, const std::vector<bool>& labels) {
  return classification_report(predictions, labels).f1.value_or(0.0);
}

/// Adjusted Rand index. Outliers (negative labels) count as singletons.
inline double adjusted_rand_index(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) throw Error("labelings differ in length");
  const std::size_t n = a.size();
  if (n < 2) return 1.0;
  auto canon = [](std::span<const int> x) {
    std::vector<long long> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] >= 0 ? x[i] : -1 - static_cast<long long>(i);
    return out;
  };
  const auto ca = canon(a), cb = canon(b);
  std::map<std::pair<long long, long long>, long long> cont;
  std::map<long long, long long> ra, rb;
  for (std::size_t i = 0; i < n; ++i) {
    ++cont[{ca[i], cb[i]}];
    ++ra[ca[i]];
    ++rb[cb[i]];
  }
  auto c2 = [](long long x) { return static_cast<double>(x) * static_cast<double>(x - 1) / 2.0; };
  double sum_ij = 0, sum_a = 0, sum_b = 0;
  for (const auto& [k, v] : cont) sum_ij += c2(v);
  for (const auto& [k, v] : ra) sum_a += c2(v);
  for (const auto& [k, v] : rb) sum_b += c2(v);
  const double expected = sum_a * sum_b / c2(static_cast<long long>(n));
  const double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected) return 1.0;
  return (sum_ij - expected) / (max_index - expected);
}

}  // namespace trainsense::eval

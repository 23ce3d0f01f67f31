#pragma once

#include <algorithm>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "trainsense/dsg/logistic.hpp"
#include "trainsense/eval/metrics.hpp"

namespace trainsense::dsg {

/// 0.05, 0.10, ..., 0.95.
inline std::vector<double> default_cutoff_grid() {
  std::vector<double> g;
  for (int i = 1; i < 20; ++i) g.push_back(i * 0.05);
  return g;
}

inline std::vector<bool> threshold(std::span<const double> probs, double cutoff) {
  std::vector<bool> out(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) out[i] = probs[i] >= cutoff;
  return out;
}

/// Cutoff with the highest F1 on the given scores; ties go to the lowest cutoff.
inline double grid_search_cutoff(std::span<const double> probs, const std::vector<bool>& labels,
                                 std::span<const double> grid) {
  if (grid.empty()) throw Error("cutoff grid is empty");
  std::vector<double> sorted(grid.begin(), grid.end());
  std::sort(sorted.begin(), sorted.end());
  double best = sorted.front();
  double best_f1 = -1;
  for (double c : sorted) {
    const auto pred = threshold(probs, c);
    const double f1 = eval::f1_score(pred, labels);
    if (f1 > best_f1) {
      best_f1 = f1;
      best = c;
    }
  }
  return best;
}

inline MatrixXd select_columns(const MatrixXd& x, std::span<const int> cols) {
  MatrixXd out(x.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) out.col(static_cast<Eigen::Index>(c)) = x.col(cols[c]);
  return out;
}

inline MatrixXd select_rows(const MatrixXd& x, std::span<const Eigen::Index> rows) {
  MatrixXd out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = x.row(rows[r]);
  return out;
}

/// Stratified fold assignment: each class is shuffled and dealt round-robin.
inline std::vector<int> stratified_folds(const std::vector<bool>& labels, int folds, std::uint64_t seed) {
  std::vector<int> fold(labels.size(), 0);
  std::mt19937_64 rng(seed);
  for (bool cls : {false, true}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == cls) idx.push_back(i);
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t k = 0; k < idx.size(); ++k) fold[idx[k]] = static_cast<int>(k % static_cast<std::size_t>(folds));
  }
  return fold;
}

/// Mean held-out F1 over stratified folds. Each fold fits on the rest, picks
/// its cutoff there by grid search, and is scored at that cutoff.
inline double cross_validated_f1(const MatrixXd& x, const std::vector<bool>& labels, int folds, const LogisticConfig& cfg,
                                 std::span<const double> grid) {
  const auto fold = stratified_folds(labels, folds, cfg.seed);
  double total = 0;
  int used = 0;
  for (int f = 0; f < folds; ++f) {
    std::vector<Eigen::Index> tr, te;
    for (std::size_t i = 0; i < labels.size(); ++i) (fold[i] == f ? te : tr).push_back(static_cast<Eigen::Index>(i));
    if (te.empty()) continue;
    std::vector<bool> ytr, yte;
    for (auto i : tr) ytr.push_back(labels[i]);
    for (auto i : te) yte.push_back(labels[i]);
    if (std::count(ytr.begin(), ytr.end(), true) == 0 || std::count(ytr.begin(), ytr.end(), false) == 0) continue;
    const MatrixXd xtr = select_rows(x, tr), xte = select_rows(x, te);
    VectorXd y(static_cast<Eigen::Index>(ytr.size()));
    for (std::size_t i = 0; i < ytr.size(); ++i) y(static_cast<Eigen::Index>(i)) = ytr[i] ? 1.0 : 0.0;
    const VectorXd w = train_logistic(xtr, y, cfg);
    const VectorXd ptr = predict_proba(w, xtr), pte = predict_proba(w, xte);
    const double cut = grid_search_cutoff(std::span<const double>(ptr.data(), static_cast<std::size_t>(ptr.size())), ytr, grid);
    std::vector<double> pv(pte.data(), pte.data() + pte.size());
    total += eval::f1_score(threshold(pv, cut), yte);
    ++used;
  }
  return used > 0 ? total / used : 0.0;
}

/// Greedy forward selection by cross-validated F1. A feature is added only
/// when it improves the best score by more than `epsilon`. The returned mask
/// lists column indices in the order they were selected.
inline std::vector<int> forward_select(const MatrixXd& x, const std::vector<bool>& labels, std::span<const int> candidates,
                                       int folds, const LogisticConfig& cfg, double epsilon = 1e-3,
                                       std::span<const double> grid = {}) {
  if (folds < 2) throw Error("forward selection needs at least 2 folds");
  const auto pos = std::count(labels.begin(), labels.end(), true);
  const auto neg = static_cast<std::ptrdiff_t>(labels.size()) - pos;
  if (pos < folds || neg < folds) throw Error("forward selection needs at least `folds` samples per class");
  const auto g = grid.empty() ? default_cutoff_grid() : std::vector<double>(grid.begin(), grid.end());
  LogisticConfig inner = cfg;
  std::vector<int> mask;
  std::vector<int> remaining(candidates.begin(), candidates.end());
  double best = 0.0;
  while (!remaining.empty()) {
    double round_best = -1;
    std::size_t pick = 0;
    for (std::size_t r = 0; r < remaining.size(); ++r) {
      auto trial = mask;
      trial.push_back(remaining[r]);
      const double f1 = cross_validated_f1(select_columns(x, trial), labels, folds, inner, g);
      if (f1 > round_best) {
        round_best = f1;
        pick = r;
      }
    }
    if (round_best <= best + epsilon) break;
    best = round_best;
    mask.push_back(remaining[pick]);
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(pick));
  }
  return mask;
}

}  // namespace trainsense::dsg

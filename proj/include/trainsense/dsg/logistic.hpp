#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "trainsense/core/stats.hpp"
#include "trainsense/core/types.hpp"

namespace trainsense::dsg {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

/// log(1 + exp(z)) without overflow.
inline double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

/// Clip values above the `percentile` quantile to it (upper tail only).
inline std::vector<double> winsorize(std::vector<double> values, double percentile = 0.99) {
  if (!(percentile > 0 && percentile < 1)) throw Error("winsorize percentile must be in (0, 1)");
  if (values.empty()) return values;
  const double cap = stats::quantile(values, percentile);
  for (auto& v : values) v = std::min(v, cap);
  return values;
}

/// Column-wise upper caps at the given percentile.
inline VectorXd winsor_caps(const MatrixXd& x, double percentile = 0.99) {
  if (!(percentile > 0 && percentile < 1)) throw Error("winsorize percentile must be in (0, 1)");
  VectorXd caps(x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    std::vector<double> col(x.col(c).data(), x.col(c).data() + x.rows());
    caps(c) = col.empty() ? std::numeric_limits<double>::infinity() : stats::quantile(col, percentile);
  }
  return caps;
}

inline MatrixXd apply_caps(MatrixXd x, const VectorXd& caps) {
  for (Eigen::Index c = 0; c < x.cols(); ++c) x.col(c) = x.col(c).cwiseMin(caps(c));
  return x;
}

struct Normalization {
  VectorXd mean;
  VectorXd sd;  // 1 where the feature is constant

  MatrixXd apply(const MatrixXd& x) const { return (x.rowwise() - mean.transpose()).array().rowwise() / sd.transpose().array(); }
  MatrixXd invert(const MatrixXd& z) const {
    return ((z.array().rowwise() * sd.transpose().array()).matrix()).rowwise() + mean.transpose();
  }
};

/// Per-column z-scores with the global mean and sample standard deviation.
/// Constant columns pass through unchanged (recorded as mean 0, sd 1).
inline std::pair<MatrixXd, Normalization> normalize(const MatrixXd& x) {
  if (x.rows() < 2) throw Error("normalize needs at least 2 samples");
  Normalization n;
  n.mean = x.colwise().mean().transpose();
  n.sd.resize(x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const double var = (x.col(c).array() - n.mean(c)).square().sum() / static_cast<double>(x.rows() - 1);
    n.sd(c) = var > 0 ? std::sqrt(var) : 1.0;
    if (!(var > 0)) n.mean(c) = 0.0;
  }
  return {n.apply(x), n};
}

inline MatrixXd denormalize(const MatrixXd& z, const Normalization& n) { return n.invert(z); }

/// Linear scores w0 + X w_{1:}.
inline VectorXd linear_scores(const VectorXd& w, const MatrixXd& x) {
  return (x * w.tail(w.size() - 1)).array() + w(0);
}

inline VectorXd predict_proba(const VectorXd& w, const MatrixXd& x) {
  VectorXd z = linear_scores(w, x);
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = sigmoid(z(i));
  return z;
}

/// Mean negative log-likelihood plus 0.5 * l2 * |w_{1:}|^2 (intercept unpenalised).
/// L2 penalty on the non-intercept weights, centred on `centre` when given
/// (a parent model's weights) and on zero otherwise.
inline VectorXd penalty_offset(const VectorXd& w, const VectorXd* centre) {
  if (!centre) return w.tail(w.size() - 1);
  if (centre->size() != w.size()) throw Error("penalty centre has the wrong size");
  return w.tail(w.size() - 1) - centre->tail(w.size() - 1);
}

inline double logistic_objective(const VectorXd& w, const MatrixXd& x, const VectorXd& y, double l2,
                                 const VectorXd* centre = nullptr) {
  const VectorXd z = linear_scores(w, x);
  double nll = 0;
  for (Eigen::Index i = 0; i < z.size(); ++i) nll += softplus(z(i)) - y(i) * z(i);
  const double reg = 0.5 * l2 * penalty_offset(w, centre).squaredNorm();
  return nll / static_cast<double>(x.rows()) + reg;
}

inline VectorXd logistic_gradient(const VectorXd& w, const MatrixXd& x, const VectorXd& y, double l2,
                                  const VectorXd* centre = nullptr) {
  const VectorXd r = predict_proba(w, x) - y;
  VectorXd g(w.size());
  const double n = static_cast<double>(x.rows());
  g(0) = r.sum() / n;
  g.tail(w.size() - 1) = x.transpose() * r / n + l2 * penalty_offset(w, centre);
  return g;
}

inline MatrixXd logistic_hessian(const VectorXd& w, const MatrixXd& x, double l2) {
  const VectorXd p = predict_proba(w, x);
  const auto d = x.cols();
  MatrixXd xa(x.rows(), d + 1);
  xa.col(0).setOnes();
  xa.rightCols(d) = x;
  const VectorXd s = (p.array() * (1.0 - p.array())).matrix();
  MatrixXd h = xa.transpose() * s.asDiagonal() * xa / static_cast<double>(x.rows());
  for (Eigen::Index i = 1; i <= d; ++i) h(i, i) += l2;
  return h;
}

struct FitResult {
  VectorXd weights;
  int iterations = 0;
  bool converged = false;
  std::vector<double> objective;  // per iterate, starting with the initial point
};

/// Damped Newton with Armijo backtracking. Each accepted step lowers the
/// objective; stops when the gradient norm falls to `tol`.
inline FitResult fit_logistic(const MatrixXd& x, const VectorXd& y, double l2, int max_iter, double tol,
                              std::optional<VectorXd> init = std::nullopt, const VectorXd* centre = nullptr) {
  FitResult r;
  r.weights = init ? *init : VectorXd::Zero(x.cols() + 1);
  if (r.weights.size() != x.cols() + 1) throw Error("initial weights have the wrong size");
  double f = logistic_objective(r.weights, x, y, l2, centre);
  r.objective.push_back(f);
  for (int it = 0; it < max_iter; ++it) {
    const VectorXd g = logistic_gradient(r.weights, x, y, l2, centre);
    if (g.norm() <= tol) {
      r.converged = true;
      break;
    }
    MatrixXd h = logistic_hessian(r.weights, x, l2);
    h.diagonal().array() += 1e-10;
    VectorXd step = -h.ldlt().solve(g);
    if (!step.allFinite() || step.dot(g) >= 0) step = -g;
    double t = 1.0;
    double f_new = f;
    VectorXd w_new;
    bool accepted = false;
    for (int ls = 0; ls < 50; ++ls) {
      w_new = r.weights + t * step;
      f_new = logistic_objective(w_new, x, y, l2, centre);
      if (f_new <= f + 1e-4 * t * g.dot(step)) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    r.iterations = it + 1;
    if (!accepted) break;  // no descent possible at machine precision
    r.weights = w_new;
    f = f_new;
    r.objective.push_back(f);
  }
  if (!r.converged) r.converged = logistic_gradient(r.weights, x, y, l2, centre).norm() <= tol;
  return r;
}

struct LogisticConfig {
  int bootstrap_rounds = 25;
  double l2 = 1e-3;
  int max_iter = 100;
  double tol = 1e-8;
  std::uint64_t seed = 7;
  bool balance = true;  // resample classes 1:1 in each round
};

/// Bootstrapped logistic regression. Each round fits a resample (class
/// balanced when cfg.balance) and the final weights are the round average.
/// With zero rounds the full sample is fitted once. `centre` moves the L2
/// penalty's centre (see penalty_offset).
inline VectorXd train_logistic(const MatrixXd& x, const VectorXd& y, const LogisticConfig& cfg,
                               std::optional<VectorXd> init = std::nullopt, const VectorXd* centre = nullptr) {
  std::vector<Eigen::Index> pos, neg;
  for (Eigen::Index i = 0; i < y.size(); ++i) (y(i) > 0.5 ? pos : neg).push_back(i);
  if (pos.empty() || neg.empty()) throw Error("logistic training needs both classes");
  if (cfg.bootstrap_rounds <= 0) return fit_logistic(x, y, cfg.l2, cfg.max_iter, cfg.tol, init, centre).weights;

  std::mt19937_64 rng(cfg.seed);
  VectorXd acc = VectorXd::Zero(x.cols() + 1);
  const auto n = y.size();
  for (int round = 0; round < cfg.bootstrap_rounds; ++round) {
    std::vector<Eigen::Index> idx;
    if (cfg.balance) {
      const auto half = std::max<Eigen::Index>(1, n / 2);
      std::uniform_int_distribution<std::size_t> pp(0, pos.size() - 1), pn(0, neg.size() - 1);
      for (Eigen::Index k = 0; k < half; ++k) idx.push_back(pos[pp(rng)]);
      for (Eigen::Index k = 0; k < n - half; ++k) idx.push_back(neg[pn(rng)]);
    } else {
      std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
      for (Eigen::Index k = 0; k < n; ++k) idx.push_back(pick(rng));
    }
    MatrixXd xs(static_cast<Eigen::Index>(idx.size()), x.cols());
    VectorXd ys(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) {
      xs.row(static_cast<Eigen::Index>(k)) = x.row(idx[k]);
      ys(static_cast<Eigen::Index>(k)) = y(idx[k]);
    }
    acc += fit_logistic(xs, ys, cfg.l2, cfg.max_iter, cfg.tol, init, centre).weights;
  }
  return acc / cfg.bootstrap_rounds;
}

}  // namespace trainsense::dsg

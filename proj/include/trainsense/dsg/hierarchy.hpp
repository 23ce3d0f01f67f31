#pragma once

#include <algorithm>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "trainsense/dsg/features.hpp"
#include "trainsense/dsg/logistic.hpp"
#include "trainsense/dsg/selection.hpp"

namespace trainsense::dsg {

/// One labelled departure event.
struct Sample {
  StationId station = 0;
  std::string line;
  Seconds time = 0;
  DsgFeatures features;
  bool label = false;   // someone was left behind
  bool severe = false;  // someone was left behind for at least the second time
};

enum class Severity { none, dsg1, dsg2plus };

inline std::string to_string(Severity s) {
  switch (s) {
    case Severity::none: return "none";
    case Severity::dsg1: return "DSG-1";
    case Severity::dsg2plus: return "DSG-2+";
  }
  return "none";
}

struct LogisticHead {
  VectorXd weights;  // intercept first, then one per active feature
  double cutoff = 0.5;
};

struct DsgModel {
  LogisticHead dsg;
  std::optional<LogisticHead> severity;
  std::vector<int> feature_mask;  // indices into DsgFeatures::as_array()
  Normalization normalization;    // over all features
  VectorXd caps;                  // winsorisation caps over all features
  std::string level;              // network, line:<id>, station:<id>
  int samples = 0;
  int positives = 0;
};

struct ModelHierarchy {
  DsgModel network;
  std::map<std::string, DsgModel> lines;
  std::map<StationId, DsgModel> stations;
  std::map<StationId, std::string> station_line;
  int min_positive_samples = 50;
};

struct HierarchyConfig {
  LogisticConfig logistic;
  int min_positive_samples = 50;
  double winsor_percentile = 0.99;
  std::vector<double> cutoff_grid = default_cutoff_grid();
  bool select_features = false;
  int folds = 10;
  double epsilon = 1e-3;
  bool severity = true;
  int min_severity_samples = 10;  // per class, for the severity head
  double child_l2 = 0.05;         // shrinkage of line/station weights towards their parent
  bool cv_cutoff = true;          // choose cutoffs on out-of-fold probabilities
};

inline MatrixXd feature_matrix(std::span<const Sample> samples) {
  MatrixXd x(static_cast<Eigen::Index>(samples.size()), static_cast<Eigen::Index>(kNumFeatures));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto a = samples[i].features.as_array();
    for (std::size_t c = 0; c < kNumFeatures; ++c) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = a[c];
  }
  return x;
}

/// Capped, normalised and masked design row(s) for a model.
inline MatrixXd prepare(const DsgModel& m, const MatrixXd& raw) {
  return select_columns(m.normalization.apply(apply_caps(raw, m.caps)), m.feature_mask);
}

namespace detail {

inline VectorXd labels_vector(std::span<const Sample> samples, bool severe) {
  VectorXd y(static_cast<Eigen::Index>(samples.size()));
  for (std::size_t i = 0; i < samples.size(); ++i) y(static_cast<Eigen::Index>(i)) = (severe ? samples[i].severe : samples[i].label) ? 1.0 : 0.0;
  return y;
}

/// Probabilities for every row from a model that did not see it: stratified
/// folds, each scored by a fit on the others. None when a class is too small
/// to give every fold both classes.
inline std::optional<VectorXd> out_of_fold_proba(const MatrixXd& x, const VectorXd& y, const HierarchyConfig& cfg,
                                                 const std::optional<VectorXd>& init, const VectorXd* centre,
                                                 const LogisticConfig& lc) {
  std::vector<bool> yv(static_cast<std::size_t>(y.size()));
  for (Eigen::Index i = 0; i < y.size(); ++i) yv[static_cast<std::size_t>(i)] = y(i) > 0.5;
  const auto pos = std::count(yv.begin(), yv.end(), true);
  const auto neg = static_cast<std::ptrdiff_t>(yv.size()) - pos;
  if (cfg.folds < 2 || pos < cfg.folds || neg < cfg.folds) return std::nullopt;
  const auto fold = stratified_folds(yv, cfg.folds, lc.seed);
  VectorXd out(y.size());
  for (int f = 0; f < cfg.folds; ++f) {
    std::vector<Eigen::Index> tr, te;
    for (std::size_t i = 0; i < yv.size(); ++i) (fold[i] == f ? te : tr).push_back(static_cast<Eigen::Index>(i));
    VectorXd ytr(static_cast<Eigen::Index>(tr.size()));
    for (std::size_t i = 0; i < tr.size(); ++i) ytr(static_cast<Eigen::Index>(i)) = y(tr[i]);
    const VectorXd w = train_logistic(select_rows(x, tr), ytr, lc, init, centre);
    const VectorXd p = predict_proba(w, select_rows(x, te));
    for (std::size_t i = 0; i < te.size(); ++i) out(te[i]) = p(static_cast<Eigen::Index>(i));
  }
  return out;
}

/// Fit one logistic head. A child is shrunk towards its parent's weights
/// (penalty `child_l2` centred on them) instead of towards zero. The cutoff
/// is grid-searched on out-of-fold probabilities when the classes allow it,
/// otherwise on the fitted ones.
inline LogisticHead fit_head(const MatrixXd& x, const VectorXd& y, const HierarchyConfig& cfg,
                             std::optional<VectorXd> parent) {
  LogisticConfig lc = cfg.logistic;
  const VectorXd* centre = nullptr;
  if (parent) {
    lc.l2 = cfg.child_l2;
    centre = &*parent;
  }
  LogisticHead h;
  h.weights = train_logistic(x, y, lc, parent, centre);
  std::optional<VectorXd> p;
  if (cfg.cv_cutoff) p = out_of_fold_proba(x, y, cfg, parent, centre, lc);
  if (!p) p = predict_proba(h.weights, x);
  std::vector<double> pv(p->data(), p->data() + p->size());
  std::vector<bool> yv(static_cast<std::size_t>(y.size()));
  for (Eigen::Index i = 0; i < y.size(); ++i) yv[static_cast<std::size_t>(i)] = y(i) > 0.5;
  h.cutoff = grid_search_cutoff(pv, yv, cfg.cutoff_grid);
  return h;
}

/// Train one node on `samples` with the shared preprocessing of `base`.
inline DsgModel train_node(std::span<const Sample> samples, const DsgModel& base, const DsgModel* parent,
                           const HierarchyConfig& cfg, std::string level) {
  DsgModel m;
  m.feature_mask = base.feature_mask;
  m.normalization = base.normalization;
  m.caps = base.caps;
  m.level = std::move(level);
  m.samples = static_cast<int>(samples.size());
  const VectorXd y = labels_vector(samples, false);
  m.positives = static_cast<int>(y.sum());
  const MatrixXd x = prepare(m, feature_matrix(samples));
  m.dsg = fit_head(x, y, cfg, parent ? std::optional<VectorXd>(parent->dsg.weights) : std::nullopt);

  if (cfg.severity) {
    // second head on DSG-positive events: DSG-1 versus DSG-2+
    std::vector<Sample> pos;
    for (const auto& s : samples)
      if (s.label) pos.push_back(s);
    const VectorXd ys = labels_vector(pos, true);
    const auto severe = static_cast<int>(ys.sum());
    const int mild = static_cast<int>(pos.size()) - severe;
    if (severe >= cfg.min_severity_samples && mild >= cfg.min_severity_samples) {
      std::optional<VectorXd> init;
      if (parent && parent->severity) init = parent->severity->weights;
      m.severity = fit_head(prepare(m, feature_matrix(pos)), ys, cfg, init);
    } else if (parent) {
      m.severity = parent->severity;
    }
  }
  return m;
}

}  // namespace detail

/// Top-down training: the network model on everything, then a model per line
/// and per station wherever at least `min_positive_samples` positives exist.
/// Children start from, and are shrunk towards, their parent's weights and
/// share the network-wide winsorisation caps, normalisation and feature mask.
inline ModelHierarchy train_hierarchy(std::span<const Sample> samples, const HierarchyConfig& cfg) {
  if (samples.size() < 2) throw Error("DSG training needs at least 2 samples");
  ModelHierarchy h;
  h.min_positive_samples = cfg.min_positive_samples;
  for (const auto& s : samples) h.station_line[s.station] = s.line;

  DsgModel base;
  const MatrixXd raw = feature_matrix(samples);
  base.caps = winsor_caps(raw, cfg.winsor_percentile);
  base.normalization = normalize(apply_caps(raw, base.caps)).second;
  base.feature_mask.resize(kNumFeatures);
  std::iota(base.feature_mask.begin(), base.feature_mask.end(), 0);
  if (cfg.select_features) {
    const MatrixXd z = base.normalization.apply(apply_caps(raw, base.caps));
    std::vector<bool> labels;
    for (const auto& s : samples) labels.push_back(s.label);
    LogisticConfig inner = cfg.logistic;
    inner.bootstrap_rounds = 0;
    const auto mask = forward_select(z, labels, base.feature_mask, cfg.folds, inner, cfg.epsilon, cfg.cutoff_grid);
    if (!mask.empty()) base.feature_mask = mask;
  }
  h.network = detail::train_node(samples, base, nullptr, cfg, "network");

  std::map<std::string, std::vector<Sample>> by_line;
  std::map<StationId, std::vector<Sample>> by_station;
  for (const auto& s : samples) {
    by_line[s.line].push_back(s);
    by_station[s.station].push_back(s);
  }
  auto positives = [](const std::vector<Sample>& v) {
    return static_cast<int>(std::count_if(v.begin(), v.end(), [](const Sample& s) { return s.label; }));
  };
  auto both_classes = [](const std::vector<Sample>& v) {
    const auto p = std::count_if(v.begin(), v.end(), [](const Sample& s) { return s.label; });
    return p > 0 && p < static_cast<std::ptrdiff_t>(v.size());
  };
  for (const auto& [line, v] : by_line)
    if (positives(v) >= cfg.min_positive_samples && both_classes(v))
      h.lines[line] = detail::train_node(v, base, &h.network, cfg, "line:" + line);
  for (const auto& [station, v] : by_station) {
    if (positives(v) < cfg.min_positive_samples || !both_classes(v)) continue;
    const auto line_it = h.lines.find(h.station_line[station]);
    const DsgModel* parent = line_it != h.lines.end() ? &line_it->second : &h.network;
    h.stations[station] = detail::train_node(v, base, parent, cfg, "station:" + std::to_string(station));
  }
  return h;
}

struct Prediction {
  double probability = 0.0;
  bool dsg_flag = false;
  Severity severity = Severity::none;
  std::string level;
  bool fallback = false;  // station unknown to the hierarchy; network model used
};

inline Prediction predict_with(const DsgModel& m, const DsgFeatures& f) {
  const auto a = f.as_array();
  MatrixXd raw(1, static_cast<Eigen::Index>(kNumFeatures));
  for (std::size_t c = 0; c < kNumFeatures; ++c) raw(0, static_cast<Eigen::Index>(c)) = a[c];
  const MatrixXd x = prepare(m, raw);
  Prediction p;
  p.level = m.level;
  p.probability = predict_proba(m.dsg.weights, x)(0);
  p.dsg_flag = p.probability >= m.dsg.cutoff;
  if (p.dsg_flag) {
    p.severity = Severity::dsg1;
    if (m.severity && predict_proba(m.severity->weights, x)(0) >= m.severity->cutoff) p.severity = Severity::dsg2plus;
  }
  return p;
}

/// Score with the most specific model available: station, then line, then network.
inline Prediction predict(const ModelHierarchy& h, const DsgFeatures& f, StationId station) {
  if (auto it = h.stations.find(station); it != h.stations.end()) return predict_with(it->second, f);
  auto line = h.station_line.find(station);
  if (line != h.station_line.end()) {
    if (auto it = h.lines.find(line->second); it != h.lines.end()) return predict_with(it->second, f);
    return predict_with(h.network, f);
  }
  auto p = predict_with(h.network, f);
  p.fallback = true;
  return p;
}

inline Prediction predict_network(const ModelHierarchy& h, const DsgFeatures& f) { return predict_with(h.network, f); }

// ---- JSON artifact ----

inline nlohmann::json vec_to_json(const VectorXd& v) {
  auto a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::isfinite(v(i))) a.push_back(v(i));
    else a.push_back(nullptr);
  }
  return a;
}

inline VectorXd vec_from_json(const nlohmann::json& a) {
  VectorXd v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i)
    v(static_cast<Eigen::Index>(i)) = a[i].is_null() ? std::numeric_limits<double>::infinity() : a[i].get<double>();
  return v;
}

inline nlohmann::json model_to_json(const DsgModel& m) {
  nlohmann::json j;
  j["level"] = m.level;
  j["samples"] = m.samples;
  j["positives"] = m.positives;
  j["feature_mask"] = m.feature_mask;
  auto names = nlohmann::json::array();
  for (int c : m.feature_mask) names.push_back(kFeatureNames[static_cast<std::size_t>(c)]);
  j["feature_names"] = names;
  j["weights"] = vec_to_json(m.dsg.weights);
  j["cutoff"] = m.dsg.cutoff;
  if (m.severity) j["severity"] = {{"weights", vec_to_json(m.severity->weights)}, {"cutoff", m.severity->cutoff}};
  j["normalization"] = {{"mean", vec_to_json(m.normalization.mean)}, {"sd", vec_to_json(m.normalization.sd)}};
  j["winsor_caps"] = vec_to_json(m.caps);
  return j;
}

inline DsgModel model_from_json(const nlohmann::json& j) {
  DsgModel m;
  m.level = j.at("level").get<std::string>();
  m.samples = j.value("samples", 0);
  m.positives = j.value("positives", 0);
  m.feature_mask = j.at("feature_mask").get<std::vector<int>>();
  m.dsg.weights = vec_from_json(j.at("weights"));
  m.dsg.cutoff = j.at("cutoff").get<double>();
  if (j.contains("severity"))
    m.severity = LogisticHead{vec_from_json(j["severity"].at("weights")), j["severity"].at("cutoff").get<double>()};
  m.normalization.mean = vec_from_json(j.at("normalization").at("mean"));
  m.normalization.sd = vec_from_json(j.at("normalization").at("sd"));
  m.caps = vec_from_json(j.at("winsor_caps"));
  if (m.dsg.weights.size() != static_cast<Eigen::Index>(m.feature_mask.size()) + 1)
    throw Error("model '" + m.level + "' has " + std::to_string(m.dsg.weights.size()) + " weights for " +
                std::to_string(m.feature_mask.size()) + " features");
  if (!(m.dsg.cutoff > 0 && m.dsg.cutoff < 1)) throw Error("model cutoff must be in (0, 1)");
  return m;
}

inline nlohmann::json hierarchy_to_json(const ModelHierarchy& h, const nlohmann::json& metadata = nlohmann::json::object()) {
  nlohmann::json j;
  j["format"] = "trainsense-dsg-hierarchy";
  j["version"] = 1;
  j["min_positive_samples"] = h.min_positive_samples;
  j["network"] = model_to_json(h.network);
  j["lines"] = nlohmann::json::object();
  for (const auto& [k, m] : h.lines) j["lines"][k] = model_to_json(m);
  j["stations"] = nlohmann::json::object();
  for (const auto& [k, m] : h.stations) j["stations"][std::to_string(k)] = model_to_json(m);
  j["station_line"] = nlohmann::json::object();
  for (const auto& [s, l] : h.station_line) j["station_line"][std::to_string(s)] = l;
  j["metadata"] = metadata;
  return j;
}

inline ModelHierarchy hierarchy_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "trainsense-dsg-hierarchy") throw Error("not a DSG model artifact");
  ModelHierarchy h;
  h.min_positive_samples = j.value("min_positive_samples", 50);
  h.network = model_from_json(j.at("network"));
  for (const auto& [k, v] : j.at("lines").items()) h.lines[k] = model_from_json(v);
  for (const auto& [k, v] : j.at("stations").items()) h.stations[static_cast<StationId>(std::stol(k))] = model_from_json(v);
  for (const auto& [k, v] : j.at("station_line").items()) h.station_line[static_cast<StationId>(std::stol(k))] = v.get<std::string>();
  return h;
}

inline void save_hierarchy(const std::string& path, const ModelHierarchy& h, const nlohmann::json& metadata = {}) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << hierarchy_to_json(h, metadata.is_null() ? nlohmann::json::object() : metadata).dump(2) << "\n";
}

inline ModelHierarchy load_hierarchy(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open model '" + path + "'");
  try {
    return hierarchy_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw Error("malformed model '" + path + "': " + e.what());
  }
}

}  // namespace trainsense::dsg

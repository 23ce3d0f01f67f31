// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

#include "planted.hpp"
#include "trainsense/clustering/baseline.hpp"
#include "trainsense/clustering/dbscan.hpp"
#include "trainsense/clustering/pipeline.hpp"
#include "trainsense/clustering/spectral.hpp"
#include "trainsense/core/trace_io.hpp"
#include "trainsense/dsg/logistic.hpp"
#include "trainsense/dsg/scaling.hpp"
#include "trainsense/dsg/selection.hpp"
#include "trainsense/eval/dsg_experiment.hpp"
#include "trainsense/eval/experiments.hpp"
#include "trainsense/eval/metrics.hpp"
#include "trainsense/eval/stream.hpp"
#include "trainsense/similarity/similarity.hpp"

using namespace trainsense;

namespace {

using clock_type = std::chrono::steady_clock;

double since(clock_type::time_point t0) { return std::chrono::duration<double>(clock_type::now() - t0).count(); }

std::string scenario_path(const std::string& name) { return std::string(TRAINSENSE_SCENARIO_DIR) + "/" + name + ".json"; }

std::string fmt(std::optional<double> v, int prec = 3) {
  if (!v) return "none";
  std::ostringstream os;
  os.precision(prec);
  os << std::fixed << *v;
  return os.str();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

Journey journey(DeviceId dev, std::map<StationId, StopTimes> stops) {
  Journey j;
  j.device = std::move(dev);
  j.stops = std::move(stops);
  return j;
}

// ---------------------------------------------------------------- 1

Journey random_journey(std::mt19937_64& rng, int stations, Seconds span) {
  std::uniform_int_distribution<int> first(0, stations - 1), len(1, 4);
  std::uniform_int_distribution<Seconds> t0(0, span), dwell(0, 40), jitter(-20, 20);
  const int a = first(rng);
  const int b = std::min(stations - 1, a + len(rng) - 1);
  Seconds t = t0(rng);
  std::map<StationId, StopTimes> stops;
  for (int s = a; s <= b; ++s) {
    const Seconds arrive = std::max<Seconds>(0, t + jitter(rng));
    stops[s] = {arrive, arrive + dwell(rng)};
    t += 150;
  }
  return journey("d", std::move(stops));
}

double reference_similarity(const Journey& a, const Journey& b, const similarity::SimilarityParams& p) {
  int common = 0;
  double worst = 0;
  for (const auto& [s, x] : a.stops) {
    auto it = b.stops.find(s);
    if (it == b.stops.end()) continue;
    ++common;
    const double da = std::abs(static_cast<double>(x.first_seen - it->second.first_seen));
    const double dd = std::abs(static_cast<double>(x.last_seen - it->second.last_seen));
    double d = std::max(da, dd);
    if (p.component == TimeComponent::arrival) d = da;
    if (p.component == TimeComponent::departure) d = dd;
    worst = std::max(worst, d);
  }
  if (common == 0) return 0;
  if (p.kind == similarity::Kind::hard) return worst <= p.tau ? common : 0;
  return common * std::exp(-worst * worst / p.two_sigma_sq);
}

Outcome similarity_suite() {
  const auto t0 = clock_type::now();
  using similarity::Kind;
  using similarity::SimilarityParams;
  const std::vector<SimilarityParams> params = {{Kind::soft, 30, 60, -1, TimeComponent::both},
                                                {Kind::soft, 1800, 60, -1, TimeComponent::departure},
                                                {Kind::hard, 30, 30, -1, TimeComponent::both},
                                                {Kind::hard, 30, 60, -1, TimeComponent::arrival}};
  std::mt19937_64 rng(2024);
  std::size_t failures = 0;
  for (int n = 0; n < 10000; ++n) {
    const auto a = random_journey(rng, 6, 400), b = random_journey(rng, 6, 400);
    const int common = similarity::overlap(a, b).common;
    for (const auto& p : params) {
      const double ab = similarity::similarity(a, b, p), ba = similarity::similarity(b, a, p);
      if (ab != ba || ab < 0 || ab > common || std::abs(ab - reference_similarity(a, b, p)) > 1e-12) ++failures;
      if (common == 0 && ab != 0) ++failures;
    }
    if (common > 0) {
      const double tau = 30, s2 = 30;
      const double h = similarity::hard_similarity(a, b, params[2]);
      const double s = similarity::soft_similarity(a, b, params[0]);
      if ((h > 0) != (s >= common * std::exp(-tau * tau / s2) * (1 - 1e-12))) ++failures;
    }
  }
  std::size_t graph_failures = 0;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Journey> js;
    for (int i = 0; i < 50; ++i) js.push_back(random_journey(rng, 8, trial % 2 ? 300 : 3000));
    for (const auto& p : params) {
      std::vector<similarity::Edge> want;
      for (int i = 0; i < 50; ++i)
        for (int j = i + 1; j < 50; ++j) {
          const double w = reference_similarity(js[i], js[j], p);
          if (w > p.effective_min_weight()) want.push_back({i, j, w});
        }
      if (similarity::build_graph(js, p).edges != want) ++graph_failures;
    }
  }
  const double secs = since(t0);
  return {failures == 0 && graph_failures == 0 && secs < 5.0,
          "pair violations " + std::to_string(failures) + ", graph mismatches " + std::to_string(graph_failures) +
              ", " + fmt(secs, 2) + " s"};
}

// ---------------------------------------------------------------- 2

Outcome clean_recovery() {
  const auto s = eval::load_scenario(scenario_path("clean"));
  const auto data = eval::simulate_scenario(s, 1);
  const int trains = static_cast<int>(data.timetable.trains().size());
  const auto g = similarity::build_graph(data.journeys, s.spectral.similarity);
  const auto sc = clustering::spectral_cluster_detailed(g, {std::nullopt, s.spectral.effective_k_max(), s.spectral.seed});
  const auto res = eval::run_spectral(s, data.journeys);
  const auto ari = eval::known_train_ari(res.labeling.labels, data.truth);
  const auto score = eval::score_timetable(res.timetable, data.timetable, s.evaluation);
  // arrival error against every true arrival, not just the peak window
  Seconds worst = 0;
  std::size_t missing = 0;
  for (const auto& e : data.timetable.entries) {
    if (e.station == data.timetable.line.stations.front()) continue;
    std::optional<Seconds> best;
    for (const auto& t : res.timetable.trips) {
      auto it = t.envelope.find(e.station);
      if (it == t.envelope.end()) continue;
      const Seconds d = std::abs(it->second.arrive_est - e.arrive);
      if (!best || d < *best) best = d;
    }
    if (!best) ++missing;
    else worst = std::max(worst, *best);
  }
  const bool pass = trains == 8 && sc.k == 8 && res.timetable.trips.size() == 8u && ari && *ari == 1.0 && worst == 0 &&
                    missing == 0 && score.hit_rate == 1.0;
  return {pass, "true trains " + std::to_string(trains) + ", eigengap k " + std::to_string(sc.k) + ", trips " +
                    std::to_string(res.timetable.trips.size()) + ", ARI " + fmt(ari) + ", max arrival error " +
                    std::to_string(worst) + " s"};
}

// ---------------------------------------------------------------- 3, 4

Outcome nominal_noisy() {
  const auto s = eval::load_scenario(scenario_path("nominal"));
  bool pass = !s.evaluation.seeds.empty();
  std::string detail;
  for (auto seed : s.evaluation.seeds) {
    const auto t0 = clock_type::now();
    const auto r = eval::run_movement_experiment(s, seed);
    const double secs = since(t0);
    const bool ok = r.spectral.hit_rate && *r.spectral.hit_rate >= 0.85 && r.spectral.rmse && *r.spectral.rmse <= 0.6 &&
                    secs < 60;
    pass = pass && ok;
    detail += "seed " + std::to_string(seed) + ": hit " + fmt(r.spectral.hit_rate) + " rmse " + fmt(r.spectral.rmse) +
              " (" + fmt(secs, 1) + " s); ";
  }
  return {pass, detail};
}

Outcome incident_separation() {
  const auto s = eval::load_scenario(scenario_path("incident"));
  bool hit_ok = !s.evaluation.seeds.empty(), rmse_ok = hit_ok;
  std::string detail;
  for (auto seed : s.evaluation.seeds) {
    const auto r = eval::run_movement_experiment(s, seed);
    const auto& sp = r.spectral;
    const auto& bl = r.baseline;
    hit_ok = hit_ok && sp.hit_rate && bl.hit_rate && *sp.hit_rate > *bl.hit_rate;
    rmse_ok = rmse_ok && sp.rmse && bl.rmse && *sp.rmse < *bl.rmse;
    detail += "seed " + std::to_string(seed) + ": hit " + fmt(sp.hit_rate) + " vs " + fmt(bl.hit_rate) + ", rmse " +
              fmt(sp.rmse) + " vs " + fmt(bl.rmse) + "; ";
  }
  detail = std::string("hit ") + (hit_ok ? "ok" : "not ok") + ", rmse " + (rmse_ok ? "ok" : "not ok") + ". " + detail;
  return {hit_ok && rmse_ok, detail};
}

// ---------------------------------------------------------------- 5

Outcome three_station_toy() {
  std::vector<Journey> js;
  for (int d = 0; d < 3; ++d) js.push_back(journey("a" + std::to_string(d), {{0, {0, 30}}, {2, {300, 330}}}));
  for (int d = 0; d < 3; ++d) js.push_back(journey("b" + std::to_string(d), {{1, {150, 180}}, {2, {300, 330}}}));
  const auto base = clustering::baseline_cluster(js, {});
  const auto g = similarity::build_graph(js, similarity::SimilarityParams{});
  const auto sc = clustering::spectral_cluster_detailed(g, {std::nullopt, 5, 7});
  const bool pass = base.trains == 2 && sc.labeling.k == 1 && sc.labeling.outliers() == 0;
  return {pass, "baseline trains " + std::to_string(base.trains) + ", spectral clusters " + std::to_string(sc.labeling.k)};
}

// ---------------------------------------------------------------- 6

Outcome logistic_machinery() {
  using namespace dsg;
  const auto t0 = clock_type::now();
  std::mt19937_64 rng(12);
  std::normal_distribution<double> g(0, 1);
  std::bernoulli_distribution coin(0.4);
  MatrixXd x(60, 5);
  VectorXd y(60);
  for (int i = 0; i < 60; ++i) {
    for (int c = 0; c < 5; ++c) x(i, c) = g(rng);
    y(i) = coin(rng);
  }
  double worst_fd = 0;
  for (int point = 0; point < 100; ++point) {
    VectorXd w(6);
    for (int i = 0; i < 6; ++i) w(i) = 2 * g(rng);
    const VectorXd grad = logistic_gradient(w, x, y, 0.3);
    VectorXd fd(6);
    const double h = 1e-5;
    for (int i = 0; i < 6; ++i) {
      VectorXd a = w, b = w;
      a(i) += h;
      b(i) -= h;
      fd(i) = (logistic_objective(a, x, y, 0.3) - logistic_objective(b, x, y, 0.3)) / (2 * h);
    }
    worst_fd = std::max(worst_fd, (fd - grad).norm() / std::max(grad.norm(), 1e-12));
  }

  const auto d = planted::draw(10000, 42);
  const int ntr = 7500;
  const auto [ztr, norm] = normalize(d.x.topRows(ntr));
  LogisticConfig cfg;
  cfg.balance = false;
  const VectorXd w = train_logistic(ztr, d.y.head(ntr), cfg);
  std::vector<bool> labels;
  for (int i = 0; i < d.y.size(); ++i) labels.push_back(d.y(i) > 0.5);
  const std::vector<bool> ltr(labels.begin(), labels.begin() + ntr), lte(labels.begin() + ntr, labels.end());
  const auto grid = default_cutoff_grid();
  const VectorXd ptr = predict_proba(w, ztr);
  const double cut = grid_search_cutoff(std::vector<double>(ptr.data(), ptr.data() + ptr.size()), ltr, grid);
  const VectorXd pte = predict_proba(w, norm.apply(d.x.bottomRows(10000 - ntr)));
  const double f1 = eval::f1_score(threshold(std::vector<double>(pte.data(), pte.data() + pte.size()), cut), lte);
  const double best = planted::optimal_cutoff(planted::draw(200000, 7).p, grid);
  const double step = grid[1] - grid[0];
  const double secs = since(t0);
  const bool pass = worst_fd <= 1e-5 && f1 >= 0.9 && std::abs(cut - best) <= step + 1e-9 && secs < 30;
  std::ostringstream os;
  os << "max FD rel error " << worst_fd << ", held-out F1 " << fmt(f1) << ", cutoff " << cut << " vs optimal " << best
     << ", " << fmt(secs, 2) << " s";
  return {pass, os.str()};
}

// ---------------------------------------------------------------- 7

Outcome scaling_factor() {
  using namespace dsg;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> theta(0.5, 6.0);
  std::uniform_int_distribution<int> xs(1, 400);
  std::vector<BinCount> ys, xv;
  std::map<std::pair<StationId, int>, double> want;
  for (StationId s = 0; s < 6; ++s)
    for (int b = 0; b < 18; ++b) {
      const double th = theta(rng);
      const double x = xs(rng);
      xv.push_back({s, b, x});
      ys.push_back({s, b, th * x});
      want[{s, b}] = th;
    }
  const auto est = estimate_scaling(ys, xv);
  double worst = 0;
  for (const auto& f : est.factors)
    worst = std::max(worst, std::abs(f.theta - want.at({f.station, f.time_bin})) / want.at({f.station, f.time_bin}));
  const bool exact = est.factors.size() == want.size() && worst <= 4 * std::numeric_limits<double>::epsilon();

  double worst_ar = 0;
  for (double alpha : {0.1, 0.3, 0.75}) {
    ScalingFactor f{0, 0, 5.0, alpha, 0};
    for (int n = 1; n <= 30; ++n) {
      f = update_scaling_online(f, 3.0, 2.0);
      worst_ar = std::max(worst_ar, std::abs(std::abs(f.theta - 1.5) - std::pow(1 - alpha, n) * 3.5));
    }
  }
  std::ostringstream os;
  os << "theta max rel error " << worst << ", AR deviation from (1-alpha)^n " << worst_ar;
  return {exact && worst_ar <= 1e-12, os.str()};
}

// ---------------------------------------------------------------- 8, 9

struct DsgRun {
  eval::Scenario scenario;
  eval::DsgExperiment ex;
};

const DsgRun& dsg_run() {
  static const DsgRun run = [] {
    DsgRun r;
    r.scenario = eval::load_scenario(scenario_path("dsg"));
    r.ex = eval::run_dsg_experiment(r.scenario, r.scenario.evaluation.seeds.front());
    return r;
  }();
  return run;
}

Outcome dsg_end_to_end() {
  const auto& rep = dsg_run().ex.report;
  const auto& h = rep.hierarchy.report;
  const auto& n = rep.network.report;
  const bool pass = h.precision && h.recall && n.precision && *h.precision >= 0.8 && *h.recall >= 0.7 &&
                    *h.precision >= *n.precision && rep.median_mae && *rep.median_mae <= 10;
  std::string per;
  for (const auto& e : rep.dsg_mae) per += " " + std::to_string(e.station) + ":" + fmt(e.mae, 1);
  return {pass, "hierarchy P " + fmt(h.precision) + " R " + fmt(h.recall) + ", network P " + fmt(n.precision) + " R " +
                    fmt(n.recall) + ", median DSG% MAE " + fmt(rep.median_mae, 2) + " (per station" + per + ")"};
}

Outcome robustness() {
  const auto& run = dsg_run();
  const auto curve = eval::run_robustness_sweep(run.scenario, run.ex, run.scenario.evaluation.seeds.front());
  bool steps = curve.size() == 11;
  for (std::size_t i = 0; steps && i < curve.size(); ++i) steps = std::abs(curve[i].level - 0.1 * i) < 1e-9;
  const auto full = std::find_if(curve.begin(), curve.end(), [](const auto& p) { return p.level >= 1.0; });
  bool pass = steps && full != curve.end() && full->score.report.precision && full->score.report.recall;
  std::string detail;
  for (const auto& p : curve) {
    const auto& r = p.score.report;
    detail += fmt(p.level, 1) + ":" + fmt(r.precision, 2) + "/" + fmt(r.recall, 2) + " ";
    if (!pass || p.level < 0.6 - 1e-9) continue;
    const auto& f = full->score.report;
    pass = r.precision && r.recall && std::abs(*r.precision - *f.precision) <= 0.10 &&
           std::abs(*r.recall - *f.recall) <= 0.10;
  }
  return {pass, "level:P/R " + detail};
}

// ---------------------------------------------------------------- 10

std::vector<int> naive_dbscan(const std::vector<Seconds>& t, Seconds eps, int min_pts) {
  const std::size_t n = t.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return t[a] < t[b]; });
  auto neighbours = [&](std::size_t i) {
    std::vector<std::size_t> out;
    for (std::size_t j : order)
      if (std::abs(t[i] - t[j]) <= eps) out.push_back(j);
    return out;
  };
  std::vector<int> label(n, -2);  // -2 unvisited
  int next = 0;
  for (std::size_t i : order) {
    if (label[i] != -2) continue;
    auto nb = neighbours(i);
    if (static_cast<int>(nb.size()) < min_pts) {
      label[i] = -1;
      continue;
    }
    const int c = next++;
    label[i] = c;
    std::vector<std::size_t> queue(nb.begin(), nb.end());
    for (std::size_t q = 0; q < queue.size(); ++q) {
      const std::size_t j = queue[q];
      if (label[j] == -1) label[j] = c;
      if (label[j] != -2) continue;
      label[j] = c;
      auto nj = neighbours(j);
      if (static_cast<int>(nj.size()) >= min_pts) queue.insert(queue.end(), nj.begin(), nj.end());
    }
  }
  return label;
}

// Relabel so that partitions compare regardless of cluster numbering.
std::vector<int> canonical(const std::vector<int>& labels) {
  std::map<int, int> ids;
  std::vector<int> out;
  for (int l : labels) out.push_back(l < 0 ? -1 : ids.try_emplace(l, static_cast<int>(ids.size())).first->second);
  return out;
}

Outcome dbscan_oracle() {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<int> size(0, 50), pts(1, 5);
  std::uniform_int_distribution<Seconds> eps(1, 60), span(10, 2000);
  int mismatches = 0;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Seconds> t(static_cast<std::size_t>(size(rng)));
    std::uniform_int_distribution<Seconds> u(0, span(rng));
    for (auto& x : t) x = u(rng);
    const Seconds e = eps(rng);
    const int m = pts(rng);
    const auto got = clustering::dbscan_1d(t, e, m);
    if (canonical(got.labels) != canonical(naive_dbscan(t, e, m))) ++mismatches;
  }
  return {mismatches == 0, std::to_string(mismatches) + " of 200 instances differ"};
}

// ---------------------------------------------------------------- 11

Outcome stream_equivalence() {
  const auto s = eval::load_scenario(scenario_path("nominal"));
  const auto data = eval::simulate_scenario(s, s.evaluation.seeds.front());
  const auto path = (std::filesystem::temp_directory_path() / "trainsense_acceptance_trace.jsonl").string();
  write_trace_jsonl(path, data.observed.records);
  const auto trace = read_trace(path);
  std::filesystem::remove(path);
  const auto journeys = vectorize_journeys(trace.records, s.gap_threshold, s.line).journeys;
  const auto batch = clustering::run_spectral_pipeline(journeys, s.spectral).timetable;
  bool pass = trace.malformed == 0 && !batch.trips.empty();
  std::string detail = std::to_string(batch.trips.size()) + " trips offline;";
  for (Seconds b : {Seconds{30}, Seconds{300}, Seconds{0}}) {
    const auto t0 = clock_type::now();
    const auto r = eval::stream_run(trace.records, s.line, s.gap_threshold, s.spectral, {b, 600});
    const bool same = r.timetable == batch && r.dropped_late == 0;
    pass = pass && same;
    detail += " batch " + (b > 0 ? std::to_string(b) + " s" : std::string("whole")) + (same ? " identical" : " differs") +
              " (" + std::to_string(r.batches.size()) + " batches, " + fmt(since(t0), 1) + " s);";
  }
  return {pass, detail};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"1 similarity properties and graph oracle", similarity_suite},
      {"2 exact recovery on clean data", clean_recovery},
      {"3 noisy nominal scenario", nominal_noisy},
      {"4 incident separation", incident_separation},
      {"5 three-station baseline failure", three_station_toy},
      {"6 logistic machinery", logistic_machinery},
      {"7 scaling factor", scaling_factor},
      {"8 DSG end to end", dsg_end_to_end},
      {"9 robustness sweep", robustness},
      {"10 DBSCAN oracle", dbscan_oracle},
      {"11 streaming equivalence", stream_equivalence},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << " | " << o.detail << std::endl;
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size() << " criteria passed"
            << std::endl;
  return failed == 0 ? 0 : 1;
}

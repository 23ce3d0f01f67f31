// Command-line driver: simulate lines, cluster journeys into trains, train
// and apply DSG models, and run the evaluation experiments.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "trainsense/trainsense.hpp"

namespace fs = std::filesystem;
using namespace trainsense;
using nlohmann::json;

namespace {

struct Common {
  std::string config;
  std::uint64_t seed = 1;
  bool seed_given = false;
  std::string out = "out";
};

struct Input {
  std::vector<ObservationRecord> records;
  std::vector<Journey> journeys;
  std::optional<eval::ScenarioData> sim;  // set when the input was simulated
  std::size_t malformed = 0;
  std::size_t rejected = 0;
};

eval::Scenario scenario_of(const Common& c) {
  if (c.config.empty()) return {};
  return eval::load_scenario(c.config);
}

std::string out_path(const Common& c, const std::string& name) {
  fs::create_directories(c.out);
  return (fs::path(c.out) / name).string();
}

// Records from --trace, or one simulated day of the scenario.
Input load_input(const eval::Scenario& s, const Common& c, const std::string& trace) {
  Input in;
  if (trace.empty()) {
    auto d = eval::simulate_scenario(s, c.seed);
    in.records = d.observed.records;
    in.journeys = d.journeys;
    in.rejected = d.rejected_records;
    in.sim = std::move(d);
    return in;
  }
  auto r = read_trace(trace);
  in.records = std::move(r.records);
  in.malformed = r.malformed;
  auto v = vectorize_journeys(in.records, s.gap_threshold, s.line);
  in.journeys = std::move(v.journeys);
  in.rejected = v.rejected;
  return in;
}

json input_summary(const Input& in) {
  return {{"records", in.records.size()},
          {"journeys", in.journeys.size()},
          {"malformed_records", in.malformed},
          {"rejected_records", in.rejected},
          {"simulated", in.sim.has_value()}};
}

void write_labels_csv(const std::string& path, std::span<const Journey> journeys, std::span<const clustering::StopLabel> stops) {
  csv::Writer w(path);
  w.row("device", "journey_seq", "station", "label");
  for (const auto& s : stops) {
    const auto& j = journeys[static_cast<std::size_t>(s.journey)];
    w.row(j.device, j.journey_seq, s.station, s.label);
  }
}

json timetable_summary(const clustering::EstimatedTimetable& tt) {
  std::size_t entries = 0;
  for (const auto& t : tt.trips) entries += t.envelope.size();
  return {{"trains", tt.trips.size()}, {"entries", entries}, {"stations", tt.stations().size()}, {"warnings", tt.warnings}};
}

dsg::ScalingTable scaling_from(const eval::Scenario& s, std::span<const Journey> journeys, const std::string& gates,
                               const Input& in) {
  dsg::ScalingTable table(s.dsg.scaling_alpha);
  std::vector<dsg::BinCount> y;
  if (!gates.empty()) y = dsg::read_gate_counts_csv(gates);
  else if (in.sim) y = in.sim->gate_counts;
  if (!y.empty()) table.update(y, dsg::device_counts(journeys));
  return table;
}

int cmd_simulate(const Common& c) {
  const auto s = scenario_of(c);
  const auto d = eval::simulate_scenario(s, c.seed);
  sim::write_timetable_csv(out_path(c, "timetable_truth.csv"), d.timetable);
  write_trace_jsonl(out_path(c, "trace.jsonl"), d.observed.records);
  sim::write_commuters_csv(out_path(c, "commuters.csv"), d.sim.commuters);
  sim::write_dsg_labels_csv(out_path(c, "dsg_labels.csv"), d.sim.windows);
  dsg::write_gate_counts_csv(out_path(c, "gate_counts.csv"), d.gate_counts);
  std::size_t positive = 0;
  for (const auto& w : d.sim.windows) positive += w.positive ? 1 : 0;
  json out = {{"command", "simulate"},
              {"scenario", s.name},
              {"seed", c.seed},
              {"trains", d.timetable.trains().size()},
              {"held_trains", d.held},
              {"commuters", d.sim.commuters.size()},
              {"records", d.observed.records.size()},
              {"journeys", d.journeys.size()},
              {"dsg_windows", d.sim.windows.size()},
              {"dsg_positive_windows", positive},
              {"out", c.out}};
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_cluster(const Common& c, const std::string& method, const std::string& trace) {
  const auto s = scenario_of(c);
  const auto in = load_input(s, c, trace);
  json out = {{"command", "cluster"}, {"method", method}, {"seed", c.seed}, {"input", input_summary(in)}};
  clustering::EstimatedTimetable tt;
  if (method == "spectral") {
    const auto r = clustering::run_spectral_pipeline(in.journeys, s.spectral);
    write_labels_csv(out_path(c, "labels.csv"), in.journeys, clustering::stop_labels(r.labeling, in.journeys));
    out["clusters"] = r.labeling.k;
    out["outlier_journeys"] = r.labeling.outliers();
    out["windows"] = r.windows.size();
    tt = r.timetable;
  } else {
    const auto r = clustering::baseline_cluster(in.journeys, s.baseline);
    write_labels_csv(out_path(c, "labels.csv"), in.journeys, r.stops);
    out["clusters"] = r.trains;
    tt = r.timetable;
  }
  clustering::write_timetable_csv(out_path(c, "timetable.csv"), tt);
  out["timetable"] = timetable_summary(tt);
  if (in.sim) {
    sim::write_timetable_csv(out_path(c, "timetable_truth.csv"), in.sim->timetable);
    out["score"] = eval::to_json(eval::score_timetable(tt, in.sim->timetable, s.evaluation));
  }
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_timetable(const Common& c, const std::string& trace) {
  const auto s = scenario_of(c);
  const auto in = load_input(s, c, trace);
  const auto r = clustering::run_spectral_pipeline(in.journeys, s.spectral);
  clustering::write_timetable_csv(out_path(c, "timetable.csv"), r.timetable);
  clustering::write_headways_csv(out_path(c, "headways.csv"), r.timetable);
  json out = {{"command", "timetable"}, {"seed", c.seed}, {"input", input_summary(in)}, {"timetable", timetable_summary(r.timetable)}};
  if (in.sim) out["score"] = eval::to_json(eval::score_timetable(r.timetable, in.sim->timetable, s.evaluation));
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_dsg_train(const Common& c) {
  const auto s = scenario_of(c);
  const auto ex = eval::run_dsg_experiment(s, c.seed);
  const auto model = out_path(c, "model.json");
  dsg::save_hierarchy(model, ex.model, {{"scenario", s.name}, {"seed", c.seed}, {"train_days", s.dsg.train_days}});
  std::vector<dsg::FeatureRow> rows;
  for (const auto& d : ex.train)
    for (const auto& e : d.events) rows.push_back(e.row);
  dsg::write_features_csv(out_path(c, "train_features.csv"), rows);
  json out = {{"command", "dsg-train"},
              {"scenario", s.name},
              {"seed", c.seed},
              {"model", model},
              {"levels", ex.report.levels},
              {"train_samples", ex.report.train_samples},
              {"train_positives", ex.report.train_positives},
              {"held_out", eval::to_json(ex.report)}};
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_dsg_predict(const Common& c, const std::string& model_path, const std::string& trace, const std::string& gates) {
  const auto s = scenario_of(c);
  const auto h = dsg::load_hierarchy(model_path);
  const auto in = load_input(s, c, trace);
  const auto tt = clustering::run_spectral_pipeline(in.journeys, s.spectral).timetable;
  const auto scaling = scaling_from(s, in.journeys, gates, in);
  const auto rows = dsg::extract_all_features(in.journeys, tt, scaling, s.dsg.features);
  dsg::write_features_csv(out_path(c, "features.csv"), rows);
  csv::Writer w(out_path(c, "predictions.csv"));
  w.row("station", "depart", "probability", "dsg_flag", "severity", "level", "fallback");
  std::size_t flagged = 0;
  for (const auto& r : rows) {
    const auto p = dsg::predict(h, r.features, r.station);
    flagged += p.dsg_flag ? 1 : 0;
    w.row(r.station, r.depart, csv::num(p.probability, 6), p.dsg_flag ? 1 : 0, dsg::to_string(p.severity), p.level,
          p.fallback ? 1 : 0);
  }
  json out = {{"command", "dsg-predict"},
              {"seed", c.seed},
              {"input", input_summary(in)},
              {"events", rows.size()},
              {"flagged", flagged},
              {"scaling_cells", scaling.cells().size()}};
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_evaluate(const Common& c, const std::string& task) {
  const auto s = scenario_of(c);
  json out = {{"command", "evaluate"}, {"task", task}, {"scenario", s.name}};
  if (task == "dsg") {
    const auto ex = eval::run_dsg_experiment(s, c.seed);
    out["report"] = eval::to_json(ex.report);
  } else {
    const auto seeds = c.seed_given ? std::vector<std::uint64_t>{c.seed} : s.evaluation.seeds;
    json runs = json::array();
    for (auto seed : seeds) runs.push_back(eval::to_json(eval::run_movement_experiment(s, seed)));
    csv::Writer w(out_path(c, "movement.csv"));
    w.row("seed", "method", "trains", "truths", "matched", "hit_rate", "rmse_min", "ari");
    auto opt = [](const json& v) { return v.is_null() ? std::string() : csv::num(v.get<double>(), 6); };
    for (const auto& r : runs)
      for (const char* m : {"spectral", "baseline"}) {
        const auto& x = r[m];
        w.row(r["seed"].get<std::uint64_t>(), m, x["trains"].get<int>(), x["truths"].get<std::size_t>(),
              x["matched"].get<std::size_t>(), opt(x["hit_rate"]), opt(x["rmse_min"]), opt(x["ari"]));
      }
    out["runs"] = runs;
  }
  std::ofstream(out_path(c, "report.json")) << out.dump(2) << "\n";
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_robustness(const Common& c) {
  const auto s = scenario_of(c);
  const auto ex = eval::run_dsg_experiment(s, c.seed);
  const auto curve = eval::run_robustness_sweep(s, ex, c.seed);
  eval::write_robustness_csv(out_path(c, "robustness.csv"), curve);
  json pts = json::array();
  for (const auto& p : curve) pts.push_back(eval::to_json(p));
  json out = {{"command", "robustness"}, {"scenario", s.name}, {"seed", c.seed}, {"curve", pts}};
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_stream(const Common& c, const std::string& trace, Seconds batch, Seconds lateness, const std::string& model_path,
               const std::string& gates, bool check) {
  const auto s = scenario_of(c);
  const auto in = load_input(s, c, trace);
  std::optional<dsg::ModelHierarchy> h;
  if (!model_path.empty()) h = dsg::load_hierarchy(model_path);
  const auto scaling = scaling_from(s, in.journeys, gates, in);
  eval::StreamModels models{h ? &*h : nullptr, &scaling, s.dsg.features};
  const auto r = eval::stream_run(in.records, s.line, s.gap_threshold, s.spectral, {batch, lateness}, models);
  eval::write_stream_rows_csv(out_path(c, "stream_timetable.csv"), r.batches);
  eval::write_stream_flags_csv(out_path(c, "stream_flags.csv"), r.batches);
  clustering::write_timetable_csv(out_path(c, "timetable.csv"), r.timetable);
  json out = {{"command", "stream"},
              {"input", input_summary(in)},
              {"batch_seconds", batch},
              {"batches", r.batches.size()},
              {"accepted", r.accepted},
              {"dropped_late", r.dropped_late},
              {"cache_hits", r.cache_hits},
              {"cache_misses", r.cache_misses},
              {"timetable", timetable_summary(r.timetable)}};
  if (check) {
    const auto batch_tt = clustering::run_spectral_pipeline(in.journeys, s.spectral).timetable;
    out["matches_batch"] = r.dropped_late == 0 ? json(batch_tt == r.timetable) : json(nullptr);
  }
  std::cout << out.dump(2) << "\n";
  return 0;
}

void fail(const std::string& kind, const std::string& message) {
  std::cerr << json{{"error", kind}, {"message", message}}.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"trainsense: train movement and demand-supply gap analytics from passive wifi traces"};
  app.require_subcommand(1);
  Common c;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", c.config, "scenario JSON");
    sub->add_option("--seed", c.seed, "run seed")->each([&](const std::string&) { c.seed_given = true; });
    sub->add_option("--out", c.out, "output directory");
  };

  auto* simulate = app.add_subcommand("simulate", "simulate a line and write ground truth and the observed trace");
  common(simulate);

  std::string method = "spectral", trace, model, gates, task = "movement";
  auto* cluster = app.add_subcommand("cluster", "group journeys into train trips");
  common(cluster);
  cluster->add_option("--method", method, "baseline or spectral")->check(CLI::IsMember({"baseline", "spectral"}));
  cluster->add_option("--trace", trace, "trace file (JSONL or CSV); simulated when absent");

  auto* timetable = app.add_subcommand("timetable", "estimate the timetable and headways");
  common(timetable);
  timetable->add_option("--trace", trace, "trace file (JSONL or CSV); simulated when absent");

  auto* train = app.add_subcommand("dsg-train", "train the DSG model hierarchy on simulated days");
  common(train);

  auto* predict = app.add_subcommand("dsg-predict", "flag departures with a trained hierarchy");
  common(predict);
  predict->add_option("--model", model, "model JSON from dsg-train")->required();
  predict->add_option("--trace", trace, "trace file (JSONL or CSV); simulated when absent");
  predict->add_option("--gates", gates, "fare-gate counts CSV (station,time_bin,entries)");

  auto* evaluate = app.add_subcommand("evaluate", "run the movement or DSG experiment");
  common(evaluate);
  evaluate->add_option("--task", task, "movement or dsg")->check(CLI::IsMember({"movement", "dsg"}));

  auto* robustness = app.add_subcommand("robustness", "precision and recall against device sampling level");
  common(robustness);

  Seconds batch = 300, lateness = 600;
  bool check = false;
  auto* stream = app.add_subcommand("stream", "replay a trace in mini-batches");
  common(stream);
  stream->add_option("--trace", trace, "trace file (JSONL or CSV); simulated when absent");
  stream->add_option("--batch-seconds", batch, "batch length in event time; <= 0 for one batch");
  stream->add_option("--lateness", lateness, "records older than the watermark by more than this are dropped");
  stream->add_option("--model", model, "model JSON from dsg-train; no flags when absent");
  stream->add_option("--gates", gates, "fare-gate counts CSV");
  stream->add_flag("--check", check, "compare the final timetable with batch mode");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    fail("usage", e.what());
    return 2;
  }

  try {
    if (*simulate) return cmd_simulate(c);
    if (*cluster) return cmd_cluster(c, method, trace);
    if (*timetable) return cmd_timetable(c, trace);
    if (*train) return cmd_dsg_train(c);
    if (*predict) return cmd_dsg_predict(c, model, trace, gates);
    if (*evaluate) return cmd_evaluate(c, task);
    if (*robustness) return cmd_robustness(c);
    if (*stream) return cmd_stream(c, trace, batch, lateness, model, gates, check);
  } catch (const std::exception& e) {
    fail("runtime", e.what());
    return 1;
  }
  return 1;
}

#pragma once

#include <algorithm>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "trainsense/clustering/pipeline.hpp"
#include "trainsense/core/csv.hpp"
#include "trainsense/core/vectorize.hpp"
#include "trainsense/dsg/features.hpp"
#include "trainsense/dsg/hierarchy.hpp"
#include "trainsense/dsg/scaling.hpp"

namespace trainsense::eval {

struct StreamConfig {
  Seconds batch_seconds = 300;  // <= 0 processes the whole input as one batch
  Seconds lateness = 600;       // records older than watermark - lateness are dropped
};

/// Trained models used to flag departures while streaming.
struct StreamModels {
  const dsg::ModelHierarchy* hierarchy = nullptr;
  const dsg::ScalingTable* scaling = nullptr;
  dsg::FeatureConfig features;
};

struct TimetableRow {
  TrainId train;
  StationId station = 0;
  Seconds arrive = 0;
  Seconds depart = 0;
  int support = 0;
};

struct DsgFlagRow {
  StationId station = 0;
  Seconds depart = 0;
  double probability = 0.0;
  bool flag = false;
  dsg::Severity severity = dsg::Severity::none;
  bool fallback = false;
};

struct StreamBatch {
  int index = 0;
  Seconds end = 0;          // exclusive upper bound of the batch's time range
  std::size_t records = 0;  // accepted in this batch
  std::size_t dropped = 0;  // late records dropped in this batch
  std::vector<TimetableRow> rows;
  std::vector<DsgFlagRow> flags;
};

struct StreamResult {
  clustering::EstimatedTimetable timetable;
  std::vector<StreamBatch> batches;
  std::size_t accepted = 0;
  std::size_t dropped_late = 0;
  std::size_t cache_hits = 0;
  std::size_t cache_misses = 0;
};

namespace detail {

using RowKey = std::tuple<StationId, Seconds, Seconds>;

/// Rows of `tt` not emitted before, in trip order.
inline std::vector<TimetableRow> new_rows(const clustering::EstimatedTimetable& tt, std::set<RowKey>& emitted) {
  std::vector<TimetableRow> out;
  for (const auto& t : tt.trips)
    for (const auto& [s, e] : t.envelope)
      if (emitted.insert({s, e.arrive_est, e.depart_est}).second)
        out.push_back({t.train, s, e.arrive_est, e.depart_est, e.support});
  return out;
}

/// Flags for departures that are at least `grace` older than the watermark
/// and have not been scored yet.
inline std::vector<DsgFlagRow> new_flags(const clustering::EstimatedTimetable& tt, std::span<const Journey> journeys,
                                         const StreamModels& models, Seconds watermark, bool final_batch,
                                         std::set<std::pair<StationId, Seconds>>& scored) {
  std::vector<DsgFlagRow> out;
  if (!models.hierarchy) return out;
  const dsg::ScalingTable fallback;
  const auto& scaling = models.scaling ? *models.scaling : fallback;
  for (const auto& r : dsg::extract_all_features(journeys, tt, scaling, models.features)) {
    if (!final_batch && r.depart + models.features.grace >= watermark) continue;
    if (!scored.insert({r.station, r.depart}).second) continue;
    const auto p = dsg::predict(*models.hierarchy, r.features, r.station);
    out.push_back({r.station, r.depart, p.probability, p.dsg_flag, p.severity, p.fallback});
  }
  return out;
}

}  // namespace detail

/// Replay records in their given order in mini-batches of `batch_seconds`
/// of event time. Each batch re-vectorizes everything accepted so far and
/// re-runs the pipeline; windows whose journeys did not change are taken
/// from the cache. The last batch's timetable is the full-data result.
inline StreamResult stream_run(std::span<const ObservationRecord> records, const LineTopology& line,
                               Seconds gap_threshold, const clustering::SpectralPipelineConfig& cfg,
                               const StreamConfig& sc = {}, const StreamModels& models = {}) {
  if (sc.lateness < 0) throw Error("lateness must be non-negative");
  StreamResult res;
  clustering::WindowCache cache;
  std::vector<ObservationRecord> accepted;
  std::set<detail::RowKey> emitted;
  std::set<std::pair<StationId, Seconds>> scored;
  std::optional<Seconds> watermark;
  const bool whole = sc.batch_seconds <= 0;

  StreamBatch current;
  bool open = false;
  auto flush = [&](bool final_batch) {
    if (!open) return;
    open = false;
    if (current.records == 0 && !final_batch) {
      res.dropped_late += current.dropped;
      return;
    }
    const auto journeys = vectorize_journeys(accepted, gap_threshold, line).journeys;
    if (journeys.empty()) {
      res.timetable = {};
    } else {
      res.timetable = clustering::run_spectral_pipeline(journeys, cfg, &cache).timetable;
    }
    current.rows = detail::new_rows(res.timetable, emitted);
    current.flags = detail::new_flags(res.timetable, journeys, models, watermark.value_or(0), final_batch, scored);
    res.dropped_late += current.dropped;
    if (current.records > 0 || !current.rows.empty() || !current.flags.empty() || current.dropped > 0)
      res.batches.push_back(std::move(current));
  };

  auto end_of = [&](Seconds t) {
    const Seconds b = sc.batch_seconds;
    return ((t >= 0 ? t / b : -((-t + b - 1) / b)) + 1) * b;
  };
  Seconds batch_end = 0;
  for (const auto& r : records) {
    if (open && !whole && r.timestamp >= batch_end) {
      current.end = batch_end;
      flush(false);
    }
    if (!open) {
      current = {};
      current.index = static_cast<int>(res.batches.size());
      if (!whole) batch_end = std::max(batch_end, end_of(r.timestamp));
      open = true;
    }
    if (watermark && r.timestamp < *watermark - sc.lateness) {
      ++current.dropped;
      continue;
    }
    watermark = watermark ? std::max(*watermark, r.timestamp) : r.timestamp;
    accepted.push_back(r);
    ++current.records;
    ++res.accepted;
  }
  if (open) {
    current.end = whole ? watermark.value_or(0) + 1 : batch_end;
    flush(true);
  }
  res.cache_hits = cache.hits;
  res.cache_misses = cache.misses;
  return res;
}

inline void write_stream_rows_csv(const std::string& path, std::span<const StreamBatch> batches) {
  csv::Writer w(path);
  w.row("batch", "train", "station", "arrive_est", "depart_est", "support");
  for (const auto& b : batches)
    for (const auto& r : b.rows) w.row(b.index, r.train, r.station, r.arrive, r.depart, r.support);
}

inline void write_stream_flags_csv(const std::string& path, std::span<const StreamBatch> batches) {
  csv::Writer w(path);
  w.row("batch", "station", "depart", "probability", "dsg_flag", "severity", "fallback");
  for (const auto& b : batches)
    for (const auto& f : b.flags)
      w.row(b.index, f.station, f.depart, csv::num(f.probability, 6), f.flag ? 1 : 0, dsg::to_string(f.severity),
            f.fallback ? 1 : 0);
}

}  // namespace trainsense::eval

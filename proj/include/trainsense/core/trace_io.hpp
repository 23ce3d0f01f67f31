#pragma once

#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "trainsense/core/csv.hpp"
#include "trainsense/core/types.hpp"

namespace trainsense {

struct TraceReadResult {
  std::vector<ObservationRecord> records;
  std::size_t malformed = 0;
};

namespace detail {

inline bool looks_like_jsonl(const std::string& path, const std::string& first_line) {
  if (path.ends_with(".jsonl") || path.ends_with(".json")) return true;
  if (path.ends_with(".csv")) return false;
  for (char c : first_line) {
    if (c == ' ' || c == '\t') continue;
    return c == '{';
  }
  return false;
}

inline bool parse_json_record(const std::string& line, ObservationRecord& rec) {
  auto j = nlohmann::json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) return false;
  if (!j.contains("device") || !j.contains("station") || !j.contains("timestamp")) return false;
  const auto& d = j["device"];
  rec.device = d.is_string() ? d.get<std::string>() : d.dump();
  if (!j["station"].is_number_integer() || !j["timestamp"].is_number()) return false;
  rec.station = j["station"].get<StationId>();
  rec.timestamp = j["timestamp"].is_number_integer()
                      ? j["timestamp"].get<Seconds>()
                      : static_cast<Seconds>(j["timestamp"].get<double>());
  return true;
}

inline bool parse_csv_record(const std::string& line, ObservationRecord& rec) {
  auto f = csv::split(line);
  if (f.size() < 3) return false;
  try {
    std::size_t pos = 0;
    rec.device = f[0];
    rec.station = static_cast<StationId>(std::stol(f[1], &pos));
    if (pos != f[1].size()) return false;
    rec.timestamp = static_cast<Seconds>(std::stod(f[2]));
  } catch (const std::exception&) {
    return false;
  }
  return true;
}

}  // namespace detail

/// Read a trace file: JSON Lines or CSV with `device,station,timestamp`.
/// Malformed lines are counted and skipped.
inline TraceReadResult read_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open trace '" + path + "'");
  TraceReadResult out;
  std::string line;
  bool first = true;
  bool jsonl = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (first) {
      jsonl = detail::looks_like_jsonl(path, line);
      first = false;
      if (!jsonl && line.rfind("device", 0) == 0) continue;  // header
    }
    ObservationRecord rec;
    const bool ok = jsonl ? detail::parse_json_record(line, rec) : detail::parse_csv_record(line, rec);
    if (ok)
      out.records.push_back(std::move(rec));
    else
      ++out.malformed;
  }
  return out;
}

inline std::string to_jsonl(const ObservationRecord& r) {
  nlohmann::json j = {{"device", r.device}, {"station", r.station}, {"timestamp", r.timestamp}};
  return j.dump();
}

inline void write_trace_jsonl(const std::string& path, std::span<const ObservationRecord> records) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  for (const auto& r : records) out << to_jsonl(r) << '\n';
}

inline void write_trace_csv(const std::string& path, std::span<const ObservationRecord> records) {
  csv::Writer w(path);
  w.row("device", "station", "timestamp");
  for (const auto& r : records) w.row(r.device, r.station, r.timestamp);
}

}  // namespace trainsense

#pragma once

#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "trainsense/core/csv.hpp"
#include "trainsense/core/types.hpp"

namespace trainsense::dsg {

inline constexpr Seconds kScalingBin = 600;

inline int time_bin(Seconds t, Seconds bin = kScalingBin) {
  return static_cast<int>(t >= 0 ? t / bin : -((-t + bin - 1) / bin));
}

struct ScalingFactor {
  StationId station = 0;
  int time_bin = 0;
  double theta = 1.0;
  double alpha = 0.3;
  int skipped_updates = 0;  // online updates ignored because x_new was 0
};

/// A count per (station, time bin): fare-gate entries or connected devices.
struct BinCount {
  StationId station = 0;
  int time_bin = 0;
  double count = 0.0;
};

struct ScalingEstimate {
  std::vector<ScalingFactor> factors;
  std::vector<std::pair<StationId, int>> skipped;  // bins with no usable ratio
};

/// theta = Y / X per bin. A bin missing on one side counts as 0 there; bins
/// with X = 0 (undefined) or Y = 0 (theta must stay positive) are skipped.
inline ScalingEstimate estimate_scaling(std::span<const BinCount> gate_counts, std::span<const BinCount> device_counts,
                                        double alpha = 0.3) {
  if (!(alpha > 0 && alpha <= 1)) throw Error("alpha must be in (0, 1]");
  std::map<std::pair<StationId, int>, std::pair<double, double>> bins;
  for (const auto& y : gate_counts) {
    if (y.count < 0) throw Error("negative gate count");
    bins[{y.station, y.time_bin}].first += y.count;
  }
  for (const auto& x : device_counts) {
    if (x.count < 0) throw Error("negative device count");
    bins[{x.station, x.time_bin}].second += x.count;
  }
  ScalingEstimate out;
  for (const auto& [key, yx] : bins) {
    if (yx.second == 0 || yx.first == 0) {
      out.skipped.push_back(key);
      continue;
    }
    out.factors.push_back({key.first, key.second, yx.first / yx.second, alpha, 0});
  }
  return out;
}

/// Auto-regressive update theta <- (1 - alpha) theta + alpha y / x.
inline ScalingFactor update_scaling_online(const ScalingFactor& prev, double y_new, double x_new) {
  if (y_new < 0 || x_new < 0) throw Error("negative count");
  ScalingFactor out = prev;
  if (x_new == 0 || y_new == 0) {
    ++out.skipped_updates;
    return out;
  }
  out.theta = (1.0 - prev.alpha) * prev.theta + prev.alpha * (y_new / x_new);
  return out;
}

/// Scaling factors for lookup. Unknown bins fall back to the station's mean
/// theta, then to 1.
class ScalingTable {
 public:
  explicit ScalingTable(double alpha = 0.3) : alpha_(alpha) {
    if (!(alpha > 0 && alpha <= 1)) throw Error("alpha must be in (0, 1]");
  }

  double alpha() const { return alpha_; }

  void set(const ScalingFactor& f) { cells_[{f.station, f.time_bin}] = f; }

  /// Fold one period of counts in: new cells take the ratio, known cells the AR update.
  void update(std::span<const BinCount> gate_counts, std::span<const BinCount> device_counts) {
    std::map<std::pair<StationId, int>, std::pair<double, double>> bins;
    for (const auto& y : gate_counts) bins[{y.station, y.time_bin}].first += y.count;
    for (const auto& x : device_counts) bins[{x.station, x.time_bin}].second += x.count;
    for (const auto& [key, yx] : bins) {
      auto it = cells_.find(key);
      if (it == cells_.end()) {
        if (yx.first > 0 && yx.second > 0) cells_[key] = {key.first, key.second, yx.first / yx.second, alpha_, 0};
        else ++skipped_;
      } else {
        it->second = update_scaling_online(it->second, yx.first, yx.second);
      }
    }
  }

  double theta(StationId s, Seconds t, Seconds bin = kScalingBin) const {
    if (auto it = cells_.find({s, time_bin(t, bin)}); it != cells_.end()) return it->second.theta;
    double sum = 0;
    int n = 0;
    for (auto it = cells_.lower_bound({s, std::numeric_limits<int>::min()}); it != cells_.end() && it->first.first == s;
         ++it) {
      sum += it->second.theta;
      ++n;
    }
    return n > 0 ? sum / n : 1.0;
  }

  const std::map<std::pair<StationId, int>, ScalingFactor>& cells() const { return cells_; }
  int skipped() const { return skipped_; }

 private:
  double alpha_;
  std::map<std::pair<StationId, int>, ScalingFactor> cells_;
  int skipped_ = 0;
};

inline void write_gate_counts_csv(const std::string& path, std::span<const BinCount> counts) {
  csv::Writer w(path);
  w.row("station", "time_bin", "entries");
  for (const auto& c : counts) w.row(c.station, c.time_bin, csv::num(c.count, 3));
}

inline std::vector<BinCount> read_gate_counts_csv(const std::string& path) {
  std::vector<BinCount> out;
  const auto rows = csv::read_all(path);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (i == 0 && !r.empty() && r[0] == "station") continue;
    if (r.size() < 3) throw Error("gate-count row " + std::to_string(i + 1) + " has fewer than 3 fields");
    try {
      out.push_back({static_cast<StationId>(std::stol(r[0])), std::stoi(r[1]), std::stod(r[2])});
    } catch (const std::exception&) {
      throw Error("gate-count row " + std::to_string(i + 1) + " is not numeric");
    }
  }
  return out;
}

}  // namespace trainsense::dsg

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "trainsense/core/stats.hpp"
#include "trainsense/core/trace_io.hpp"
#include "trainsense/core/vectorize.hpp"

using namespace trainsense;

namespace {

const LineTopology kLine = LineTopology::contiguous("L1", 10);

std::vector<Journey> vec(const std::vector<ObservationRecord>& r, Seconds gap = 3600) {
  return vectorize_journeys(r, gap, kLine).journeys;
}

// Sessions by brute force: sort each device's timestamps and cut wherever
// the gap exceeds the threshold.
std::set<std::tuple<DeviceId, StationId, Seconds, Seconds>> brute_sessions(const std::vector<ObservationRecord>& recs,
                                                                           Seconds gap) {
  std::map<DeviceId, std::vector<ObservationRecord>> by;
  for (const auto& r : recs) by[r.device].push_back(r);
  std::set<std::tuple<DeviceId, StationId, Seconds, Seconds>> out;
  for (auto& [d, v] : by) {
    std::sort(v.begin(), v.end(), [](auto& a, auto& b) {
      return a.timestamp != b.timestamp ? a.timestamp < b.timestamp : a.station < b.station;
    });
    std::vector<std::vector<ObservationRecord>> sessions(1);
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i > 0 && v[i].timestamp - v[i - 1].timestamp > gap) sessions.emplace_back();
      sessions.back().push_back(v[i]);
    }
    for (const auto& s : sessions) {
      std::map<StationId, std::pair<Seconds, Seconds>> mm;
      for (const auto& r : s) {
        auto [it, ins] = mm.try_emplace(r.station, r.timestamp, r.timestamp);
        it->second.first = std::min(it->second.first, r.timestamp);
        it->second.second = std::max(it->second.second, r.timestamp);
      }
      for (const auto& [st, p] : mm) out.insert({d, st, p.first, p.second});
    }
  }
  return out;
}

std::set<std::tuple<DeviceId, StationId, Seconds, Seconds>> flatten(const std::vector<Journey>& js) {
  std::set<std::tuple<DeviceId, StationId, Seconds, Seconds>> out;
  for (const auto& j : js)
    for (const auto& [s, st] : j.stops) out.insert({j.device, s, st.first_seen, st.last_seen});
  return out;
}

std::vector<ObservationRecord> random_records(std::mt19937_64& rng, int n) {
  std::uniform_int_distribution<int> dev(0, 5), st(0, 9);
  std::uniform_int_distribution<Seconds> t(0, 20000);
  std::vector<ObservationRecord> out;
  for (int i = 0; i < n; ++i) out.push_back({"d" + std::to_string(dev(rng)), st(rng), t(rng)});
  return out;
}

}  // namespace

TEST(Vectorize, SingleRecord) {
  const auto js = vec({{"d1", 3, 100}});
  ASSERT_EQ(js.size(), 1u);
  EXPECT_EQ(js[0].device, "d1");
  EXPECT_EQ(js[0].stops.at(3), (StopTimes{100, 100}));
}

TEST(Vectorize, MinMaxPerStation) {
  const auto js = vec({{"d1", 3, 100}, {"d1", 3, 160}, {"d1", 4, 300}});
  ASSERT_EQ(js.size(), 1u);
  EXPECT_EQ(js[0].stops.size(), 2u);
  EXPECT_EQ(js[0].stops.at(3), (StopTimes{100, 160}));
  EXPECT_EQ(js[0].stops.at(4), (StopTimes{300, 300}));
}

TEST(Vectorize, GapSplitsJourneys) {
  const auto js = vec({{"d1", 3, 100}, {"d1", 3, 50000}});
  ASSERT_EQ(js.size(), 2u);
  EXPECT_EQ(js[0].stops.at(3), (StopTimes{100, 100}));
  EXPECT_EQ(js[1].stops.at(3), (StopTimes{50000, 50000}));
  EXPECT_EQ(js[0].journey_seq, 0);
  EXPECT_EQ(js[1].journey_seq, 1);
}

TEST(Vectorize, GapIsExclusive) {
  EXPECT_EQ(vec({{"d", 1, 0}, {"d", 1, 3600}}).size(), 1u);
  EXPECT_EQ(vec({{"d", 1, 0}, {"d", 1, 3601}}).size(), 2u);
}

TEST(Vectorize, RejectsUnknownStationsAndCounts) {
  auto r = vectorize_journeys(std::vector<ObservationRecord>{{"d", 1, 5}, {"d", 42, 6}, {"e", -1, 7}, {"f", 2, -3}}, 3600, kLine);
  EXPECT_EQ(r.rejected, 3u);
  ASSERT_EQ(r.journeys.size(), 1u);
}

TEST(Vectorize, BadGapThrows) {
  EXPECT_THROW(vec({{"d", 1, 0}}, 0), Error);
}

TEST(Vectorize, MatchesBruteForceSegmentation) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const auto recs = random_records(rng, 80);
    for (Seconds gap : {300, 1800, 3600}) EXPECT_EQ(flatten(vec(recs, gap)), brute_sessions(recs, gap));
  }
}

TEST(Vectorize, PermutationInvariant) {
  std::mt19937_64 rng(5);
  auto recs = random_records(rng, 200);
  const auto ref = vec(recs);
  for (int i = 0; i < 10; ++i) {
    std::shuffle(recs.begin(), recs.end(), rng);
    EXPECT_EQ(vec(recs), ref);
  }
}

TEST(Vectorize, IdempotentOnExpandedOutput) {
  std::mt19937_64 rng(6);
  const auto js = vec(random_records(rng, 300), 1200);
  EXPECT_EQ(vec(expand_journeys(js, 1200), 1200), js);
}

TEST(Vectorize, IdempotentOverRandomTraces) {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 50; ++trial) {
    const auto recs = random_records(rng, 120);
    for (Seconds gap : {300, 1800, 3600}) {
      const auto js = vec(recs, gap);
      EXPECT_EQ(vec(expand_journeys(js, gap), gap), js);
    }
  }
}

TEST(Vectorize, EndpointsOnlyExpansion) {
  const auto js = vec({{"d", 1, 0}, {"d", 1, 100}, {"d", 2, 50}});
  const std::vector<ObservationRecord> want = {{"d", 1, 0}, {"d", 1, 100}, {"d", 2, 50}};
  EXPECT_EQ(expand_journeys(js), want);
}

TEST(Vectorize, StopCountBoundedByDistinctSessions) {
  std::mt19937_64 rng(8);
  const auto recs = random_records(rng, 300);
  std::size_t stops = 0;
  for (const auto& j : vec(recs, 900)) stops += j.stops.size();
  EXPECT_LE(stops, brute_sessions(recs, 900).size());
}

TEST(Vectorize, StopsAreOrdered) {
  std::mt19937_64 rng(9);
  for (const auto& j : vec(random_records(rng, 300))) {
    ASSERT_FALSE(j.stops.empty());
    for (const auto& [s, st] : j.stops) EXPECT_LE(st.first_seen, st.last_seen);
  }
}

TEST(TraceIo, JsonlAndCsvRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "trainsense_core_io";
  std::filesystem::create_directories(dir);
  const std::vector<ObservationRecord> recs = {{"a", 0, 10}, {"b", 3, 20}, {"a,b", 1, 30}};
  write_trace_jsonl((dir / "t.jsonl").string(), recs);
  auto j = read_trace((dir / "t.jsonl").string());
  EXPECT_EQ(j.records, recs);
  EXPECT_EQ(j.malformed, 0u);

  const std::vector<ObservationRecord> plain = {{"a", 0, 10}, {"b", 3, 20}};
  write_trace_csv((dir / "t.csv").string(), plain);
  EXPECT_EQ(read_trace((dir / "t.csv").string()).records, plain);
}

TEST(TraceIo, MalformedLinesAreCounted) {
  const auto path = std::filesystem::temp_directory_path() / "trainsense_bad.jsonl";
  std::ofstream(path) << "{\"device\":\"a\",\"station\":1,\"timestamp\":5}\nnot json\n{\"device\":\"b\"}\n\n";
  const auto r = read_trace(path.string());
  EXPECT_EQ(r.records.size(), 1u);
  EXPECT_EQ(r.malformed, 2u);
}

TEST(TraceIo, MissingFileThrows) {
  EXPECT_THROW(read_trace("/nonexistent/trace.jsonl"), Error);
}

TEST(Stats, QuantileMatchesLinearInterpolation) {
  EXPECT_DOUBLE_EQ(stats::quantile({1, 2, 3, 4}, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(stats::quantile({100, 102, 104}, 0.0), 100);
  EXPECT_DOUBLE_EQ(stats::quantile({100, 102, 104}, 1.0), 104);
  EXPECT_DOUBLE_EQ(stats::quantile({5}, 0.3), 5);
}

TEST(Stats, PearsonOfLinearIsOne) {
  std::vector<double> x{1, 2, 3, 4}, y{3, 5, 7, 9};
  EXPECT_NEAR(stats::pearson(x, y), 1.0, 1e-12);
}

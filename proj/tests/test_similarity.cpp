#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "trainsense/similarity/similarity.hpp"

using namespace trainsense;
using namespace trainsense::similarity;

namespace {

Journey journey(std::map<StationId, StopTimes> stops, DeviceId dev = "d") {
  Journey j;
  j.device = std::move(dev);
  j.stops = std::move(stops);
  return j;
}

SimilarityParams soft(double two_sigma_sq = 30, TimeComponent c = TimeComponent::both) {
  SimilarityParams p;
  p.kind = Kind::soft;
  p.two_sigma_sq = two_sigma_sq;
  p.component = c;
  return p;
}

SimilarityParams hard(double tau, TimeComponent c = TimeComponent::both) {
  SimilarityParams p;
  p.kind = Kind::hard;
  p.tau = tau;
  p.component = c;
  return p;
}

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
  return journey(std::move(stops));
}

// Direct evaluation of the kernel from the common-station count and the
// largest per-station difference, computed without the library's overlap().
double reference(const Journey& a, const Journey& b, const SimilarityParams& p) {
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
  if (p.kind == Kind::hard) return worst <= p.tau ? common : 0;
  return common * std::exp(-worst * worst / p.two_sigma_sq);
}

}  // namespace

TEST(Overlap, IdenticalAndDisjoint) {
  const auto j = journey({{1, {0, 10}}, {2, {100, 110}}, {3, {200, 210}}});
  const auto o = overlap(j, j);
  EXPECT_EQ(o.common, 3);
  EXPECT_EQ(o.max_diff, 0);
  const auto k = journey({{5, {0, 10}}});
  EXPECT_EQ(overlap(j, k).common, 0);
  EXPECT_FALSE(overlap(j, k).max_diff.has_value());
}

TEST(Overlap, WorstComponentOverCommonStations) {
  const auto a = journey({{1, {0, 10}}, {2, {100, 110}}});
  const auto b = journey({{2, {105, 112}}, {3, {200, 205}}});
  const auto o = overlap(a, b);
  EXPECT_EQ(o.common, 1);
  EXPECT_EQ(o.max_diff, 5);
  EXPECT_EQ(overlap(a, b, TimeComponent::departure).max_diff, 2);
}

TEST(Soft, Examples) {
  const auto j = journey({{1, {0, 10}}, {2, {100, 110}}, {3, {200, 210}}});
  EXPECT_DOUBLE_EQ(soft_similarity(j, j, soft()), 3.0);
  EXPECT_EQ(soft_similarity(j, journey({{9, {0, 0}}}), soft()), 0.0);
  const auto a = journey({{1, {0, 10}}, {2, {100, 110}}});
  const auto b = journey({{1, {5, 12}}, {2, {98, 110}}});
  EXPECT_NEAR(soft_similarity(a, b, soft()), 0.8691964170, 1e-9);
}

TEST(Hard, InclusiveThreshold) {
  const auto a = journey({{1, {0, 10}}, {2, {100, 110}}, {3, {200, 210}}});
  const auto b = journey({{1, {60, 70}}, {2, {100, 110}}, {3, {200, 210}}});
  EXPECT_EQ(hard_similarity(a, b, hard(60)), 3.0);
  EXPECT_EQ(hard_similarity(a, b, hard(59)), 0.0);
  EXPECT_EQ(hard_similarity(a, journey({{7, {0, 0}}}), hard(60)), 0.0);
}

TEST(Params, ValidationAndDefaults) {
  EXPECT_THROW(soft(0).validate(), Error);
  EXPECT_THROW(hard(-1).validate(), Error);
  EXPECT_DOUBLE_EQ(soft().effective_min_weight(), std::exp(-9.0));
  EXPECT_DOUBLE_EQ(hard(60).effective_min_weight(), 0.0);
  EXPECT_EQ(kind_from_string("hard"), Kind::hard);
  EXPECT_THROW(kind_from_string("fuzzy"), Error);
}

TEST(SimilarityProperties, RandomPairs) {
  std::mt19937_64 rng(2024);
  const std::vector<SimilarityParams> params = {soft(), soft(600, TimeComponent::departure), hard(30),
                                                hard(60, TimeComponent::arrival)};
  for (int n = 0; n < 10000; ++n) {
    const auto a = random_journey(rng, 6, 400), b = random_journey(rng, 6, 400);
    const int common = overlap(a, b).common;
    for (const auto& p : params) {
      const double ab = similarity::similarity(a, b, p), ba = similarity::similarity(b, a, p);
      ASSERT_EQ(ab, ba);
      ASSERT_GE(ab, 0.0);
      ASSERT_LE(ab, common);
      ASSERT_NEAR(ab, reference(a, b, p), 1e-12);
    }
    // hard > 0 exactly when the soft value reaches its value at distance tau
    const double tau = 30, s2 = 30;
    const double h = hard_similarity(a, b, hard(tau));
    const double s = soft_similarity(a, b, soft(s2));
    if (common > 0) {
      ASSERT_EQ(h > 0, s >= common * std::exp(-tau * tau / s2) * (1 - 1e-12));
    }
  }
}

TEST(SimilarityProperties, SeparationBeyondThreeSigma) {
  const double s2 = 30;  // 2 sigma^2
  const double sigma = std::sqrt(s2 / 2);
  const auto a = journey({{1, {0, 10}}, {2, {100, 110}}});
  const auto d = static_cast<Seconds>(std::ceil(3 * sigma)) + 1;
  const auto b = journey({{1, {d, 10 + d}}, {2, {100, 110}}});
  EXPECT_LT(soft_similarity(a, b, soft(s2)), std::exp(-4.5) * 2);
  EXPECT_EQ(hard_similarity(a, b, hard(static_cast<double>(d - 1))), 0.0);
}

TEST(BuildGraph, SmallExamples) {
  const auto a = journey({{1, {0, 10}}}), b = journey({{2, {0, 10}}});
  EXPECT_TRUE(build_graph(std::vector<Journey>{a, b}, soft()).edges.empty());
  const auto t = journey({{1, {0, 10}}, {2, {100, 110}}, {3, {200, 210}}});
  const auto g = build_graph(std::vector<Journey>{t, t, t}, soft());
  ASSERT_EQ(g.edges.size(), 3u);
  for (const auto& e : g.edges) EXPECT_DOUBLE_EQ(e.weight, 3.0);
  EXPECT_EQ(g.degrees(), (std::vector<double>{6, 6, 6}));
}

TEST(BuildGraph, EqualsAllPairs) {
  std::mt19937_64 rng(99);
  const std::vector<SimilarityParams> params = {soft(), soft(600), soft(1800, TimeComponent::departure), hard(45),
                                                hard(0, TimeComponent::arrival)};
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<Journey> js;
    for (int i = 0; i < 50; ++i) js.push_back(random_journey(rng, 8, trial % 2 ? 300 : 3000));
    for (auto p : params) {
      if (trial % 3 == 0) p.min_weight = 0.05;
      std::vector<Edge> want;
      for (int i = 0; i < 50; ++i)
        for (int j = i + 1; j < 50; ++j) {
          const double w = reference(js[i], js[j], p);
          if (w > p.effective_min_weight()) want.push_back({i, j, w});
        }
      const auto g = build_graph(js, p);
      ASSERT_EQ(g.edges, want) << "trial " << trial;
      for (const auto& e : g.edges) {
        EXPECT_LT(e.i, e.j);
        EXPECT_GT(e.weight, 0.0);
      }
    }
  }
}

TEST(BuildGraph, InducedSubgraphReindexes) {
  SimilarityGraph g;
  g.n = 4;
  g.edges = {{0, 1, 1.0}, {1, 3, 2.0}, {2, 3, 0.5}};
  const std::vector<int> keep = {3, 1};
  const auto h = induced(g, keep);
  EXPECT_EQ(h.n, 2);
  EXPECT_EQ(h.edges, (std::vector<Edge>{{0, 1, 2.0}}));
}

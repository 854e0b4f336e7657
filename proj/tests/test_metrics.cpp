#include <gtest/gtest.h>

#include <map>
#include <random>

#include "mkt/errors.hpp"
#include "mkt/metrics.hpp"
#include "mkt/rng.hpp"

using namespace mkt;

namespace {

std::vector<PredictionRecord> records(std::vector<double> scores, std::vector<int> labels, std::uint32_t user = 0) {
  std::vector<PredictionRecord> r;
  for (std::size_t i = 0; i < scores.size(); ++i) r.push_back({user, scores[i], static_cast<std::uint8_t>(labels[i])});
  return r;
}

double pairs_auc(const std::vector<PredictionRecord>& r) {
  double wins = 0;
  std::size_t pairs = 0;
  for (const auto& p : r) {
    if (!p.label) continue;
    for (const auto& n : r) {
      if (n.label) continue;
      ++pairs;
      wins += p.score > n.score ? 1.0 : p.score == n.score ? 0.5 : 0.0;
    }
  }
  return wins / static_cast<double>(pairs);
}

double weighted_gauc(const std::vector<PredictionRecord>& r) {
  std::map<std::uint32_t, std::vector<PredictionRecord>> by;
  for (const auto& x : r) by[x.user].push_back(x);
  double num = 0, den = 0;
  for (const auto& [u, v] : by) {
    std::size_t pos = 0;
    for (const auto& x : v) pos += x.label;
    if (pos == 0 || pos == v.size()) continue;
    num += static_cast<double>(v.size()) * pairs_auc(v);
    den += static_cast<double>(v.size());
  }
  return num / den;
}

std::vector<PredictionRecord> random_records(Rng& rng, std::size_t n, std::uint32_t n_users, int score_levels) {
  std::uniform_int_distribution<int> level(0, score_levels - 1);
  std::uniform_int_distribution<std::uint32_t> user(0, n_users - 1);
  std::bernoulli_distribution click(0.35);
  std::vector<PredictionRecord> r;
  for (std::size_t i = 0; i < n; ++i)
    r.push_back({user(rng), static_cast<double>(level(rng)) / score_levels, static_cast<std::uint8_t>(click(rng))});
  return r;
}

}  // namespace

TEST(Auc, HandCases) {
  EXPECT_EQ(auc(records({0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1})), 1.0);
  EXPECT_EQ(auc(records({0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1})), 0.75);
  EXPECT_EQ(auc(records({0.3, 0.3, 0.3, 0.3, 0.3}, {0, 1, 1, 0, 1})), 0.5);
}

TEST(Auc, UndefinedAndInvalidInputs) {
  EXPECT_THROW(auc(records({0.1, 0.2}, {1, 1})), UndefinedMetricError);
  EXPECT_THROW(auc(records({}, {})), UndefinedMetricError);
  EXPECT_THROW(auc(records({0.1, std::nan("")}, {1, 0})), ValidationError);
}

TEST(Auc, MatchesAllPairsOracle) {
  Rng rng = substream(7, "auc-oracle");
  for (int trial = 0; trial < 400; ++trial) {
    const std::size_t n = 2 + trial % 199;
    auto r = random_records(rng, n, 1, trial % 3 == 0 ? 4 : 1000);
    std::size_t pos = 0;
    for (const auto& x : r) pos += x.label;
    if (pos == 0 || pos == n) continue;
    EXPECT_EQ(auc(r), pairs_auc(r)) << "n=" << n;
  }
}

TEST(Gauc, OneUserEqualsAuc) {
  auto one = records({0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1}, 5);
  EXPECT_EQ(gauc(one).gauc, auc(one));
}

TEST(Gauc, WorkedExampleWeights) {
  // A single impression has no AUC, so the 3 : 1 weighting is realized with
  // 6 and 2 impressions.
  std::vector<PredictionRecord> r;
  for (auto [s, y] : std::vector<std::pair<double, int>>{{0.9, 1}, {0.8, 1}, {0.7, 1}, {0.3, 0}, {0.2, 0}, {0.1, 0}})
    r.push_back({1, s, static_cast<std::uint8_t>(y)});
  r.push_back({2, 0.4, 1});
  r.push_back({2, 0.4, 0});
  const auto g = gauc(r);
  EXPECT_EQ(g.gauc, (6 * 1.0 + 2 * 0.5) / 8);
  EXPECT_EQ(g.gauc, 0.875);
  EXPECT_EQ(g.users_counted, 2u);
}

TEST(Gauc, SkipsSingleClassUsers) {
  std::vector<PredictionRecord> r{{1, 0.9, 1}, {1, 0.1, 0}, {2, 0.5, 1}, {2, 0.6, 1}, {3, 0.2, 0}};
  const auto g = gauc(r);
  EXPECT_EQ(g.gauc, 1.0);
  EXPECT_EQ(g.users_counted, 1u);
  EXPECT_EQ(g.users_skipped, 2u);
  std::vector<PredictionRecord> all_single{{2, 0.5, 1}, {3, 0.2, 0}};
  EXPECT_THROW(gauc(all_single), UndefinedMetricError);
}

TEST(Gauc, MatchesWeightedOracle) {
  Rng rng = substream(8, "gauc-oracle");
  for (int trial = 0; trial < 400; ++trial) {
    const std::size_t n = 4 + trial % 197;
    auto r = random_records(rng, n, 1 + trial % 12, trial % 2 ? 5 : 1000);
    double expect = 0;
    try {
      gauc(r);
    } catch (const UndefinedMetricError&) {
      continue;
    }
    expect = weighted_gauc(r);
    EXPECT_EQ(gauc(r).gauc, expect) << "n=" << n;
  }
}

TEST(GroupReport, BucketsPartitionUsers) {
  Rng rng = substream(9, "groups");
  auto r = random_records(rng, 200, 40, 1000);
  std::unordered_map<std::uint32_t, std::size_t> clicks;
  for (std::uint32_t u = 0; u < 40; ++u) clicks[u] = u;  // 10 users below 10, 20 in [10,30), 10 above
  const auto rep = group_report(r, clicks);
  ASSERT_EQ(rep.groups.size(), 3u);
  std::size_t users = 0, recs = 0;
  for (const auto& g : rep.groups) {
    users += g.n_users;
    recs += g.n_records;
  }
  std::map<std::uint32_t, int> seen;
  for (const auto& x : r) seen[x.user] = 1;
  EXPECT_EQ(users, seen.size());
  EXPECT_EQ(recs, r.size());
  EXPECT_EQ(rep.auc, auc(r));
  EXPECT_EQ(rep.gauc, gauc(r).gauc);
}

TEST(GroupReport, SingleBucketEqualsOverallAndEmptyIsNull) {
  Rng rng = substream(10, "groups");
  auto r = random_records(rng, 150, 10, 1000);
  std::unordered_map<std::uint32_t, std::size_t> clicks;
  for (std::uint32_t u = 0; u < 10; ++u) clicks[u] = 12 + u;
  const auto rep = group_report(r, clicks);
  EXPECT_EQ(rep.groups[1].auc.value(), rep.auc);
  EXPECT_EQ(rep.groups[1].gauc.value(), rep.gauc);
  for (std::size_t b : {0u, 2u}) {
    EXPECT_EQ(rep.groups[b].n_users, 0u);
    EXPECT_EQ(rep.groups[b].n_records, 0u);
    EXPECT_FALSE(rep.groups[b].auc.has_value());
    EXPECT_FALSE(rep.groups[b].gauc.has_value());
  }
  const auto j = rep.to_json();
  EXPECT_TRUE(j["groups"][0]["auc"].is_null());
  EXPECT_NE(rep.to_csv().find("bucket,metric,value"), std::string::npos);
}

TEST(GroupReport, UnknownUserIsAnError) {
  std::vector<PredictionRecord> r{{1, 0.9, 1}, {2, 0.1, 0}};
  EXPECT_THROW(group_report(r, {{1, 3}}), ValidationError);
}

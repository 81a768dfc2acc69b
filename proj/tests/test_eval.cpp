// Copyright 2026 The pulse Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include "test_support.hpp"

namespace pulse {
namespace {

using testing::brute_ndcg;
using testing::brute_recall;

std::vector<index_t> sorted(std::vector<index_t> v) {
  std::sort(v.begin(), v.end());
  return v;
}

TEST(Recall, HandValues) {
  const std::vector<index_t> ranked{4, 1, 7, 3};
  EXPECT_EQ(recall_at_k(ranked, sorted({1, 9}), 2), 0.5);
  EXPECT_EQ(recall_at_k(ranked, sorted({7, 4}), 3), 1.0);
  EXPECT_EQ(recall_at_k(ranked, sorted({9}), 4), 0.0);
}

TEST(Ndcg, HandValues) {
  const std::vector<index_t> ranked{4, 1, 7};
  EXPECT_EQ(ndcg_at_k(ranked, sorted({4}), 3), 1.0);
  EXPECT_NEAR(ndcg_at_k(ranked, sorted({1}), 2), 1.0 / std::log2(3.0), 1e-15);
  EXPECT_NEAR(1.0 / std::log2(3.0), 0.63093, 1e-5);
  EXPECT_EQ(ndcg_at_k(ranked, sorted({7}), 2), 0.0);
  // Ideal DCG is truncated at K.
  EXPECT_EQ(ndcg_at_k(ranked, sorted({4, 1, 7, 8, 9}), 3), 1.0);
}

TEST(Metrics, AgreeWithBruteForceOnRandomRankings) {
  Rng rng = make_rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto n = static_cast<index_t>(5 + uniform_index(rng, 60));
    std::vector<index_t> ranked(static_cast<std::size_t>(n));
    std::iota(ranked.begin(), ranked.end(), 0);
    std::shuffle(ranked.begin(), ranked.end(), rng);
    std::set<index_t> rel;
    const auto count = 1 + uniform_index(rng, static_cast<std::uint64_t>(n));
    while (rel.size() < count) rel.insert(static_cast<index_t>(uniform_index(rng, static_cast<std::uint64_t>(n))));
    const std::vector<index_t> relevant(rel.begin(), rel.end());
    const int k = static_cast<int>(1 + uniform_index(rng, 50));
    EXPECT_NEAR(recall_at_k(ranked, relevant, k), brute_recall(ranked, rel, k), 1e-12);
    EXPECT_NEAR(ndcg_at_k(ranked, relevant, k), brute_ndcg(ranked, rel, k), 1e-12);
  }
}

TEST(TopK, TiesByAscendingIdAndExclusion) {
  Vector<double> s(6);
  s << 0.5, 0.9, 0.5, 0.9, 0.1, 0.5;
  EXPECT_EQ(top_k(s, {}, 4), (std::vector<index_t>{1, 3, 0, 2}));
  const std::vector<index_t> excluded{1, 2};
  EXPECT_EQ(top_k(s, excluded, 10), (std::vector<index_t>{3, 0, 5, 4}));
}

// Ranks every non-train item by a full stable sort: an independent path to top_k.
std::vector<index_t> brute_ranking(const Vector<double>& scores, const InteractionGraph& train, index_t u) {
  std::vector<index_t> cand;
  for (index_t i = 0; i < train.items; ++i)
    if (!train.has_edge(u, i)) cand.push_back(i);
  std::stable_sort(cand.begin(), cand.end(), [&](index_t a, index_t b) { return scores(a) > scores(b); });
  return cand;
}

TEST(Evaluate, OracleModelScoresOne) {
  const auto toy = testing::random_toy(8, 40, 2, 3, 0.1);
  std::vector<Edge> targets;
  for (index_t u = 0; u < 8; ++u) {
    index_t added = 0;
    for (index_t i = 39; i >= 0 && added < 3; --i)
      if (!toy.graphs.train.has_edge(u, i)) {
        targets.emplace_back(u, i);
        ++added;
      }
  }
  const auto t = make_edge_list(targets, EdgeKind::interaction);
  const auto rel = group_by_source(t, 8);
  // user_out one-hot per user, item_out marks the user's targets.
  Matrix<double> user_out = Matrix<double>::Identity(8, 8), item_out = Matrix<double>::Zero(40, 8);
  for (const auto& [u, i] : t.pairs) item_out(i, u) = 1.0;
  const auto r = evaluate_embeddings(user_out, item_out, toy.graphs.train, t, {10, 20, 40});
  EXPECT_EQ(r.users_evaluated, 8);
  for (int k : {10, 20, 40}) {
    EXPECT_EQ(r.recall.at(k), 1.0);
    EXPECT_EQ(r.ndcg.at(k), 1.0);
  }
}

TEST(Evaluate, ZeroScoresMatchBruteForceRanking) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto toy = testing::random_toy(10, 50, 2, seed, 0.15);
    Rng rng = make_rng(seed, 5);
    std::vector<Edge> targets;
    for (index_t u = 0; u < 10; ++u)
      for (int k = 0; k < 4; ++k) {
        const auto i = static_cast<index_t>(uniform_index(rng, 50));
        if (!toy.graphs.train.has_edge(u, i)) targets.emplace_back(u, i);
      }
    const auto t = make_edge_list(targets, EdgeKind::interaction);
    const auto rel = group_by_source(t, 10);
    const std::vector<int> ks{10, 20, 40};
    const Matrix<double> zu = Matrix<double>::Zero(10, 3), zi = Matrix<double>::Zero(50, 3);
    const auto rows = per_user_metrics(zu, zi, toy.graphs.train, t, ks);
    for (const auto& um : rows) {
      const auto ranked = brute_ranking(Vector<double>::Zero(50), toy.graphs.train, um.user);
      const auto& r = rel[static_cast<std::size_t>(um.user)];
      const std::set<index_t> rs(r.begin(), r.end());
      for (int k : ks) {
        EXPECT_NEAR(um.recall.at(k), brute_recall(ranked, rs, k), 1e-12);
        EXPECT_NEAR(um.ndcg.at(k), brute_ndcg(ranked, rs, k), 1e-12);
      }
    }
  }
}

TEST(Evaluate, RandomScoresMatchBruteForceAndExcludeTrain) {
  const auto toy = testing::random_toy(12, 30, 2, 17, 0.3);
  Rng rng = make_rng(17);
  const Matrix<double> eu = xavier_init<double>(12, 4, rng), ei = xavier_init<double>(30, 4, rng);
  std::vector<Edge> targets;
  for (index_t u = 0; u < 12; ++u)
    for (index_t i = 0; i < 30; ++i)
      if (!toy.graphs.train.has_edge(u, i) && uniform01(rng) < 0.2) targets.emplace_back(u, i);
  const auto t = make_edge_list(targets, EdgeKind::interaction);
  const auto rel = group_by_source(t, 12);
  const auto rows = per_user_metrics(eu, ei, toy.graphs.train, t, {5, 10});
  for (const auto& um : rows) {
    const Vector<double> scores = ei * eu.row(um.user).transpose();
    const auto ranked = brute_ranking(scores, toy.graphs.train, um.user);
    for (index_t i : top_k(scores, toy.graphs.train.items_of(um.user), 30)) EXPECT_FALSE(toy.graphs.train.has_edge(um.user, i));
    const auto& r = rel[static_cast<std::size_t>(um.user)];
    const std::set<index_t> rs(r.begin(), r.end());
    EXPECT_NEAR(um.ndcg.at(10), brute_ndcg(ranked, rs, 10), 1e-12);
    EXPECT_NEAR(um.recall.at(5), brute_recall(ranked, rs, 5), 1e-12);
  }
  EXPECT_THROW(per_user_metrics(eu, Matrix<double>(ei.topRows(5)), toy.graphs.train, t, {5}), DataError);
}

TEST(DegreeGroups, EqualDegreesShareLowestBucket) {
  const auto g = build_interaction_graph(make_edge_list({{0, 0}, {1, 1}, {2, 0}, {3, 2}}, EdgeKind::interaction), 4, 3);
  const std::vector<index_t> users{0, 1, 2, 3};
  const auto groups = degree_groups(g, users);
  EXPECT_EQ(groups.buckets[0].size(), 4u);
  for (std::size_t b = 1; b < 4; ++b) EXPECT_TRUE(groups.buckets[b].empty());
}

TEST(DegreeGroups, QuartileBoundaries) {
  // Degrees 1..8: nearest-rank quartiles 2, 4, 6.
  std::vector<Edge> edges;
  for (index_t u = 0; u < 8; ++u)
    for (index_t i = 0; i <= u; ++i) edges.emplace_back(u, i);
  const auto g = build_interaction_graph(make_edge_list(edges, EdgeKind::interaction), 8, 8);
  std::vector<index_t> users(8);
  std::iota(users.begin(), users.end(), 0);
  const auto groups = degree_groups(g, users);
  EXPECT_EQ(groups.upper_bounds, (std::array<index_t, 3>{2, 4, 6}));
  for (std::size_t b = 0; b < 4; ++b) EXPECT_EQ(groups.buckets[b].size(), 2u);
}

TEST(DegreeGroups, PartitionRandomDegreeVectors) {
  Rng rng = make_rng(31);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto m = static_cast<index_t>(1 + uniform_index(rng, 30));
    std::vector<Edge> edges;
    for (index_t u = 0; u < m; ++u) {
      const auto d = uniform_index(rng, 8);
      for (std::uint64_t i = 0; i < d; ++i) edges.emplace_back(u, static_cast<index_t>(i));
    }
    const auto g = build_interaction_graph(make_edge_list(edges, EdgeKind::interaction), m, 8);
    std::vector<index_t> users(static_cast<std::size_t>(m));
    std::iota(users.begin(), users.end(), 0);
    const auto groups = degree_groups(g, users);
    std::vector<index_t> seen;
    index_t lower = -1;
    for (std::size_t b = 0; b < 4; ++b) {
      const index_t upper = b < 3 ? groups.upper_bounds[b] : std::numeric_limits<index_t>::max();
      for (index_t u : groups.buckets[b]) {
        EXPECT_GT(g.user_degree(u), lower);
        EXPECT_LE(g.user_degree(u), upper);
        seen.push_back(u);
      }
      lower = std::max(lower, upper == std::numeric_limits<index_t>::max() ? lower : upper);
    }
    std::sort(seen.begin(), seen.end());
    EXPECT_EQ(seen, users);
  }
}

TEST(DegreeGroups, WeightedBucketMeansEqualOverall) {
  const auto toy = testing::random_toy(60, 40, 4, 2, 0.15);
  Rng rng = make_rng(2);
  const Matrix<double> eu = xavier_init<double>(60, 5, rng), ei = xavier_init<double>(40, 5, rng);
  std::vector<Edge> targets;
  for (index_t u = 0; u < 60; ++u)
    for (index_t i = 0; i < 40; ++i)
      if (!toy.graphs.train.has_edge(u, i) && uniform01(rng) < 0.1) targets.emplace_back(u, i);
  const auto t = make_edge_list(targets, EdgeKind::interaction);
  const auto rep = degree_group_eval(eu, ei, toy.graphs.train, t, {20});
  double weighted = 0.0;
  index_t total = 0;
  for (const auto& b : rep.buckets) {
    if (!b) continue;
    weighted += b->ndcg.at(20) * b->users_evaluated;
    total += b->users_evaluated;
  }
  EXPECT_EQ(total, rep.overall.users_evaluated);
  EXPECT_NEAR(weighted / total, rep.overall.ndcg.at(20), 1e-9);
}

SplitBundle toy_split(std::uint64_t seed) {
  const auto toy = testing::random_toy(50, 30, 3, seed, 0.3);
  return split_interactions(toy.graphs.train.edges(), {}, seed, 50, 30);
}

TEST(ColdStart, ZeroCountIsIdentity) {
  const auto s = toy_split(1);
  const auto c = make_coldstart_split(s, 0, 1);
  EXPECT_TRUE(c.held_out.empty());
  EXPECT_TRUE(c.targets.empty());
  EXPECT_EQ(c.split.train.edges().pairs, s.train.edges().pairs);
  EXPECT_EQ(c.split.test.pairs, s.test.pairs);
}

TEST(ColdStart, HeldOutUsersLoseAllTrainEdges) {
  const auto s = toy_split(2);
  const auto c = make_coldstart_split(s, 10, 7);
  ASSERT_EQ(c.held_out.size(), 10u);
  EXPECT_TRUE(std::is_sorted(c.held_out.begin(), c.held_out.end()));
  std::set<index_t> held(c.held_out.begin(), c.held_out.end());
  EXPECT_EQ(held.size(), 10u);
  for (index_t u : c.held_out) EXPECT_EQ(c.split.train.user_degree(u), 0);
  for (index_t u = 0; u < 50; ++u)
    if (!held.count(u)) EXPECT_EQ(c.split.train.user_degree(u), s.train.user_degree(u));
  for (const auto& [u, i] : c.targets.pairs) EXPECT_TRUE(held.count(u));
  std::size_t expected = 0;
  for (const auto& [u, i] : s.test.pairs) expected += held.count(u);
  EXPECT_EQ(c.targets.size(), expected);
  EXPECT_EQ(c.split.val.pairs, s.val.pairs);
  EXPECT_EQ(make_coldstart_split(s, 10, 7).held_out, c.held_out);
  EXPECT_THROW(make_coldstart_split(s, 51, 7), UsageError);
}

SocialGraph random_social(index_t users, double p, std::uint64_t seed) {
  Rng rng = make_rng(seed, 4);
  std::vector<Edge> edges;
  for (index_t u = 0; u < users; ++u)
    for (index_t v = u + 1; v < users; ++v)
      if (uniform01(rng) < p) edges.emplace_back(u, v);
  return build_social_graph(make_edge_list(edges, EdgeKind::social), users);
}

TEST(SocialNoise, ZeroRatioIsIdentity) {
  const auto g = random_social(40, 0.1, 1);
  const auto n = inject_social_noise(g, 0.0, 1);
  EXPECT_EQ(n.edges().pairs, g.edges().pairs);
}

TEST(SocialNoise, ReplacesExactShareAndKeepsSimpleGraph) {
  const auto g = random_social(80, 0.05, 3);
  const auto original = g.edges().pairs;
  const std::set<Edge> before(original.begin(), original.end());
  for (double ratio : {0.05, 0.1, 0.2, 0.5}) {
    const auto n = inject_social_noise(g, ratio, 11);
    EXPECT_EQ(n.num_edges(), g.num_edges());
    std::size_t missing = 0;
    for (const auto& e : original) missing += n.has_edge(e.first, e.second) ? 0 : 1;
    EXPECT_EQ(missing, static_cast<std::size_t>(std::floor(ratio * static_cast<double>(original.size()))));
    for (index_t u = 0; u < n.users; ++u) {
      EXPECT_FALSE(n.has_edge(u, u));
      for (index_t v : n.neighbors_of(u)) EXPECT_TRUE(n.has_edge(v, u));
    }
    EXPECT_EQ(inject_social_noise(g, ratio, 11).edges().pairs, n.edges().pairs);
  }
  EXPECT_THROW(inject_social_noise(g, 1.0, 1), UsageError);
}

TEST(Params, FormulaValues) {
  const auto tiny = count_parameters(1, 1, 1, 1, 1);
  EXPECT_EQ(tiny.pulse_user, 4);
  EXPECT_EQ(tiny.lightgcn_user, 1);
  const auto douban = count_parameters(13024, 22347, 64, 64, 100);
  EXPECT_EQ(douban.lightgcn_total, 2263744);
  EXPECT_EQ(douban.pulse_item, 22347 * 64);
  EXPECT_EQ(douban.pulse_user, 100 * 64 + 2 * 64 * 64 + 64);
}

TEST(Params, UserSideIndependentOfUserCount) {
  const auto a = count_parameters(1000, 500, 32, 16, 40);
  const auto b = count_parameters(2000, 500, 32, 16, 40);
  EXPECT_EQ(a.pulse_user, b.pulse_user);
  EXPECT_EQ(b.lightgcn_user, 2 * a.lightgcn_user);
  EXPECT_NEAR(b.user_reduction, 2.0 * a.user_reduction, 1e-12);
}

TEST(RandomRanker, MatchesMonteCarlo) {
  const auto toy = testing::random_toy(6, 25, 2, 5, 0.2);
  std::vector<Edge> targets;
  for (index_t u = 0; u < 6; ++u)
    for (index_t i = 0; i < 25; i += 3 + u)
      if (!toy.graphs.train.has_edge(u, i)) targets.emplace_back(u, i);
  const auto t = make_edge_list(targets, EdgeKind::interaction);
  const double closed = random_ranker_ndcg(toy.graphs.train, t, 5);
  Rng rng = make_rng(8);
  double sum = 0.0;
  const int trials = 4000;
  for (int k = 0; k < trials; ++k) {
    Matrix<double> eu = Matrix<double>::Ones(6, 1), ei(25, 1);
    for (index_t i = 0; i < 25; ++i) ei(i, 0) = uniform01(rng);
    sum += evaluate_embeddings(eu, ei, toy.graphs.train, t, {5}).ndcg.at(5);
  }
  // Per-trial NDCG lies in [0, 1]; 4000 trials put the mean within ~0.01.
  EXPECT_NEAR(sum / trials, closed, 0.02);
}

}  // namespace
}  // namespace pulse

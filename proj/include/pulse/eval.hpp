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

// Experiment protocols on top of the metrics: degree buckets, cold-start
// splits, social noise, and parameter accounting.

#pragma once

#include "pulse/core.hpp"
#include "pulse/graph.hpp"
#include "pulse/metrics.hpp"
#include "pulse/model.hpp"

#include <array>
#include <cmath>
#include <optional>
#include <set>
#include <vector>

namespace pulse {

template <typename T>
MetricsReport evaluate(const ModelParameters<T>& params, const ModelGraphs& graphs, const ModelConfig& cfg,
                       const EdgeList& targets, const std::vector<int>& ks,
                       const std::vector<index_t>* users = nullptr) {
  const ForwardState<T> s = full_forward(params, graphs, cfg);
  return evaluate_embeddings(s.user_out, s.item_out, graphs.train, targets, ks, users);
}

// Four buckets by train-degree quartile (nearest-rank). A user goes to the
// lowest bucket whose upper bound covers its degree.
struct DegreeGroups {
  std::array<std::vector<index_t>, 4> buckets;
  std::array<index_t, 3> upper_bounds{};  // inclusive bounds of buckets 0..2
};

inline DegreeGroups degree_groups(const InteractionGraph& train, std::span<const index_t> users) {
  DegreeGroups g;
  if (users.empty()) return g;
  std::vector<index_t> degrees;
  degrees.reserve(users.size());
  for (index_t u : users) degrees.push_back(train.user_degree(u));
  std::sort(degrees.begin(), degrees.end());
  const double n = static_cast<double>(degrees.size());
  for (int b = 0; b < 3; ++b) {
    const auto rank = static_cast<std::size_t>(std::ceil(0.25 * (b + 1) * n - 1e-9));
    g.upper_bounds[static_cast<std::size_t>(b)] = degrees[std::max<std::size_t>(rank, 1) - 1];
  }
  for (index_t u : users) {
    const index_t d = train.user_degree(u);
    std::size_t b = 0;
    while (b < 3 && d > g.upper_bounds[b]) ++b;
    g.buckets[b].push_back(u);
  }
  return g;
}

struct DegreeGroupReport {
  DegreeGroups groups;
  std::array<std::optional<MetricsReport>, 4> buckets;  // empty buckets are absent
  MetricsReport overall;
};

template <typename T>
DegreeGroupReport degree_group_eval(const Matrix<T>& user_out, const Matrix<T>& item_out, const InteractionGraph& train,
                                    const EdgeList& targets, const std::vector<int>& ks) {
  const auto rows = per_user_metrics(user_out, item_out, train, targets, ks);
  std::vector<index_t> evaluated;
  for (const auto& r : rows) evaluated.push_back(r.user);
  DegreeGroupReport out;
  out.groups = degree_groups(train, evaluated);
  out.overall = aggregate_metrics(rows, ks);
  for (std::size_t b = 0; b < 4; ++b) {
    const auto& members = out.groups.buckets[b];
    if (members.empty()) continue;
    std::vector<UserMetrics> sub;
    for (const auto& r : rows)
      if (std::binary_search(members.begin(), members.end(), r.user)) sub.push_back(r);
    out.buckets[b] = aggregate_metrics(sub, ks);
  }
  return out;
}

struct ColdStartSplit {
  SplitBundle split;
  std::vector<index_t> held_out;  // ascending
  EdgeList targets;               // held-out users' test interactions
};

// Samples `count` users uniformly and removes all of their train edges. The
// social graph and communities are left alone.
inline ColdStartSplit make_coldstart_split(const SplitBundle& data, index_t count, std::uint64_t seed) {
  const index_t m = data.train.users;
  if (count < 0 || count > m) throw UsageError("cold-start count exceeds the number of users");
  ColdStartSplit out;
  out.split = data;
  if (count == 0) return out;

  Rng rng = make_rng(seed, 0xc01d);
  std::vector<index_t> ids(static_cast<std::size_t>(m));
  for (index_t u = 0; u < m; ++u) ids[static_cast<std::size_t>(u)] = u;
  for (index_t k = 0; k < count; ++k) {
    const auto j = static_cast<std::size_t>(k) + static_cast<std::size_t>(uniform_index(rng, static_cast<std::uint64_t>(m - k)));
    std::swap(ids[static_cast<std::size_t>(k)], ids[j]);
  }
  out.held_out.assign(ids.begin(), ids.begin() + count);
  std::sort(out.held_out.begin(), out.held_out.end());
  auto held = [&](index_t u) { return std::binary_search(out.held_out.begin(), out.held_out.end(), u); };

  EdgeList kept;
  for (const auto& e : data.train.edges().pairs)
    if (!held(e.first)) kept.pairs.push_back(e);
  out.split.train = build_interaction_graph(kept, data.train.users, data.train.items);
  for (const auto& e : data.test.pairs)
    if (held(e.first)) out.targets.pairs.push_back(e);
  return out;
}

// Replaces floor(ratio * |E|) uniformly chosen edges with uniformly random
// new edges that were not in the original graph and are not self-loops.
inline SocialGraph inject_social_noise(const SocialGraph& social, double ratio, std::uint64_t seed) {
  if (!(ratio >= 0.0 && ratio < 1.0)) throw UsageError("noise ratio must lie in [0, 1)");
  std::vector<Edge> edges = social.edges().pairs;
  const auto count = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(edges.size()) + 1e-9));
  if (count == 0) return social;
  const auto m = static_cast<std::uint64_t>(social.users);
  const std::uint64_t possible = m * (m - 1) / 2;
  if (possible < edges.size() + count) throw DataError("social graph too dense to inject that much noise");

  Rng rng = make_rng(seed, 0x9015e);
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t j = k + static_cast<std::size_t>(uniform_index(rng, edges.size() - k));
    std::swap(edges[k], edges[j]);
  }
  std::set<Edge> taken(edges.begin(), edges.end());
  std::vector<Edge> out(edges.begin() + static_cast<std::ptrdiff_t>(count), edges.end());
  while (out.size() < edges.size()) {
    auto a = static_cast<index_t>(uniform_index(rng, m));
    auto b = static_cast<index_t>(uniform_index(rng, m));
    if (a == b) continue;
    const Edge e{std::min(a, b), std::max(a, b)};
    if (!taken.insert(e).second) continue;
    out.push_back(e);
  }
  EdgeList el;
  el.kind = EdgeKind::social;
  el.pairs = std::move(out);
  std::sort(el.pairs.begin(), el.pairs.end());
  return build_social_graph(el, social.users);
}

struct ParamReport {
  std::int64_t pulse_user = 0;
  std::int64_t pulse_item = 0;
  std::int64_t pulse_total = 0;
  std::int64_t lightgcn_user = 0;
  std::int64_t lightgcn_item = 0;
  std::int64_t lightgcn_total = 0;
  double user_reduction = 0.0;   // lightgcn_user / pulse_user
  double total_reduction = 0.0;  // 1 - pulse_total / lightgcn_total
};

// Trainable scalars: community rows, gate W1 (2d x h) and W2 (h x 1) on the
// user side, item rows on the item side.
inline ParamReport count_parameters(std::int64_t users, std::int64_t items, std::int64_t dim, std::int64_t hidden,
                                    std::int64_t communities) {
  ParamReport r;
  r.pulse_user = communities * dim + 2 * dim * hidden + hidden;
  r.pulse_item = items * dim;
  r.pulse_total = r.pulse_user + r.pulse_item;
  r.lightgcn_user = users * dim;
  r.lightgcn_item = items * dim;
  r.lightgcn_total = r.lightgcn_user + r.lightgcn_item;
  r.user_reduction = r.pulse_user > 0 ? static_cast<double>(r.lightgcn_user) / static_cast<double>(r.pulse_user) : 0.0;
  r.total_reduction =
      r.lightgcn_total > 0 ? 1.0 - static_cast<double>(r.pulse_total) / static_cast<double>(r.lightgcn_total) : 0.0;
  return r;
}

// Expected NDCG@K of a uniformly random ranking, averaged over users with
// targets: each of the top-K slots is relevant with probability |rel|/|cand|.
inline double random_ranker_ndcg(const InteractionGraph& train, const EdgeList& targets, int k) {
  const auto relevant = group_by_source(targets, train.users);
  double sum = 0.0;
  index_t users = 0;
  for (index_t u = 0; u < train.users; ++u) {
    const auto& rel = relevant[static_cast<std::size_t>(u)];
    if (rel.empty()) continue;
    const double cand = static_cast<double>(train.items - train.user_degree(u));
    const double p = static_cast<double>(rel.size()) / cand;
    double dcg = 0.0, idcg = 0.0;
    for (int r = 0; r < k && r < static_cast<int>(cand); ++r) dcg += p / std::log2(r + 2.0);
    for (int r = 0; r < k && r < static_cast<int>(rel.size()); ++r) idcg += 1.0 / std::log2(r + 2.0);
    sum += dcg / idcg;
    ++users;
  }
  return users ? sum / users : 0.0;
}

}  // namespace pulse

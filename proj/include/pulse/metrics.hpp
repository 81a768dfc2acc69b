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

// Full-ranking top-K metrics with binary relevance.

#pragma once

#include "pulse/core.hpp"
#include "pulse/graph.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <span>
#include <vector>

namespace pulse {

// |top-K ∩ relevant| / |relevant|. `relevant` must be sorted.
inline double recall_at_k(std::span<const index_t> ranked, std::span<const index_t> relevant, int k) {
  if (relevant.empty()) return 0.0;
  const std::size_t depth = std::min(ranked.size(), static_cast<std::size_t>(std::max(k, 0)));
  std::size_t hits = 0;
  for (std::size_t r = 0; r < depth; ++r) hits += std::binary_search(relevant.begin(), relevant.end(), ranked[r]);
  return static_cast<double>(hits) / static_cast<double>(relevant.size());
}

// DCG with gain 1/log2(rank + 1), normalized by the ideal DCG over
// min(K, |relevant|) positions. `relevant` must be sorted.
inline double ndcg_at_k(std::span<const index_t> ranked, std::span<const index_t> relevant, int k) {
  if (relevant.empty() || k <= 0) return 0.0;
  const std::size_t depth = std::min(ranked.size(), static_cast<std::size_t>(k));
  double dcg = 0.0;
  for (std::size_t r = 0; r < depth; ++r)
    if (std::binary_search(relevant.begin(), relevant.end(), ranked[r])) dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  const std::size_t ideal_depth = std::min(relevant.size(), static_cast<std::size_t>(k));
  double idcg = 0.0;
  for (std::size_t r = 0; r < ideal_depth; ++r) idcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  return dcg / idcg;
}

// Top-k item ids by descending score, ties by ascending id, skipping the
// sorted `excluded` ids.
template <typename Scores>
std::vector<index_t> top_k(const Scores& scores, std::span<const index_t> excluded, int k) {
  const auto n = static_cast<index_t>(scores.size());
  std::vector<index_t> cand;
  cand.reserve(static_cast<std::size_t>(n));
  std::size_t ex = 0;
  for (index_t i = 0; i < n; ++i) {
    while (ex < excluded.size() && excluded[ex] < i) ++ex;
    if (ex < excluded.size() && excluded[ex] == i) continue;
    cand.push_back(i);
  }
  auto before = [&](index_t a, index_t b) {
    const auto sa = scores[a], sb = scores[b];
    return sa > sb || (sa == sb && a < b);
  };
  const std::size_t depth = std::min(cand.size(), static_cast<std::size_t>(std::max(k, 0)));
  std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(depth), cand.end(), before);
  cand.resize(depth);
  return cand;
}

struct MetricsReport {
  std::vector<int> ks;
  std::map<int, double> recall;
  std::map<int, double> ndcg;
  index_t users_evaluated = 0;
};

struct UserMetrics {
  index_t user = 0;
  std::map<int, double> recall;
  std::map<int, double> ndcg;
};

// Per-user metrics for every user with at least one target item (optionally
// restricted to `users`). Candidates are all items minus the user's train items.
template <typename T>
std::vector<UserMetrics> per_user_metrics(const Matrix<T>& user_out, const Matrix<T>& item_out,
                                          const InteractionGraph& train, const EdgeList& targets,
                                          const std::vector<int>& ks, const std::vector<index_t>* users = nullptr) {
  if (user_out.rows() != train.users || item_out.rows() != train.items)
    throw DataError("embedding shapes do not match the evaluation graph");
  const auto relevant = group_by_source(targets, train.users);
  int max_k = 0;
  for (int k : ks) max_k = std::max(max_k, k);

  std::vector<index_t> order;
  if (users) {
    order = *users;
    std::sort(order.begin(), order.end());
    order.erase(std::unique(order.begin(), order.end()), order.end());
  } else {
    order.resize(static_cast<std::size_t>(train.users));
    for (index_t u = 0; u < train.users; ++u) order[static_cast<std::size_t>(u)] = u;
  }

  std::vector<UserMetrics> out;
  Vector<T> scores(item_out.rows());
  for (index_t u : order) {
    const auto& rel = relevant[static_cast<std::size_t>(u)];
    if (rel.empty()) continue;
    scores.noalias() = item_out * user_out.row(u).transpose();
    const auto ranked = top_k(scores, train.items_of(u), max_k);
    UserMetrics um;
    um.user = u;
    for (int k : ks) {
      um.recall[k] = recall_at_k(ranked, rel, k);
      um.ndcg[k] = ndcg_at_k(ranked, rel, k);
    }
    out.push_back(std::move(um));
  }
  return out;
}

inline MetricsReport aggregate_metrics(const std::vector<UserMetrics>& rows, const std::vector<int>& ks) {
  MetricsReport r;
  r.ks = ks;
  r.users_evaluated = static_cast<index_t>(rows.size());
  for (int k : ks) {
    double rs = 0.0, ns = 0.0;
    for (const auto& um : rows) {
      rs += um.recall.at(k);
      ns += um.ndcg.at(k);
    }
    r.recall[k] = rows.empty() ? 0.0 : rs / static_cast<double>(rows.size());
    r.ndcg[k] = rows.empty() ? 0.0 : ns / static_cast<double>(rows.size());
  }
  return r;
}

template <typename T>
MetricsReport evaluate_embeddings(const Matrix<T>& user_out, const Matrix<T>& item_out, const InteractionGraph& train,
                                  const EdgeList& targets, const std::vector<int>& ks,
                                  const std::vector<index_t>* users = nullptr) {
  return aggregate_metrics(per_user_metrics(user_out, item_out, train, targets, ks, users), ks);
}

}  // namespace pulse

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

// Community detection over the social graph: a Leiden partition followed by
// the modularity-threshold expansion into overlapping affiliations.

#pragma once

#include "pulse/core.hpp"
#include "pulse/graph.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

namespace pulse {

inline constexpr index_t kUnassigned = -1;

struct Partition {
  std::vector<index_t> assignment;  // kUnassigned for users outside the partition
  index_t community_count = 0;
  double modularity = 0.0;
};

// The user x community matrix G, stored as sorted community lists per user.
struct AffiliationMatrix {
  std::vector<std::vector<index_t>> memberships;
  index_t community_count = 0;

  index_t users() const { return static_cast<index_t>(memberships.size()); }
  std::span<const index_t> communities_of(index_t u) const {
    return memberships[static_cast<std::size_t>(u)];
  }
  bool contains(index_t u, index_t c) const {
    const auto& row = memberships[static_cast<std::size_t>(u)];
    return std::binary_search(row.begin(), row.end(), c);
  }
  std::int64_t nonzeros() const {
    std::int64_t n = 0;
    for (const auto& row : memberships) n += static_cast<std::int64_t>(row.size());
    return n;
  }

  friend bool operator==(const AffiliationMatrix&, const AffiliationMatrix&) = default;
};

// Modularity of `assignment` on the social graph, unassigned users skipped.
inline double modularity(const SocialGraph& g, std::span<const index_t> assignment,
                         double resolution = 1.0) {
  const double two_m = static_cast<double>(g.total_degree());
  if (two_m == 0.0) return 0.0;
  index_t communities = 0;
  for (index_t c : assignment) communities = std::max(communities, c + 1);
  std::vector<double> internal(static_cast<std::size_t>(communities), 0.0);
  std::vector<double> degree(static_cast<std::size_t>(communities), 0.0);
  for (index_t u = 0; u < g.users; ++u) {
    const index_t cu = assignment[static_cast<std::size_t>(u)];
    if (cu < 0) continue;
    degree[static_cast<std::size_t>(cu)] += g.degree(u);
    for (index_t v : g.neighbors_of(u))
      if (assignment[static_cast<std::size_t>(v)] == cu) internal[static_cast<std::size_t>(cu)] += 1.0;
  }
  double q = 0.0;
  for (std::size_t c = 0; c < internal.size(); ++c) {
    // internal counts each edge twice
    q += internal[c] / two_m - resolution * (degree[c] / two_m) * (degree[c] / two_m);
  }
  return q;
}

namespace leiden_detail {

// Weighted undirected graph used at every aggregation level.
struct WeightedGraph {
  index_t n = 0;
  std::vector<std::int64_t> offsets{0};
  std::vector<index_t> targets;
  std::vector<double> weights;
  std::vector<double> self_weight;  // internal weight collapsed into the node
  std::vector<double> strength;     // weighted degree, self loops counted twice
  double total_weight = 0.0;        // M: sum of edge weights (each edge once)

  static WeightedGraph from_social(const SocialGraph& s) {
    WeightedGraph g;
    g.n = s.users;
    g.offsets = s.offsets;
    g.targets = s.neighbors;
    g.weights.assign(s.neighbors.size(), 1.0);
    g.self_weight.assign(static_cast<std::size_t>(s.users), 0.0);
    g.strength.resize(static_cast<std::size_t>(s.users));
    for (index_t u = 0; u < s.users; ++u) g.strength[static_cast<std::size_t>(u)] = s.degree(u);
    g.total_weight = static_cast<double>(s.num_edges());
    return g;
  }
};

struct Workspace {
  std::vector<double> neighbor_weight;
  std::vector<index_t> touched;

  explicit Workspace(index_t n) : neighbor_weight(static_cast<std::size_t>(n), 0.0) {}

  template <typename Community>
  void gather(const WeightedGraph& g, index_t v, Community community_of) {
    for (std::int64_t k = g.offsets[v]; k < g.offsets[v + 1]; ++k) {
      const index_t c = community_of(g.targets[static_cast<std::size_t>(k)]);
      if (neighbor_weight[static_cast<std::size_t>(c)] == 0.0) touched.push_back(c);
      neighbor_weight[static_cast<std::size_t>(c)] += g.weights[static_cast<std::size_t>(k)];
    }
  }
  void clear() {
    for (index_t c : touched) neighbor_weight[static_cast<std::size_t>(c)] = 0.0;
    touched.clear();
  }
};

inline double quality(const WeightedGraph& g, const std::vector<index_t>& part, double gamma) {
  if (g.total_weight == 0.0) return 0.0;
  std::vector<double> internal(static_cast<std::size_t>(g.n), 0.0), tot(static_cast<std::size_t>(g.n), 0.0);
  for (index_t v = 0; v < g.n; ++v) {
    const auto c = static_cast<std::size_t>(part[static_cast<std::size_t>(v)]);
    tot[c] += g.strength[static_cast<std::size_t>(v)];
    internal[c] += 2.0 * g.self_weight[static_cast<std::size_t>(v)];
    for (std::int64_t k = g.offsets[v]; k < g.offsets[v + 1]; ++k)
      if (part[static_cast<std::size_t>(g.targets[static_cast<std::size_t>(k)])] == part[static_cast<std::size_t>(v)])
        internal[c] += g.weights[static_cast<std::size_t>(k)];
  }
  const double two_m = 2.0 * g.total_weight;
  double q = 0.0;
  for (std::size_t c = 0; c < internal.size(); ++c)
    q += internal[c] / two_m - gamma * (tot[c] / two_m) * (tot[c] / two_m);
  return q;
}

inline std::vector<index_t> random_order(index_t n, Rng& rng) {
  std::vector<index_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t k = order.size(); k > 1; --k)
    std::swap(order[k - 1], order[static_cast<std::size_t>(uniform_index(rng, k))]);
  return order;
}

// Queue-based local moving. Community labels live in 0..n-1. Returns the
// number of moves made.
inline std::int64_t move_nodes(const WeightedGraph& g, std::vector<index_t>& part, double gamma,
                               Rng& rng, Workspace& ws) {
  const double two_m = 2.0 * g.total_weight;
  if (two_m == 0.0) return 0;
  std::vector<double> tot(static_cast<std::size_t>(g.n), 0.0);
  std::vector<index_t> size(static_cast<std::size_t>(g.n), 0);
  for (index_t v = 0; v < g.n; ++v) {
    tot[static_cast<std::size_t>(part[static_cast<std::size_t>(v)])] += g.strength[static_cast<std::size_t>(v)];
    ++size[static_cast<std::size_t>(part[static_cast<std::size_t>(v)])];
  }
  std::vector<index_t> empty;
  for (index_t c = g.n - 1; c >= 0; --c)
    if (size[static_cast<std::size_t>(c)] == 0) empty.push_back(c);

  std::deque<index_t> queue;
  std::vector<char> queued(static_cast<std::size_t>(g.n), 1);
  for (index_t v : random_order(g.n, rng)) queue.push_back(v);

  std::int64_t moves = 0;
  while (!queue.empty()) {
    const index_t v = queue.front();
    queue.pop_front();
    queued[static_cast<std::size_t>(v)] = 0;
    const double kv = g.strength[static_cast<std::size_t>(v)];
    if (kv == 0.0) continue;
    const index_t current = part[static_cast<std::size_t>(v)];

    ws.gather(g, v, [&](index_t w) { return part[static_cast<std::size_t>(w)]; });
    tot[static_cast<std::size_t>(current)] -= kv;
    --size[static_cast<std::size_t>(current)];

    // Gains in edge-weight units: w(v, C) - gamma * k_v * K_C / 2M.
    auto gain = [&](index_t c) {
      return ws.neighbor_weight[static_cast<std::size_t>(c)] - gamma * kv * tot[static_cast<std::size_t>(c)] / two_m;
    };
    index_t best = current;
    double best_gain = gain(current);
    for (index_t c : ws.touched) {
      if (c == current) continue;
      const double gc = gain(c);
      if (gc > best_gain + 1e-10) {
        best = c;
        best_gain = gc;
      }
    }
    const bool to_empty = best_gain < -1e-10 && !empty.empty();
    ws.clear();
    if (to_empty) {
      best = empty.back();
      empty.pop_back();
    }
    if (best != current && size[static_cast<std::size_t>(current)] == 0) empty.push_back(current);
    tot[static_cast<std::size_t>(best)] += kv;
    ++size[static_cast<std::size_t>(best)];
    part[static_cast<std::size_t>(v)] = best;

    if (best != current) {
      ++moves;
      for (std::int64_t k = g.offsets[v]; k < g.offsets[v + 1]; ++k) {
        const index_t w = g.targets[static_cast<std::size_t>(k)];
        if (!queued[static_cast<std::size_t>(w)] && part[static_cast<std::size_t>(w)] != best) {
          queued[static_cast<std::size_t>(w)] = 1;
          queue.push_back(w);
        }
      }
    }
  }
  return moves;
}

// Randomized refinement: merges singletons inside each community of `part`
// into well-connected sub-communities.
inline std::vector<index_t> refine(const WeightedGraph& g, const std::vector<index_t>& part,
                                   double gamma, Rng& rng, Workspace& ws) {
  constexpr double kRandomness = 0.01;
  const double two_m = 2.0 * g.total_weight;
  std::vector<index_t> refined(static_cast<std::size_t>(g.n));
  std::iota(refined.begin(), refined.end(), 0);
  if (two_m == 0.0) return refined;

  std::vector<double> tot_s(static_cast<std::size_t>(g.n), 0.0);
  for (index_t v = 0; v < g.n; ++v)
    tot_s[static_cast<std::size_t>(part[static_cast<std::size_t>(v)])] += g.strength[static_cast<std::size_t>(v)];

  // ext[c]: weight from refined community c to the rest of its parent community
  std::vector<double> ext(static_cast<std::size_t>(g.n), 0.0);
  std::vector<double> tot_r(g.strength);
  std::vector<index_t> size_r(static_cast<std::size_t>(g.n), 1);
  for (index_t v = 0; v < g.n; ++v)
    for (std::int64_t k = g.offsets[v]; k < g.offsets[v + 1]; ++k)
      if (part[static_cast<std::size_t>(g.targets[static_cast<std::size_t>(k)])] == part[static_cast<std::size_t>(v)])
        ext[static_cast<std::size_t>(v)] += g.weights[static_cast<std::size_t>(k)];

  std::vector<index_t> candidates;
  std::vector<double> scores;
  for (index_t v : random_order(g.n, rng)) {
    if (size_r[static_cast<std::size_t>(refined[static_cast<std::size_t>(v)])] != 1) continue;
    const double kv = g.strength[static_cast<std::size_t>(v)];
    const double ks = tot_s[static_cast<std::size_t>(part[static_cast<std::size_t>(v)])];
    if (kv == 0.0 || ext[static_cast<std::size_t>(v)] < gamma * kv * (ks - kv) / two_m) continue;

    const index_t parent = part[static_cast<std::size_t>(v)];
    for (std::int64_t k = g.offsets[v]; k < g.offsets[v + 1]; ++k) {
      const index_t w = g.targets[static_cast<std::size_t>(k)];
      if (part[static_cast<std::size_t>(w)] != parent) continue;
      const index_t c = refined[static_cast<std::size_t>(w)];
      if (ws.neighbor_weight[static_cast<std::size_t>(c)] == 0.0) ws.touched.push_back(c);
      ws.neighbor_weight[static_cast<std::size_t>(c)] += g.weights[static_cast<std::size_t>(k)];
    }
    std::sort(ws.touched.begin(), ws.touched.end());

    const index_t own = refined[static_cast<std::size_t>(v)];
    candidates.assign(1, own);
    scores.assign(1, 0.0);
    double best = 0.0;
    for (index_t c : ws.touched) {
      if (c == own) continue;
      const double kc = tot_r[static_cast<std::size_t>(c)];
      if (ext[static_cast<std::size_t>(c)] < gamma * kc * (ks - kc) / two_m) continue;
      const double dh = ws.neighbor_weight[static_cast<std::size_t>(c)] - gamma * kv * kc / two_m;
      if (dh < 0.0) continue;
      candidates.push_back(c);
      scores.push_back(dh);
      best = std::max(best, dh);
    }
    double total = 0.0;
    for (double& s : scores) total += (s = std::exp((s - best) / kRandomness));
    double pick = uniform01(rng) * total;
    std::size_t chosen = 0;
    for (; chosen + 1 < scores.size(); ++chosen) {
      if (pick < scores[chosen]) break;
      pick -= scores[chosen];
    }
    const index_t target = candidates[chosen];
    if (target != own) {
      const double w_vc = ws.neighbor_weight[static_cast<std::size_t>(target)];
      ext[static_cast<std::size_t>(target)] += ext[static_cast<std::size_t>(v)] - 2.0 * w_vc;
      tot_r[static_cast<std::size_t>(target)] += kv;
      tot_r[static_cast<std::size_t>(own)] = 0.0;
      ++size_r[static_cast<std::size_t>(target)];
      size_r[static_cast<std::size_t>(own)] = 0;
      refined[static_cast<std::size_t>(v)] = target;
    }
    ws.clear();
  }
  return refined;
}

// Relabels to 0..k-1 in order of first appearance; returns k.
inline index_t compact(std::vector<index_t>& labels) {
  std::vector<index_t> remap(labels.size(), kUnassigned);
  index_t next = 0;
  for (auto& l : labels) {
    if (l < 0) continue;
    auto& r = remap[static_cast<std::size_t>(l)];
    if (r == kUnassigned) r = next++;
    l = r;
  }
  return next;
}

inline WeightedGraph aggregate(const WeightedGraph& g, const std::vector<index_t>& groups, index_t k) {
  WeightedGraph a;
  a.n = k;
  a.self_weight.assign(static_cast<std::size_t>(k), 0.0);
  a.strength.assign(static_cast<std::size_t>(k), 0.0);
  a.total_weight = g.total_weight;
  std::vector<std::vector<index_t>> members(static_cast<std::size_t>(k));
  for (index_t v = 0; v < g.n; ++v) {
    const auto c = static_cast<std::size_t>(groups[static_cast<std::size_t>(v)]);
    members[c].push_back(v);
    a.strength[c] += g.strength[static_cast<std::size_t>(v)];
    a.self_weight[c] += g.self_weight[static_cast<std::size_t>(v)];
  }
  Workspace ws(k);
  a.offsets.assign(static_cast<std::size_t>(k) + 1, 0);
  for (index_t c = 0; c < k; ++c) {
    for (index_t v : members[static_cast<std::size_t>(c)])
      ws.gather(g, v, [&](index_t w) { return groups[static_cast<std::size_t>(w)]; });
    std::sort(ws.touched.begin(), ws.touched.end());
    for (index_t d : ws.touched) {
      const double w = ws.neighbor_weight[static_cast<std::size_t>(d)];
      if (d == c) {
        a.self_weight[static_cast<std::size_t>(c)] += w / 2.0;
      } else {
        a.targets.push_back(d);
        a.weights.push_back(w);
      }
    }
    ws.clear();
    a.offsets[static_cast<std::size_t>(c) + 1] = static_cast<std::int64_t>(a.targets.size());
  }
  return a;
}

// Splits every community into its connected components (in the social graph).
inline void split_disconnected(const SocialGraph& s, std::vector<index_t>& assignment) {
  std::vector<index_t> out(assignment.size(), kUnassigned);
  index_t next = 0;
  std::vector<index_t> stack;
  for (index_t u = 0; u < s.users; ++u) {
    if (assignment[static_cast<std::size_t>(u)] < 0 || out[static_cast<std::size_t>(u)] >= 0) continue;
    const index_t c = assignment[static_cast<std::size_t>(u)];
    out[static_cast<std::size_t>(u)] = next;
    stack.assign(1, u);
    while (!stack.empty()) {
      const index_t x = stack.back();
      stack.pop_back();
      for (index_t y : s.neighbors_of(x)) {
        if (assignment[static_cast<std::size_t>(y)] == c && out[static_cast<std::size_t>(y)] < 0) {
          out[static_cast<std::size_t>(y)] = next;
          stack.push_back(y);
        }
      }
    }
    ++next;
  }
  assignment = std::move(out);
}

}  // namespace leiden_detail

// Modularity recorded after each phase of the Leiden run, for the working
// (unrefined) partition projected onto the original users.
struct LeidenTrace {
  std::vector<double> modularity;
  std::vector<std::string> phase;
  int iterations = 0;
};

// Leiden community detection on the unweighted social graph. Users without
// social ties stay unassigned; see ensure_coverage.
inline Partition leiden_partition(const SocialGraph& social, double resolution = 1.0,
                                  std::uint64_t seed = 0, LeidenTrace* trace = nullptr,
                                  int max_iterations = 20) {
  using namespace leiden_detail;
  if (!(resolution > 0.0)) throw UsageError("Leiden resolution must be positive");
  Partition result;
  result.assignment.assign(static_cast<std::size_t>(social.users), kUnassigned);
  if (social.num_edges() == 0) return result;

  Rng rng = make_rng(seed, 0x1e1de);
  const WeightedGraph base = WeightedGraph::from_social(social);
  std::vector<index_t> flat(static_cast<std::size_t>(social.users));
  std::iota(flat.begin(), flat.end(), 0);
  auto record = [&](const char* phase, double q) {
    if (!trace) return;
    trace->modularity.push_back(q);
    trace->phase.emplace_back(phase);
  };
  record("initial", quality(base, flat, resolution));

  double previous_q = -std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < max_iterations; ++iter) {
    if (trace) trace->iterations = iter + 1;
    WeightedGraph g = base;
    std::vector<index_t> part = flat;  // working partition of g's nodes
    compact(part);
    std::vector<index_t> node_of(static_cast<std::size_t>(social.users));
    std::iota(node_of.begin(), node_of.end(), 0);
    for (;;) {
      Workspace ws(g.n);
      move_nodes(g, part, resolution, rng, ws);
      const index_t k = compact(part);
      for (index_t u = 0; u < social.users; ++u)
        flat[static_cast<std::size_t>(u)] = part[static_cast<std::size_t>(node_of[static_cast<std::size_t>(u)])];
      record("local_move", quality(g, part, resolution));
      if (k == g.n) break;

      std::vector<index_t> refined = refine(g, part, resolution, rng, ws);
      const index_t r = compact(refined);
      if (r == g.n) {
        // Refinement merged nothing: aggregate on the partition itself.
        refined = part;
      }
      const index_t groups = r == g.n ? k : r;
      std::vector<index_t> next_part(static_cast<std::size_t>(groups), 0);
      for (index_t v = 0; v < g.n; ++v)
        next_part[static_cast<std::size_t>(refined[static_cast<std::size_t>(v)])] = part[static_cast<std::size_t>(v)];
      for (auto& n : node_of) n = refined[static_cast<std::size_t>(n)];
      g = aggregate(g, refined, groups);
      part = std::move(next_part);
      record("aggregate", quality(g, part, resolution));
    }
    const double q = quality(base, flat, resolution);
    if (q <= previous_q + 1e-12) break;
    previous_q = q;
  }

  for (index_t u = 0; u < social.users; ++u)
    if (social.degree(u) == 0) flat[static_cast<std::size_t>(u)] = kUnassigned;
  leiden_detail::split_disconnected(social, flat);
  result.assignment = std::move(flat);
  result.community_count = compact(result.assignment);
  result.modularity = modularity(social, result.assignment, resolution);
  record("final", result.modularity);
  return result;
}

// Gives every unassigned user in 0..users-1 a fresh singleton community,
// numbered after the existing ones in ascending user order.
inline Partition ensure_coverage(Partition p, index_t users) {
  if (static_cast<index_t>(p.assignment.size()) > users)
    throw DataError("partition covers more users than requested");
  p.assignment.resize(static_cast<std::size_t>(users), kUnassigned);
  for (auto& c : p.assignment)
    if (c == kUnassigned) c = p.community_count++;
  return p;
}

inline AffiliationMatrix to_affiliation(const Partition& p) {
  AffiliationMatrix g;
  g.community_count = p.community_count;
  g.memberships.resize(p.assignment.size());
  for (std::size_t u = 0; u < p.assignment.size(); ++u) {
    if (p.assignment[u] == kUnassigned) throw DataError("partition leaves user " + std::to_string(u) + " unassigned");
    g.memberships[u].push_back(p.assignment[u]);
  }
  return g;
}

struct ExpansionStep {
  int sweep = 0;
  index_t user = 0;
  index_t community = 0;
  double lhs = 0.0;
  double rhs = 0.0;
};

struct ExpansionResult {
  AffiliationMatrix affiliation;
  std::vector<ExpansionStep> log;
  int sweeps = 0;
  bool converged = true;
};

// Overlapping expansion: user u joins a neighboring community c whenever
//   |{w in c : (u,w) in E}| / d(u)  >  theta * sum_{w in c} d(w) / sum_v d(v),
// sweeping users and candidates in ascending order against the live
// membership state until a sweep adds nothing.
inline ExpansionResult expand_overlapping(AffiliationMatrix start, const SocialGraph& social,
                                          double theta, int max_sweeps = 100) {
  if (!(theta > 0.0)) throw UsageError("overlap threshold must be positive");
  if (start.users() != social.users) throw DataError("affiliation and social graph disagree on user count");
  ExpansionResult out;
  auto& memb = start.memberships;
  const double total_degree = static_cast<double>(social.total_degree());

  std::vector<double> community_degree(static_cast<std::size_t>(start.community_count), 0.0);
  for (index_t u = 0; u < social.users; ++u)
    for (index_t c : memb[static_cast<std::size_t>(u)]) {
      if (c < 0 || c >= start.community_count) throw DataError("community id out of range");
      community_degree[static_cast<std::size_t>(c)] += social.degree(u);
    }

  std::vector<index_t> counts(static_cast<std::size_t>(start.community_count), 0);
  std::vector<index_t> candidates;
  bool changed = true;
  while (changed) {
    if (out.sweeps == max_sweeps) {
      out.converged = false;
      warn("overlap expansion stopped after " + std::to_string(max_sweeps) + " sweeps without converging");
      break;
    }
    changed = false;
    ++out.sweeps;
    for (index_t u = 0; u < social.users; ++u) {
      const index_t du = social.degree(u);
      if (du == 0) continue;
      auto& own = memb[static_cast<std::size_t>(u)];
      for (index_t v : social.neighbors_of(u)) {
        for (index_t c : memb[static_cast<std::size_t>(v)]) {
          if (std::binary_search(own.begin(), own.end(), c)) continue;
          if (counts[static_cast<std::size_t>(c)]++ == 0) candidates.push_back(c);
        }
      }
      std::sort(candidates.begin(), candidates.end());
      for (index_t c : candidates) {
        const double lhs = static_cast<double>(counts[static_cast<std::size_t>(c)]) / du;
        const double rhs = theta * community_degree[static_cast<std::size_t>(c)] / total_degree;
        if (lhs > rhs) {
          own.insert(std::lower_bound(own.begin(), own.end(), c), c);
          community_degree[static_cast<std::size_t>(c)] += du;
          out.log.push_back({out.sweeps, u, c, lhs, rhs});
          changed = true;
        }
      }
      for (index_t c : candidates) counts[static_cast<std::size_t>(c)] = 0;
      candidates.clear();
    }
  }
  out.affiliation = std::move(start);
  return out;
}

inline ExpansionResult expand_overlapping(const Partition& p, const SocialGraph& social, double theta,
                                          int max_sweeps = 100) {
  return expand_overlapping(to_affiliation(p), social, theta, max_sweeps);
}

struct DetectionResult {
  Partition partition;  // after coverage
  ExpansionResult expansion;
  index_t isolated_users = 0;
  double seconds = 0.0;
};

// Leiden, coverage, and overlapping expansion in one call.
inline DetectionResult detect_communities(const SocialGraph& social, double resolution, std::uint64_t seed,
                                          double theta) {
  DetectionResult r;
  Partition p = leiden_partition(social, resolution, seed);
  const index_t before = p.community_count;
  r.partition = ensure_coverage(std::move(p), social.users);
  r.isolated_users = r.partition.community_count - before;
  r.expansion = expand_overlapping(r.partition, social, theta);
  return r;
}

inline void save_affiliation(const AffiliationMatrix& g, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write affiliation file '" + path + "'");
  out << "# users " << g.users() << " communities " << g.community_count << '\n';
  for (index_t u = 0; u < g.users(); ++u) {
    out << u;
    for (index_t c : g.communities_of(u)) out << ' ' << c;
    out << '\n';
  }
  if (!out) throw DataError("write failure on '" + path + "'");
}

inline AffiliationMatrix load_affiliation(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open affiliation file '" + path + "'");
  AffiliationMatrix g;
  index_t declared = -1;
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::string_view> toks;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.rfind("# users ", 0) == 0) {
      std::istringstream hs(line.substr(2));
      std::string w1, w2;
      index_t users = 0;
      hs >> w1 >> users >> w2 >> declared;
      continue;
    }
    if (!detail::tokenize(line, toks)) continue;
    std::int64_t u = 0;
    if (!detail::parse_int64(toks[0], u) || u != g.users())
      throw DataError(path + ":" + std::to_string(lineno) + ": expected user id " + std::to_string(g.users()));
    std::vector<index_t> row;
    for (std::size_t k = 1; k < toks.size(); ++k) {
      std::int64_t c = 0;
      if (!detail::parse_int64(toks[k], c) || c < 0)
        throw DataError(path + ":" + std::to_string(lineno) + ": bad community id");
      row.push_back(static_cast<index_t>(c));
      g.community_count = std::max(g.community_count, static_cast<index_t>(c + 1));
    }
    std::sort(row.begin(), row.end());
    row.erase(std::unique(row.begin(), row.end()), row.end());
    g.memberships.push_back(std::move(row));
  }
  if (declared >= 0) {
    if (declared < g.community_count) throw DataError(path + ": community ids exceed declared count");
    g.community_count = declared;
  }
  return g;
}

}  // namespace pulse

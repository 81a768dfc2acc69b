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

#pragma once

#include "pulse/core.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace pulse {

enum class EdgeKind { interaction, social };

using Edge = std::pair<index_t, index_t>;

// Deduplicated (source, target) pairs. Social pairs are stored once, as (min, max).
struct EdgeList {
  std::vector<Edge> pairs;
  EdgeKind kind = EdgeKind::interaction;
  std::size_t dropped_self_loops = 0;

  std::size_t size() const { return pairs.size(); }
  bool empty() const { return pairs.empty(); }

  index_t max_source() const {
    index_t m = -1;
    for (const auto& [a, b] : pairs) m = std::max(m, a);
    return m;
  }
  index_t max_target() const {
    index_t m = -1;
    for (const auto& [a, b] : pairs) m = std::max(m, b);
    return m;
  }
};

namespace detail {

inline bool parse_int64(std::string_view tok, std::int64_t& out) {
  auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), out);
  return ec == std::errc() && p == tok.data() + tok.size();
}

// Splits a line into whitespace-separated tokens; returns false for blank/comment lines.
inline bool tokenize(std::string_view line, std::vector<std::string_view>& toks) {
  toks.clear();
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i >= line.size()) break;
    if (toks.empty() && line[i] == '#') return false;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    toks.push_back(line.substr(i, j - i));
    i = j;
  }
  return !toks.empty();
}

inline void canonicalize(EdgeList& e) {
  if (e.kind == EdgeKind::social) {
    std::size_t kept = 0;
    for (auto [a, b] : e.pairs) {
      if (a == b) {
        ++e.dropped_self_loops;
        continue;
      }
      e.pairs[kept++] = {std::min(a, b), std::max(a, b)};
    }
    e.pairs.resize(kept);
  }
  std::sort(e.pairs.begin(), e.pairs.end());
  e.pairs.erase(std::unique(e.pairs.begin(), e.pairs.end()), e.pairs.end());
}

}  // namespace detail

// Raw integer pairs as they appear on disk, before id remapping.
struct RawEdgeList {
  std::vector<std::pair<std::int64_t, std::int64_t>> pairs;
};

inline RawEdgeList load_raw_edge_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open edge list '" + path + "'");
  RawEdgeList out;
  std::string line;
  std::vector<std::string_view> toks;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!detail::tokenize(line, toks)) continue;
    std::int64_t a = 0, b = 0;
    if (toks.size() != 2 || !detail::parse_int64(toks[0], a) || !detail::parse_int64(toks[1], b) ||
        a < 0 || b < 0) {
      throw DataError(path + ":" + std::to_string(lineno) +
                      ": expected two non-negative integers, got '" + line + "'");
    }
    out.pairs.emplace_back(a, b);
  }
  if (in.bad()) throw DataError("read failure on '" + path + "'");
  return out;
}

inline EdgeList make_edge_list(std::vector<Edge> pairs, EdgeKind kind) {
  EdgeList e;
  e.pairs = std::move(pairs);
  e.kind = kind;
  detail::canonicalize(e);
  if (e.dropped_self_loops > 0) {
    warn("dropped " + std::to_string(e.dropped_self_loops) + " social self-loop(s)");
  }
  return e;
}

inline EdgeList load_edge_list(const std::string& path, EdgeKind kind) {
  RawEdgeList raw = load_raw_edge_list(path);
  std::vector<Edge> pairs;
  pairs.reserve(raw.pairs.size());
  for (auto [a, b] : raw.pairs) {
    if (a > std::numeric_limits<index_t>::max() || b > std::numeric_limits<index_t>::max()) {
      throw DataError(path + ": id exceeds 32-bit range; load with id remapping");
    }
    pairs.emplace_back(static_cast<index_t>(a), static_cast<index_t>(b));
  }
  return make_edge_list(std::move(pairs), kind);
}

// Maps arbitrary raw ids onto 0..size()-1 in first-seen order.
class IdMap {
 public:
  index_t intern(std::int64_t raw) {
    auto [it, inserted] = to_internal_.try_emplace(raw, static_cast<index_t>(raw_.size()));
    if (inserted) raw_.push_back(raw);
    return it->second;
  }

  index_t at(std::int64_t raw) const {
    auto it = to_internal_.find(raw);
    if (it == to_internal_.end()) throw DataError("unknown raw id " + std::to_string(raw));
    return it->second;
  }

  bool contains(std::int64_t raw) const { return to_internal_.count(raw) > 0; }
  std::int64_t raw(index_t internal) const { return raw_.at(static_cast<std::size_t>(internal)); }
  index_t size() const { return static_cast<index_t>(raw_.size()); }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write id map '" + path + "'");
    for (std::size_t i = 0; i < raw_.size(); ++i) out << raw_[i] << ' ' << i << '\n';
  }

  static IdMap load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open id map '" + path + "'");
    IdMap map;
    std::string line;
    std::vector<std::string_view> toks;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (!detail::tokenize(line, toks)) continue;
      std::int64_t raw = 0, internal = 0;
      if (toks.size() != 2 || !detail::parse_int64(toks[0], raw) ||
          !detail::parse_int64(toks[1], internal) || internal != map.size()) {
        throw DataError(path + ":" + std::to_string(lineno) + ": malformed id map entry");
      }
      map.intern(raw);
    }
    return map;
  }

 private:
  std::unordered_map<std::int64_t, index_t> to_internal_;
  std::vector<std::int64_t> raw_;
};

inline EdgeList remap(const RawEdgeList& raw, IdMap& sources, IdMap& targets, EdgeKind kind) {
  std::vector<Edge> pairs;
  pairs.reserve(raw.pairs.size());
  for (auto [a, b] : raw.pairs) {
    const index_t s = sources.intern(a);
    const index_t t = targets.intern(b);
    pairs.emplace_back(s, t);
  }
  return make_edge_list(std::move(pairs), kind);
}

// Bipartite user-item graph in compressed form, both directions.
struct InteractionGraph {
  index_t users = 0;
  index_t items = 0;
  std::vector<std::int64_t> user_offsets{0};
  std::vector<index_t> user_items;
  std::vector<std::int64_t> item_offsets{0};
  std::vector<index_t> item_users;

  std::int64_t num_edges() const { return static_cast<std::int64_t>(user_items.size()); }

  index_t user_degree(index_t u) const {
    return static_cast<index_t>(user_offsets[u + 1] - user_offsets[u]);
  }
  index_t item_degree(index_t i) const {
    return static_cast<index_t>(item_offsets[i + 1] - item_offsets[i]);
  }

  std::span<const index_t> items_of(index_t u) const {
    return {user_items.data() + user_offsets[u], static_cast<std::size_t>(user_degree(u))};
  }
  std::span<const index_t> users_of(index_t i) const {
    return {item_users.data() + item_offsets[i], static_cast<std::size_t>(item_degree(i))};
  }

  bool has_edge(index_t u, index_t i) const {
    auto row = items_of(u);
    return std::binary_search(row.begin(), row.end(), i);
  }

  EdgeList edges() const {
    EdgeList e;
    e.kind = EdgeKind::interaction;
    e.pairs.reserve(user_items.size());
    for (index_t u = 0; u < users; ++u)
      for (index_t i : items_of(u)) e.pairs.emplace_back(u, i);
    return e;
  }
};

namespace detail {

// Builds CSR rows for `rows` nodes from (row, col) pairs; columns come out sorted.
inline void build_csr(index_t rows, const std::vector<Edge>& pairs, bool transpose,
                      std::vector<std::int64_t>& offsets, std::vector<index_t>& cols) {
  offsets.assign(static_cast<std::size_t>(rows) + 1, 0);
  for (const auto& [a, b] : pairs) ++offsets[static_cast<std::size_t>(transpose ? b : a) + 1];
  for (std::size_t r = 0; r < static_cast<std::size_t>(rows); ++r) offsets[r + 1] += offsets[r];
  cols.assign(pairs.size(), 0);
  std::vector<std::int64_t> fill(offsets.begin(), offsets.end() - 1);
  for (const auto& [a, b] : pairs) {
    index_t r = transpose ? b : a;
    cols[static_cast<std::size_t>(fill[static_cast<std::size_t>(r)]++)] = transpose ? a : b;
  }
  for (index_t r = 0; r < rows; ++r)
    std::sort(cols.begin() + offsets[r], cols.begin() + offsets[r + 1]);
}

}  // namespace detail

inline InteractionGraph build_interaction_graph(const EdgeList& edges, index_t users, index_t items) {
  if (users < 0 || items < 0) throw DataError("negative graph dimensions");
  for (const auto& [u, i] : edges.pairs) {
    if (u < 0 || u >= users || i < 0 || i >= items) {
      throw DataError("interaction (" + std::to_string(u) + ", " + std::to_string(i) +
                      ") out of range for " + std::to_string(users) + " users x " +
                      std::to_string(items) + " items");
    }
  }
  std::vector<Edge> pairs = edges.pairs;
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());

  InteractionGraph g;
  g.users = users;
  g.items = items;
  detail::build_csr(users, pairs, false, g.user_offsets, g.user_items);
  detail::build_csr(items, pairs, true, g.item_offsets, g.item_users);
  return g;
}

// Undirected simple graph over users; each edge appears in both endpoint rows.
struct SocialGraph {
  index_t users = 0;
  std::vector<std::int64_t> offsets{0};
  std::vector<index_t> neighbors;

  index_t degree(index_t u) const { return static_cast<index_t>(offsets[u + 1] - offsets[u]); }
  std::span<const index_t> neighbors_of(index_t u) const {
    return {neighbors.data() + offsets[u], static_cast<std::size_t>(degree(u))};
  }
  // Undirected edge count.
  std::int64_t num_edges() const { return static_cast<std::int64_t>(neighbors.size() / 2); }
  // Sum of all degrees (twice the edge count).
  std::int64_t total_degree() const { return static_cast<std::int64_t>(neighbors.size()); }

  bool has_edge(index_t u, index_t v) const {
    auto row = neighbors_of(u);
    return std::binary_search(row.begin(), row.end(), v);
  }

  // Canonical (min, max) pairs in ascending order.
  EdgeList edges() const {
    EdgeList e;
    e.kind = EdgeKind::social;
    for (index_t u = 0; u < users; ++u)
      for (index_t v : neighbors_of(u))
        if (u < v) e.pairs.emplace_back(u, v);
    return e;
  }
};

inline SocialGraph build_social_graph(const EdgeList& edges, index_t users) {
  std::vector<Edge> both;
  both.reserve(edges.pairs.size() * 2);
  for (const auto& [a, b] : edges.pairs) {
    if (a < 0 || a >= users || b < 0 || b >= users) {
      throw DataError("social edge (" + std::to_string(a) + ", " + std::to_string(b) +
                      ") out of range for " + std::to_string(users) + " users");
    }
    if (a == b) continue;
    both.emplace_back(a, b);
    both.emplace_back(b, a);
  }
  std::sort(both.begin(), both.end());
  both.erase(std::unique(both.begin(), both.end()), both.end());
  SocialGraph g;
  g.users = users;
  detail::build_csr(users, both, false, g.offsets, g.neighbors);
  return g;
}

// 1/sqrt(d(u) d(i)) for every interaction edge, laid out parallel to both
// adjacency directions so propagation never recomputes square roots.
struct NormalizedAdjacency {
  std::vector<double> forward;  // parallel to InteractionGraph::user_items
  std::vector<double> reverse;  // parallel to InteractionGraph::item_users

  double weight(const InteractionGraph& g, index_t u, index_t i) const {
    auto row = g.items_of(u);
    auto it = std::lower_bound(row.begin(), row.end(), i);
    if (it == row.end() || *it != i) return 0.0;
    return forward[static_cast<std::size_t>(g.user_offsets[u] + (it - row.begin()))];
  }
  double weight_reverse(const InteractionGraph& g, index_t i, index_t u) const {
    auto row = g.users_of(i);
    auto it = std::lower_bound(row.begin(), row.end(), u);
    if (it == row.end() || *it != u) return 0.0;
    return reverse[static_cast<std::size_t>(g.item_offsets[i] + (it - row.begin()))];
  }
};

inline NormalizedAdjacency sym_norm_weights(const InteractionGraph& g) {
  NormalizedAdjacency w;
  w.forward.resize(g.user_items.size());
  w.reverse.resize(g.item_users.size());
  for (index_t u = 0; u < g.users; ++u) {
    const double du = g.user_degree(u);
    for (std::int64_t k = g.user_offsets[u]; k < g.user_offsets[u + 1]; ++k) {
      const double di = g.item_degree(g.user_items[static_cast<std::size_t>(k)]);
      w.forward[static_cast<std::size_t>(k)] = 1.0 / std::sqrt(du * di);
    }
  }
  for (index_t i = 0; i < g.items; ++i) {
    const double di = g.item_degree(i);
    for (std::int64_t k = g.item_offsets[i]; k < g.item_offsets[i + 1]; ++k) {
      const double du = g.user_degree(g.item_users[static_cast<std::size_t>(k)]);
      w.reverse[static_cast<std::size_t>(k)] = 1.0 / std::sqrt(du * di);
    }
  }
  return w;
}

struct SplitRatios {
  double train = 0.6;
  double val = 0.2;
  double test = 0.2;
};

struct SplitBundle {
  InteractionGraph train;
  EdgeList val;
  EdgeList test;
  std::uint64_t seed = 0;
};

namespace detail {

inline void shuffle(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t k = v.size(); k > 1; --k) {
    std::size_t j = static_cast<std::size_t>(uniform_index(rng, k));
    std::swap(v[k - 1], v[j]);
  }
}

// floor(r * n) with slack for ratios like 0.6 that are not exact in binary.
inline std::size_t floor_share(double r, std::size_t n) {
  return static_cast<std::size_t>(std::floor(r * static_cast<double>(n) + 1e-9));
}

}  // namespace detail

// Random edge-level split (floor train, floor val, remainder test). With
// `per_user` the same rule is applied to each user's edges separately.
inline SplitBundle split_interactions(const EdgeList& edges, SplitRatios ratios, std::uint64_t seed,
                                      index_t users = 0, index_t items = 0,
                                      bool per_user = false) {
  if (edges.empty()) throw DataError("cannot split an empty interaction list");
  if (ratios.train < 0 || ratios.val < 0 || ratios.test < 0 ||
      std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9) {
    throw UsageError("split ratios must be non-negative and sum to 1");
  }
  if (users == 0) users = edges.max_source() + 1;
  if (items == 0) items = edges.max_target() + 1;

  std::vector<Edge> pairs = edges.pairs;
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());

  Rng rng = make_rng(seed, 0x5117);
  std::vector<int> bucket(pairs.size(), 2);
  auto assign = [&](std::vector<std::size_t>& idx) {
    detail::shuffle(idx, rng);
    const std::size_t n_train = detail::floor_share(ratios.train, idx.size());
    const std::size_t n_val = detail::floor_share(ratios.val, idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k)
      bucket[idx[k]] = k < n_train ? 0 : (k < n_train + n_val ? 1 : 2);
  };
  if (per_user) {
    std::size_t begin = 0;
    while (begin < pairs.size()) {
      std::size_t end = begin;
      while (end < pairs.size() && pairs[end].first == pairs[begin].first) ++end;
      std::vector<std::size_t> idx(end - begin);
      for (std::size_t k = 0; k < idx.size(); ++k) idx[k] = begin + k;
      assign(idx);
      begin = end;
    }
  } else {
    std::vector<std::size_t> idx(pairs.size());
    for (std::size_t k = 0; k < idx.size(); ++k) idx[k] = k;
    assign(idx);
  }

  std::array<std::vector<Edge>, 3> parts;
  for (std::size_t k = 0; k < pairs.size(); ++k) parts[bucket[k]].push_back(pairs[k]);

  SplitBundle out;
  out.seed = seed;
  EdgeList train;
  train.pairs = std::move(parts[0]);
  out.train = build_interaction_graph(train, users, items);
  out.val.pairs = std::move(parts[1]);
  out.test.pairs = std::move(parts[2]);
  return out;
}

// Groups an edge list by source: result[u] is the sorted target list of u.
inline std::vector<std::vector<index_t>> group_by_source(const EdgeList& edges, index_t users) {
  std::vector<std::vector<index_t>> out(static_cast<std::size_t>(users));
  for (const auto& [u, i] : edges.pairs) {
    if (u < 0 || u >= users) throw DataError("edge source out of range");
    out[static_cast<std::size_t>(u)].push_back(i);
  }
  for (auto& row : out) {
    std::sort(row.begin(), row.end());
    row.erase(std::unique(row.begin(), row.end()), row.end());
  }
  return out;
}

}  // namespace pulse

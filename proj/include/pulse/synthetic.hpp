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

// Planted-partition social recommendation data for smoke tests and demos.

#pragma once

#include "pulse/core.hpp"
#include "pulse/graph.hpp"

#include <fstream>
#include <string>
#include <vector>

namespace pulse {

struct SyntheticSpec {
  index_t users = 200;
  index_t items = 300;
  index_t groups = 10;
  index_t min_interactions = 4;
  index_t max_interactions = 20;
  double in_group_item_prob = 0.9;  // chance an interaction falls in the user's group block
  double social_in = 0.25;          // friendship probability within a group
  double social_out = 0.003;        // friendship probability across groups
  std::uint64_t seed = 7;
};

struct SyntheticData {
  EdgeList interactions;
  EdgeList social;
  std::vector<index_t> group_of;  // planted group per user
};

// Users and items are split into `groups` contiguous blocks; a user's items
// come mostly from its block and its friends mostly share its block.
inline SyntheticData make_synthetic(const SyntheticSpec& spec) {
  Rng rng = make_rng(spec.seed, 0x5e7);
  SyntheticData out;
  out.group_of.resize(static_cast<std::size_t>(spec.users));
  const index_t items_per_group = spec.items / spec.groups;
  std::vector<Edge> inter, soc;
  for (index_t u = 0; u < spec.users; ++u) {
    const index_t grp = u % spec.groups;
    out.group_of[static_cast<std::size_t>(u)] = grp;
    const auto span = static_cast<std::uint64_t>(spec.max_interactions - spec.min_interactions + 1);
    const index_t count = spec.min_interactions + static_cast<index_t>(uniform_index(rng, span));
    for (index_t k = 0; k < count; ++k) {
      index_t item = 0;
      if (uniform01(rng) < spec.in_group_item_prob) {
        // Skewed popularity inside the block: squaring a uniform favors low offsets.
        const double x = uniform01(rng);
        item = grp * items_per_group + static_cast<index_t>(x * x * items_per_group);
      } else {
        item = static_cast<index_t>(uniform_index(rng, static_cast<std::uint64_t>(spec.items)));
      }
      inter.emplace_back(u, item);
    }
  }
  for (index_t u = 0; u < spec.users; ++u)
    for (index_t v = u + 1; v < spec.users; ++v) {
      const bool same = out.group_of[static_cast<std::size_t>(u)] == out.group_of[static_cast<std::size_t>(v)];
      if (uniform01(rng) < (same ? spec.social_in : spec.social_out)) soc.emplace_back(u, v);
    }
  out.interactions = make_edge_list(std::move(inter), EdgeKind::interaction);
  out.social = make_edge_list(std::move(soc), EdgeKind::social);
  return out;
}

inline void save_edge_list(const EdgeList& e, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write edge list '" + path + "'");
  for (const auto& [a, b] : e.pairs) out << a << ' ' << b << '\n';
  if (!out) throw DataError("write failure on '" + path + "'");
}

}  // namespace pulse

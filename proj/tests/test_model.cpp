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

using testing::random_toy;

Matrix<double> rows(std::initializer_list<std::initializer_list<double>> values) {
  Matrix<double> m(static_cast<Eigen::Index>(values.size()), static_cast<Eigen::Index>(values.begin()->size()));
  Eigen::Index r = 0;
  for (const auto& row : values) {
    Eigen::Index c = 0;
    for (double v : row) m(r, c++) = v;
    ++r;
  }
  return m;
}

AffiliationMatrix affiliation(std::vector<std::vector<index_t>> memberships, index_t communities) {
  AffiliationMatrix g;
  g.memberships = std::move(memberships);
  g.community_count = communities;
  return g;
}

InteractionGraph interactions(std::vector<Edge> edges, index_t users, index_t items) {
  return build_interaction_graph(make_edge_list(std::move(edges), EdgeKind::interaction), users, items);
}

SocialGraph social(std::vector<Edge> edges, index_t users) {
  return build_social_graph(make_edge_list(std::move(edges), EdgeKind::social), users);
}

TEST(Ceg, MeanOfCommunityRows) {
  const auto h = rows({{2, 0}, {0, 2}, {5, 5}});
  const auto out = ceg_forward(affiliation({{0}, {0, 1}, {}}, 3), h);
  EXPECT_EQ(out.row(0), h.row(0));
  EXPECT_EQ(out.row(1), rows({{1, 1}}).row(0));
  EXPECT_EQ(out.row(2), rows({{0, 0}}).row(0));
  EXPECT_THROW(ceg_forward(affiliation({{3}}, 4), h), DataError);
}

TEST(Behavior, HandValues) {
  // user 0 -> {item 0, item 1}; item 1 also has users 1..3, so d(item 1) = 4.
  const auto g = interactions({{0, 0}, {0, 1}, {1, 1}, {2, 1}, {3, 1}}, 5, 2);
  const auto item = rows({{2, 0}, {0, 4}});
  const auto b = behavior_embeddings(g, item);
  EXPECT_NEAR(b(0, 0), std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(b(0, 1), std::sqrt(2.0), 1e-15);
  EXPECT_EQ(b.row(4).norm(), 0.0);  // no train interactions

  const auto single = behavior_embeddings(interactions({{0, 1}}, 1, 2), item);
  EXPECT_EQ(single.row(0), item.row(1));
}

TEST(Attention, HandValues) {
  const auto a = rows({{1, 0}, {0, 1}, {0, 0}, {0.3, -2.0}});
  EXPECT_DOUBLE_EQ(attention_weight<double>(a.row(3), a.row(3), 1.0), 1.0);
  EXPECT_NEAR(attention_weight<double>(a.row(0), a.row(1), 1.0), 0.5 * std::exp(-1.0), 1e-15);
  EXPECT_NEAR(attention_weight<double>(a.row(2), a.row(3), 0.7), 0.5 * std::exp(-a.row(3).squaredNorm() / (2 * 0.49)),
              1e-15);
  EXPECT_NEAR(0.5 * std::exp(-1.0), 0.18394, 1e-5);
}

TEST(Attention, SymmetricAndBounded) {
  const auto toy = random_toy(25, 30, 4, 6, 0.2, 0.3);
  Rng rng = make_rng(6);
  const Matrix<double> item = 2.0 * xavier_init<double>(30, 5, rng);
  const auto b = behavior_embeddings(toy.graphs.train, item);
  const auto& s = toy.graphs.social;
  const auto w = social_attention(b, s, 0.8);
  for (index_t u = 0; u < s.users; ++u)
    for (std::int64_t k = s.offsets[u]; k < s.offsets[u + 1]; ++k) {
      const index_t v = s.neighbors[static_cast<std::size_t>(k)];
      const auto row = s.neighbors_of(v);
      const auto back = s.offsets[v] + (std::lower_bound(row.begin(), row.end(), u) - row.begin());
      EXPECT_EQ(w[static_cast<std::size_t>(k)], w[static_cast<std::size_t>(back)]);
      EXPECT_GE(w[static_cast<std::size_t>(k)], 0.0);
      EXPECT_LE(w[static_cast<std::size_t>(k)], 1.0);
    }
  EXPECT_THROW(social_attention(b, s, 0.0), UsageError);
}

TEST(Sia, HandValues) {
  const auto behavior = rows({{9, 9}, {1, 0}, {0, 1}, {4, 4}});
  const auto g = social({{0, 1}, {0, 2}}, 4);
  const std::vector<double> ones(g.neighbors.size(), 1.0);
  const auto out = sia_forward(g, behavior, ones);
  EXPECT_NEAR(out(0, 0), 1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(out(0, 1), 1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_EQ(out.row(3).norm(), 0.0);  // isolated

  const auto pair = social({{0, 1}}, 2);
  const Matrix<double> top = behavior.topRows(2);
  const auto one = sia_forward(pair, top, std::vector<double>(2, 1.0));
  EXPECT_EQ(one.row(0), behavior.row(1));
  EXPECT_THROW(sia_forward(pair, top, std::vector<double>(1, 1.0)), DataError);
}

TEST(Gate, ZeroOutputWeightGivesHalf) {
  Rng rng = make_rng(2);
  const Matrix<double> c = xavier_init<double>(6, 3, rng), s = xavier_init<double>(6, 3, rng);
  const Matrix<double> w1 = xavier_init<double>(6, 4, rng), w2 = Matrix<double>::Zero(4, 1);
  const auto out = gate_fusion(c, s, w1, w2);
  for (index_t u = 0; u < 6; ++u) EXPECT_EQ(out.alpha(u), 0.5);
  EXPECT_LT((out.fused - 0.5 * (c + s)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Gate, EqualInputsPassThrough) {
  Rng rng = make_rng(3);
  const Matrix<double> c = xavier_init<double>(5, 3, rng);
  const auto out = gate_fusion(c, c, xavier_init<double>(6, 3, rng), xavier_init<double>(3, 1, rng));
  EXPECT_LT((out.fused - c).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Gate, AlphaStrictlyInsideUnitInterval) {
  Rng rng = make_rng(4);
  const Matrix<double> c = 50.0 * xavier_init<double>(40, 4, rng), s = 50.0 * xavier_init<double>(40, 4, rng);
  const Matrix<double> w1 = 30.0 * xavier_init<double>(8, 4, rng), w2 = 30.0 * xavier_init<double>(4, 1, rng);
  const auto out = gate_fusion(c, s, w1, w2);
  for (index_t u = 0; u < 40; ++u) {
    EXPECT_GT(out.alpha(u), 0.0);
    EXPECT_LT(out.alpha(u), 1.0);
  }
  const auto f = gate_fusion<float>(c.cast<float>(), s.cast<float>(), w1.cast<float>(), w2.cast<float>());
  for (index_t u = 0; u < 40; ++u) {
    EXPECT_GT(f.alpha(u), 0.0f);
    EXPECT_LT(f.alpha(u), 1.0f);
  }
  EXPECT_THROW(gate_fusion(c, s, Matrix<double>(w1.topRows(4)), w2), DataError);
}

TEST(Gate, AblationModes) {
  Rng rng = make_rng(5);
  const Matrix<double> c = xavier_init<double>(3, 2, rng), s = xavier_init<double>(3, 2, rng);
  const Matrix<double> w1 = xavier_init<double>(4, 2, rng), w2 = xavier_init<double>(2, 1, rng);
  const auto sum = gate_fusion(c, s, w1, w2, 0.01, FusionMode::sum);
  EXPECT_LT((sum.fused - 0.5 * (c + s)).cwiseAbs().maxCoeff(), 1e-15);
  const auto only = gate_fusion(c, s, w1, w2, 0.01, FusionMode::community_only);
  EXPECT_EQ(only.fused, c);
}

TEST(LightGcn, ZeroLayersIsIdentity) {
  const auto g = interactions({{0, 0}, {1, 1}}, 2, 2);
  const auto u = rows({{1, 2}, {3, 4}}), i = rows({{5, 6}, {7, 8}});
  const auto [eu, ei] = lightgcn_forward(u, i, g, 0);
  EXPECT_EQ(eu, u);
  EXPECT_EQ(ei, i);
}

TEST(LightGcn, SingleEdgeHandValues) {
  const auto g = interactions({{0, 0}}, 1, 1);
  const auto hp = rows({{1, -2}}), hi = rows({{0.5, 3}});
  const auto [u1, i1] = lightgcn_forward(hp, hi, g, 1);
  EXPECT_EQ(u1, hp + hi);
  EXPECT_EQ(i1, hi + hp);
  const auto [u2, i2] = lightgcn_forward(hp, hi, g, 2);
  EXPECT_EQ(u2, 2 * hp + hi);
  EXPECT_EQ(i2, 2 * hi + hp);
}

TEST(LightGcn, ZeroDegreeNodesKeepLayerZero) {
  const auto g = interactions({{0, 0}}, 2, 2);
  const auto hp = rows({{1, 0}, {0, 1}}), hi = rows({{2, 2}, {3, 3}});
  const auto [eu, ei] = lightgcn_forward(hp, hi, g, 3);
  EXPECT_EQ(eu.row(1), hp.row(1));
  EXPECT_EQ(ei.row(1), hi.row(1));
}

TEST(LightGcn, Linearity) {
  const auto toy = random_toy(15, 20, 3, 9);
  Rng rng = make_rng(9);
  const Matrix<double> u = xavier_init<double>(15, 4, rng), i = xavier_init<double>(20, 4, rng);
  const auto [eu, ei] = lightgcn_forward(u, i, toy.graphs.train, 3);
  const auto [su, si] = lightgcn_forward<double>(-2.5 * u, -2.5 * i, toy.graphs.train, 3);
  EXPECT_LT((su + 2.5 * eu).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((si + 2.5 * ei).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_THROW(lightgcn_forward(u, i, toy.graphs.train, -1), UsageError);
}

TEST(LightGcn, OperatorIsSymmetric) {
  // <A x, y> = <x, A y> for the stacked normalized adjacency.
  const auto toy = random_toy(12, 18, 3, 10);
  Rng rng = make_rng(10);
  const Matrix<double> xu = xavier_init<double>(12, 3, rng), xi = xavier_init<double>(18, 3, rng);
  const Matrix<double> yu = xavier_init<double>(12, 3, rng), yi = xavier_init<double>(18, 3, rng);
  Matrix<double> axu, axi, ayu, ayi;
  propagate_once(toy.graphs.train, toy.graphs.train_norm, xu, xi, axu, axi);
  propagate_once(toy.graphs.train, toy.graphs.train_norm, yu, yi, ayu, ayi);
  const double left = (axu.cwiseProduct(yu)).sum() + (axi.cwiseProduct(yi)).sum();
  const double right = (xu.cwiseProduct(ayu)).sum() + (xi.cwiseProduct(ayi)).sum();
  EXPECT_NEAR(left, right, 1e-12);
}

TEST(Predict, DotProducts) {
  const auto u = rows({{1, 2}, {1, 0}}), i = rows({{3, -1}, {0, 1}, {1, 0}});
  const std::vector<index_t> items{0, 1, 2};
  EXPECT_EQ(predict(u, i, 0, items)[0], 1.0);
  EXPECT_EQ(predict(u, i, 1, items)[1], 0.0);
  EXPECT_EQ(predict(u, i, 1, items)[2], 1.0);
  EXPECT_THROW(predict(u, i, 2, items), DataError);
  const std::vector<index_t> bad{3};
  EXPECT_THROW(predict(u, i, 0, bad), DataError);
}

TEST(Mask, TinyRatioKeepsEverything) {
  const auto g = random_toy(20, 5, 6, 1).graphs.affiliation;
  Rng rng = make_rng(1);
  EXPECT_EQ(mask_affiliation(g, 1e-9, rng), g);
}

TEST(Mask, BinomialRetention) {
  AffiliationMatrix g;
  g.community_count = 100;
  g.memberships.resize(100);
  for (auto& row : g.memberships) {
    row.resize(100);
    std::iota(row.begin(), row.end(), 0);
  }
  Rng rng = make_rng(13);
  const auto masked = mask_affiliation(g, 0.2, rng);
  EXPECT_EQ(masked.community_count, 100);
  EXPECT_LT(std::abs(static_cast<double>(masked.nonzeros()) - 8000.0), 3.0 * std::sqrt(1e4 * 0.2 * 0.8));
  for (index_t u = 0; u < 100; ++u)
    for (index_t c : masked.communities_of(u)) EXPECT_TRUE(g.contains(u, c));
}

TEST(Mask, DeterministicAndValidated) {
  const auto g = random_toy(30, 5, 6, 2).graphs.affiliation;
  Rng a = make_rng(77), b = make_rng(77);
  EXPECT_EQ(mask_affiliation(g, 0.3, a), mask_affiliation(g, 0.3, b));
  EXPECT_THROW(mask_affiliation(g, 0.0, a), UsageError);
  EXPECT_THROW(mask_affiliation(g, 1.0, a), UsageError);
}

TEST(FullForward, ComposedTrivialCase) {
  auto graphs = make_model_graphs(interactions({}, 1, 2), social({}, 1), affiliation({{0}}, 1));
  ModelConfig cfg{.dim = 2, .hidden = 2, .layers = 0};
  auto p = ModelParameters<double>::zeros(1, 2, 2, 2);
  p.community << 3.0, -4.0;
  p.gate_w1.setConstant(0.7);
  const auto s = full_forward(p, graphs, cfg);
  EXPECT_EQ(s.gate.alpha(0), 0.5);
  EXPECT_EQ(s.user_out.row(0), (0.5 * p.community.row(0)).eval());
}

TEST(FullForward, PureAndShapes) {
  const auto toy = random_toy(10, 15, 4, 3);
  ModelConfig cfg{.dim = 4, .hidden = 3, .layers = 2};
  Rng rng = make_rng(3);
  const auto p = init_parameters<double>(4, 15, cfg, rng);
  const auto a = full_forward(p, toy.graphs, cfg);
  const auto b = full_forward(p, toy.graphs, cfg);
  EXPECT_EQ(a.user_out, b.user_out);
  EXPECT_EQ(a.item_out, b.item_out);
  EXPECT_EQ(a.gate.alpha, b.gate.alpha);
  EXPECT_EQ(a.user_out.rows(), 10);
  EXPECT_EQ(a.item_out.rows(), 15);
  EXPECT_EQ(a.social.attention.size(), toy.graphs.social.neighbors.size());
  EXPECT_TRUE(a.user_out.allFinite());
  auto wrong = p;
  wrong.community = Matrix<double>::Zero(5, 4);
  EXPECT_THROW(full_forward(wrong, toy.graphs, cfg), DataError);
}

TEST(FullForward, ColdStartUserStillRepresented) {
  // User 2 has no interactions but has a community and a friend who does.
  auto graphs = make_model_graphs(interactions({{0, 0}, {1, 1}, {0, 2}}, 3, 3), social({{1, 2}, {0, 1}}, 3),
                                  affiliation({{0}, {0, 1}, {1}}, 2));
  ModelConfig cfg{.dim = 3, .hidden = 3, .layers = 2};
  Rng rng = make_rng(12);
  const auto p = init_parameters<double>(2, 3, cfg, rng);
  const auto s = full_forward(p, graphs, cfg);
  EXPECT_EQ(s.social.behavior.row(2).norm(), 0.0);
  EXPECT_GT(s.social.social_items.row(2).norm(), 0.0);
  EXPECT_GT(s.user_out.row(2).norm(), 0.0);
}

TEST(FullForward, CachedDegreeTablesGiveSameRanking) {
  const auto toy = random_toy(12, 25, 3, 4);
  ModelConfig cfg{.dim = 6, .hidden = 6, .layers = 3};
  Rng rng = make_rng(4);
  const auto p = init_parameters<double>(3, 25, cfg, rng);
  const auto s = full_forward(p, toy.graphs, cfg);
  // Recompute propagation with freshly derived normalization weights.
  const auto [eu, ei] = lightgcn_forward(s.gate.fused, p.item, toy.graphs.train, cfg.layers);
  for (index_t u = 0; u < 12; ++u) {
    const auto a = top_k(Vector<double>(s.item_out * s.user_out.row(u).transpose()), {}, 25);
    const auto b = top_k(Vector<double>(ei * eu.row(u).transpose()), {}, 25);
    EXPECT_EQ(a, b);
  }
}

TEST(Parameters, CensusMatchesFormula) {
  const index_t c = 7, n = 11, d = 5, h = 3;
  const auto p = ModelParameters<double>::zeros(c, n, d, h);
  EXPECT_EQ(p.size(), c * d + n * d + 2 * d * h + h);
}

TEST(Checkpoint, RoundTripAndLayout) {
  Checkpoint<double> ck;
  ck.header.model = ModelConfig{.dim = 3, .hidden = 2, .layers = 2, .rbf_sigma = 0.5, .fusion = FusionMode::sum};
  ck.header.communities = 4;
  ck.header.items = 5;
  ck.header.data_hash = 0x0123456789abcdefULL;
  Rng rng = make_rng(8);
  ck.params = init_parameters<double>(4, 5, ck.header.model, rng);
  // Values that survive the float32 round trip exactly.
  ck.params.for_each([](Matrix<double>& m) { m = m.cast<float>().cast<double>(); });
  const std::string bytes = serialize_checkpoint(ck);
  EXPECT_EQ(bytes.substr(0, 8), "PULSECKP");
  EXPECT_EQ(bytes.substr(8, 4), std::string("\x01\x00\x00\x00", 4));
  EXPECT_EQ(bytes.size(), 8 + 8 * 4 + 3 * 8 + 4 * 8 + sizeof(float) * static_cast<std::size_t>(ck.params.size()));

  const auto back = deserialize_checkpoint<double>(bytes);
  EXPECT_EQ(back.header.model.dim, 3);
  EXPECT_EQ(back.header.model.hidden, 2);
  EXPECT_EQ(back.header.model.layers, 2);
  EXPECT_EQ(back.header.model.rbf_sigma, 0.5);
  EXPECT_EQ(back.header.model.fusion, FusionMode::sum);
  EXPECT_EQ(back.header.data_hash, ck.header.data_hash);
  EXPECT_EQ(back.params.community, ck.params.community);
  EXPECT_EQ(back.params.item, ck.params.item);
  EXPECT_EQ(back.params.gate_w1, ck.params.gate_w1);
  EXPECT_EQ(back.params.gate_w2, ck.params.gate_w2);

  const auto dir = testing::temp_dir("checkpoint");
  save_checkpoint(ck, (dir / "ck.bin").string());
  EXPECT_EQ(testing::read_file(dir / "ck.bin"), bytes);
  EXPECT_EQ(load_checkpoint<float>((dir / "ck.bin").string()).params.item, ck.params.item.cast<float>());
}

TEST(Checkpoint, RejectsCorruption) {
  Checkpoint<float> ck;
  ck.header.model = ModelConfig{.dim = 2, .hidden = 2};
  ck.header.communities = 1;
  ck.header.items = 1;
  ck.params = ModelParameters<float>::zeros(1, 1, 2, 2);
  const std::string bytes = serialize_checkpoint(ck);
  EXPECT_THROW(deserialize_checkpoint<float>("NOTACKPT" + bytes.substr(8)), DataError);
  EXPECT_THROW(deserialize_checkpoint<float>(bytes.substr(0, bytes.size() - 1)), DataError);
  EXPECT_THROW(deserialize_checkpoint<float>(bytes + "x"), DataError);
  std::string version = bytes;
  version[8] = 9;
  EXPECT_THROW(deserialize_checkpoint<float>(version), DataError);
}

}  // namespace
}  // namespace pulse

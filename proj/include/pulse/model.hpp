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

#include "pulse/community.hpp"
#include "pulse/core.hpp"
#include "pulse/graph.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace pulse {

// How the community-aware and social-item user vectors are combined.
enum class FusionMode : std::uint32_t {
  gated = 0,           // alpha_u from the two-layer gate
  sum = 1,             // alpha_u fixed at 0.5
  community_only = 2,  // SIA disabled, alpha_u = 1
};

struct ModelConfig {
  index_t dim = 64;
  index_t hidden = 64;
  int layers = 3;
  double rbf_sigma = 1.0;
  double leaky_slope = 0.01;
  FusionMode fusion = FusionMode::gated;
};

// The complete trainable state. There is no per-user table: users are
// represented through community rows and item rows only.
template <typename T>
struct ModelParameters {
  Matrix<T> community;  // |C| x d
  Matrix<T> item;       // n x d
  Matrix<T> gate_w1;    // 2d x h
  Matrix<T> gate_w2;    // h x 1

  static ModelParameters zeros(index_t communities, index_t items, index_t dim, index_t hidden) {
    ModelParameters p;
    p.community = Matrix<T>::Zero(communities, dim);
    p.item = Matrix<T>::Zero(items, dim);
    p.gate_w1 = Matrix<T>::Zero(2 * dim, hidden);
    p.gate_w2 = Matrix<T>::Zero(hidden, 1);
    return p;
  }

  index_t dim() const { return static_cast<index_t>(item.cols()); }
  index_t hidden() const { return static_cast<index_t>(gate_w1.cols()); }

  std::int64_t size() const {
    return static_cast<std::int64_t>(community.size() + item.size() + gate_w1.size() + gate_w2.size());
  }

  template <typename F>
  void for_each(F&& f) {
    f(community);
    f(item);
    f(gate_w1);
    f(gate_w2);
  }
  template <typename F>
  void for_each(F&& f) const {
    f(community);
    f(item);
    f(gate_w1);
    f(gate_w2);
  }

  template <typename U>
  ModelParameters<U> cast() const {
    ModelParameters<U> p;
    p.community = community.template cast<U>();
    p.item = item.template cast<U>();
    p.gate_w1 = gate_w1.template cast<U>();
    p.gate_w2 = gate_w2.template cast<U>();
    return p;
  }

  bool all_finite() const {
    bool ok = true;
    for_each([&](const Matrix<T>& m) { ok = ok && m.allFinite(); });
    return ok;
  }
};

// Graph inputs shared by every forward pass. Degrees are train-split only.
struct ModelGraphs {
  InteractionGraph train;
  NormalizedAdjacency train_norm;
  SocialGraph social;
  AffiliationMatrix affiliation;

  index_t users() const { return train.users; }
  index_t items() const { return train.items; }
};

inline ModelGraphs make_model_graphs(InteractionGraph train, SocialGraph social, AffiliationMatrix affiliation) {
  if (social.users != train.users || affiliation.users() != train.users)
    throw DataError("train graph, social graph and affiliation disagree on user count");
  ModelGraphs g;
  g.train_norm = sym_norm_weights(train);
  g.train = std::move(train);
  g.social = std::move(social);
  g.affiliation = std::move(affiliation);
  return g;
}

// Each user in its own community: turns the community table into a plain
// per-user embedding table (the LightGCN reference model).
inline AffiliationMatrix identity_affiliation(index_t users) {
  AffiliationMatrix g;
  g.community_count = users;
  g.memberships.resize(static_cast<std::size_t>(users));
  for (index_t u = 0; u < users; ++u) g.memberships[static_cast<std::size_t>(u)] = {u};
  return g;
}

// Mean of the user's community rows; zero when the user has none.
template <typename T>
Matrix<T> ceg_forward(const AffiliationMatrix& g, const Matrix<T>& community) {
  Matrix<T> out = Matrix<T>::Zero(g.users(), community.cols());
  for (index_t u = 0; u < g.users(); ++u) {
    auto row = g.communities_of(u);
    if (row.empty()) continue;
    for (index_t c : row) {
      if (c < 0 || c >= community.rows()) throw DataError("community id out of range in affiliation");
      out.row(u) += community.row(c);
    }
    out.row(u) /= static_cast<T>(row.size());
  }
  return out;
}

// Symmetric-normalized item aggregation per user. The caller treats the
// result as a constant: no gradient is ever routed back into `item`.
template <typename T>
Matrix<T> behavior_embeddings(const InteractionGraph& train, const NormalizedAdjacency& norm,
                              const Matrix<T>& item) {
  Matrix<T> out = Matrix<T>::Zero(train.users, item.cols());
  for (index_t u = 0; u < train.users; ++u) {
    for (std::int64_t k = train.user_offsets[u]; k < train.user_offsets[u + 1]; ++k) {
      const auto e = static_cast<std::size_t>(k);
      out.row(u) += static_cast<T>(norm.forward[e]) * item.row(train.user_items[e]);
    }
  }
  return out;
}

template <typename T>
Matrix<T> behavior_embeddings(const InteractionGraph& train, const Matrix<T>& item) {
  return behavior_embeddings(train, sym_norm_weights(train), item);
}

// Cosine-times-RBF weight of two behavior vectors; cos(0, x) is taken as 0.
template <typename T, typename A, typename B>
T attention_weight(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b, double sigma) {
  const T na = a.norm();
  const T nb = b.norm();
  const T cosine = (na > T(0) && nb > T(0)) ? T(a.dot(b) / (na * nb)) : T(0);
  const T dist2 = (a - b).squaredNorm();
  const T w = T(0.5) * (T(1) + cosine) * std::exp(-dist2 / T(2.0 * sigma * sigma));
  return std::clamp(w, T(0), T(1));
}

// One weight per directed adjacency entry of `social` (parallel to social.neighbors).
template <typename T>
std::vector<T> social_attention(const Matrix<T>& behavior, const SocialGraph& social, double sigma) {
  if (!(sigma > 0.0)) throw UsageError("RBF bandwidth must be positive");
  std::vector<T> out(social.neighbors.size());
  for (index_t u = 0; u < social.users; ++u) {
    for (std::int64_t k = social.offsets[u]; k < social.offsets[u + 1]; ++k) {
      const index_t v = social.neighbors[static_cast<std::size_t>(k)];
      out[static_cast<std::size_t>(k)] = attention_weight<T>(behavior.row(u), behavior.row(v), sigma);
    }
  }
  return out;
}

template <typename T>
Matrix<T> sia_forward(const SocialGraph& social, const Matrix<T>& behavior, const std::vector<T>& attention) {
  if (attention.size() != social.neighbors.size()) throw DataError("attention table does not cover the social graph");
  Matrix<T> out = Matrix<T>::Zero(social.users, behavior.cols());
  for (index_t u = 0; u < social.users; ++u) {
    const T du = static_cast<T>(social.degree(u));
    for (std::int64_t k = social.offsets[u]; k < social.offsets[u + 1]; ++k) {
      const index_t v = social.neighbors[static_cast<std::size_t>(k)];
      const T scale = attention[static_cast<std::size_t>(k)] / std::sqrt(du * static_cast<T>(social.degree(v)));
      out.row(u) += scale * behavior.row(v);
    }
  }
  return out;
}

// The gradient-blocked social branch: behavior vectors, attention, and the
// aggregated socially-connected-item vectors.
template <typename T>
struct SocialCache {
  Matrix<T> behavior;
  std::vector<T> attention;
  Matrix<T> social_items;
};

template <typename T>
SocialCache<T> compute_social_cache(const ModelGraphs& graphs, const Matrix<T>& item, const ModelConfig& cfg) {
  SocialCache<T> c;
  c.behavior = behavior_embeddings(graphs.train, graphs.train_norm, item);
  if (cfg.fusion == FusionMode::community_only) {
    c.social_items = Matrix<T>::Zero(graphs.users(), item.cols());
    return c;
  }
  c.attention = social_attention(c.behavior, graphs.social, cfg.rbf_sigma);
  c.social_items = sia_forward(graphs.social, c.behavior, c.attention);
  return c;
}

template <typename T>
T sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

template <typename T>
struct GateOutput {
  Vector<T> alpha;     // m
  Matrix<T> pre_hidden;  // m x h, before LeakyReLU
  Matrix<T> fused;     // m x d
};

// alpha_u = sigmoid(LeakyReLU([c_u ; s_u] W1) W2), fused_u = alpha_u c_u + (1 - alpha_u) s_u.
template <typename T>
GateOutput<T> gate_fusion(const Matrix<T>& community_user, const Matrix<T>& social_user, const Matrix<T>& w1,
                          const Matrix<T>& w2, double leaky_slope = 0.01, FusionMode mode = FusionMode::gated) {
  const index_t m = static_cast<index_t>(community_user.rows());
  const index_t d = static_cast<index_t>(community_user.cols());
  GateOutput<T> out;
  if (mode == FusionMode::community_only) {
    out.alpha = Vector<T>::Ones(m);
    out.fused = community_user;
    return out;
  }
  if (mode == FusionMode::sum) {
    out.alpha = Vector<T>::Constant(m, T(0.5));
  } else {
    if (w1.rows() != 2 * d || w2.rows() != w1.cols() || w2.cols() != 1)
      throw DataError("gate weight shapes do not match the embedding dimension");
    out.pre_hidden = community_user * w1.topRows(d) + social_user * w1.bottomRows(d);
    Matrix<T> hidden = out.pre_hidden.unaryExpr([s = T(leaky_slope)](T z) { return z > T(0) ? z : s * z; });
    const Vector<T> logits = hidden * w2.col(0);
    const T eps = std::numeric_limits<T>::epsilon();
    out.alpha.resize(m);
    for (index_t u = 0; u < m; ++u) out.alpha(u) = std::clamp(sigmoid(logits(u)), eps, T(1) - eps);
  }
  out.fused = out.alpha.asDiagonal() * community_user + (Vector<T>::Ones(m) - out.alpha).asDiagonal() * social_user;
  return out;
}

// One application of D^-1/2 A D^-1/2 to the stacked [users; items] matrix.
template <typename T>
void propagate_once(const InteractionGraph& g, const NormalizedAdjacency& norm, const Matrix<T>& users,
                    const Matrix<T>& items, Matrix<T>& next_users, Matrix<T>& next_items) {
  next_users.setZero(users.rows(), users.cols());
  next_items.setZero(items.rows(), items.cols());
  for (index_t u = 0; u < g.users; ++u)
    for (std::int64_t k = g.user_offsets[u]; k < g.user_offsets[u + 1]; ++k) {
      const auto e = static_cast<std::size_t>(k);
      next_users.row(u) += static_cast<T>(norm.forward[e]) * items.row(g.user_items[e]);
    }
  for (index_t i = 0; i < g.items; ++i)
    for (std::int64_t k = g.item_offsets[i]; k < g.item_offsets[i + 1]; ++k) {
      const auto e = static_cast<std::size_t>(k);
      next_items.row(i) += static_cast<T>(norm.reverse[e]) * users.row(g.item_users[e]);
    }
}

// Layer-sum LightGCN readout: E = sum_{l=0..L} E^(l). The operator is
// symmetric, so the same routine also maps output gradients to input gradients.
template <typename T>
std::pair<Matrix<T>, Matrix<T>> lightgcn_forward(const Matrix<T>& users, const Matrix<T>& items,
                                                 const InteractionGraph& g, const NormalizedAdjacency& norm,
                                                 int layers) {
  if (layers < 0) throw UsageError("layer count must be non-negative");
  if (users.rows() != g.users || items.rows() != g.items) throw DataError("embedding rows do not match the graph");
  Matrix<T> sum_u = users, sum_i = items;
  Matrix<T> cur_u = users, cur_i = items, next_u, next_i;
  for (int l = 0; l < layers; ++l) {
    propagate_once(g, norm, cur_u, cur_i, next_u, next_i);
    sum_u += next_u;
    sum_i += next_i;
    std::swap(cur_u, next_u);
    std::swap(cur_i, next_i);
  }
  return {std::move(sum_u), std::move(sum_i)};
}

template <typename T>
std::pair<Matrix<T>, Matrix<T>> lightgcn_forward(const Matrix<T>& users, const Matrix<T>& items,
                                                 const InteractionGraph& g, int layers) {
  return lightgcn_forward(users, items, g, sym_norm_weights(g), layers);
}

template <typename T>
std::vector<T> predict(const Matrix<T>& user_out, const Matrix<T>& item_out, index_t u, std::span<const index_t> items) {
  if (u < 0 || u >= user_out.rows()) throw DataError("user id " + std::to_string(u) + " out of range");
  std::vector<T> scores;
  scores.reserve(items.size());
  for (index_t i : items) {
    if (i < 0 || i >= item_out.rows()) throw DataError("item id " + std::to_string(i) + " out of range");
    scores.push_back(user_out.row(u).dot(item_out.row(i)));
  }
  return scores;
}

// Drops each nonzero of G independently with probability rho.
inline AffiliationMatrix mask_affiliation(const AffiliationMatrix& g, double rho, Rng& rng) {
  if (!(rho > 0.0 && rho < 1.0)) throw UsageError("mask ratio must lie in (0, 1)");
  AffiliationMatrix out;
  out.community_count = g.community_count;
  out.memberships.resize(g.memberships.size());
  for (std::size_t u = 0; u < g.memberships.size(); ++u)
    for (index_t c : g.memberships[u])
      if (uniform01(rng) >= rho) out.memberships[u].push_back(c);
  return out;
}

template <typename T>
struct ForwardState {
  Matrix<T> community_user;  // H^C, m x d
  SocialCache<T> social;     // H^I, attention, H^S
  GateOutput<T> gate;        // alpha and H^P
  Matrix<T> user_out;        // E_U
  Matrix<T> item_out;        // E_I
};

// behavior -> attention -> SIA -> CEG -> gate -> LightGCN. A supplied cache
// replaces the social branch (per-epoch caching, frozen finite differences).
template <typename T>
ForwardState<T> full_forward(const ModelParameters<T>& params, const ModelGraphs& graphs,
                             const AffiliationMatrix& affiliation, const ModelConfig& cfg,
                             const SocialCache<T>* cache = nullptr) {
  if (params.item.rows() != graphs.items() || params.community.rows() != affiliation.community_count)
    throw DataError("parameter shapes do not match the graphs");
  ForwardState<T> s;
  s.social = cache ? *cache : compute_social_cache(graphs, params.item, cfg);
  s.community_user = ceg_forward(affiliation, params.community);
  s.gate = gate_fusion(s.community_user, s.social.social_items, params.gate_w1, params.gate_w2, cfg.leaky_slope,
                       cfg.fusion);
  std::tie(s.user_out, s.item_out) =
      lightgcn_forward(s.gate.fused, params.item, graphs.train, graphs.train_norm, cfg.layers);
  return s;
}

template <typename T>
ForwardState<T> full_forward(const ModelParameters<T>& params, const ModelGraphs& graphs, const ModelConfig& cfg,
                             const SocialCache<T>* cache = nullptr) {
  return full_forward(params, graphs, graphs.affiliation, cfg, cache);
}

// ---------------------------------------------------------------------------
// Checkpoints: 8-byte magic, fixed little-endian header, then the four
// tensors row-major as little-endian IEEE-754 binary32.

inline constexpr char kCheckpointMagic[8] = {'P', 'U', 'L', 'S', 'E', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointHeader {
  std::uint32_t version = kCheckpointVersion;
  ModelConfig model;
  index_t communities = 0;
  index_t items = 0;
  bool baseline_lightgcn = false;
  std::uint64_t data_hash = 0;  // identifies the dataset/split the model was trained on
};

template <typename T>
struct Checkpoint {
  CheckpointHeader header;
  ModelParameters<T> params;
};

namespace io_detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
}
inline void put_u64(std::string& out, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
}
inline void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;
  void need(std::size_t n) {
    if (pos + n > buf.size()) throw DataError("checkpoint truncated");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos++])) << (8 * b);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos++])) << (8 * b);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  float f32() { return std::bit_cast<float>(u32()); }
};

template <typename T>
void put_tensor(std::string& out, const Matrix<T>& m) {
  put_u32(out, static_cast<std::uint32_t>(m.rows()));
  put_u32(out, static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(m(r, c))));
}

template <typename T>
Matrix<T> get_tensor(Reader& in, Eigen::Index rows, Eigen::Index cols, const char* name) {
  const auto r = in.u32(), c = in.u32();
  if (r != rows || c != cols) throw DataError(std::string("checkpoint tensor '") + name + "' has unexpected shape");
  Matrix<T> m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = static_cast<T>(in.f32());
  return m;
}

}  // namespace io_detail

template <typename T>
std::string serialize_checkpoint(const Checkpoint<T>& ck) {
  using namespace io_detail;
  std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
  const auto& h = ck.header;
  put_u32(out, h.version);
  put_u32(out, static_cast<std::uint32_t>(h.model.dim));
  put_u32(out, static_cast<std::uint32_t>(h.model.hidden));
  put_u32(out, static_cast<std::uint32_t>(h.model.layers));
  put_u32(out, static_cast<std::uint32_t>(h.communities));
  put_u32(out, static_cast<std::uint32_t>(h.items));
  put_u32(out, static_cast<std::uint32_t>(h.model.fusion));
  put_u32(out, h.baseline_lightgcn ? 1u : 0u);
  put_f64(out, h.model.rbf_sigma);
  put_f64(out, h.model.leaky_slope);
  put_u64(out, h.data_hash);
  put_tensor(out, ck.params.community);
  put_tensor(out, ck.params.item);
  put_tensor(out, ck.params.gate_w1);
  put_tensor(out, ck.params.gate_w2);
  return out;
}

template <typename T>
Checkpoint<T> deserialize_checkpoint(const std::string& buf) {
  using namespace io_detail;
  if (buf.size() < sizeof(kCheckpointMagic) || buf.compare(0, sizeof(kCheckpointMagic), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0)
    throw DataError("not a checkpoint (bad magic)");
  Reader in{buf, sizeof(kCheckpointMagic)};
  Checkpoint<T> ck;
  auto& h = ck.header;
  h.version = in.u32();
  if (h.version != kCheckpointVersion) throw DataError("unsupported checkpoint version " + std::to_string(h.version));
  h.model.dim = static_cast<index_t>(in.u32());
  h.model.hidden = static_cast<index_t>(in.u32());
  h.model.layers = static_cast<int>(in.u32());
  h.communities = static_cast<index_t>(in.u32());
  h.items = static_cast<index_t>(in.u32());
  const auto fusion = in.u32();
  if (fusion > 2) throw DataError("checkpoint has unknown fusion mode");
  h.model.fusion = static_cast<FusionMode>(fusion);
  h.baseline_lightgcn = in.u32() != 0;
  h.model.rbf_sigma = in.f64();
  h.model.leaky_slope = in.f64();
  h.data_hash = in.u64();
  ck.params.community = get_tensor<T>(in, h.communities, h.model.dim, "community");
  ck.params.item = get_tensor<T>(in, h.items, h.model.dim, "item");
  ck.params.gate_w1 = get_tensor<T>(in, 2 * h.model.dim, h.model.hidden, "gate_w1");
  ck.params.gate_w2 = get_tensor<T>(in, h.model.hidden, 1, "gate_w2");
  if (in.pos != buf.size()) throw DataError("trailing bytes after checkpoint tensors");
  return ck;
}

template <typename T>
void save_checkpoint(const Checkpoint<T>& ck, const std::string& path) {
  const std::string bytes = serialize_checkpoint(ck);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failure on '" + path + "'");
}

template <typename T>
Checkpoint<T> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint<T>(bytes);
}

}  // namespace pulse

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
#include "pulse/metrics.hpp"
#include "pulse/model.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

namespace pulse {

struct LossConfig {
  double ssl_weight = 0.3;    // lambda1
  double l2_weight = 1e-6;    // lambda2
  double temperature = 0.2;   // tau
  double mask_ratio = 0.1;    // rho

  void validate() const {
    if (ssl_weight < 0 || l2_weight < 0) throw UsageError("loss weights must be non-negative");
    if (!(temperature > 0)) throw UsageError("temperature must be positive");
    if (!(mask_ratio > 0 && mask_ratio < 1)) throw UsageError("mask ratio must lie in (0, 1)");
  }
};

struct Triplet {
  index_t user = 0;
  index_t positive = 0;
  index_t negative = 0;
};

struct TripletBatch {
  std::vector<Triplet> triples;
  std::size_t skipped_saturated = 0;

  std::size_t size() const { return triples.size(); }

  // Distinct users in ascending order.
  std::vector<index_t> users() const {
    std::vector<index_t> u;
    u.reserve(triples.size());
    for (const auto& t : triples) u.push_back(t.user);
    std::sort(u.begin(), u.end());
    u.erase(std::unique(u.begin(), u.end()), u.end());
    return u;
  }
};

template <typename T>
using Gradients = ModelParameters<T>;

template <typename T>
Matrix<T> xavier_init(index_t rows, index_t cols, Rng& rng) {
  if (rows <= 0 || cols <= 0) throw UsageError("xavier_init needs positive dimensions");
  const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix<T> m(rows, cols);
  for (index_t r = 0; r < rows; ++r)
    for (index_t c = 0; c < cols; ++c) m(r, c) = static_cast<T>((2.0 * uniform01(rng) - 1.0) * a);
  return m;
}

template <typename T>
ModelParameters<T> init_parameters(index_t communities, index_t items, const ModelConfig& cfg, Rng& rng) {
  ModelParameters<T> p = ModelParameters<T>::zeros(communities, items, cfg.dim, cfg.hidden);
  if (communities > 0) p.community = xavier_init<T>(communities, cfg.dim, rng);
  if (items > 0) p.item = xavier_init<T>(items, cfg.dim, rng);
  if (cfg.hidden > 0) {
    p.gate_w1 = xavier_init<T>(2 * cfg.dim, cfg.hidden, rng);
    p.gate_w2 = xavier_init<T>(cfg.hidden, 1, rng);
  }
  return p;
}

// Positives uniform over train edges; one negative per positive, uniform over
// the user's non-interacted items by rejection.
inline TripletBatch sample_triplets(const InteractionGraph& train, std::size_t batch, Rng& rng) {
  if (train.num_edges() == 0) throw DataError("cannot sample triplets from an empty train graph");
  TripletBatch out;
  out.triples.reserve(batch);
  std::size_t consecutive_skips = 0;
  while (out.triples.size() < batch) {
    const auto e = static_cast<std::int64_t>(uniform_index(rng, static_cast<std::uint64_t>(train.num_edges())));
    const auto it = std::upper_bound(train.user_offsets.begin(), train.user_offsets.end(), e);
    const auto u = static_cast<index_t>(it - train.user_offsets.begin() - 1);
    if (train.user_degree(u) >= train.items) {
      ++out.skipped_saturated;
      if (++consecutive_skips > 64 * static_cast<std::size_t>(train.users) + 1024)
        throw DataError("every sampled user has interacted with all items");
      continue;
    }
    consecutive_skips = 0;
    index_t j = 0;
    do {
      j = static_cast<index_t>(uniform_index(rng, static_cast<std::uint64_t>(train.items)));
    } while (train.has_edge(u, j));
    out.triples.push_back({u, train.user_items[static_cast<std::size_t>(e)], j});
  }
  if (out.skipped_saturated > 0)
    warn("skipped " + std::to_string(out.skipped_saturated) + " positive(s) of users with no negative item");
  return out;
}

// log(1 + e^x) without overflow.
inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

// -sum log sigmoid(pos - neg).
inline double bpr_loss(std::span<const std::pair<double, double>> scores) {
  double total = 0.0;
  for (const auto& [pos, neg] : scores) total += softplus(-(pos - neg));
  return total;
}

template <typename T>
double l2_penalty(const ModelParameters<T>& p) {
  double s = 0.0;
  p.for_each([&](const Matrix<T>& m) { s += static_cast<double>(m.template cast<double>().squaredNorm()); });
  return s;
}

namespace train_detail {

template <typename T>
Matrix<T> normalize_rows(const Matrix<T>& x, Vector<T>& norms) {
  norms = x.rowwise().norm();
  Matrix<T> out = x;
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    if (norms(r) > T(0)) out.row(r) /= norms(r);
    else out.row(r).setZero();
  }
  return out;
}

// Gradient through row normalization: (g - (g.n) n) / |x|, zero for zero rows.
template <typename T>
void normalize_backward(const Matrix<T>& normalized, const Vector<T>& norms, Matrix<T>& grad) {
  for (Eigen::Index r = 0; r < grad.rows(); ++r) {
    if (norms(r) > T(0)) {
      const T proj = grad.row(r).dot(normalized.row(r));
      grad.row(r) = (grad.row(r) - proj * normalized.row(r)) / norms(r);
    } else {
      grad.row(r).setZero();
    }
  }
}

}  // namespace train_detail

// InfoNCE over cosine similarities: anchors u contrast view1[u] against
// view2[v] for all users v. If the gradient outputs are given they receive
// d(loss)/d(view), scaled by `grad_scale`.
template <typename T>
double infonce_loss(const Matrix<T>& view1, const Matrix<T>& view2, std::span<const index_t> anchors, double tau,
                    Matrix<T>* grad1 = nullptr, Matrix<T>* grad2 = nullptr, double grad_scale = 1.0) {
  if (!(tau > 0)) throw UsageError("temperature must be positive");
  if (view1.rows() != view2.rows() || view1.cols() != view2.cols()) throw DataError("InfoNCE views differ in shape");
  const Eigen::Index m = view1.rows();
  Vector<T> norms1, norms2;
  const Matrix<T> n1 = train_detail::normalize_rows(view1, norms1);
  const Matrix<T> n2 = train_detail::normalize_rows(view2, norms2);
  const bool want_grad = grad1 && grad2;
  Matrix<T> dn1, dn2;
  if (want_grad) {
    dn1 = Matrix<T>::Zero(m, view1.cols());
    dn2 = Matrix<T>::Zero(m, view1.cols());
  }

  constexpr std::size_t kChunk = 256;
  double loss = 0.0;
  for (std::size_t begin = 0; begin < anchors.size(); begin += kChunk) {
    const std::size_t count = std::min(kChunk, anchors.size() - begin);
    Matrix<T> a(static_cast<Eigen::Index>(count), view1.cols());
    for (std::size_t k = 0; k < count; ++k) {
      const index_t u = anchors[begin + k];
      if (u < 0 || u >= m) throw DataError("InfoNCE anchor out of range");
      a.row(static_cast<Eigen::Index>(k)) = n1.row(u);
    }
    Matrix<T> logits = (a * n2.transpose()) / static_cast<T>(tau);
    for (std::size_t k = 0; k < count; ++k) {
      const auto r = static_cast<Eigen::Index>(k);
      const index_t u = anchors[begin + k];
      const T mx = logits.row(r).maxCoeff();
      const T denom = (logits.row(r).array() - mx).exp().sum();
      loss += static_cast<double>(-(logits(r, u) - mx) + std::log(denom));
      if (want_grad) {
        logits.row(r) = (logits.row(r).array() - mx).exp() / denom;  // softmax
        logits(r, u) -= T(1);
      }
    }
    if (want_grad) {
      const T s = static_cast<T>(grad_scale / tau);
      const Matrix<T> da = s * (logits * n2);
      dn2.noalias() += s * (logits.transpose() * a);
      for (std::size_t k = 0; k < count; ++k) dn1.row(anchors[begin + k]) += da.row(static_cast<Eigen::Index>(k));
    }
  }
  if (want_grad) {
    train_detail::normalize_backward(n1, norms1, dn1);
    train_detail::normalize_backward(n2, norms2, dn2);
    *grad1 = std::move(dn1);
    *grad2 = std::move(dn2);
  }
  return loss;
}

// Two masked copies of G, one per contrastive view.
struct SslViews {
  AffiliationMatrix first;
  AffiliationMatrix second;
};

inline SslViews draw_ssl_views(const AffiliationMatrix& g, double rho, Rng& first, Rng& second) {
  return {mask_affiliation(g, rho, first), mask_affiliation(g, rho, second)};
}

struct LossBreakdown {
  double rec = 0.0;
  double ssl = 0.0;
  double l2 = 0.0;  // unweighted squared norm
  double total = 0.0;
};

namespace train_detail {

// Backpropagates d(loss)/d(fused user vectors) through the gate and CEG.
template <typename T>
void fusion_backward(const ForwardState<T>& s, const AffiliationMatrix& affiliation, const ModelParameters<T>& params,
                     const ModelConfig& cfg, const Matrix<T>& grad_fused, Gradients<T>& grads) {
  const Eigen::Index d = s.community_user.cols();
  Matrix<T> grad_cu;
  switch (cfg.fusion) {
    case FusionMode::community_only:
      grad_cu = grad_fused;
      break;
    case FusionMode::sum:
      grad_cu = T(0.5) * grad_fused;
      break;
    case FusionMode::gated: {
      const auto& alpha = s.gate.alpha;
      const auto& pre = s.gate.pre_hidden;
      const Matrix<T>& social = s.social.social_items;
      const T slope = static_cast<T>(cfg.leaky_slope);
      Vector<T> grad_logit = (grad_fused.cwiseProduct(s.community_user - social)).rowwise().sum();
      grad_logit.array() *= alpha.array() * (T(1) - alpha.array());
      const Matrix<T> hidden = pre.unaryExpr([slope](T z) { return z > T(0) ? z : slope * z; });
      grads.gate_w2.noalias() += hidden.transpose() * grad_logit;
      Matrix<T> grad_pre = grad_logit * params.gate_w2.col(0).transpose();
      grad_pre.array() *= pre.unaryExpr([slope](T z) { return z > T(0) ? T(1) : slope; }).array();
      grads.gate_w1.topRows(d).noalias() += s.community_user.transpose() * grad_pre;
      grads.gate_w1.bottomRows(d).noalias() += social.transpose() * grad_pre;
      grad_cu = alpha.asDiagonal() * grad_fused;
      grad_cu.noalias() += grad_pre * params.gate_w1.topRows(d).transpose();
      break;
    }
  }
  for (index_t u = 0; u < affiliation.users(); ++u) {
    auto row = affiliation.communities_of(u);
    if (row.empty()) continue;
    const T share = T(1) / static_cast<T>(row.size());
    for (index_t c : row) grads.community.row(c) += share * grad_cu.row(u);
  }
}

// Routes output-embedding gradients back through LightGCN, gate, and CEG.
// Item gradients arrive only through propagation; the social branch is constant.
template <typename T>
void model_backward(const ForwardState<T>& s, const ModelGraphs& graphs, const AffiliationMatrix& affiliation,
                    const ModelParameters<T>& params, const ModelConfig& cfg, const Matrix<T>& grad_user_out,
                    const Matrix<T>& grad_item_out, Gradients<T>& grads) {
  auto [grad_fused, grad_items] = lightgcn_forward(grad_user_out, grad_item_out, graphs.train, graphs.train_norm, cfg.layers);
  grads.item += grad_items;
  fusion_backward(s, affiliation, params, cfg, grad_fused, grads);
}

}  // namespace train_detail

// L = L_rec + lambda1 L_ssl + lambda2 |theta|^2. When `grads` is given it is
// overwritten with dL/dtheta. `views` fixes the SSL masks (required when
// lambda1 > 0); `cache` fixes the gradient-blocked social branch.
template <typename T>
LossBreakdown compute_loss(const ModelParameters<T>& params, const ModelGraphs& graphs, const ModelConfig& cfg,
                           const LossConfig& loss_cfg, const TripletBatch& batch, const SslViews* views,
                           std::type_identity_t<Gradients<T>>* grads = nullptr,
                           const std::type_identity_t<SocialCache<T>>* cache = nullptr) {
  LossBreakdown out;
  const bool use_ssl = loss_cfg.ssl_weight > 0.0;
  if (use_ssl && !views) throw UsageError("SSL weight is positive but no masked views were supplied");

  const ForwardState<T> main = full_forward(params, graphs, graphs.affiliation, cfg, cache);
  const Matrix<T>& eu = main.user_out;
  const Matrix<T>& ei = main.item_out;

  Matrix<T> gu, gi;
  if (grads) {
    *grads = ModelParameters<T>::zeros(static_cast<index_t>(params.community.rows()),
                                       static_cast<index_t>(params.item.rows()), params.dim(), params.hidden());
    gu = Matrix<T>::Zero(eu.rows(), eu.cols());
    gi = Matrix<T>::Zero(ei.rows(), ei.cols());
  }
  for (const auto& t : batch.triples) {
    const double diff = static_cast<double>(eu.row(t.user).dot(ei.row(t.positive) - ei.row(t.negative)));
    out.rec += softplus(-diff);
    if (grads) {
      const T coef = static_cast<T>(-sigmoid(-diff));
      gu.row(t.user) += coef * (ei.row(t.positive) - ei.row(t.negative));
      gi.row(t.positive) += coef * eu.row(t.user);
      gi.row(t.negative) -= coef * eu.row(t.user);
    }
  }
  if (grads) train_detail::model_backward(main, graphs, graphs.affiliation, params, cfg, gu, gi, *grads);

  if (use_ssl) {
    const ForwardState<T> v1 = full_forward(params, graphs, views->first, cfg, &main.social);
    const ForwardState<T> v2 = full_forward(params, graphs, views->second, cfg, &main.social);
    const std::vector<index_t> anchors = batch.users();
    Matrix<T> g1, g2;
    out.ssl = infonce_loss(v1.user_out, v2.user_out, anchors, loss_cfg.temperature, grads ? &g1 : nullptr,
                           grads ? &g2 : nullptr, loss_cfg.ssl_weight);
    if (grads) {
      const Matrix<T> zero_items = Matrix<T>::Zero(ei.rows(), ei.cols());
      train_detail::model_backward(v1, graphs, views->first, params, cfg, g1, zero_items, *grads);
      train_detail::model_backward(v2, graphs, views->second, params, cfg, g2, zero_items, *grads);
    }
  }

  out.l2 = l2_penalty(params);
  if (grads && loss_cfg.l2_weight > 0.0) {
    const T s = static_cast<T>(2.0 * loss_cfg.l2_weight);
    auto add = [s](Matrix<T>& g, const Matrix<T>& p) { g += s * p; };
    add(grads->community, params.community);
    add(grads->item, params.item);
    add(grads->gate_w1, params.gate_w1);
    add(grads->gate_w2, params.gate_w2);
  }
  out.total = out.rec + loss_cfg.ssl_weight * out.ssl + loss_cfg.l2_weight * out.l2;
  return out;
}

template <typename T>
struct AdamState {
  ModelParameters<T> first;
  ModelParameters<T> second;
  std::int64_t step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState like(const ModelParameters<T>& p, double lr) {
    AdamState s;
    s.first = ModelParameters<T>::zeros(static_cast<index_t>(p.community.rows()), static_cast<index_t>(p.item.rows()),
                                        p.dim(), p.hidden());
    s.second = s.first;
    s.lr = lr;
    return s;
  }
};

template <typename T>
void adam_step(ModelParameters<T>& params, const Gradients<T>& grads, AdamState<T>& state) {
  const char* names[] = {"community", "item", "gate_w1", "gate_w2"};
  const Matrix<T>* gs[] = {&grads.community, &grads.item, &grads.gate_w1, &grads.gate_w2};
  for (int k = 0; k < 4; ++k)
    if (!gs[k]->allFinite()) throw NumericalError(std::string("non-finite gradient in '") + names[k] + "' at step " +
                                                  std::to_string(state.step + 1));
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  const T b1 = static_cast<T>(state.beta1), b2 = static_cast<T>(state.beta2);
  const T step_size = static_cast<T>(state.lr / c1);
  const T inv_sqrt_c2 = static_cast<T>(1.0 / std::sqrt(c2));
  const T eps = static_cast<T>(state.eps);
  auto update = [&](Matrix<T>& p, const Matrix<T>& g, Matrix<T>& m, Matrix<T>& v) {
    m = b1 * m + (T(1) - b1) * g;
    v = b2 * v + (T(1) - b2) * g.cwiseProduct(g);
    p.array() -= step_size * m.array() / ((v.array().sqrt() * inv_sqrt_c2) + eps);
  };
  update(params.community, grads.community, state.first.community, state.second.community);
  update(params.item, grads.item, state.first.item, state.second.item);
  update(params.gate_w1, grads.gate_w1, state.first.gate_w1, state.second.gate_w1);
  update(params.gate_w2, grads.gate_w2, state.first.gate_w2, state.second.gate_w2);
}

struct TrainConfig {
  ModelConfig model;
  LossConfig loss;
  double learning_rate = 1e-3;
  std::size_t batch_size = 4096;
  int max_epochs = 500;
  int patience = 15;
  std::uint64_t seed = 0;
  bool use_ssl = true;
  bool cache_social_per_epoch = false;
  // Batches per epoch; 0 means ceil(|train edges| / batch_size).
  std::size_t batches_per_epoch = 0;
  int validation_k = 20;
};

struct EpochRecord {
  int epoch = 0;
  double rec = 0.0;
  double ssl = 0.0;
  double l2 = 0.0;
  double total = 0.0;
  double val_recall = 0.0;
  double val_ndcg = 0.0;
  double seconds = 0.0;
};

template <typename T>
struct TrainResult {
  ModelParameters<T> best;
  int best_epoch = 0;
  double best_val_ndcg = -1.0;
  std::vector<EpochRecord> history;
  bool stopped_early = false;
};

template <typename T>
struct TrainHooks {
  // Returns (recall, ndcg) on validation; defaults to full-ranking evaluation.
  std::function<std::pair<double, double>(int epoch, const ModelParameters<T>&)> validate;
  std::function<void(const EpochRecord&)> on_epoch;
};

// Sample -> forward -> loss -> backward -> Adam, validating after every epoch
// and keeping the parameters with the best validation NDCG.
template <typename T>
TrainResult<T> train(const ModelGraphs& graphs, const EdgeList& validation, const TrainConfig& cfg,
                     TrainHooks<T> hooks = {}, std::optional<ModelParameters<T>> init = std::nullopt) {
  const double lambda1 = cfg.use_ssl ? cfg.loss.ssl_weight : 0.0;
  LossConfig loss_cfg = cfg.loss;
  loss_cfg.ssl_weight = lambda1;
  loss_cfg.validate();
  if (cfg.batch_size == 0 || cfg.max_epochs <= 0 || cfg.patience <= 0)
    throw UsageError("batch size, epoch limit and patience must be positive");

  Rng init_rng = make_rng(cfg.seed, 1);
  ModelParameters<T> params = init ? std::move(*init)
                                   : init_parameters<T>(graphs.affiliation.community_count, graphs.items(), cfg.model, init_rng);
  AdamState<T> adam = AdamState<T>::like(params, cfg.learning_rate);
  Rng sample_rng = make_rng(cfg.seed, 2);

  if (!hooks.validate) {
    hooks.validate = [&](int, const ModelParameters<T>& p) {
      const auto s = full_forward(p, graphs, cfg.model);
      const auto r = evaluate_embeddings(s.user_out, s.item_out, graphs.train, validation, {cfg.validation_k});
      return std::make_pair(r.recall.at(cfg.validation_k), r.ndcg.at(cfg.validation_k));
    };
  }

  const std::size_t batches = cfg.batches_per_epoch > 0
                                  ? cfg.batches_per_epoch
                                  : static_cast<std::size_t>((graphs.train.num_edges() + static_cast<std::int64_t>(cfg.batch_size) - 1) /
                                                             static_cast<std::int64_t>(cfg.batch_size));
  TrainResult<T> result;
  result.best = params;
  int stale = 0;
  std::uint64_t step = 0;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::optional<SocialCache<T>> cache;
    if (cfg.cache_social_per_epoch) cache = compute_social_cache(graphs, params.item, cfg.model);

    EpochRecord rec;
    rec.epoch = epoch;
    Gradients<T> grads;
    for (std::size_t b = 0; b < std::max<std::size_t>(batches, 1); ++b, ++step) {
      const TripletBatch batch = sample_triplets(graphs.train, cfg.batch_size, sample_rng);
      std::optional<SslViews> views;
      if (lambda1 > 0.0) {
        Rng r1 = make_rng(cfg.seed, 0x10000 + 2 * step);
        Rng r2 = make_rng(cfg.seed, 0x10000 + 2 * step + 1);
        views = draw_ssl_views(graphs.affiliation, loss_cfg.mask_ratio, r1, r2);
      }
      const LossBreakdown lb = compute_loss(params, graphs, cfg.model, loss_cfg, batch, views ? &*views : nullptr,
                                            &grads, cache ? &*cache : nullptr);
      if (!std::isfinite(lb.total))
        throw NumericalError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(b));
      adam_step(params, grads, adam);
      rec.rec += lb.rec;
      rec.ssl += lb.ssl;
      rec.l2 += lb.l2;
      rec.total += lb.total;
    }
    const double nb = static_cast<double>(std::max<std::size_t>(batches, 1));
    rec.rec /= nb;
    rec.ssl /= nb;
    rec.l2 /= nb;
    rec.total /= nb;
    std::tie(rec.val_recall, rec.val_ndcg) = hooks.validate(epoch, params);
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.history.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(rec);

    if (rec.val_ndcg > result.best_val_ndcg) {
      result.best_val_ndcg = rec.val_ndcg;
      result.best_epoch = epoch;
      result.best = params;
      stale = 0;
    } else if (++stale >= cfg.patience) {
      result.stopped_early = true;
      break;
    }
  }
  return result;
}

}  // namespace pulse

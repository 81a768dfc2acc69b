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

// Run configuration: flat "key = value" text with typed parsing. Every key
// is declared once in the field table below, which also drives the CLI flags.

#pragma once

#include "pulse/core.hpp"
#include "pulse/model.hpp"
#include "pulse/training.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

namespace pulse {

struct RunConfig {
  // data
  std::string dataset = "custom";
  std::string interactions;  // single file, split with the ratios below
  std::string train;         // or pre-split files
  std::string val;
  std::string test;
  std::string social;
  std::int64_t users = 0;  // 0 infers max id + 1
  std::int64_t items = 0;
  bool remap_ids = false;
  std::string digests;  // comma-separated path=fnv1a-hex pairs checked before loading

  // split
  double split_train = 0.6;
  double split_val = 0.2;
  double split_test = 0.2;
  std::uint64_t split_seed = 2024;
  bool split_per_user = false;

  // model
  std::int64_t dim = 64;
  std::int64_t hidden = 64;
  std::int64_t layers = 3;
  double rbf_sigma = 1.0;
  double leaky_slope = 0.01;

  // loss
  double ssl_weight = 0.3;
  double l2_weight = 1e-6;
  double temperature = 0.2;
  double mask_ratio = 0.1;

  // communities
  double theta = 1.5;
  double resolution = 1.0;
  std::uint64_t detect_seed = 0;
  std::string affiliation;  // precomputed affiliation file; empty runs detection

  // optimization
  double learning_rate = 1e-3;
  std::int64_t batch_size = 4096;
  std::int64_t max_epochs = 500;
  std::int64_t patience = 15;
  std::uint64_t seed = 0;
  std::int64_t batches_per_epoch = 0;
  bool cache_social = false;

  // ablations
  bool no_sia = false;
  bool sum_fusion = false;
  bool no_ssl = false;
  bool baseline_lightgcn = false;

  // output and evaluation
  std::string out = "pulse_out";
  std::string checkpoint;  // empty means <out>/checkpoint.bin
  std::vector<std::int64_t> ks{10, 20, 40};

  // experiments
  std::int64_t coldstart_users = 500;
  std::vector<double> noise_ratios{0.0, 0.05, 0.1, 0.2};
  bool noise_zero_shot = false;
};

namespace config_detail {

using Member = std::variant<std::string RunConfig::*, bool RunConfig::*, std::int64_t RunConfig::*,
                            std::uint64_t RunConfig::*, double RunConfig::*,
                            std::vector<std::int64_t> RunConfig::*, std::vector<double> RunConfig::*>;

struct Field {
  const char* key;
  Member member;
  const char* help;
};

inline const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      {"dataset", &RunConfig::dataset, "dataset name recorded in reports"},
      {"interactions", &RunConfig::interactions, "user-item edge file to split"},
      {"train", &RunConfig::train, "pre-split train edge file"},
      {"val", &RunConfig::val, "pre-split validation edge file"},
      {"test", &RunConfig::test, "pre-split test edge file"},
      {"social", &RunConfig::social, "user-user edge file"},
      {"users", &RunConfig::users, "user count (0 infers)"},
      {"items", &RunConfig::items, "item count (0 infers)"},
      {"remap_ids", &RunConfig::remap_ids, "remap raw ids to 0..n-1 and save the maps"},
      {"digests", &RunConfig::digests, "path=hex checksums verified before loading"},
      {"split_train", &RunConfig::split_train, "train share"},
      {"split_val", &RunConfig::split_val, "validation share"},
      {"split_test", &RunConfig::split_test, "test share"},
      {"split_seed", &RunConfig::split_seed, "split seed"},
      {"split_per_user", &RunConfig::split_per_user, "split each user's edges separately"},
      {"dim", &RunConfig::dim, "embedding dimension"},
      {"hidden", &RunConfig::hidden, "gate hidden width"},
      {"layers", &RunConfig::layers, "propagation layers"},
      {"rbf_sigma", &RunConfig::rbf_sigma, "attention RBF bandwidth"},
      {"leaky_slope", &RunConfig::leaky_slope, "gate LeakyReLU slope"},
      {"ssl_weight", &RunConfig::ssl_weight, "contrastive loss weight"},
      {"l2_weight", &RunConfig::l2_weight, "L2 weight"},
      {"temperature", &RunConfig::temperature, "contrastive temperature"},
      {"mask_ratio", &RunConfig::mask_ratio, "affiliation mask ratio per view"},
      {"theta", &RunConfig::theta, "overlap expansion threshold"},
      {"resolution", &RunConfig::resolution, "Leiden resolution"},
      {"detect_seed", &RunConfig::detect_seed, "Leiden seed"},
      {"affiliation", &RunConfig::affiliation, "precomputed affiliation file"},
      {"learning_rate", &RunConfig::learning_rate, "Adam learning rate"},
      {"batch_size", &RunConfig::batch_size, "triples per batch"},
      {"max_epochs", &RunConfig::max_epochs, "epoch limit"},
      {"patience", &RunConfig::patience, "early stopping patience"},
      {"seed", &RunConfig::seed, "training seed"},
      {"batches_per_epoch", &RunConfig::batches_per_epoch, "batches per epoch (0 covers the train set once)"},
      {"cache_social", &RunConfig::cache_social, "recompute the social branch once per epoch"},
      {"no_sia", &RunConfig::no_sia, "ablation: community branch only"},
      {"sum_fusion", &RunConfig::sum_fusion, "ablation: fixed 0.5 fusion"},
      {"no_ssl", &RunConfig::no_ssl, "ablation: no contrastive loss"},
      {"baseline_lightgcn", &RunConfig::baseline_lightgcn, "train the per-user LightGCN reference"},
      {"out", &RunConfig::out, "output directory"},
      {"checkpoint", &RunConfig::checkpoint, "checkpoint path for eval (default <out>/checkpoint.bin)"},
      {"ks", &RunConfig::ks, "cutoffs for Recall/NDCG"},
      {"coldstart_users", &RunConfig::coldstart_users, "users held out by the cold-start experiment"},
      {"noise_ratios", &RunConfig::noise_ratios, "social noise ratios"},
      {"noise_zero_shot", &RunConfig::noise_zero_shot, "evaluate on noisy graphs without retraining"},
  };
  return table;
}

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

template <typename N>
N parse_number(const std::string& key, const std::string& text) {
  N v{};
  const char* end = text.data() + text.size();
  auto [p, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || p != end) throw UsageError("config key '" + key + "': cannot parse '" + text + "'");
  return v;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw UsageError("config key '" + key + "': expected a boolean, got '" + text + "'");
}

template <typename N>
std::vector<N> parse_list(const std::string& key, const std::string& text) {
  std::vector<N> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse_number<N>(key, item));
  }
  return out;
}

inline std::string format_double(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

template <typename N>
std::string join(const std::vector<N>& v) {
  std::string out;
  for (std::size_t k = 0; k < v.size(); ++k) {
    if (k) out += ',';
    if constexpr (std::is_floating_point_v<N>)
      out += format_double(v[k]);
    else
      out += std::to_string(v[k]);
  }
  return out;
}

}  // namespace config_detail

inline bool is_config_key(std::string_view key) {
  for (const auto& f : config_detail::fields())
    if (key == f.key) return true;
  return false;
}

inline bool is_flag_key(std::string_view key) {
  for (const auto& f : config_detail::fields())
    if (key == f.key) return std::holds_alternative<bool RunConfig::*>(f.member);
  return false;
}

// Assigns one key from its text form; unknown keys are rejected.
inline void set_config_value(RunConfig& cfg, const std::string& key, const std::string& raw) {
  using namespace config_detail;
  const std::string value = trim(raw);
  for (const auto& f : fields()) {
    if (key != f.key) continue;
    std::visit(
        [&](auto member) {
          using V = std::remove_reference_t<decltype(cfg.*member)>;
          if constexpr (std::is_same_v<V, std::string>)
            cfg.*member = value;
          else if constexpr (std::is_same_v<V, bool>)
            cfg.*member = parse_bool(key, value);
          else if constexpr (std::is_same_v<V, std::vector<std::int64_t>>)
            cfg.*member = parse_list<std::int64_t>(key, value);
          else if constexpr (std::is_same_v<V, std::vector<double>>)
            cfg.*member = parse_list<double>(key, value);
          else
            cfg.*member = parse_number<V>(key, value);
        },
        f.member);
    return;
  }
  throw UsageError("unknown config key '" + key + "'");
}

inline std::string get_config_value(const RunConfig& cfg, const config_detail::Field& f) {
  using namespace config_detail;
  return std::visit(
      [&](auto member) -> std::string {
        const auto& v = cfg.*member;
        using V = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<V, std::string>)
          return v;
        else if constexpr (std::is_same_v<V, bool>)
          return v ? "true" : "false";
        else if constexpr (std::is_same_v<V, double>)
          return format_double(v);
        else if constexpr (std::is_same_v<V, std::vector<std::int64_t>> || std::is_same_v<V, std::vector<double>>)
          return join(v);
        else
          return std::to_string(v);
      },
      f.member);
}

// Overlays "key = value" lines ('#' starts a comment) onto `cfg`.
inline void apply_config_text(RunConfig& cfg, std::string_view text, const std::string& origin = "<config>") {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    if (config_detail::trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw UsageError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = config_detail::trim(std::string_view(line).substr(0, eq));
    try {
      set_config_value(cfg, key, line.substr(eq + 1));
    } catch (const UsageError& e) {
      throw UsageError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

inline RunConfig parse_config_text(std::string_view text) {
  RunConfig cfg;
  apply_config_text(cfg, text);
  return cfg;
}

inline void apply_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  apply_config_text(cfg, ss.str(), path);
}

// Canonical text form: one line per key in table order. Round-trips exactly.
inline std::string config_to_text(const RunConfig& cfg) {
  std::string out;
  for (const auto& f : config_detail::fields()) {
    out += f.key;
    out += " = ";
    out += get_config_value(cfg, f);
    out += '\n';
  }
  return out;
}

// Hash of every setting that can influence results (the output location is excluded).
inline std::string config_hash(const RunConfig& cfg) {
  std::uint64_t h = fnv1a("pulse-config-v1");
  for (const auto& f : config_detail::fields()) {
    const std::string_view key = f.key;
    if (key == "out" || key == "checkpoint") continue;
    h = fnv1a(key, h);
    h = fnv1a("=", h);
    h = fnv1a(get_config_value(cfg, f), h);
    h = fnv1a("\n", h);
  }
  return hex64(h);
}

inline std::vector<std::string> preset_names() { return {"douban-book", "yelp", "epinions"}; }

// Shipped per-dataset defaults: contrastive weight and temperature differ by dataset.
inline void apply_preset(RunConfig& cfg, const std::string& name) {
  if (name == "douban-book") {
    cfg.ssl_weight = 0.3;
    cfg.temperature = 0.2;
  } else if (name == "yelp") {
    cfg.ssl_weight = 0.2;
    cfg.temperature = 0.4;
  } else if (name == "epinions") {
    cfg.ssl_weight = 0.3;
    cfg.temperature = 0.3;
  } else {
    throw UsageError("unknown preset '" + name + "'");
  }
  cfg.dataset = name;
  cfg.dim = 64;
  cfg.hidden = 64;
  cfg.layers = 3;
  cfg.l2_weight = 1e-6;
  cfg.learning_rate = 1e-3;
  cfg.batch_size = 4096;
  cfg.max_epochs = 500;
  cfg.patience = 15;
  cfg.theta = 1.5;
}

inline void validate(const RunConfig& cfg) {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw UsageError(what);
  };
  require(cfg.users >= 0 && cfg.items >= 0, "users and items must be non-negative");
  require(cfg.split_train >= 0 && cfg.split_val >= 0 && cfg.split_test >= 0 &&
              std::abs(cfg.split_train + cfg.split_val + cfg.split_test - 1.0) < 1e-9,
          "split shares must be non-negative and sum to 1");
  require(cfg.dim > 0 && cfg.hidden > 0, "dim and hidden must be positive");
  require(cfg.layers >= 0, "layers must be non-negative");
  require(cfg.rbf_sigma > 0, "rbf_sigma must be positive");
  require(cfg.leaky_slope >= 0 && cfg.leaky_slope < 1, "leaky_slope must lie in [0, 1)");
  require(cfg.ssl_weight >= 0 && cfg.l2_weight >= 0, "loss weights must be non-negative");
  require(cfg.temperature > 0, "temperature must be positive");
  require(cfg.mask_ratio > 0 && cfg.mask_ratio < 1, "mask_ratio must lie in (0, 1)");
  require(cfg.theta > 0, "theta must be positive");
  require(cfg.resolution > 0, "resolution must be positive");
  require(cfg.learning_rate > 0, "learning_rate must be positive");
  require(cfg.batch_size > 0 && cfg.max_epochs > 0 && cfg.patience > 0,
          "batch_size, max_epochs and patience must be positive");
  require(cfg.batches_per_epoch >= 0, "batches_per_epoch must be non-negative");
  require(!cfg.ks.empty(), "ks must list at least one cutoff");
  for (auto k : cfg.ks) require(k > 0, "every K must be positive");
  require(cfg.coldstart_users >= 0, "coldstart_users must be non-negative");
  for (double r : cfg.noise_ratios) require(r >= 0 && r < 1, "noise ratios must lie in [0, 1)");
  require(!(cfg.no_sia && cfg.sum_fusion), "no_sia and sum_fusion are mutually exclusive");
  require(!cfg.out.empty(), "out must name a directory");
}

inline ModelConfig model_config(const RunConfig& cfg) {
  ModelConfig m;
  m.dim = static_cast<index_t>(cfg.dim);
  m.hidden = static_cast<index_t>(cfg.hidden);
  m.layers = static_cast<int>(cfg.layers);
  m.rbf_sigma = cfg.rbf_sigma;
  m.leaky_slope = cfg.leaky_slope;
  if (cfg.baseline_lightgcn || cfg.no_sia)
    m.fusion = FusionMode::community_only;
  else if (cfg.sum_fusion)
    m.fusion = FusionMode::sum;
  return m;
}

inline TrainConfig train_config(const RunConfig& cfg) {
  TrainConfig t;
  t.model = model_config(cfg);
  t.loss.ssl_weight = cfg.ssl_weight;
  t.loss.l2_weight = cfg.l2_weight;
  t.loss.temperature = cfg.temperature;
  t.loss.mask_ratio = cfg.mask_ratio;
  t.learning_rate = cfg.learning_rate;
  t.batch_size = static_cast<std::size_t>(cfg.batch_size);
  t.max_epochs = static_cast<int>(cfg.max_epochs);
  t.patience = static_cast<int>(cfg.patience);
  t.seed = cfg.seed;
  t.use_ssl = !cfg.no_ssl && !cfg.baseline_lightgcn;
  t.cache_social_per_epoch = cfg.cache_social;
  t.batches_per_epoch = static_cast<std::size_t>(cfg.batches_per_epoch);
  t.validation_k = 20;
  return t;
}

}  // namespace pulse

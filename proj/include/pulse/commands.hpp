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

// Command implementations behind the `pulse` tool: dataset loading, community
// detection, training, evaluation, experiment drivers, and run manifests.
// Every command writes line-delimited JSON records into the output directory
// and a plain table to the given stream.

#pragma once

#include "pulse/config.hpp"
#include "pulse/pulse.hpp"

#include "json.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace pulse {

inline constexpr const char* kVersion = "0.1.0";

using Json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Small output helpers

namespace cmd_detail {

inline std::string read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

inline void print_table(std::ostream& os, const std::vector<std::string>& header,
                        const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) width[c] = header[c].size();
  for (const auto& r : rows)
    for (std::size_t c = 0; c < r.size() && c < width.size(); ++c) width[c] = std::max(width[c], r[c].size());
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t c = 0; c < width.size(); ++c) {
      const std::string& s = c < cells.size() ? cells[c] : std::string();
      os << (c ? "  " : "") << s << std::string(width[c] - s.size(), ' ');
    }
    os << '\n';
  };
  line(header);
  std::size_t total = 0;
  for (auto w : width) total += w;
  os << std::string(total + 2 * (width.size() - 1), '-') << '\n';
  for (const auto& r : rows) line(r);
}

inline std::uint64_t hash_edges(const EdgeList& e, std::uint64_t h) {
  std::string buf;
  buf.reserve(e.pairs.size() * 8 + 8);
  auto put = [&](std::uint32_t v) {
    for (int b = 0; b < 4; ++b) buf.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
  };
  put(static_cast<std::uint32_t>(e.pairs.size()));
  for (const auto& [a, b] : e.pairs) {
    put(static_cast<std::uint32_t>(a));
    put(static_cast<std::uint32_t>(b));
  }
  return fnv1a(buf, h);
}

inline std::vector<int> ks_of(const RunConfig& cfg) {
  std::vector<int> ks;
  for (auto k : cfg.ks) ks.push_back(static_cast<int>(k));
  return ks;
}

// The cutoff used in summary tables: 20 when requested, else the first one.
inline int headline_k(const RunConfig& cfg) {
  for (auto k : cfg.ks)
    if (k == 20) return 20;
  return static_cast<int>(cfg.ks.front());
}

inline Json metrics_json(const MetricsReport& r) {
  Json m = Json::object();
  for (int k : r.ks) m[std::to_string(k)] = {{"recall", r.recall.at(k)}, {"ndcg", r.ndcg.at(k)}};
  return m;
}

inline std::vector<std::string> metric_cells(const MetricsReport& r) {
  std::vector<std::string> cells;
  for (int k : r.ks) {
    cells.push_back(fixed(r.recall.at(k)));
    cells.push_back(fixed(r.ndcg.at(k)));
  }
  return cells;
}

inline std::vector<std::string> metric_headers(const std::vector<int>& ks) {
  std::vector<std::string> h;
  for (int k : ks) {
    h.push_back("Recall@" + std::to_string(k));
    h.push_back("NDCG@" + std::to_string(k));
  }
  return h;
}

}  // namespace cmd_detail

// ---------------------------------------------------------------------------
// Output directory with a manifest written after everything else

// Collects the artifacts one command writes and records them, with digests,
// seeds and timestamps, under that command's entry in <out>/manifest.json.
class OutputDir {
 public:
  OutputDir(const RunConfig& cfg, std::string command)
      : cfg_(cfg), command_(std::move(command)), started_(cmd_detail::utc_now()) {
    std::error_code ec;
    std::filesystem::create_directories(cfg.out, ec);
    if (ec) throw DataError("cannot create output directory '" + cfg.out + "': " + ec.message());
  }

  std::string path(const std::string& name) const { return (std::filesystem::path(cfg_.out) / name).string(); }

  void record(const std::string& name) { files_[name] = hex64(fnv1a(cmd_detail::read_bytes(path(name)))); }

  void write(const std::string& name, const std::string& content) {
    std::ofstream out(path(name), std::ios::binary);
    if (!out) throw DataError("cannot write '" + path(name) + "'");
    out << content;
    out.close();
    if (!out) throw DataError("write failure on '" + path(name) + "'");
    record(name);
  }

  void set_data_hash(std::uint64_t h) { data_hash_ = h; }

  void finish() {
    Json manifest;
    const std::string mpath = path("manifest.json");
    if (std::filesystem::exists(mpath)) {
      try {
        manifest = Json::parse(cmd_detail::read_bytes(mpath));
      } catch (const nlohmann::json::exception&) {
        warn("replacing unreadable manifest '" + mpath + "'");
        manifest = Json();
      }
    }
    if (!manifest.is_object()) manifest = Json::object();
    manifest["version"] = kVersion;
    if (!manifest.contains("commands") || !manifest["commands"].is_object()) manifest["commands"] = Json::object();
    Json entry;
    entry["config_hash"] = config_hash(cfg_);
    entry["data_hash"] = data_hash_ ? hex64(*data_hash_) : "";
    entry["code_version"] = kVersion;
    entry["seeds"] = {{"seed", cfg_.seed}, {"split_seed", cfg_.split_seed}, {"detect_seed", cfg_.detect_seed}};
    entry["started_at"] = started_;
    entry["finished_at"] = cmd_detail::utc_now();
    Json files = Json::object();
    for (const auto& [name, digest] : files_) files[name] = digest;
    entry["files"] = files;
    manifest["commands"][command_] = entry;

    const std::string tmp = mpath + ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary);
      if (!out) throw DataError("cannot write '" + tmp + "'");
      out << manifest.dump(2) << '\n';
    }
    std::filesystem::rename(tmp, mpath);
  }

 private:
  RunConfig cfg_;
  std::string command_;
  std::string started_;
  std::optional<std::uint64_t> data_hash_;
  std::map<std::string, std::string> files_;
};

// ---------------------------------------------------------------------------
// Dataset loading

struct Dataset {
  SplitBundle split;
  SocialGraph social;
  std::uint64_t hash = 0;

  index_t users() const { return split.train.users; }
  index_t items() const { return split.train.items; }
};

// Checks every "path=hex" pair in `digests` against the file's FNV-1a digest.
inline void check_digests(const RunConfig& cfg) {
  std::stringstream ss(cfg.digests);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = config_detail::trim(item);
    if (item.empty()) continue;
    const auto eq = item.rfind('=');
    if (eq == std::string::npos) throw UsageError("digests entry '" + item + "' is not path=hex");
    const std::string file = config_detail::trim(item.substr(0, eq));
    std::string expected = config_detail::trim(item.substr(eq + 1));
    for (auto& ch : expected) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    const std::string actual = hex64(fnv1a(cmd_detail::read_bytes(file)));
    if (actual != expected)
      throw DataError("checksum mismatch for '" + file + "': expected " + expected + ", got " + actual);
  }
}

inline void check_targets(const EdgeList& e, index_t users, index_t items, const std::string& what) {
  for (const auto& [u, i] : e.pairs)
    if (u < 0 || u >= users || i < 0 || i >= items)
      throw DataError(what + " edge (" + std::to_string(u) + ", " + std::to_string(i) + ") is out of range");
}

// Loads the interaction and social files named by the config, splitting a
// single interaction file when no pre-split files are given. With
// `remap_ids` the id maps are written to `out` when one is supplied.
inline Dataset load_dataset(const RunConfig& cfg, OutputDir* out = nullptr) {
  check_digests(cfg);
  if (cfg.social.empty()) throw UsageError("a social edge file is required (social = <path>)");
  const bool single = !cfg.interactions.empty();
  const bool presplit = !cfg.train.empty() || !cfg.val.empty() || !cfg.test.empty();
  if (single == presplit) throw UsageError("give either 'interactions' or all of 'train', 'val' and 'test'");
  if (presplit && (cfg.train.empty() || cfg.val.empty() || cfg.test.empty()))
    throw UsageError("'train', 'val' and 'test' must be given together");

  std::vector<std::string> inter_paths = single ? std::vector<std::string>{cfg.interactions}
                                                : std::vector<std::string>{cfg.train, cfg.val, cfg.test};
  std::vector<EdgeList> inter;
  EdgeList soc;
  index_t users = static_cast<index_t>(cfg.users);
  index_t items = static_cast<index_t>(cfg.items);
  if (cfg.remap_ids) {
    IdMap user_map, item_map;
    for (const auto& p : inter_paths)
      inter.push_back(remap(load_raw_edge_list(p), user_map, item_map, EdgeKind::interaction));
    soc = remap(load_raw_edge_list(cfg.social), user_map, user_map, EdgeKind::social);
    if (users > 0 && users < user_map.size()) throw DataError("'users' is smaller than the number of distinct user ids");
    if (items > 0 && items < item_map.size()) throw DataError("'items' is smaller than the number of distinct item ids");
    if (users == 0) users = user_map.size();
    if (items == 0) items = item_map.size();
    if (out) {
      user_map.save(out->path("user_ids.txt"));
      out->record("user_ids.txt");
      item_map.save(out->path("item_ids.txt"));
      out->record("item_ids.txt");
    }
  } else {
    for (const auto& p : inter_paths) inter.push_back(load_edge_list(p, EdgeKind::interaction));
    soc = load_edge_list(cfg.social, EdgeKind::social);
    if (users == 0) {
      index_t m = soc.max_target();
      for (const auto& e : inter) m = std::max(m, e.max_source());
      users = m + 1;
    }
    if (items == 0) {
      index_t n = -1;
      for (const auto& e : inter) n = std::max(n, e.max_target());
      items = n + 1;
    }
  }
  if (users <= 0 || items <= 0) throw DataError("dataset has no users or no items");

  Dataset d;
  if (single) {
    d.split = split_interactions(inter[0], {cfg.split_train, cfg.split_val, cfg.split_test}, cfg.split_seed, users,
                                 items, cfg.split_per_user);
  } else {
    d.split.train = build_interaction_graph(inter[0], users, items);
    d.split.val = inter[1];
    d.split.test = inter[2];
    check_targets(d.split.val, users, items, "validation");
    check_targets(d.split.test, users, items, "test");
  }
  d.social = build_social_graph(soc, users);

  std::uint64_t h = fnv1a("pulse-data-v1");
  h = fnv1a(std::to_string(users) + "x" + std::to_string(items), h);
  h = cmd_detail::hash_edges(d.split.train.edges(), h);
  h = cmd_detail::hash_edges(d.split.val, h);
  h = cmd_detail::hash_edges(d.split.test, h);
  h = cmd_detail::hash_edges(d.social.edges(), h);
  d.hash = h;
  if (out) out->set_data_hash(h);
  return d;
}

// ---------------------------------------------------------------------------
// Communities

inline DetectionResult run_detection(const RunConfig& cfg, const SocialGraph& social) {
  const auto t0 = std::chrono::steady_clock::now();
  DetectionResult r = detect_communities(social, cfg.resolution, cfg.detect_seed, cfg.theta);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

inline constexpr double kDetectionBudgetSeconds = 30.0;

inline Json detection_json(const RunConfig& cfg, const DetectionResult& r) {
  const auto& g = r.expansion.affiliation;
  std::map<std::size_t, index_t> histogram;
  for (const auto& row : g.memberships) ++histogram[row.size()];
  Json hist = Json::object();
  for (const auto& [size, count] : histogram) hist[std::to_string(size)] = count;
  index_t multi = 0;
  for (const auto& row : g.memberships) multi += row.size() > 1;
  return Json{{"dataset", cfg.dataset},
              {"users", g.users()},
              {"communities", g.community_count},
              {"leiden_communities", r.partition.community_count - r.isolated_users},
              {"isolated_users", r.isolated_users},
              {"modularity", r.partition.modularity},
              {"theta", cfg.theta},
              {"multi_member_users", multi},
              {"added_memberships", r.expansion.log.size()},
              {"expansion_sweeps", r.expansion.sweeps},
              {"membership_histogram", hist},
              {"config_hash", config_hash(cfg)}};
}

inline void print_detection(std::ostream& os, const Json& j, double seconds) {
  std::vector<std::vector<std::string>> rows = {
      {"users", std::to_string(j["users"].get<index_t>())},
      {"communities", std::to_string(j["communities"].get<index_t>())},
      {"isolated users (singletons)", std::to_string(j["isolated_users"].get<index_t>())},
      {"modularity before expansion", cmd_detail::fixed(j["modularity"].get<double>())},
      {"multi-member users", std::to_string(j["multi_member_users"].get<index_t>())},
      {"wall time (s)", cmd_detail::fixed(seconds, 3)}};
  for (const auto& [size, count] : j["membership_histogram"].items())
    rows.push_back({"users in " + size + " communities", std::to_string(count.get<index_t>())});
  cmd_detail::print_table(os, {"community statistic", "value"}, rows);
}

// Writes affiliation.txt and communities.json for a detection run. Wall time
// goes to detect_timing.json so that the statistics file is reproducible.
inline void write_detection(OutputDir& out, const RunConfig& cfg, const DetectionResult& r, std::ostream& os) {
  save_affiliation(r.expansion.affiliation, out.path("affiliation.txt"));
  out.record("affiliation.txt");
  const Json j = detection_json(cfg, r);
  out.write("communities.json", j.dump(2) + "\n");
  const Json timing{{"seconds", r.seconds},
                    {"budget_seconds", kDetectionBudgetSeconds},
                    {"within_budget", r.seconds <= kDetectionBudgetSeconds}};
  out.write("detect_timing.json", timing.dump(2) + "\n");
  print_detection(os, j, r.seconds);
  if (r.seconds > kDetectionBudgetSeconds)
    warn("community detection took " + cmd_detail::fixed(r.seconds, 1) + " s, over the 30 s budget");
}

// The affiliation a model for `cfg` uses: identity for the LightGCN
// reference, the configured file, `fallback` when it exists, or a fresh
// detection on `social`.
inline AffiliationMatrix resolve_affiliation(const RunConfig& cfg, const SocialGraph& social,
                                             const std::string& fallback = {}) {
  if (cfg.baseline_lightgcn) return identity_affiliation(social.users);
  std::string file = cfg.affiliation;
  if (file.empty() && !fallback.empty() && std::filesystem::exists(fallback)) file = fallback;
  if (!file.empty()) {
    AffiliationMatrix g = load_affiliation(file);
    if (g.users() != social.users)
      throw DataError("affiliation file '" + file + "' covers " + std::to_string(g.users()) + " users, dataset has " +
                      std::to_string(social.users));
    for (const auto& row : g.memberships)
      if (row.empty()) throw DataError("affiliation file '" + file + "' leaves a user without a community");
    return g;
  }
  return run_detection(cfg, social).expansion.affiliation;
}

// ---------------------------------------------------------------------------
// Training and scoring

struct TrainedModel {
  ModelGraphs graphs;
  ModelConfig model;
  TrainResult<float> result;
  bool baseline = false;
};

inline TrainedModel fit_model(const RunConfig& cfg, const SplitBundle& split, const SocialGraph& social,
                              AffiliationMatrix affiliation, bool baseline, std::ostream* log = nullptr,
                              const std::string& label = "") {
  RunConfig c = cfg;
  c.baseline_lightgcn = baseline;
  const TrainConfig tc = train_config(c);
  TrainedModel m;
  m.baseline = baseline;
  m.model = tc.model;
  m.graphs = make_model_graphs(split.train, social, std::move(affiliation));
  TrainHooks<float> hooks;
  if (log) {
    hooks.on_epoch = [&, log](const EpochRecord& r) {
      *log << (label.empty() ? "" : label + " ") << "epoch " << r.epoch << "  loss " << cmd_detail::fixed(r.total)
           << " (rec " << cmd_detail::fixed(r.rec) << ", ssl " << cmd_detail::fixed(r.ssl) << ", l2 "
           << cmd_detail::fixed(r.l2, 6) << ")  val recall@20 " << cmd_detail::fixed(r.val_recall) << " ndcg@20 "
           << cmd_detail::fixed(r.val_ndcg) << "  " << cmd_detail::fixed(r.seconds, 2) << "s\n";
    };
  }
  m.result = train<float>(m.graphs, split.val, tc, hooks);
  return m;
}

inline MetricsReport score_model(const TrainedModel& m, const EdgeList& targets, const std::vector<int>& ks,
                                 const std::vector<index_t>* users = nullptr) {
  return evaluate(m.result.best, m.graphs, m.model, targets, ks, users);
}

inline Json history_line(const EpochRecord& r) {
  return Json{{"epoch", r.epoch}, {"rec", r.rec},           {"ssl", r.ssl},           {"l2", r.l2},
              {"total", r.total}, {"val_recall", r.val_recall}, {"val_ndcg", r.val_ndcg}, {"seconds", r.seconds}};
}

// ---------------------------------------------------------------------------
// Commands

inline std::string checkpoint_path(const RunConfig& cfg) {
  return cfg.checkpoint.empty() ? (std::filesystem::path(cfg.out) / "checkpoint.bin").string() : cfg.checkpoint;
}

inline int cmd_detect(const RunConfig& cfg, std::ostream& os = std::cout) {
  validate(cfg);
  OutputDir out(cfg, "detect");
  const Dataset d = load_dataset(cfg, &out);
  const DetectionResult r = run_detection(cfg, d.social);
  write_detection(out, cfg, r, os);
  out.finish();
  return 0;
}

inline int cmd_train(const RunConfig& cfg, std::ostream& os = std::cout) {
  validate(cfg);
  OutputDir out(cfg, "train");
  const Dataset d = load_dataset(cfg, &out);

  AffiliationMatrix aff;
  if (cfg.baseline_lightgcn) {
    aff = identity_affiliation(d.users());
  } else if (!cfg.affiliation.empty()) {
    aff = resolve_affiliation(cfg, d.social);
  } else {
    const DetectionResult r = run_detection(cfg, d.social);
    write_detection(out, cfg, r, os);
    aff = r.expansion.affiliation;
  }

  const TrainedModel m = fit_model(cfg, d.split, d.social, std::move(aff), cfg.baseline_lightgcn, &os);

  Checkpoint<float> ck;
  ck.header.model = m.model;
  ck.header.communities = m.graphs.affiliation.community_count;
  ck.header.items = d.items();
  ck.header.baseline_lightgcn = cfg.baseline_lightgcn;
  ck.header.data_hash = d.hash;
  ck.params = m.result.best;
  const std::string ckpt = checkpoint_path(cfg);
  save_checkpoint(ck, ckpt);
  if (cfg.checkpoint.empty()) out.record("checkpoint.bin");

  std::string history;
  for (const auto& r : m.result.history) history += history_line(r).dump() + "\n";
  out.write("history.jsonl", history);
  out.write("config.txt", config_to_text(cfg));

  cmd_detail::print_table(os, {"training summary", "value"},
                          {{"model", cfg.baseline_lightgcn ? "LightGCN" : "PULSE"},
                           {"epochs run", std::to_string(m.result.history.size())},
                           {"best epoch", std::to_string(m.result.best_epoch)},
                           {"best val NDCG@20", cmd_detail::fixed(m.result.best_val_ndcg)},
                           {"stopped early", m.result.stopped_early ? "yes" : "no"},
                           {"communities", std::to_string(ck.header.communities)},
                           {"checkpoint", ckpt}});
  out.finish();
  return 0;
}

inline int cmd_eval(const RunConfig& cfg, const std::string& split, std::ostream& os = std::cout) {
  validate(cfg);
  if (split != "val" && split != "test") throw UsageError("split must be 'val' or 'test'");
  OutputDir out(cfg, "eval_" + split);
  const Dataset d = load_dataset(cfg);
  out.set_data_hash(d.hash);
  const Checkpoint<float> ck = load_checkpoint<float>(checkpoint_path(cfg));

  const ModelConfig expected = model_config(cfg);
  if (ck.header.data_hash != d.hash)
    throw DataError("checkpoint was trained on different data (hash " + hex64(ck.header.data_hash) + ", dataset " +
                    hex64(d.hash) + ")");
  if (ck.header.items != d.items()) throw DataError("checkpoint item count does not match the dataset");
  if (ck.header.model.dim != expected.dim || ck.header.model.hidden != expected.hidden ||
      ck.header.model.layers != expected.layers || ck.header.model.fusion != expected.fusion ||
      ck.header.baseline_lightgcn != cfg.baseline_lightgcn)
    throw DataError("checkpoint shape or model variant does not match the config");

  const AffiliationMatrix aff = resolve_affiliation(cfg, d.social, out.path("affiliation.txt"));
  if (aff.community_count != ck.header.communities)
    throw DataError("checkpoint has " + std::to_string(ck.header.communities) + " community rows, affiliation has " +
                    std::to_string(aff.community_count));
  const ModelGraphs graphs = make_model_graphs(d.split.train, d.social, aff);
  const EdgeList& targets = split == "val" ? d.split.val : d.split.test;
  if (targets.empty()) throw DataError("the " + split + " split is empty");

  const auto ks = cmd_detail::ks_of(cfg);
  const MetricsReport r = evaluate(ck.params, graphs, ck.header.model, targets, ks);
  const Json line{{"dataset", cfg.dataset},
                  {"split", split},
                  {"model", cfg.baseline_lightgcn ? "LightGCN" : "PULSE"},
                  {"metrics", cmd_detail::metrics_json(r)},
                  {"users_evaluated", r.users_evaluated},
                  {"seed", cfg.seed},
                  {"config_hash", config_hash(cfg)}};
  out.write("metrics_" + split + ".jsonl", line.dump() + "\n");

  auto header = cmd_detail::metric_headers(ks);
  header.insert(header.begin(), {"split", "users"});
  auto cells = cmd_detail::metric_cells(r);
  cells.insert(cells.begin(), {split, std::to_string(r.users_evaluated)});
  cmd_detail::print_table(os, header, {cells});
  out.finish();
  return 0;
}

inline int cmd_params(const RunConfig& cfg, std::ostream& os = std::cout, OutputDir* shared = nullptr) {
  validate(cfg);
  std::optional<OutputDir> own;
  if (!shared) own.emplace(cfg, "params");
  OutputDir& out = shared ? *shared : *own;
  const Dataset d = load_dataset(cfg);
  out.set_data_hash(d.hash);
  RunConfig pc = cfg;
  pc.baseline_lightgcn = false;
  const AffiliationMatrix aff = resolve_affiliation(pc, d.social);
  const ParamReport p = count_parameters(d.users(), d.items(), cfg.dim, cfg.hidden, aff.community_count);
  const Json line{{"dataset", cfg.dataset},
                  {"users", d.users()},
                  {"items", d.items()},
                  {"communities", aff.community_count},
                  {"dim", cfg.dim},
                  {"hidden", cfg.hidden},
                  {"pulse_user", p.pulse_user},
                  {"pulse_item", p.pulse_item},
                  {"pulse_total", p.pulse_total},
                  {"lightgcn_user", p.lightgcn_user},
                  {"lightgcn_item", p.lightgcn_item},
                  {"lightgcn_total", p.lightgcn_total},
                  {"user_reduction", p.user_reduction},
                  {"total_reduction", p.total_reduction},
                  {"config_hash", config_hash(cfg)}};
  out.write("experiment_params.jsonl", line.dump() + "\n");
  cmd_detail::print_table(os, {"model", "user-side", "item-side", "total"},
                          {{"PULSE", std::to_string(p.pulse_user), std::to_string(p.pulse_item),
                            std::to_string(p.pulse_total)},
                           {"LightGCN", std::to_string(p.lightgcn_user), std::to_string(p.lightgcn_item),
                            std::to_string(p.lightgcn_total)}});
  os << "communities " << aff.community_count << ", user-side reduction " << cmd_detail::fixed(p.user_reduction, 1)
     << "x, total reduction " << cmd_detail::fixed(100.0 * p.total_reduction, 1) << "%\n";
  if (own) own->finish();
  return 0;
}

namespace cmd_detail {

inline int experiment_coldstart(const RunConfig& cfg, OutputDir& out, std::ostream& os) {
  const Dataset d = load_dataset(cfg);
  out.set_data_hash(d.hash);
  const ColdStartSplit cs = make_coldstart_split(d.split, static_cast<index_t>(cfg.coldstart_users), cfg.seed);
  RunConfig pc = cfg;
  pc.baseline_lightgcn = false;
  const auto ks = ks_of(cfg);
  const TrainedModel pulse = fit_model(cfg, cs.split, d.social, resolve_affiliation(pc, d.social), false, &os, "[PULSE]");
  const TrainedModel lgcn =
      fit_model(cfg, cs.split, d.social, identity_affiliation(d.users()), true, &os, "[LightGCN]");

  std::string lines;
  std::vector<std::vector<std::string>> rows;
  for (const TrainedModel* m : {&pulse, &lgcn}) {
    const std::string name = m->baseline ? "LightGCN" : "PULSE";
    const MetricsReport r = score_model(*m, cs.targets, ks, &cs.held_out);
    lines += Json{{"dataset", cfg.dataset},
                  {"experiment", "coldstart"},
                  {"model", name},
                  {"held_out_users", cs.held_out.size()},
                  {"metrics", metrics_json(r)},
                  {"users_evaluated", r.users_evaluated},
                  {"seed", cfg.seed},
                  {"config_hash", config_hash(cfg)}}
                 .dump() +
             "\n";
    auto cells = metric_cells(r);
    cells.insert(cells.begin(), {name, std::to_string(r.users_evaluated)});
    rows.push_back(std::move(cells));
  }
  out.write("experiment_coldstart.jsonl", lines);
  auto header = metric_headers(ks);
  header.insert(header.begin(), {"cold-start model", "users"});
  print_table(os, header, rows);
  return 0;
}

inline int experiment_noise(const RunConfig& cfg, OutputDir& out, std::ostream& os) {
  const Dataset d = load_dataset(cfg);
  out.set_data_hash(d.hash);
  const auto ks = ks_of(cfg);
  const int k = headline_k(cfg);
  RunConfig pc = cfg;
  pc.baseline_lightgcn = false;

  std::optional<TrainedModel> clean;
  if (cfg.noise_zero_shot) clean = fit_model(cfg, d.split, d.social, resolve_affiliation(pc, d.social), false, &os, "[clean]");

  std::string lines;
  std::vector<std::vector<std::string>> rows;
  std::optional<double> reference;
  for (double ratio : cfg.noise_ratios) {
    const SocialGraph noisy = inject_social_noise(d.social, ratio, cfg.seed);
    MetricsReport r;
    if (clean) {
      const ModelGraphs graphs = make_model_graphs(d.split.train, noisy, clean->graphs.affiliation);
      r = evaluate(clean->result.best, graphs, clean->model, d.split.test, ks);
    } else {
      RunConfig nc = pc;
      nc.affiliation.clear();
      const TrainedModel m = fit_model(cfg, d.split, noisy, run_detection(nc, noisy).expansion.affiliation, false, &os,
                                       "[noise " + fixed(ratio, 2) + "]");
      r = score_model(m, d.split.test, ks);
    }
    if (!reference) reference = r.ndcg.at(k);
    const double change = *reference > 0 ? r.ndcg.at(k) / *reference - 1.0 : 0.0;
    lines += Json{{"dataset", cfg.dataset},
                  {"experiment", "noise"},
                  {"noise_ratio", ratio},
                  {"mode", clean ? "zero_shot" : "retrain"},
                  {"metrics", metrics_json(r)},
                  {"relative_ndcg_change", change},
                  {"users_evaluated", r.users_evaluated},
                  {"seed", cfg.seed},
                  {"config_hash", config_hash(cfg)}}
                 .dump() +
             "\n";
    auto cells = metric_cells(r);
    cells.insert(cells.begin(), fixed(ratio, 2));
    cells.push_back(fixed(100.0 * change, 1) + "%");
    rows.push_back(std::move(cells));
  }
  out.write("experiment_noise.jsonl", lines);
  auto header = metric_headers(ks);
  header.insert(header.begin(), "noise ratio");
  header.push_back("NDCG@" + std::to_string(k) + " change");
  print_table(os, header, rows);
  return 0;
}

inline int experiment_degree(const RunConfig& cfg, OutputDir& out, std::ostream& os) {
  const Dataset d = load_dataset(cfg);
  out.set_data_hash(d.hash);
  const auto ks = ks_of(cfg);
  const int k = headline_k(cfg);
  RunConfig pc = cfg;
  pc.baseline_lightgcn = false;
  const TrainedModel pulse = fit_model(cfg, d.split, d.social, resolve_affiliation(pc, d.social), false, &os, "[PULSE]");
  const TrainedModel lgcn = fit_model(cfg, d.split, d.social, identity_affiliation(d.users()), true, &os, "[LightGCN]");

  static const char* kBucketNames[4] = {"0-25%", "25-50%", "50-75%", "75-100%"};
  std::string lines;
  std::vector<std::vector<std::string>> rows;
  for (const TrainedModel* m : {&pulse, &lgcn}) {
    const std::string name = m->baseline ? "LightGCN" : "PULSE";
    const ForwardState<float> s = full_forward(m->result.best, m->graphs, m->model);
    const DegreeGroupReport g = degree_group_eval(s.user_out, s.item_out, d.split.train, d.split.test, ks);
    for (std::size_t b = 0; b < 4; ++b) {
      Json line{{"dataset", cfg.dataset},       {"experiment", "degree"},
                {"model", name},                {"bucket", kBucketNames[b]},
                {"users", g.groups.buckets[b].size()}};
      if (b < 3) line["max_degree"] = g.groups.upper_bounds[b];
      if (g.buckets[b]) {
        line["metrics"] = metrics_json(*g.buckets[b]);
        rows.push_back({name, kBucketNames[b], std::to_string(g.groups.buckets[b].size()),
                        fixed(g.buckets[b]->recall.at(k)), fixed(g.buckets[b]->ndcg.at(k))});
      } else {
        line["metrics"] = nullptr;
        rows.push_back({name, kBucketNames[b], "0", "-", "-"});
      }
      line["seed"] = cfg.seed;
      line["config_hash"] = config_hash(cfg);
      lines += line.dump() + "\n";
    }
  }
  out.write("experiment_degree.jsonl", lines);
  print_table(os, {"model", "degree group", "users", "Recall@" + std::to_string(k), "NDCG@" + std::to_string(k)}, rows);
  return 0;
}

}  // namespace cmd_detail

inline int cmd_experiment(const RunConfig& cfg, const std::string& kind, std::ostream& os = std::cout) {
  validate(cfg);
  if (kind != "coldstart" && kind != "noise" && kind != "degree" && kind != "params")
    throw UsageError("experiment kind must be one of coldstart, noise, degree, params");
  OutputDir out(cfg, "experiment_" + kind);
  int rc = 0;
  if (kind == "coldstart")
    rc = cmd_detail::experiment_coldstart(cfg, out, os);
  else if (kind == "noise")
    rc = cmd_detail::experiment_noise(cfg, out, os);
  else if (kind == "degree")
    rc = cmd_detail::experiment_degree(cfg, out, os);
  else
    rc = cmd_params(cfg, os, &out);
  out.finish();
  return rc;
}

// Replays the manifest: every command entry must carry the current config
// hash and every listed file must exist with its recorded digest.
inline bool verify_outputs(const RunConfig& cfg, std::ostream& os = std::cout) {
  const std::string mpath = (std::filesystem::path(cfg.out) / "manifest.json").string();
  if (!std::filesystem::exists(mpath)) throw DataError("no manifest at '" + mpath + "'");
  Json manifest;
  try {
    manifest = Json::parse(cmd_detail::read_bytes(mpath));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("unreadable manifest '" + mpath + "': " + e.what());
  }
  const std::string hash = config_hash(cfg);
  bool ok = true;
  std::vector<std::vector<std::string>> rows;
  for (const auto& [command, entry] : manifest.at("commands").items()) {
    const bool hash_ok = entry.at("config_hash").get<std::string>() == hash;
    ok = ok && hash_ok;
    rows.push_back({command, "config hash", hash_ok ? "ok" : "MISMATCH"});
    for (const auto& [name, digest] : entry.at("files").items()) {
      const std::string p = (std::filesystem::path(cfg.out) / name).string();
      std::string status = "ok";
      if (!std::filesystem::exists(p))
        status = "MISSING";
      else if (hex64(fnv1a(cmd_detail::read_bytes(p))) != digest.get<std::string>())
        status = "DIGEST MISMATCH";
      ok = ok && status == "ok";
      rows.push_back({command, name, status});
    }
  }
  cmd_detail::print_table(os, {"command", "artifact", "status"}, rows);
  os << (ok ? "verification passed\n" : "verification FAILED\n");
  return ok;
}

inline int cmd_verify(const RunConfig& cfg, std::ostream& os = std::cout) {
  if (!verify_outputs(cfg, os)) throw DataError("manifest verification failed");
  return 0;
}

// Writes a synthetic dataset with planted community-correlated preferences.
inline int cmd_synth(const RunConfig& cfg, std::ostream& os = std::cout) {
  SyntheticSpec spec;
  if (cfg.users > 0) spec.users = static_cast<index_t>(cfg.users);
  if (cfg.items > 0) spec.items = static_cast<index_t>(cfg.items);
  spec.seed = cfg.seed;
  if (spec.items < spec.groups) throw UsageError("synthetic data needs at least as many items as groups");
  OutputDir out(cfg, "synth");
  const SyntheticData data = make_synthetic(spec);
  save_edge_list(data.interactions, out.path("interactions.txt"));
  out.record("interactions.txt");
  save_edge_list(data.social, out.path("social.txt"));
  out.record("social.txt");
  os << "wrote " << data.interactions.size() << " interactions and " << data.social.size() << " social edges for "
     << spec.users << " users and " << spec.items << " items to " << cfg.out << "\n";
  out.finish();
  return 0;
}

}  // namespace pulse

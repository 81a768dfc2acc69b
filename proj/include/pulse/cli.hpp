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

// Argument parsing for the `pulse` tool. One flag per config key
// (underscores become dashes); settings resolve as preset, then --config
// file, then flags. Exit codes: 0 success, 1 usage, 2 data, 3 numerical.

#pragma once

#include "pulse/commands.hpp"

#include "CLI11.hpp"

#include <iostream>
#include <map>
#include <string>

namespace pulse {

inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumerical = 3;

inline std::string flag_name(std::string key) {
  for (auto& c : key)
    if (c == '_') c = '-';
  return "--" + key;
}

inline int run_cli(int argc, const char* const* argv, std::ostream& os = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Community-aware social recommendation with overlapping communities.", "pulse"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", kVersion);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  std::string config_file, preset;
  app.add_option("--config", config_file, "flat key = value config file");
  app.add_option("--preset", preset, "shipped defaults for a benchmark dataset")
      ->check(CLI::IsMember(preset_names()));

  std::map<std::string, std::string> values;
  std::map<std::string, bool> flags;
  std::vector<std::pair<std::string, CLI::Option*>> options;
  for (const auto& f : config_detail::fields()) {
    CLI::Option* opt = is_flag_key(f.key) ? app.add_flag(flag_name(f.key), flags[f.key], f.help)
                                          : app.add_option(flag_name(f.key), values[f.key], f.help);
    opt->group("Config");
    options.emplace_back(f.key, opt);
  }

  std::string split = "test";
  std::string kind;
  auto* detect = app.add_subcommand("detect", "detect overlapping communities and write the affiliation");
  auto* train = app.add_subcommand("train", "train a model and write checkpoint, history and manifest");
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint with full-ranking Recall/NDCG");
  eval->add_option("--split", split, "val or test")->check(CLI::IsMember({"val", "test"}));
  auto* experiment = app.add_subcommand("experiment", "run a comparison protocol");
  experiment->add_option("kind,--kind", kind, "coldstart, noise, degree or params")
      ->required()
      ->check(CLI::IsMember({"coldstart", "noise", "degree", "params"}));
  auto* params = app.add_subcommand("params", "report trainable parameter counts");
  auto* verify = app.add_subcommand("verify", "check the manifest against the outputs on disk");
  auto* synth = app.add_subcommand("synth", "write a small synthetic dataset");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, os, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, os, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, os, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, os, err);
    return kExitUsage;
  }

  try {
    RunConfig cfg;
    if (!preset.empty()) apply_preset(cfg, preset);
    if (!config_file.empty()) apply_config_file(cfg, config_file);
    for (const auto& [key, opt] : options) {
      if (opt->count() == 0) continue;
      set_config_value(cfg, key, is_flag_key(key) ? (flags[key] ? "true" : "false") : values[key]);
    }

    if (detect->parsed()) return cmd_detect(cfg, os);
    if (train->parsed()) return cmd_train(cfg, os);
    if (eval->parsed()) return cmd_eval(cfg, split, os);
    if (experiment->parsed()) return cmd_experiment(cfg, kind, os);
    if (params->parsed()) return cmd_params(cfg, os);
    if (verify->parsed()) return cmd_verify(cfg, os);
    if (synth->parsed()) return cmd_synth(cfg, os);
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "pulse: usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericalError& e) {
    err << "pulse: numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const DataError& e) {
    err << "pulse: data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    err << "pulse: error: " << e.what() << '\n';
    return kExitData;
  }
}

}  // namespace pulse

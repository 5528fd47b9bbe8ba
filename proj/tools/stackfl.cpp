/*
 * Copyright 2026 The stackfl Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// stackfl run | compare | synth

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "stackfl/data.hpp"
#include "stackfl/error.hpp"
#include "stackfl/harness.hpp"

namespace {

using stackfl::ExperimentConfig;

struct Overrides {
  std::map<std::string, std::string> values;
  std::vector<std::pair<std::string, CLI::Option*>> options;
};

// One --key flag per config key; applied on top of the config file.
void add_key_flags(CLI::App* app, Overrides& ov) {
  for (const auto& key : stackfl::config_keys()) {
    CLI::Option* opt = app->add_option("--" + key.name, ov.values[key.name],
                                       key.help);
    ov.options.emplace_back(key.name, opt);
  }
}

ExperimentConfig resolve(const std::string& config_path, const Overrides& ov) {
  ExperimentConfig config;
  if (!config_path.empty()) config = stackfl::load_config(config_path);
  for (const auto& [name, opt] : ov.options) {
    if (opt->count() > 0) {
      stackfl::apply_config_value(config, name, ov.values.at(name));
    }
  }
  stackfl::validate(config);
  return config;
}

int finish(const stackfl::ResultTable& table, const ExperimentConfig& config,
           stackfl::OutputFormat format) {
  stackfl::emit_results(table, format, config.out);
  {
    std::ofstream cfg(std::filesystem::path(config.out) / "config.ini");
    cfg << stackfl::dump_config(config);
  }
  std::cout << stackfl::summary_csv(table);
  for (const auto& f : table.failures) {
    std::cerr << "rep " << f.rep << " (" << f.strategy << ") failed: "
              << f.message << "\n";
  }
  return table.ok() ? 0 : 2;
}

stackfl::OutputFormat parse_format(const std::string& s) {
  if (s == "csv") return stackfl::OutputFormat::kCsv;
  if (s == "json") return stackfl::OutputFormat::kJson;
  throw stackfl::ConfigError("unknown format '" + s + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stackfl: leader/follower weighted federated learning"};
  app.require_subcommand(1);

  std::string config_path;
  std::string format = "csv";

  auto* run = app.add_subcommand("run", "run one strategy over all reps");
  Overrides run_ov;
  run->add_option("--config", config_path, "config file")->check(CLI::ExistingFile);
  run->add_option("--format", format, "csv or json");
  add_key_flags(run, run_ov);

  auto* compare = app.add_subcommand("compare", "run several strategies on the same seeds");
  Overrides cmp_ov;
  std::string baseline;
  compare->add_option("--config", config_path, "config file")->check(CLI::ExistingFile);
  compare->add_option("--format", format, "csv or json");
  compare->add_option("--baseline", baseline, "strategy the deltas are taken against");
  add_key_flags(compare, cmp_ov);

  auto* synth = app.add_subcommand("synth", "write a synthetic dataset file");
  std::size_t n = 3000, d = 32;
  int k = 4;
  double sep = 4.0;
  std::uint64_t seed = 1;
  std::string path;
  synth->add_option("--n", n);
  synth->add_option("--d", d);
  synth->add_option("--classes", k);
  synth->add_option("--class_sep", sep);
  synth->add_option("--seed", seed);
  synth->add_option("--output", path)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      const auto config = resolve(config_path, run_ov);
      return finish(stackfl::run_experiment(config), config, parse_format(format));
    }
    if (*compare) {
      const auto config = resolve(config_path, cmp_ov);
      std::optional<std::string> base;
      if (!baseline.empty()) base = baseline;
      return finish(stackfl::compare_strategies(config, config.strategies, base),
                    config, parse_format(format));
    }
    if (*synth) {
      stackfl::save_dataset(stackfl::synthetic_dataset(n, d, k, sep, seed), path);
      return 0;
    }
  } catch (const stackfl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 64;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

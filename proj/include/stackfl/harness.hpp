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

#ifndef STACKFL_HARNESS_HPP_
#define STACKFL_HARNESS_HPP_

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "stackfl/data.hpp"
#include "stackfl/federation.hpp"
#include "stackfl/metrics.hpp"
#include "stackfl/strategies.hpp"

namespace stackfl {

struct ExperimentConfig {
  // Data source: a dataset file when data_path is set, else synthetic blobs.
  std::string data_path;
  std::size_t synthetic_n = 3000;
  std::size_t synthetic_d = 32;
  int synthetic_classes = 4;
  double class_sep = 4.0;

  std::size_t n_nodes = 3;
  std::vector<double> target_sizes = {0.62, 0.24, 0.14};
  double dirichlet_alpha = 1.0;
  double noise_sigma = 0.05;
  std::array<double, 3> split_fractions = {0.7, 0.1, 0.2};

  std::string strategy = "fedavg";
  std::vector<std::string> strategies = {"fedavg", "pwfedavg", "dswm", "aswm"};
  int rounds = 30;
  int reps = 10;
  std::uint64_t seed = 1;

  std::vector<std::size_t> hidden_layers = {16};
  TrainingConfig training;
  WeightBounds bounds;
  AucAverage auc_average = AucAverage::kMacro;
  StrategyConfig strategy_config;

  std::string out = "results";
};

// Throws ConfigError describing the first broken invariant.
void validate(const ExperimentConfig& config);

// Index of the largest target share; ties go to the lowest index.
std::size_t leader_index(const ExperimentConfig& config);

// Flat `key = value` settings; `#` starts a comment. Every key can also be
// set from the command line as --key.
struct ConfigKey {
  std::string name;
  std::string help;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

const std::vector<ConfigKey>& config_keys();
void apply_config_value(ExperimentConfig& config, const std::string& key,
                        const std::string& value);
ExperimentConfig parse_config(std::string_view text,
                              ExperimentConfig base = {});
ExperimentConfig load_config(const std::filesystem::path& path,
                             ExperimentConfig base = {});
std::string dump_config(const ExperimentConfig& config);

// One repetition's federation before round 1.
struct Scenario {
  FederationState state;
  std::uint64_t partition_hash = 0;
};

Scenario build_scenario(const ExperimentConfig& config, int rep);

struct SummaryRow {
  std::string strategy;
  std::size_t node_id = 0;
  Role role = Role::kFollower;
  double mean_auc = 0.0;
  double std_auc = 0.0;
  double mean_loss = 0.0;
  std::optional<double> delta_vs_fedavg_pct;

  friend bool operator==(const SummaryRow&, const SummaryRow&) = default;
};

struct TrajectoryRow {
  std::string strategy;
  std::size_t node_id = 0;
  Role role = Role::kFollower;
  int rep = 0;
  int round = 0;
  double contribution_weight = 0.0;
  double val_loss = 0.0;
  double test_auc = 0.0;

  friend bool operator==(const TrajectoryRow&, const TrajectoryRow&) = default;
};

// Final-round global model on a node's test split.
struct FinalRow {
  std::string strategy;
  std::size_t node_id = 0;
  int rep = 0;
  double test_auc = 0.0;
  double test_loss = 0.0;

  friend bool operator==(const FinalRow&, const FinalRow&) = default;
};

struct PartitionLog {
  std::string strategy;
  int rep = 0;
  std::uint64_t hash = 0;

  friend bool operator==(const PartitionLog&, const PartitionLog&) = default;
};

struct RepFailure {
  std::string strategy;
  int rep = 0;
  std::string message;

  friend bool operator==(const RepFailure&, const RepFailure&) = default;
};

struct ResultTable {
  std::vector<SummaryRow> summary;  // one per (strategy, node)
  std::vector<TrajectoryRow> trajectories;
  std::vector<FinalRow> finals;
  std::vector<PartitionLog> partitions;
  std::vector<RepFailure> failures;

  bool ok() const { return failures.empty(); }
  std::optional<double> final_auc(std::string_view strategy,
                                  std::size_t node_id, int rep) const;

  friend bool operator==(const ResultTable&, const ResultTable&) = default;
};

// Runs config.reps repetitions of config.strategy. Repetitions that fail
// are listed in `failures` and left out of the summary.
ResultTable run_experiment(const ExperimentConfig& config);
ResultTable run_experiment(const ExperimentConfig& config,
                           std::string_view strategy);

// Runs every strategy on identical seeds and fills delta_vs_fedavg_pct
// relative to `baseline` (default fedavg). An unlisted baseline is run for
// the deltas but not reported.
ResultTable compare_strategies(const ExperimentConfig& config,
                               const std::vector<std::string>& strategies,
                               std::optional<std::string> baseline = {});

// 100 * (to - from) / from
double percent_delta(double from, double to);

// Mean and unbiased standard deviation; std is 0 for a single value.
std::pair<double, double> mean_std(const std::vector<double>& values);

// Worker threads for repetitions, from STACKFL_THREADS (default 1).
int worker_threads();

enum class OutputFormat { kCsv, kJson };

inline constexpr std::string_view kResultsCsvHeader =
    "strategy,node_id,role,rep,round,contribution_weight,val_loss,test_auc";
inline constexpr std::string_view kSummaryCsvHeader =
    "strategy,node_id,role,mean_auc,std_auc,mean_loss,delta_vs_fedavg_pct";

std::string results_csv(const ResultTable& table);
std::string summary_csv(const ResultTable& table);
std::string results_json(const ResultTable& table);
ResultTable parse_results_json(std::string_view text);

// kCsv writes results.csv and summary.csv into `dir`; kJson writes
// results.json. Creates `dir` if needed; throws IoError on failure.
void emit_results(const ResultTable& table, OutputFormat format,
                  const std::filesystem::path& dir);

}  // namespace stackfl

#endif  // STACKFL_HARNESS_HPP_

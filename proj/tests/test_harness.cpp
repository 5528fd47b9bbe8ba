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

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "stackfl/error.hpp"
#include "stackfl/harness.hpp"

using namespace stackfl;

namespace {

// Small enough for unit tests: 600 samples, 4 rounds, 2 reps.
ExperimentConfig quick() {
  ExperimentConfig c;
  c.synthetic_n = 600;
  c.synthetic_d = 8;
  c.rounds = 4;
  c.reps = 2;
  c.hidden_layers = {8};
  return c;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Config, ParsesKeysAndComments) {
  const auto c = parse_config(
      "# a comment\n"
      "rounds = 12\n"
      "  strategy=dswm   # trailing\n"
      "target_sizes = 0.5, 0.3, 0.2\n"
      "hidden_layers = 16,8\n"
      "\n"
      "auc_average = micro\n");
  EXPECT_EQ(c.rounds, 12);
  EXPECT_EQ(c.strategy, "dswm");
  EXPECT_EQ(c.target_sizes, (std::vector<double>{0.5, 0.3, 0.2}));
  EXPECT_EQ(c.hidden_layers, (std::vector<std::size_t>{16, 8}));
  EXPECT_EQ(c.auc_average, AucAverage::kMicro);
}

TEST(Config, BadInputIsConfigError) {
  EXPECT_THROW(parse_config("nonsense\n"), ConfigError);
  EXPECT_THROW(parse_config("unknown_key = 1\n"), ConfigError);
  EXPECT_THROW(parse_config("rounds = ten\n"), ConfigError);
  EXPECT_THROW(parse_config("lr = 0.1x\n"), ConfigError);
  EXPECT_THROW(parse_config("split_fractions = 0.5, 0.5\n"), ConfigError);
}

TEST(Config, DumpParsesBackToSameValues) {
  ExperimentConfig c;
  c.rounds = 7;
  c.training.lr = 0.0123456789;
  c.strategies = {"dswm", "aswm"};
  c.bounds = {0.1, 0.9};
  c.strategy_config.candidates = {0.2, 0.4};
  c.strategy_config.aswm.explore_prob = 0.0;
  const auto back = parse_config(dump_config(c));
  EXPECT_EQ(dump_config(back), dump_config(c));
  EXPECT_EQ(back.training.lr, c.training.lr);
  EXPECT_EQ(back.strategies, c.strategies);
  EXPECT_EQ(back.bounds.min, 0.1);
  EXPECT_EQ(back.strategy_config.candidates, c.strategy_config.candidates);
}

TEST(Config, EveryKeyHasAFlagName) {
  std::set<std::string> names;
  for (const auto& k : config_keys()) {
    EXPECT_TRUE(names.insert(k.name).second) << k.name;
    EXPECT_FALSE(k.help.empty()) << k.name;
    ExperimentConfig c;
    apply_config_value(c, k.name, k.get(c));
    EXPECT_EQ(k.get(c), k.get(ExperimentConfig{})) << k.name;
  }
  for (const char* must : {"strategy", "seed", "rounds", "reps", "out", "dirichlet_alpha"}) {
    EXPECT_TRUE(names.count(must)) << must;
  }
}

TEST(Config, LoadMissingFileIsIoError) {
  EXPECT_THROW(load_config("/nonexistent/stackfl.ini"), IoError);
}

TEST(Config, ValidateInvariants) {
  auto c = quick();
  EXPECT_NO_THROW(validate(c));
  c.reps = 0;
  EXPECT_THROW(validate(c), ConfigError);
  c = quick();
  c.rounds = 0;
  EXPECT_THROW(validate(c), ConfigError);
  c = quick();
  c.target_sizes = {0.5, 0.3, 0.3};
  EXPECT_THROW(validate(c), ConfigError);
  c = quick();
  c.target_sizes = {0.5, 0.5};
  EXPECT_THROW(validate(c), ConfigError);
  c = quick();
  c.strategy = "nope";
  EXPECT_THROW(validate(c), ConfigError);
  c = quick();
  c.bounds = {0.0, 1.0};
  EXPECT_THROW(validate(c), ConfigError);
}

TEST(Config, LeaderIsLargestShare) {
  ExperimentConfig c;
  EXPECT_EQ(leader_index(c), 0u);
  c.target_sizes = {0.2, 0.5, 0.3};
  EXPECT_EQ(leader_index(c), 1u);
  c.target_sizes = {0.4, 0.4, 0.2};
  EXPECT_EQ(leader_index(c), 0u);
}

TEST(Scenario, RolesSplitsAndHash) {
  const auto c = quick();
  const auto a = build_scenario(c, 0);
  const auto b = build_scenario(c, 0);
  const auto other = build_scenario(c, 1);
  EXPECT_EQ(a.partition_hash, b.partition_hash);
  EXPECT_NE(a.partition_hash, other.partition_hash);
  ASSERT_EQ(a.state.nodes.size(), 3u);
  EXPECT_EQ(a.state.nodes[0].role, Role::kLeader);
  EXPECT_EQ(a.state.nodes[1].role, Role::kFollower);
  EXPECT_EQ(a.state.nodes[2].role, Role::kFollower);
  for (const auto& n : a.state.nodes) {
    EXPECT_EQ(n.local_model, a.state.global_model);
    EXPECT_EQ(n.noise_seed, c.seed + n.node_id);
    EXPECT_GE(std::set<int>(n.test.labels.begin(), n.test.labels.end()).size(), 2u);
  }
  EXPECT_EQ(a.state.nodes[1].train.features, b.state.nodes[1].train.features);
}

TEST(Scenario, LoadsDatasetFile) {
  const auto path = std::filesystem::temp_directory_path() / "stackfl_harness.sfd";
  save_dataset(synthetic_dataset(600, 5, 3, 4.0, 9), path);
  auto c = quick();
  c.data_path = path.string();
  const auto s = build_scenario(c, 0);
  EXPECT_EQ(s.state.global_model.input_dim(), 5u);
  EXPECT_EQ(s.state.global_model.output_dim(), 3u);
  std::filesystem::remove(path);
}

TEST(Experiment, DeterministicWithOneRowPerNode) {
  const auto c = quick();
  const auto a = run_experiment(c);
  const auto b = run_experiment(c);
  EXPECT_TRUE(a.ok());
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.summary.size(), 3u);
  EXPECT_EQ(a.trajectories.size(), 3u * 4u * 2u);
  EXPECT_EQ(a.finals.size(), 6u);
  for (const auto& r : a.summary) EXPECT_GE(r.std_auc, 0.0);
}

TEST(Experiment, ThreadCountDoesNotChangeResults) {
  const auto c = quick();
  ::setenv("STACKFL_THREADS", "2", 1);
  EXPECT_EQ(worker_threads(), 2);
  const auto parallel = run_experiment(c, "aswm");
  ::unsetenv("STACKFL_THREADS");
  EXPECT_EQ(worker_threads(), 1);
  EXPECT_EQ(parallel, run_experiment(c, "aswm"));
}

TEST(Experiment, FailedRepsAreRecorded) {
  auto c = quick();
  c.data_path = "/nonexistent/data.sfd";
  const auto t = run_experiment(c);
  EXPECT_FALSE(t.ok());
  EXPECT_EQ(t.failures.size(), 2u);
  EXPECT_TRUE(t.summary.empty());
}

TEST(Experiment, SingleRepHasZeroStd) {
  auto c = quick();
  c.reps = 1;
  for (const auto& r : run_experiment(c).summary) EXPECT_EQ(r.std_auc, 0.0);
}

TEST(Experiment, FedAvgLeaderAtLeastSmallestFollower) {
  const auto t = run_experiment(ExperimentConfig{}, "fedavg");
  ASSERT_TRUE(t.ok());
  EXPECT_GE(t.summary[0].mean_auc, t.summary[2].mean_auc);
}

TEST(Compare, SelfComparisonHasZeroDeltas) {
  const auto t = compare_strategies(quick(), {"dswm"}, std::string("dswm"));
  ASSERT_EQ(t.summary.size(), 3u);
  for (const auto& r : t.summary) {
    ASSERT_TRUE(r.delta_vs_fedavg_pct.has_value());
    EXPECT_EQ(*r.delta_vs_fedavg_pct, 0.0);
  }
}

TEST(Compare, OneRowAndDeltaPerStrategyNode) {
  const auto t = compare_strategies(quick(), {"fedavg", "pwfedavg", "aswm"});
  EXPECT_EQ(t.summary.size(), 9u);
  for (const auto& r : t.summary) EXPECT_TRUE(r.delta_vs_fedavg_pct.has_value());
  std::set<std::uint64_t> per_rep0;
  for (const auto& p : t.partitions) {
    if (p.rep == 0) per_rep0.insert(p.hash);
  }
  EXPECT_EQ(per_rep0.size(), 1u);
}

TEST(Compare, BaselineRunWhenNotListed) {
  const auto t = compare_strategies(quick(), {"pwfedavg"});
  EXPECT_EQ(t.summary.size(), 3u);
  const auto base = run_experiment(quick(), "pwfedavg");
  const auto fed = run_experiment(quick(), "fedavg");
  EXPECT_DOUBLE_EQ(*t.summary[1].delta_vs_fedavg_pct,
                   percent_delta(fed.summary[1].mean_auc, base.summary[1].mean_auc));
}

TEST(Stats, PercentDelta) {
  EXPECT_NEAR(percent_delta(0.745, 0.772), 3.62, 0.005);
  EXPECT_EQ(percent_delta(0.5, 0.5), 0.0);
  EXPECT_THROW(percent_delta(0.0, 0.5), InputError);
}

TEST(Stats, MeanStdUnbiased) {
  const auto [m, s] = mean_std({1.0, 2.0, 3.0, 4.0});
  EXPECT_DOUBLE_EQ(m, 2.5);
  EXPECT_DOUBLE_EQ(s, std::sqrt(5.0 / 3.0));
  EXPECT_EQ(mean_std({0.7}).second, 0.0);
}

TEST(Output, CsvHeadersAndEmptyTable) {
  const ResultTable empty;
  EXPECT_EQ(results_csv(empty),
            "strategy,node_id,role,rep,round,contribution_weight,val_loss,test_auc\n");
  EXPECT_EQ(summary_csv(empty),
            "strategy,node_id,role,mean_auc,std_auc,mean_loss,delta_vs_fedavg_pct\n");
}

TEST(Output, JsonRoundTrip) {
  auto t = compare_strategies(quick(), {"fedavg", "dswm"});
  t.failures.push_back({"dswm", 5, "synthetic failure"});
  EXPECT_EQ(parse_results_json(results_json(t)), t);
  EXPECT_THROW(parse_results_json("{\"summary\": 3}"), FormatError);
}

TEST(Output, EmitWritesFiles) {
  const auto dir = std::filesystem::temp_directory_path() / "stackfl_emit";
  std::filesystem::remove_all(dir);
  const auto t = run_experiment(quick());
  emit_results(t, OutputFormat::kCsv, dir);
  EXPECT_EQ(slurp(dir / "results.csv"), results_csv(t));
  EXPECT_EQ(slurp(dir / "summary.csv"), summary_csv(t));
  emit_results(t, OutputFormat::kJson, dir);
  EXPECT_EQ(parse_results_json(slurp(dir / "results.json")), t);
  std::filesystem::remove_all(dir);
}

TEST(Output, UnwritablePathIsIoError) {
  const auto file = std::filesystem::temp_directory_path() / "stackfl_blocker";
  { std::ofstream(file) << "x"; }
  EXPECT_THROW(emit_results(ResultTable{}, OutputFormat::kCsv, file / "sub"), IoError);
  std::filesystem::remove(file);
}

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

#include "stackfl/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <thread>

#include "json.hpp"
#include "stackfl/error.hpp"
#include "stackfl/rng.hpp"

namespace stackfl {

namespace {

constexpr std::uint64_t kInitStream = 0x696e6974ULL;
constexpr std::uint64_t kStrategyStream = 0x7374726174ULL;
constexpr std::uint64_t kRoundStream = 0x726f756e64ULL;
constexpr std::uint64_t kResplitStream = 0x7265737031ULL;
constexpr int kMaxScenarioAttempts = 20;

std::uint64_t fnv1a(const Partition& part) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](std::uint64_t v) {
    for (int b = 0; b < 8; ++b) {
      h ^= (v >> (8 * b)) & 0xff;
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& node : part.node_indices) {
    feed(node.size());
    for (std::size_t i : node) feed(i);
  }
  return h;
}

bool has_two_classes(const Dataset& ds) {
  return std::set<int>(ds.labels.begin(), ds.labels.end()).size() >= 2;
}

Dataset source_dataset(const ExperimentConfig& config, std::uint64_t rep_seed) {
  if (!config.data_path.empty()) {
    Dataset ds = load_dataset(config.data_path);
    validate(ds);
    return ds;
  }
  return synthetic_dataset(config.synthetic_n, config.synthetic_d,
                           config.synthetic_classes, config.class_sep,
                           rep_seed);
}

struct RepOutcome {
  bool ok = false;
  std::string error;
  std::uint64_t partition_hash = 0;
  std::vector<RoundRecord> history;
  std::vector<EvalReport> final_reports;
  std::vector<Role> roles;
};

RepOutcome run_rep(const ExperimentConfig& config, StrategyKind kind, int rep) {
  RepOutcome out;
  try {
    Scenario scenario = build_scenario(config, rep);
    out.partition_hash = scenario.partition_hash;
    const std::uint64_t rep_seed = config.seed + static_cast<std::uint64_t>(rep);
    StrategyConfig sc = config.strategy_config;
    sc.bounds = config.bounds;
    WeightingStrategy strategy(kind, config.n_nodes,
                               derive_seed(rep_seed, {kStrategyStream}), sc);
    FederationState state = std::move(scenario.state);
    for (int t = 0; t < config.rounds; ++t) {
      state = run_round(state, strategy);
    }
    out.history = state.history;
    out.final_reports = evaluate_all(state);
    for (const auto& node : state.nodes) out.roles.push_back(node.role);
    out.ok = true;
  } catch (const std::exception& e) {
    out.ok = false;
    out.error = e.what();
  }
  return out;
}

std::vector<RepOutcome> run_reps(const ExperimentConfig& config,
                                 StrategyKind kind) {
  std::vector<RepOutcome> outcomes(static_cast<std::size_t>(config.reps));
  const int threads = std::min(worker_threads(), config.reps);
  if (threads <= 1) {
    for (int r = 0; r < config.reps; ++r) {
      outcomes[static_cast<std::size_t>(r)] = run_rep(config, kind, r);
    }
    return outcomes;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  for (int w = 0; w < threads; ++w) {
    pool.emplace_back([&] {
      for (int r = next++; r < config.reps; r = next++) {
        outcomes[static_cast<std::size_t>(r)] = run_rep(config, kind, r);
      }
    });
  }
  for (auto& th : pool) th.join();
  return outcomes;
}

// Appends rows for one strategy; outcomes are indexed by rep so the result
// does not depend on which worker finished first.
void collect(const ExperimentConfig& config, std::string_view name,
             const std::vector<RepOutcome>& outcomes, ResultTable& table) {
  const std::string strategy(name);
  std::map<std::size_t, std::vector<double>> aucs;
  std::map<std::size_t, std::vector<double>> losses;
  for (std::size_t r = 0; r < outcomes.size(); ++r) {
    const RepOutcome& o = outcomes[r];
    const int rep = static_cast<int>(r);
    if (!o.ok) {
      table.failures.push_back({strategy, rep, o.error});
      continue;
    }
    table.partitions.push_back({strategy, rep, o.partition_hash});
    for (const auto& record : o.history) {
      for (const auto& n : record.nodes) {
        table.trajectories.push_back({strategy, n.node_id, n.role, rep,
                                      record.round, n.contribution_weight,
                                      n.val_loss, n.test_auc});
      }
    }
    for (std::size_t i = 0; i < o.final_reports.size(); ++i) {
      table.finals.push_back({strategy, i, rep, o.final_reports[i].auc,
                              o.final_reports[i].loss});
      aucs[i].push_back(o.final_reports[i].auc);
      losses[i].push_back(o.final_reports[i].loss);
    }
  }
  const std::size_t leader = leader_index(config);
  for (std::size_t i = 0; i < config.n_nodes; ++i) {
    if (aucs[i].empty()) continue;
    SummaryRow row;
    row.strategy = strategy;
    row.node_id = i;
    row.role = i == leader ? Role::kLeader : Role::kFollower;
    std::tie(row.mean_auc, row.std_auc) = mean_std(aucs[i]);
    row.mean_loss = mean_std(losses[i]).first;
    table.summary.push_back(row);
  }
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

}  // namespace

void validate(const ExperimentConfig& config) {
  if (config.reps < 1) throw ConfigError("config: reps must be >= 1");
  if (config.rounds < 1) throw ConfigError("config: rounds must be >= 1");
  if (config.n_nodes < 2) throw ConfigError("config: n_nodes must be >= 2");
  if (config.target_sizes.size() != config.n_nodes) {
    throw ConfigError("config: target_sizes needs one entry per node");
  }
  double sum = 0.0;
  for (double s : config.target_sizes) {
    if (!(s > 0.0)) throw ConfigError("config: target sizes must be positive");
    sum += s;
  }
  if (std::abs(sum - 1.0) > 1e-6) {
    throw ConfigError("config: target_sizes must sum to 1");
  }
  if (!(config.bounds.min > 0.0) || config.bounds.max < config.bounds.min) {
    throw ConfigError("config: need 0 < c_min <= c_max");
  }
  if (config.training.epochs < 1 || config.training.batch_size < 1 ||
      !(config.training.lr >= 0.0)) {
    throw ConfigError("config: invalid local training settings");
  }
  if (!(config.dirichlet_alpha > 0.0)) {
    throw ConfigError("config: dirichlet_alpha must be > 0");
  }
  if (!(config.noise_sigma >= 0.0)) {
    throw ConfigError("config: noise_sigma must be >= 0");
  }
  for (double c : config.strategy_config.candidates) {
    if (!(c > 0.0)) throw ConfigError("config: candidate weights must be > 0");
  }
  for (std::size_t h : config.hidden_layers) {
    if (h == 0) throw ConfigError("config: hidden layer width must be >= 1");
  }
  parse_strategy(config.strategy);
  for (const auto& s : config.strategies) parse_strategy(s);
}

std::size_t leader_index(const ExperimentConfig& config) {
  return static_cast<std::size_t>(
      std::max_element(config.target_sizes.begin(), config.target_sizes.end()) -
      config.target_sizes.begin());
}

Scenario build_scenario(const ExperimentConfig& config, int rep) {
  validate(config);
  const std::uint64_t rep_seed = config.seed + static_cast<std::uint64_t>(rep);
  const Dataset data = source_dataset(config, rep_seed);
  const std::size_t leader = leader_index(config);

  for (int attempt = 0; attempt < kMaxScenarioAttempts; ++attempt) {
    // Attempt 0 uses the rep seed itself; later attempts only happen when a
    // node's val or test split ends up with a single class.
    const std::uint64_t part_seed =
        attempt == 0 ? rep_seed : derive_seed(rep_seed, {kResplitStream,
                                               static_cast<std::uint64_t>(attempt)});
    const Partition part =
        dirichlet_partition(data.labels, config.n_nodes, config.dirichlet_alpha,
                            config.target_sizes, part_seed);
    Scenario scenario;
    scenario.partition_hash = fnv1a(part);
    FederationState& state = scenario.state;
    state.total_rounds = config.rounds;
    state.training = config.training;
    state.bounds = config.bounds;
    state.auc_average = config.auc_average;
    state.seed = derive_seed(rep_seed, {kRoundStream});
    state.global_model =
        mlp_init(mlp_shapes(data.dim(), config.hidden_layers,
                            static_cast<std::size_t>(data.n_classes)),
                 derive_seed(rep_seed, {kInitStream}));
    bool usable = true;
    for (std::size_t i = 0; i < config.n_nodes && usable; ++i) {
      Dataset local = subset(data, part.node_indices[i]);
      const std::uint64_t noise_seed = rep_seed + i;
      local.features = add_gaussian_noise(local.features, config.noise_sigma,
                                          noise_seed);
      const auto parts = split(local, config.split_fractions, noise_seed);
      if (parts.train.size() == 0 || !has_two_classes(parts.val) ||
          !has_two_classes(parts.test)) {
        usable = false;
        break;
      }
      NodeState node;
      node.node_id = i;
      node.role = i == leader ? Role::kLeader : Role::kFollower;
      node.train = to_batch(parts.train);
      node.val = to_batch(parts.val);
      node.test = to_batch(parts.test);
      node.local_model = state.global_model;
      node.contribution_weight = config.bounds.clamp(1.0);
      node.noise_seed = noise_seed;
      state.nodes.push_back(std::move(node));
    }
    if (usable) {
      validate(state);
      return scenario;
    }
  }
  throw ConfigError("scenario: could not give every node a val and test split "
                    "with two classes; use more samples or a larger alpha");
}

std::optional<double> ResultTable::final_auc(std::string_view strategy,
                                             std::size_t node_id,
                                             int rep) const {
  for (const auto& f : finals) {
    if (f.strategy == strategy && f.node_id == node_id && f.rep == rep) {
      return f.test_auc;
    }
  }
  return std::nullopt;
}

ResultTable run_experiment(const ExperimentConfig& config) {
  return run_experiment(config, config.strategy);
}

ResultTable run_experiment(const ExperimentConfig& config,
                           std::string_view strategy) {
  validate(config);
  const StrategyKind kind = parse_strategy(strategy);
  ResultTable table;
  collect(config, strategy_name(kind), run_reps(config, kind), table);
  return table;
}

ResultTable compare_strategies(const ExperimentConfig& config,
                               const std::vector<std::string>& strategies,
                               std::optional<std::string> baseline) {
  validate(config);
  if (strategies.empty()) throw ConfigError("compare: no strategies given");
  for (const auto& s : strategies) parse_strategy(s);
  const StrategyKind base_kind = parse_strategy(baseline.value_or("fedavg"));

  ResultTable table;
  std::set<std::string> done;
  for (const auto& s : strategies) {
    if (!done.insert(s).second) continue;
    collect(config, s, run_reps(config, parse_strategy(s)), table);
  }
  ResultTable base_table;
  const ResultTable* base = &table;
  if (!done.count(std::string(strategy_name(base_kind)))) {
    collect(config, strategy_name(base_kind), run_reps(config, base_kind),
            base_table);
    base = &base_table;
  }
  for (auto& row : table.summary) {
    for (const auto& b : base->summary) {
      if (b.strategy == strategy_name(base_kind) && b.node_id == row.node_id) {
        row.delta_vs_fedavg_pct = percent_delta(b.mean_auc, row.mean_auc);
      }
    }
  }
  return table;
}

double percent_delta(double from, double to) {
  if (from == 0.0) throw InputError("percent_delta: baseline is zero");
  return 100.0 * (to - from) / from;
}

std::pair<double, double> mean_std(const std::vector<double>& values) {
  if (values.empty()) return {0.0, 0.0};
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  if (values.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / static_cast<double>(values.size() - 1))};
}

int worker_threads() {
  const char* env = std::getenv("STACKFL_THREADS");
  if (env == nullptr) return 1;
  const int n = std::atoi(env);
  return n >= 1 ? n : 1;
}

std::string results_csv(const ResultTable& table) {
  std::string out(kResultsCsvHeader);
  out += '\n';
  for (const auto& r : table.trajectories) {
    out += r.strategy + ',' + std::to_string(r.node_id) + ',' +
           std::string(role_name(r.role)) + ',' + std::to_string(r.rep) + ',' +
           std::to_string(r.round) + ',' + fmt(r.contribution_weight) + ',' +
           fmt(r.val_loss) + ',' + fmt(r.test_auc) + '\n';
  }
  return out;
}

std::string summary_csv(const ResultTable& table) {
  std::string out(kSummaryCsvHeader);
  out += '\n';
  for (const auto& r : table.summary) {
    out += r.strategy + ',' + std::to_string(r.node_id) + ',' +
           std::string(role_name(r.role)) + ',' + fmt(r.mean_auc) + ',' +
           fmt(r.std_auc) + ',' + fmt(r.mean_loss) + ',' +
           (r.delta_vs_fedavg_pct ? fmt(*r.delta_vs_fedavg_pct) : "") + '\n';
  }
  return out;
}

namespace {

using nlohmann::json;

Role parse_role(const std::string& s) {
  if (s == "leader") return Role::kLeader;
  if (s == "follower") return Role::kFollower;
  throw FormatError("results json: unknown role '" + s + "'");
}

}  // namespace

std::string results_json(const ResultTable& table) {
  json j;
  j["summary"] = json::array();
  for (const auto& r : table.summary) {
    json row = {{"strategy", r.strategy},
                {"node_id", r.node_id},
                {"role", role_name(r.role)},
                {"mean_auc", r.mean_auc},
                {"std_auc", r.std_auc},
                {"mean_loss", r.mean_loss},
                {"delta_vs_fedavg_pct", nullptr}};
    if (r.delta_vs_fedavg_pct) row["delta_vs_fedavg_pct"] = *r.delta_vs_fedavg_pct;
    j["summary"].push_back(std::move(row));
  }
  j["trajectories"] = json::array();
  for (const auto& r : table.trajectories) {
    j["trajectories"].push_back({{"strategy", r.strategy},
                                 {"node_id", r.node_id},
                                 {"role", role_name(r.role)},
                                 {"rep", r.rep},
                                 {"round", r.round},
                                 {"contribution_weight", r.contribution_weight},
                                 {"val_loss", r.val_loss},
                                 {"test_auc", r.test_auc}});
  }
  j["finals"] = json::array();
  for (const auto& r : table.finals) {
    j["finals"].push_back({{"strategy", r.strategy},
                           {"node_id", r.node_id},
                           {"rep", r.rep},
                           {"test_auc", r.test_auc},
                           {"test_loss", r.test_loss}});
  }
  j["partitions"] = json::array();
  for (const auto& r : table.partitions) {
    j["partitions"].push_back(
        {{"strategy", r.strategy}, {"rep", r.rep}, {"hash", r.hash}});
  }
  j["failures"] = json::array();
  for (const auto& r : table.failures) {
    j["failures"].push_back(
        {{"strategy", r.strategy}, {"rep", r.rep}, {"message", r.message}});
  }
  return j.dump(2) + "\n";
}

ResultTable parse_results_json(std::string_view text) {
  ResultTable table;
  try {
    const json j = json::parse(text);
    for (const auto& r : j.at("summary")) {
      SummaryRow row;
      row.strategy = r.at("strategy").get<std::string>();
      row.node_id = r.at("node_id").get<std::size_t>();
      row.role = parse_role(r.at("role").get<std::string>());
      row.mean_auc = r.at("mean_auc").get<double>();
      row.std_auc = r.at("std_auc").get<double>();
      row.mean_loss = r.at("mean_loss").get<double>();
      if (!r.at("delta_vs_fedavg_pct").is_null()) {
        row.delta_vs_fedavg_pct = r.at("delta_vs_fedavg_pct").get<double>();
      }
      table.summary.push_back(std::move(row));
    }
    for (const auto& r : j.at("trajectories")) {
      table.trajectories.push_back(
          {r.at("strategy").get<std::string>(), r.at("node_id").get<std::size_t>(),
           parse_role(r.at("role").get<std::string>()), r.at("rep").get<int>(),
           r.at("round").get<int>(), r.at("contribution_weight").get<double>(),
           r.at("val_loss").get<double>(), r.at("test_auc").get<double>()});
    }
    for (const auto& r : j.at("finals")) {
      table.finals.push_back(
          {r.at("strategy").get<std::string>(), r.at("node_id").get<std::size_t>(),
           r.at("rep").get<int>(), r.at("test_auc").get<double>(),
           r.at("test_loss").get<double>()});
    }
    for (const auto& r : j.at("partitions")) {
      table.partitions.push_back({r.at("strategy").get<std::string>(),
                                  r.at("rep").get<int>(),
                                  r.at("hash").get<std::uint64_t>()});
    }
    for (const auto& r : j.at("failures")) {
      table.failures.push_back({r.at("strategy").get<std::string>(),
                                r.at("rep").get<int>(),
                                r.at("message").get<std::string>()});
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("results json: ") + e.what());
  }
  return table;
}

namespace {

void write_file(const std::filesystem::path& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << body;
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace

void emit_results(const ResultTable& table, OutputFormat format,
                  const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  if (format == OutputFormat::kJson) {
    write_file(dir / "results.json", results_json(table));
    return;
  }
  write_file(dir / "results.csv", results_csv(table));
  write_file(dir / "summary.csv", summary_csv(table));
  std::string partitions = "strategy,rep,partition_hash\n";
  for (const auto& p : table.partitions) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(p.hash));
    partitions += p.strategy + ',' + std::to_string(p.rep) + ',' + buf + '\n';
  }
  write_file(dir / "partitions.csv", partitions);
}

}  // namespace stackfl

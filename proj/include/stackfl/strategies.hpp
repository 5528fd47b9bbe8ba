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

// Contribution-weight strategies.
//
//   fedavg    C_k = n_k / max_j n_j
//   pwfedavg  C_k = mean per-class validation precision of node k
//   dswm      grid argmin of own validation loss of the hypothetical
//             aggregate, anticipating other nodes from replay
//   aswm      actor-critic policies (one leader net, one net shared by all
//             followers) trained from replay against the dswm choice

#ifndef STACKFL_STRATEGIES_HPP_
#define STACKFL_STRATEGIES_HPP_

#include <cstddef>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "stackfl/federation.hpp"
#include "stackfl/nn.hpp"
#include "stackfl/rng.hpp"

namespace stackfl {

enum class StrategyKind { kFedAvg, kPwFedAvg, kDswm, kAswm };

std::string_view strategy_name(StrategyKind kind);
// Throws ConfigError for an unknown name.
StrategyKind parse_strategy(std::string_view name);

// {0.1, 0.2, ..., 1.0}
std::vector<double> default_candidates();

// ---------------------------------------------------------------------------
// Stateless weightings.

std::vector<double> fedavg_weights(std::span<const std::size_t> node_sizes);

std::vector<double> pwfedavg_weights(
    std::span<const std::vector<double>> per_node_precision, double c_min);

// ---------------------------------------------------------------------------
// Deterministic grid selection.

// Own validation loss of the aggregate of `models` under `weights` with the
// own entry replaced by `own_weight`.
double hypothetical_loss(std::size_t own_index,
                         std::span<const ModelParams> models,
                         std::span<const double> weights, double own_weight,
                         const Batch& own_val);

struct DswmChoice {
  double weight = 0.0;
  double loss = 0.0;
  std::vector<double> candidate_losses;  // same order as the candidates
};

// Losses closer than this (relative to max(1, |min loss|)) count as ties.
inline constexpr double kDswmTieTolerance = 1e-12;

// Evaluates every candidate for the own entry of `anticipated_weights` and
// returns the smallest candidate whose loss is within tolerance of the
// minimum. Entries of `anticipated_weights` other than own_index are the
// weights assumed for the other nodes.
DswmChoice dswm_select_weight(std::size_t own_index,
                              std::span<const ModelParams> models,
                              std::span<const double> anticipated_weights,
                              const Batch& own_val,
                              std::span<const double> candidates);

// ---------------------------------------------------------------------------
// Experience replay.

struct ReplayEntry {
  int round = 0;
  Role role = Role::kFollower;
  std::size_t node_id = 0;
  std::vector<double> weights;  // applied C vector of that round
  double action = 0.0;          // own applied weight
  double loss = 0.0;            // own loss under the applied weight, U
  double baseline_loss = 0.0;   // loss of the grid choice that round
  std::vector<double> summary;  // StateSummary::to_vector()
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 256);

  // Evicts the oldest entry once capacity is exceeded.
  void push(ReplayEntry entry);
  // Uniform without replacement; everything when batch_size >= size().
  std::vector<ReplayEntry> sample(std::size_t batch_size, Rng& rng) const;

  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return entries_.empty(); }
  const std::deque<ReplayEntry>& entries() const { return entries_; }
  const ReplayEntry* latest() const;

 private:
  std::size_t capacity_;
  std::deque<ReplayEntry> entries_;
};

// Weights a node assumes for the others before it acts: the most recent
// applied vector in `replay`, or 1.0 for the leader and 0.5 for followers
// when nothing is stored yet. An observed leader weight overrides the
// leader's entry. The own entry is left at 0 for the caller to fill.
std::vector<double> replay_anticipation(const ReplayBuffer& replay,
                                        std::size_t n_nodes,
                                        std::size_t own_index,
                                        std::size_t leader_index,
                                        std::optional<double> leader_weight);

// ---------------------------------------------------------------------------
// Policy networks.

// Fixed-size stand-in for a node's view of the system. The previous global
// model itself is summarized by the node's distance from it.
struct StateSummary {
  double round_fraction = 0.0;             // t / T
  double own_prev_weight = 0.0;
  std::vector<double> others_prev_weights;  // n_nodes - 1, ascending node_id
  double own_val_loss = 0.0;
  double leader_loss = 0.0;                // 0 in the leader's own summary
  double distance_to_global = 0.0;         // ||local - global||_2
  double prev_val_auc = 0.5;

  std::vector<double> to_vector() const;
};

std::size_t summary_dim(std::size_t n_nodes);

enum class PolicyOwner { kLeader, kFollowers };

struct PolicyNet {
  PolicyOwner owner = PolicyOwner::kFollowers;
  ModelParams actor;   // d_s -> hidden -> outputs (leader: n_nodes, else 1)
  ModelParams critic;  // d_s -> hidden -> 1
  AdamState actor_opt;
  AdamState critic_opt;
};

// Actor output layer starts at zero so an untrained policy answers the
// midpoint of the bounds.
PolicyNet make_policy(PolicyOwner owner, std::size_t n_nodes,
                      std::size_t hidden, std::uint64_t seed);

double squash(double z, const WeightBounds& bounds);

struct LeaderPrediction {
  double own_weight = 0.0;
  std::vector<double> anticipated;  // one per follower, ascending node_id
};

LeaderPrediction aswm_leader_predict(const PolicyNet& policy,
                                     std::span<const double> summary,
                                     const WeightBounds& bounds);
double aswm_follower_predict(const PolicyNet& policy,
                             std::span<const double> summary,
                             const WeightBounds& bounds);
double critic_value(const PolicyNet& policy, std::span<const double> summary);

struct TrainStepConfig {
  double lr_actor = 5e-4;
  double lr_critic = 1e-3;
  // Weight of the leader's anticipation heads, which regress toward the
  // follower weights actually applied in the entry's round.
  double anticipation_weight = 1.0;
};

// One Adam step each for critic (toward -U) and actor (advantage-weighted
// regression toward the applied action, A = baseline_loss - loss). Entries
// are averaged per node first, then across nodes.
void aswm_train_step(PolicyNet& policy, std::span<const ReplayEntry> batch,
                     const TrainStepConfig& config,
                     const WeightBounds& bounds);

// ---------------------------------------------------------------------------
// Strategy object.

// Everything a node's weight choice may depend on.
struct SelectionContext {
  std::size_t node_index = 0;
  std::size_t leader_index = 0;
  Role role = Role::kFollower;
  int round = 1;  // 1-based round being played
  int total_rounds = 1;
  std::span<const ModelParams> models;     // newest local model per node
  const ModelParams* global_model = nullptr;
  const Batch* val = nullptr;
  double own_val_loss = 0.0;
  std::span<const double> prev_weights;    // applied last round
  std::optional<double> leader_weight;     // observed by followers
  double leader_loss = 0.0;                // observed by followers
  double prev_val_auc = 0.5;
  std::span<const std::size_t> train_sizes;
  WeightBounds bounds;
};

struct AswmConfig {
  int warmup_rounds = 3;
  std::size_t replay_capacity = 256;
  std::size_t replay_batch = 32;
  std::size_t hidden = 16;
  int updates_per_round = 1;
  TrainStepConfig train;
  double explore_prob = 0.2;
  double explore_decay = 0.95;
  double explore_width = 0.1;
};

struct StrategyConfig {
  std::vector<double> candidates = default_candidates();
  WeightBounds bounds;  // used for policy training; selection uses ctx.bounds
  std::size_t replay_capacity = 256;
  AswmConfig aswm;
};

class WeightingStrategy {
 public:
  struct FedAvg {};
  struct PwFedAvg {};
  struct Dswm {
    ReplayBuffer replay;
  };
  struct Aswm {
    PolicyNet leader;
    PolicyNet followers;
    ReplayBuffer leader_replay;
    ReplayBuffer follower_replay;
    Rng rng;
    std::vector<ReplayEntry> pending;  // this round, weights filled at end
    int train_steps = 0;
  };

  WeightingStrategy(StrategyKind kind, std::size_t n_nodes,
                    std::uint64_t seed, StrategyConfig config = {});

  StrategyKind kind() const;
  const StrategyConfig& config() const { return config_; }

  // Always within ctx.bounds.
  double select_weight(const SelectionContext& ctx);

  // Called once per round with the applied weight vector.
  void end_round(int round, std::span<const double> applied_weights);

  // Non-null only for the matching variant.
  const Dswm* dswm() const { return std::get_if<Dswm>(&state_); }
  const Aswm* aswm() const { return std::get_if<Aswm>(&state_); }
  Aswm* mutable_aswm() { return std::get_if<Aswm>(&state_); }

  // The policy net a node consults; all followers share one.
  const PolicyNet& policy_for(Role role) const;

 private:
  double select_dswm(const SelectionContext& ctx);
  double select_aswm(const SelectionContext& ctx);
  std::size_t n_nodes_;
  StrategyConfig config_;
  std::variant<FedAvg, PwFedAvg, Dswm, Aswm> state_;
};

StateSummary make_state_summary(const SelectionContext& ctx);

}  // namespace stackfl

#endif  // STACKFL_STRATEGIES_HPP_

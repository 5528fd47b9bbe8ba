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

// Round engine for leader/follower federated training.
//
// One round, in order:
//   1. the leader trains locally from the global model and picks its weight;
//   2. every follower (ascending node_id) trains locally, observes the
//      leader's weight and validation loss, and picks its own weight;
//   3. the updated local models are combined with weighted_aggregate;
//   4. the global model is replaced, a RoundRecord is appended and the
//      strategy sees the applied weight vector (replay / policy training).

#ifndef STACKFL_FEDERATION_HPP_
#define STACKFL_FEDERATION_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "stackfl/metrics.hpp"
#include "stackfl/nn.hpp"

namespace stackfl {

class WeightingStrategy;

enum class Role { kLeader, kFollower };

std::string_view role_name(Role role);

struct WeightBounds {
  double min = 0.05;
  double max = 1.0;

  double clamp(double c) const;
};

struct TrainingConfig {
  int epochs = 2;
  std::size_t batch_size = 32;
  double lr = 0.05;
};

struct NodeState {
  std::size_t node_id = 0;
  Role role = Role::kFollower;
  Batch train;
  Batch val;
  Batch test;
  ModelParams local_model;
  double contribution_weight = 1.0;
  std::uint64_t noise_seed = 0;
  double last_val_auc = 0.5;
};

struct NodeRoundMetrics {
  std::size_t node_id = 0;
  Role role = Role::kFollower;
  double contribution_weight = 0.0;
  double val_loss = 0.0;  // local model on own val split, after training
  double val_auc = 0.0;
  double test_auc = 0.0;  // aggregated global model on own test split
  double test_loss = 0.0;
};

struct RoundRecord {
  int round = 0;
  std::vector<NodeRoundMetrics> nodes;
};

struct FederationState {
  ModelParams global_model;
  std::vector<NodeState> nodes;
  int round = 0;         // rounds completed so far
  int total_rounds = 1;  // planned T, used to normalize round features
  std::vector<RoundRecord> history;
  TrainingConfig training;
  WeightBounds bounds;
  AucAverage auc_average = AucAverage::kMacro;
  std::uint64_t seed = 0;

  std::size_t leader_index() const;
};

// Throws ConfigError unless: exactly one leader, node_id equals position,
// every model shares the global layer shapes, and val/test hold >= 2 classes.
void validate(const FederationState& state);

// sum_k C_k w_k / sum_k C_k, elementwise.
ModelParams weighted_aggregate(std::span<const ModelParams> models,
                               std::span<const double> weights);

struct LocalTrainResult {
  ModelParams params;
  double val_loss = 0.0;
};

// Mini-batch SGD from `global_model` on node.train; the shuffle order is
// drawn from `shuffle_seed`.
LocalTrainResult local_train(const NodeState& node,
                             const ModelParams& global_model,
                             const TrainingConfig& config,
                             std::uint64_t shuffle_seed);

// Runs one round. On error the exception propagates and neither `state` nor
// `strategy` is modified.
FederationState run_round(const FederationState& state,
                          WeightingStrategy& strategy);

// Global model on every node's test split.
std::vector<EvalReport> evaluate_all(const FederationState& state);

}  // namespace stackfl

#endif  // STACKFL_FEDERATION_HPP_

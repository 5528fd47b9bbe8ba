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

#include "stackfl/federation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <string>

#include "stackfl/error.hpp"
#include "stackfl/rng.hpp"
#include "stackfl/strategies.hpp"

namespace stackfl {

namespace {

constexpr std::uint64_t kLocalTrainStream = 0x6c6f63616cULL;

std::size_t distinct(const std::vector<int>& labels) {
  return std::set<int>(labels.begin(), labels.end()).size();
}

}  // namespace

std::string_view role_name(Role role) {
  return role == Role::kLeader ? "leader" : "follower";
}

double WeightBounds::clamp(double c) const { return std::clamp(c, min, max); }

std::size_t FederationState::leader_index() const {
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].role == Role::kLeader) return i;
  }
  throw ConfigError("federation: no leader node");
}

void validate(const FederationState& state) {
  if (state.nodes.empty()) throw ConfigError("federation: no nodes");
  const auto leaders = std::count_if(
      state.nodes.begin(), state.nodes.end(),
      [](const NodeState& n) { return n.role == Role::kLeader; });
  if (leaders != 1) throw ConfigError("federation: need exactly one leader");
  if (!(state.bounds.min > 0.0) || state.bounds.max < state.bounds.min) {
    throw ConfigError("federation: weight bounds need 0 < c_min <= c_max");
  }
  for (std::size_t i = 0; i < state.nodes.size(); ++i) {
    const NodeState& node = state.nodes[i];
    if (node.node_id != i) {
      throw ConfigError("federation: node_id must equal node position");
    }
    if (node.local_model.layer_shapes != state.global_model.layer_shapes) {
      throw ConfigError("federation: node model shape differs from global");
    }
    if (node.train.size() == 0) {
      throw ConfigError("federation: node " + std::to_string(i) +
                        " has no training data");
    }
    if (distinct(node.val.labels) < 2 || distinct(node.test.labels) < 2) {
      throw ConfigError("federation: node " + std::to_string(i) +
                        " val/test split holds fewer than 2 classes");
    }
  }
}

ModelParams weighted_aggregate(std::span<const ModelParams> models,
                               std::span<const double> weights) {
  if (models.empty()) throw ShapeError("aggregate: no models");
  if (models.size() != weights.size()) {
    throw WeightError("aggregate: one weight per model required");
  }
  double total = 0.0;
  for (double c : weights) {
    if (!(c > 0.0) || !std::isfinite(c)) {
      throw WeightError("aggregate: weights must be positive and finite");
    }
    total += c;
  }
  const std::size_t n = models.front().values.size();
  for (const auto& m : models) {
    if (m.layer_shapes != models.front().layer_shapes || m.values.size() != n) {
      throw ShapeError("aggregate: models differ in shape");
    }
  }
  ModelParams out;
  out.layer_shapes = models.front().layer_shapes;
  out.values.assign(n, 0.0);
  for (std::size_t k = 0; k < models.size(); ++k) {
    const double coef = weights[k] / total;
    const auto& v = models[k].values;
    for (std::size_t i = 0; i < n; ++i) out.values[i] += coef * v[i];
  }
  // The exact combination lies inside the per-coordinate hull; rounding can
  // step one ulp outside of it.
  for (std::size_t i = 0; i < n; ++i) {
    double lo = models.front().values[i];
    double hi = lo;
    for (const auto& m : models) {
      lo = std::min(lo, m.values[i]);
      hi = std::max(hi, m.values[i]);
    }
    out.values[i] = std::clamp(out.values[i], lo, hi);
  }
  return out;
}

LocalTrainResult local_train(const NodeState& node,
                             const ModelParams& global_model,
                             const TrainingConfig& config,
                             std::uint64_t shuffle_seed) {
  if (config.epochs < 1) throw ConfigError("local_train: epochs must be >= 1");
  if (config.batch_size < 1) throw ConfigError("local_train: batch_size < 1");
  if (node.train.size() == 0) throw ConfigError("local_train: empty train set");

  LocalTrainResult result{global_model, 0.0};
  const std::size_t n = node.train.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(shuffle_seed, {kLocalTrainStream}));
  Batch mini;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t stop = std::min(n, start + config.batch_size);
      std::span<const std::size_t> idx(order.data() + start, stop - start);
      mini.features = node.train.features.select_rows(idx);
      mini.labels.clear();
      for (std::size_t i : idx) mini.labels.push_back(node.train.labels[i]);
      const auto step = backward(result.params, mini);
      result.params = sgd_step(result.params, step.grad, config.lr);
    }
  }
  result.val_loss =
      softmax_cross_entropy(forward(result.params, node.val.features),
                            node.val.labels)
          .loss;
  return result;
}

FederationState run_round(const FederationState& state,
                          WeightingStrategy& strategy) {
  validate(state);
  FederationState next = state;
  WeightingStrategy working = strategy;
  const int t = state.round + 1;
  const std::size_t n_nodes = next.nodes.size();
  const std::size_t leader = next.leader_index();

  std::vector<double> prev_weights(n_nodes);
  std::vector<std::size_t> train_sizes(n_nodes);
  std::vector<ModelParams> models(n_nodes);
  for (std::size_t i = 0; i < n_nodes; ++i) {
    prev_weights[i] = next.nodes[i].contribution_weight;
    train_sizes[i] = next.nodes[i].train.size();
    models[i] = next.nodes[i].local_model;
  }
  std::vector<double> val_losses(n_nodes, 0.0);
  std::vector<double> val_aucs(n_nodes, 0.0);
  std::vector<double> applied(n_nodes, 0.0);

  auto train_node = [&](std::size_t i) {
    const auto seed = derive_seed(next.seed, {static_cast<std::uint64_t>(i),
                                              static_cast<std::uint64_t>(t)});
    auto result = local_train(next.nodes[i], next.global_model, next.training,
                              seed);
    models[i] = std::move(result.params);
    val_losses[i] = result.val_loss;
    val_aucs[i] = evaluate(models[i], next.nodes[i].val, next.auc_average).auc;
  };

  auto context = [&](std::size_t i) {
    SelectionContext ctx;
    ctx.node_index = i;
    ctx.leader_index = leader;
    ctx.role = next.nodes[i].role;
    ctx.round = t;
    ctx.total_rounds = std::max(next.total_rounds, t);
    ctx.models = models;
    ctx.global_model = &next.global_model;
    ctx.val = &next.nodes[i].val;
    ctx.own_val_loss = val_losses[i];
    ctx.prev_weights = prev_weights;
    ctx.prev_val_auc = next.nodes[i].last_val_auc;
    ctx.train_sizes = train_sizes;
    ctx.bounds = next.bounds;
    if (i != leader) {
      ctx.leader_weight = applied[leader];
      ctx.leader_loss = val_losses[leader];
    }
    return ctx;
  };

  auto select = [&](std::size_t i) {
    double c = 0.0;
    try {
      c = working.select_weight(context(i));
    } catch (const StrategyError&) {
      throw;
    } catch (const std::exception& e) {
      throw StrategyError("strategy " +
                          std::string(strategy_name(working.kind())) +
                          " failed for node " + std::to_string(i) + ": " +
                          e.what());
    }
    if (!(c >= next.bounds.min && c <= next.bounds.max)) {
      throw StrategyError("strategy returned a weight outside the bounds");
    }
    applied[i] = c;
  };

  // (1) leader acts first; followers' models are still last round's.
  train_node(leader);
  select(leader);

  // (2) followers observe the leader, then respond. Local training does not
  // depend on any weight, so all followers train before any of them picks.
  for (std::size_t i = 0; i < n_nodes; ++i) {
    if (i != leader) train_node(i);
  }
  for (std::size_t i = 0; i < n_nodes; ++i) {
    if (i != leader) select(i);
  }

  // (3) + (4)
  next.global_model = weighted_aggregate(models, applied);
  RoundRecord record;
  record.round = t;
  for (std::size_t i = 0; i < n_nodes; ++i) {
    NodeState& node = next.nodes[i];
    const auto report = evaluate(next.global_model, node.test, next.auc_average);
    record.nodes.push_back({node.node_id, node.role, applied[i], val_losses[i],
                            val_aucs[i], report.auc, report.loss});
    node.local_model = std::move(models[i]);
    node.contribution_weight = applied[i];
    node.last_val_auc = val_aucs[i];
  }
  next.history.push_back(std::move(record));
  next.round = t;
  working.end_round(t, applied);

  strategy = std::move(working);
  return next;
}

std::vector<EvalReport> evaluate_all(const FederationState& state) {
  std::vector<EvalReport> reports;
  reports.reserve(state.nodes.size());
  for (const auto& node : state.nodes) {
    reports.push_back(evaluate(state.global_model, node.test, state.auc_average));
  }
  return reports;
}

}  // namespace stackfl

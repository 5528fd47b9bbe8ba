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

#include "stackfl/strategies.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>

#include "stackfl/error.hpp"
#include "stackfl/metrics.hpp"

namespace stackfl {

namespace {

constexpr std::uint64_t kLeaderPolicyStream = 0x6c65616465ULL;
constexpr std::uint64_t kFollowerPolicyStream = 0x666f6c6c6fULL;
constexpr std::uint64_t kExploreStream = 0x6578706c6fULL;

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// d squash / dz
double squash_slope(double z, const WeightBounds& bounds) {
  const double s = sigmoid(z);
  return (bounds.max - bounds.min) * s * (1.0 - s);
}

Matrix single_row(std::span<const double> values) {
  Matrix m(1, values.size());
  std::copy(values.begin(), values.end(), m.row(0).begin());
  return m;
}

}  // namespace

std::string_view strategy_name(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::kFedAvg:
      return "fedavg";
    case StrategyKind::kPwFedAvg:
      return "pwfedavg";
    case StrategyKind::kDswm:
      return "dswm";
    case StrategyKind::kAswm:
      return "aswm";
  }
  return "unknown";
}

StrategyKind parse_strategy(std::string_view name) {
  for (auto kind : {StrategyKind::kFedAvg, StrategyKind::kPwFedAvg,
                    StrategyKind::kDswm, StrategyKind::kAswm}) {
    if (strategy_name(kind) == name) return kind;
  }
  throw ConfigError("unknown strategy '" + std::string(name) +
                    "' (expected fedavg, pwfedavg, dswm or aswm)");
}

std::vector<double> default_candidates() {
  std::vector<double> c;
  for (int i = 1; i <= 10; ++i) c.push_back(i / 10.0);
  return c;
}

std::vector<double> fedavg_weights(std::span<const std::size_t> node_sizes) {
  if (node_sizes.empty()) throw WeightError("fedavg: no nodes");
  const std::size_t largest =
      *std::max_element(node_sizes.begin(), node_sizes.end());
  std::vector<double> c;
  c.reserve(node_sizes.size());
  for (std::size_t n : node_sizes) {
    if (n == 0) throw WeightError("fedavg: node with zero samples");
    c.push_back(static_cast<double>(n) / static_cast<double>(largest));
  }
  return c;
}

std::vector<double> pwfedavg_weights(
    std::span<const std::vector<double>> per_node_precision, double c_min) {
  std::vector<double> c;
  c.reserve(per_node_precision.size());
  for (const auto& p : per_node_precision) {
    const double mean =
        p.empty() ? 0.0
                  : std::accumulate(p.begin(), p.end(), 0.0) /
                        static_cast<double>(p.size());
    c.push_back(std::clamp(mean, c_min, 1.0));
  }
  return c;
}

double hypothetical_loss(std::size_t own_index,
                         std::span<const ModelParams> models,
                         std::span<const double> weights, double own_weight,
                         const Batch& own_val) {
  std::vector<double> w(weights.begin(), weights.end());
  w.at(own_index) = own_weight;
  const ModelParams candidate = weighted_aggregate(models, w);
  return softmax_cross_entropy(forward(candidate, own_val.features),
                               own_val.labels)
      .loss;
}

DswmChoice dswm_select_weight(std::size_t own_index,
                              std::span<const ModelParams> models,
                              std::span<const double> anticipated_weights,
                              const Batch& own_val,
                              std::span<const double> candidates) {
  if (candidates.empty()) throw StrategyError("dswm: no candidate weights");
  if (own_index >= models.size() || anticipated_weights.size() != models.size()) {
    throw StrategyError("dswm: node index or weight vector out of range");
  }
  DswmChoice choice;
  choice.candidate_losses.reserve(candidates.size());
  for (double c : candidates) {
    choice.candidate_losses.push_back(
        hypothetical_loss(own_index, models, anticipated_weights, c, own_val));
  }
  const double best = *std::min_element(choice.candidate_losses.begin(),
                                        choice.candidate_losses.end());
  const double tol = kDswmTieTolerance * std::max(1.0, std::abs(best));
  bool found = false;
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    if (choice.candidate_losses[k] <= best + tol &&
        (!found || candidates[k] < choice.weight)) {
      choice.weight = candidates[k];
      choice.loss = choice.candidate_losses[k];
      found = true;
    }
  }
  return choice;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ == 0) throw ConfigError("replay: capacity must be >= 1");
}

void ReplayBuffer::push(ReplayEntry entry) {
  entries_.push_back(std::move(entry));
  while (entries_.size() > capacity_) entries_.pop_front();
}

std::vector<ReplayEntry> ReplayBuffer::sample(std::size_t batch_size,
                                              Rng& rng) const {
  std::vector<ReplayEntry> out;
  if (batch_size >= entries_.size()) {
    out.assign(entries_.begin(), entries_.end());
    return out;
  }
  out.reserve(batch_size);
  std::sample(entries_.begin(), entries_.end(), std::back_inserter(out),
              batch_size, rng);
  return out;
}

const ReplayEntry* ReplayBuffer::latest() const {
  return entries_.empty() ? nullptr : &entries_.back();
}

std::vector<double> replay_anticipation(const ReplayBuffer& replay,
                                        std::size_t n_nodes,
                                        std::size_t own_index,
                                        std::size_t leader_index,
                                        std::optional<double> leader_weight) {
  std::vector<double> w(n_nodes, 0.0);
  const ReplayEntry* last = replay.latest();
  for (std::size_t j = 0; j < n_nodes; ++j) {
    if (j == own_index) continue;
    if (last != nullptr && last->weights.size() == n_nodes) {
      w[j] = last->weights[j];
    } else {
      w[j] = j == leader_index ? 1.0 : 0.5;
    }
  }
  if (leader_weight && own_index != leader_index) w[leader_index] = *leader_weight;
  return w;
}

std::vector<double> StateSummary::to_vector() const {
  std::vector<double> v;
  v.reserve(6 + others_prev_weights.size());
  v.push_back(round_fraction);
  v.push_back(own_prev_weight);
  v.insert(v.end(), others_prev_weights.begin(), others_prev_weights.end());
  v.push_back(own_val_loss);
  v.push_back(leader_loss);
  v.push_back(distance_to_global);
  v.push_back(prev_val_auc);
  return v;
}

std::size_t summary_dim(std::size_t n_nodes) { return 6 + (n_nodes - 1); }

StateSummary make_state_summary(const SelectionContext& ctx) {
  StateSummary s;
  s.round_fraction =
      static_cast<double>(ctx.round) / static_cast<double>(ctx.total_rounds);
  s.own_prev_weight = ctx.prev_weights[ctx.node_index];
  for (std::size_t j = 0; j < ctx.prev_weights.size(); ++j) {
    if (j != ctx.node_index) s.others_prev_weights.push_back(ctx.prev_weights[j]);
  }
  s.own_val_loss = ctx.own_val_loss;
  s.leader_loss = ctx.role == Role::kLeader ? 0.0 : ctx.leader_loss;
  s.distance_to_global =
      l2_distance(ctx.models[ctx.node_index], *ctx.global_model);
  s.prev_val_auc = ctx.prev_val_auc;
  return s;
}

PolicyNet make_policy(PolicyOwner owner, std::size_t n_nodes,
                      std::size_t hidden, std::uint64_t seed) {
  const std::size_t d = summary_dim(n_nodes);
  const std::size_t outputs = owner == PolicyOwner::kLeader ? n_nodes : 1;
  PolicyNet net;
  net.owner = owner;
  net.actor = mlp_init({{d, hidden}, {hidden, outputs}}, derive_seed(seed, {1}));
  const std::size_t head = net.actor.weight_offset(1);
  std::fill(net.actor.values.begin() + static_cast<std::ptrdiff_t>(head),
            net.actor.values.end(), 0.0);
  net.critic = mlp_init({{d, hidden}, {hidden, 1}}, derive_seed(seed, {2}));
  return net;
}

double squash(double z, const WeightBounds& bounds) {
  return bounds.min + (bounds.max - bounds.min) * sigmoid(z);
}

LeaderPrediction aswm_leader_predict(const PolicyNet& policy,
                                     std::span<const double> summary,
                                     const WeightBounds& bounds) {
  const Matrix out = forward(policy.actor, single_row(summary));
  LeaderPrediction p;
  p.own_weight = squash(out(0, 0), bounds);
  for (std::size_t j = 1; j < out.cols(); ++j) {
    p.anticipated.push_back(squash(out(0, j), bounds));
  }
  return p;
}

double aswm_follower_predict(const PolicyNet& policy,
                             std::span<const double> summary,
                             const WeightBounds& bounds) {
  return squash(forward(policy.actor, single_row(summary))(0, 0), bounds);
}

double critic_value(const PolicyNet& policy, std::span<const double> summary) {
  return forward(policy.critic, single_row(summary))(0, 0);
}

void aswm_train_step(PolicyNet& policy, std::span<const ReplayEntry> batch,
                     const TrainStepConfig& config,
                     const WeightBounds& bounds) {
  if (batch.empty()) return;
  const std::size_t m = batch.size();
  const std::size_t d = policy.critic.input_dim();

  // Mean within each node, then mean across nodes.
  std::map<std::size_t, std::size_t> per_node;
  for (const auto& e : batch) ++per_node[e.node_id];
  std::vector<double> share(m);
  for (std::size_t k = 0; k < m; ++k) {
    share[k] = 1.0 / (static_cast<double>(per_node.size()) *
                      static_cast<double>(per_node[batch[k].node_id]));
  }

  Matrix states(m, d);
  for (std::size_t k = 0; k < m; ++k) {
    if (batch[k].summary.size() != d) {
      throw ShapeError("aswm: replay summary has the wrong dimension");
    }
    std::copy(batch[k].summary.begin(), batch[k].summary.end(),
              states.row(k).begin());
  }

  // Critic: squared error toward reward -U.
  const Matrix values = forward(policy.critic, states);
  Matrix dvalues(m, 1);
  for (std::size_t k = 0; k < m; ++k) {
    dvalues(k, 0) = share[k] * 2.0 * (values(k, 0) + batch[k].loss);
  }
  policy.critic =
      adam_step(policy.critic,
                backward_from_output(policy.critic, states, dvalues),
                policy.critic_opt, config.lr_critic);

  // Actor: A * (c - a)^2 pulls the output toward actions that beat the
  // baseline and pushes it away from actions that did worse.
  const Matrix z = forward(policy.actor, states);
  Matrix dz(m, z.cols());
  bool any = false;
  for (std::size_t k = 0; k < m; ++k) {
    const ReplayEntry& e = batch[k];
    const double advantage = e.baseline_loss - e.loss;
    if (std::isfinite(advantage) && advantage != 0.0) {
      const double c = squash(z(k, 0), bounds);
      dz(k, 0) = share[k] * 2.0 * advantage * (c - e.action) *
                 squash_slope(z(k, 0), bounds);
    }
    if (policy.owner == PolicyOwner::kLeader && config.anticipation_weight > 0.0) {
      // Heads 1.. track the other nodes' applied weights, ascending id.
      std::size_t head = 1;
      for (std::size_t j = 0; j < e.weights.size() && head < z.cols(); ++j) {
        if (j == e.node_id) continue;
        const double c = squash(z(k, head), bounds);
        dz(k, head) = share[k] * config.anticipation_weight * 2.0 *
                      (c - e.weights[j]) * squash_slope(z(k, head), bounds);
        ++head;
      }
    }
    for (std::size_t j = 0; j < z.cols(); ++j) any = any || dz(k, j) != 0.0;
  }
  if (any) {
    policy.actor = adam_step(policy.actor,
                             backward_from_output(policy.actor, states, dz),
                             policy.actor_opt, config.lr_actor);
  }
}

WeightingStrategy::WeightingStrategy(StrategyKind kind, std::size_t n_nodes,
                                     std::uint64_t seed, StrategyConfig config)
    : n_nodes_(n_nodes), config_(std::move(config)) {
  if (n_nodes_ < 1) throw ConfigError("strategy: need at least one node");
  if (config_.candidates.empty()) {
    throw ConfigError("strategy: empty candidate set");
  }
  std::sort(config_.candidates.begin(), config_.candidates.end());
  switch (kind) {
    case StrategyKind::kFedAvg:
      state_ = FedAvg{};
      break;
    case StrategyKind::kPwFedAvg:
      state_ = PwFedAvg{};
      break;
    case StrategyKind::kDswm:
      state_ = Dswm{ReplayBuffer(config_.replay_capacity)};
      break;
    case StrategyKind::kAswm: {
      const auto& a = config_.aswm;
      state_ = Aswm{
          make_policy(PolicyOwner::kLeader, n_nodes_, a.hidden,
                      derive_seed(seed, {kLeaderPolicyStream})),
          make_policy(PolicyOwner::kFollowers, n_nodes_, a.hidden,
                      derive_seed(seed, {kFollowerPolicyStream})),
          ReplayBuffer(a.replay_capacity),
          ReplayBuffer(a.replay_capacity),
          Rng(derive_seed(seed, {kExploreStream})),
          {},
          0};
      break;
    }
  }
}

StrategyKind WeightingStrategy::kind() const {
  return static_cast<StrategyKind>(state_.index());
}

const PolicyNet& WeightingStrategy::policy_for(Role role) const {
  const Aswm* a = aswm();
  if (a == nullptr) throw StrategyError("policy_for: not an aswm strategy");
  return role == Role::kLeader ? a->leader : a->followers;
}

double WeightingStrategy::select_weight(const SelectionContext& ctx) {
  double c = 0.0;
  switch (kind()) {
    case StrategyKind::kFedAvg:
      c = fedavg_weights(ctx.train_sizes).at(ctx.node_index);
      break;
    case StrategyKind::kPwFedAvg: {
      const ModelParams& own = ctx.models[ctx.node_index];
      const auto preds = argmax_rows(forward(own, ctx.val->features));
      const std::vector<std::vector<double>> precision{precision_per_class(
          preds, ctx.val->labels, static_cast<int>(own.output_dim()))};
      c = pwfedavg_weights(precision, ctx.bounds.min).front();
      break;
    }
    case StrategyKind::kDswm:
      c = select_dswm(ctx);
      break;
    case StrategyKind::kAswm:
      c = select_aswm(ctx);
      break;
  }
  return ctx.bounds.clamp(c);
}

double WeightingStrategy::select_dswm(const SelectionContext& ctx) {
  Dswm& d = std::get<Dswm>(state_);
  const auto anticipated =
      replay_anticipation(d.replay, ctx.models.size(), ctx.node_index,
                          ctx.leader_index, ctx.leader_weight);
  const auto choice = dswm_select_weight(ctx.node_index, ctx.models,
                                         anticipated, *ctx.val,
                                         config_.candidates);
  return choice.weight;
}

double WeightingStrategy::select_aswm(const SelectionContext& ctx) {
  Aswm& a = std::get<Aswm>(state_);
  const AswmConfig& cfg = config_.aswm;
  const bool leader = ctx.role == Role::kLeader;
  const bool warm = ctx.round <= cfg.warmup_rounds;
  const auto summary = make_state_summary(ctx).to_vector();

  auto anticipated = replay_anticipation(
      leader ? a.leader_replay : a.follower_replay, ctx.models.size(),
      ctx.node_index, ctx.leader_index, ctx.leader_weight);

  double predicted = 0.0;
  if (leader && !warm) {
    const auto p = aswm_leader_predict(a.leader, summary, ctx.bounds);
    predicted = p.own_weight;
    std::size_t head = 0;
    for (std::size_t j = 0; j < anticipated.size(); ++j) {
      if (j != ctx.node_index && head < p.anticipated.size()) {
        anticipated[j] = p.anticipated[head++];
      }
    }
  } else if (!warm) {
    predicted = aswm_follower_predict(a.followers, summary, ctx.bounds);
  }

  // Shadow grid selection: the baseline the policy is measured against.
  const auto baseline = dswm_select_weight(ctx.node_index, ctx.models,
                                           anticipated, *ctx.val,
                                           config_.candidates);
  double applied = baseline.weight;
  double loss = baseline.loss;
  if (!warm) {
    applied = predicted;
    const double eps =
        cfg.explore_prob * std::pow(cfg.explore_decay, ctx.round - 1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    if (unit(a.rng) < eps) {
      std::uniform_real_distribution<double> jitter(-cfg.explore_width,
                                                    cfg.explore_width);
      applied = ctx.bounds.clamp(predicted + jitter(a.rng));
    }
    loss = hypothetical_loss(ctx.node_index, ctx.models, anticipated, applied,
                             *ctx.val);
  }
  ReplayEntry entry;
  entry.round = ctx.round;
  entry.role = ctx.role;
  entry.node_id = ctx.node_index;
  entry.action = applied;
  entry.loss = loss;
  entry.baseline_loss = baseline.loss;
  entry.summary = summary;
  a.pending.push_back(std::move(entry));
  return applied;
}

void WeightingStrategy::end_round(int round,
                                  std::span<const double> applied_weights) {
  if (Dswm* d = std::get_if<Dswm>(&state_)) {
    ReplayEntry entry;
    entry.round = round;
    entry.weights.assign(applied_weights.begin(), applied_weights.end());
    d->replay.push(std::move(entry));
    return;
  }
  Aswm* a = std::get_if<Aswm>(&state_);
  if (a == nullptr) return;
  for (auto& e : a->pending) {
    e.weights.assign(applied_weights.begin(), applied_weights.end());
    (e.role == Role::kLeader ? a->leader_replay : a->follower_replay)
        .push(std::move(e));
  }
  a->pending.clear();
  if (round < config_.aswm.warmup_rounds) return;
  for (int step = 0; step < config_.aswm.updates_per_round; ++step) {
    if (!a->leader_replay.empty()) {
      const auto batch = a->leader_replay.sample(config_.aswm.replay_batch, a->rng);
      aswm_train_step(a->leader, batch, config_.aswm.train, config_.bounds);
    }
    if (!a->follower_replay.empty()) {
      const auto batch =
          a->follower_replay.sample(config_.aswm.replay_batch, a->rng);
      aswm_train_step(a->followers, batch, config_.aswm.train, config_.bounds);
    }
    ++a->train_steps;
  }
}

}  // namespace stackfl

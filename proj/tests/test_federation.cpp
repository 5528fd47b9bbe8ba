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

#include <algorithm>
#include <random>

#include "oracles.hpp"
#include "stackfl/data.hpp"
#include "stackfl/error.hpp"
#include "stackfl/federation.hpp"
#include "stackfl/strategies.hpp"

using namespace stackfl;

namespace {

// A 1x1 layer: one weight, one bias.
ModelParams flat(std::vector<double> v) { return ModelParams{{{1, 1}}, std::move(v)}; }

std::vector<ModelParams> random_models(std::size_t k, std::size_t seed) {
  std::vector<ModelParams> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back(mlp_init({{3, 4}, {4, 2}}, seed * 10 + i));
  return out;
}

// Three nodes cut from one synthetic set: 300 / 150 / 90 samples.
FederationState small_federation(std::uint64_t seed = 3) {
  const Dataset all = synthetic_dataset(540, 6, 3, 3.0, seed);
  FederationState st;
  st.global_model = mlp_init({{6, 8}, {8, 3}}, seed);
  st.total_rounds = 5;
  st.seed = seed;
  const std::size_t cuts[] = {0, 300, 450, 540};
  for (std::size_t i = 0; i < 3; ++i) {
    std::vector<std::size_t> idx;
    for (std::size_t r = cuts[i]; r < cuts[i + 1]; ++r) idx.push_back(r);
    const auto parts = split(subset(all, idx), {0.7, 0.1, 0.2}, seed + i);
    NodeState n;
    n.node_id = i;
    n.role = i == 0 ? Role::kLeader : Role::kFollower;
    n.train = to_batch(parts.train);
    n.val = to_batch(parts.val);
    n.test = to_batch(parts.test);
    n.local_model = st.global_model;
    st.nodes.push_back(std::move(n));
  }
  return st;
}

}  // namespace

TEST(Aggregate, EqualWeightsGiveMean) {
  const std::vector<ModelParams> m = {flat({2.0, 0.0}), flat({4.0, 0.0})};
  const std::vector<double> c = {1.0, 1.0};
  EXPECT_EQ(weighted_aggregate(m, c).values[0], 3.0);
}

TEST(Aggregate, DominantWeight) {
  const auto m = random_models(2, 1);
  const std::vector<double> c = {1.0, 1e-4};
  const auto out = weighted_aggregate(m, c);
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    EXPECT_NEAR(out.values[i], m[0].values[i], 1e-3);
  }
}

TEST(Aggregate, MatchesDirectSum) {
  const auto m = random_models(3, 2);
  const std::vector<double> c = {0.3, 0.5, 0.2};
  const auto expected = oracle::direct_sum({m[0].values, m[1].values, m[2].values}, c);
  const auto out = weighted_aggregate(m, c);
  for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_NEAR(out.values[i], expected[i], 1e-15);
}

TEST(Aggregate, HomogeneityConvexityIdempotence) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> w(0.05, 1.0), lam(0.01, 100.0);
  for (std::size_t trial = 0; trial < 50; ++trial) {
    const auto m = random_models(3, 100 + trial);
    std::vector<double> c = {w(rng), w(rng), w(rng)};
    const auto a = weighted_aggregate(m, c);
    const double l = lam(rng);
    std::vector<double> scaled = c;
    for (double& v : scaled) v *= l;
    const auto b = weighted_aggregate(m, scaled);
    for (std::size_t i = 0; i < a.values.size(); ++i) {
      EXPECT_NEAR(a.values[i], b.values[i], 1e-12);
      const double lo = std::min({m[0].values[i], m[1].values[i], m[2].values[i]});
      const double hi = std::max({m[0].values[i], m[1].values[i], m[2].values[i]});
      EXPECT_GE(a.values[i], lo);
      EXPECT_LE(a.values[i], hi);
    }
    const std::vector<ModelParams> same(3, m[0]);
    const auto id = weighted_aggregate(same, c);
    for (std::size_t i = 0; i < id.values.size(); ++i) {
      EXPECT_NEAR(id.values[i], m[0].values[i], 1e-15);
    }
  }
}

TEST(Aggregate, Errors) {
  const auto m = random_models(2, 3);
  const std::vector<double> zero = {1.0, 0.0};
  const std::vector<double> neg = {1.0, -0.5};
  const std::vector<double> one = {1.0};
  EXPECT_THROW(weighted_aggregate(m, zero), WeightError);
  EXPECT_THROW(weighted_aggregate(m, neg), WeightError);
  EXPECT_THROW(weighted_aggregate(m, one), WeightError);
  std::vector<ModelParams> mixed = {m[0], mlp_init({{3, 2}}, 1)};
  const std::vector<double> ok = {1.0, 1.0};
  EXPECT_THROW(weighted_aggregate(mixed, ok), ShapeError);
  EXPECT_THROW(weighted_aggregate({}, {}), ShapeError);
}

TEST(LocalTrain, ZeroRateReturnsGlobal) {
  const auto st = small_federation();
  TrainingConfig cfg;
  cfg.lr = 0.0;
  const auto r = local_train(st.nodes[1], st.global_model, cfg, 5);
  EXPECT_EQ(r.params, st.global_model);
}

TEST(LocalTrain, SeparableNodeLossFallsEachEpoch) {
  const Dataset ds = synthetic_dataset(400, 4, 2, 8.0, 2);
  const auto parts = split(ds, {0.7, 0.1, 0.2}, 2);
  NodeState n;
  n.train = to_batch(parts.train);
  n.val = to_batch(parts.val);
  const auto global = mlp_init({{4, 8}, {8, 2}}, 6);
  double prev = softmax_cross_entropy(forward(global, n.val), n.val.labels).loss;
  for (int e = 1; e <= 3; ++e) {
    TrainingConfig cfg;
    cfg.epochs = e;
    cfg.lr = 0.05;
    const double loss = local_train(n, global, cfg, 11).val_loss;
    EXPECT_LT(loss, prev) << "epoch " << e;
    prev = loss;
  }
}

TEST(LocalTrain, DeterministicAndLeavesNodeAlone) {
  const auto st = small_federation();
  const NodeState before = st.nodes[2];
  const auto a = local_train(st.nodes[2], st.global_model, {}, 9);
  const auto b = local_train(st.nodes[2], st.global_model, {}, 9);
  EXPECT_EQ(a.params, b.params);
  EXPECT_EQ(a.val_loss, b.val_loss);
  EXPECT_EQ(st.nodes[2].train.features, before.train.features);
  EXPECT_NE(local_train(st.nodes[2], st.global_model, {}, 10).params, a.params);
}

TEST(LocalTrain, BadConfig) {
  const auto st = small_federation();
  TrainingConfig cfg;
  cfg.epochs = 0;
  EXPECT_THROW(local_train(st.nodes[0], st.global_model, cfg, 1), ConfigError);
}

TEST(RunRound, FedAvgEqualsSizeWeightedAverage) {
  const auto st = small_federation();
  WeightingStrategy s(StrategyKind::kFedAvg, 3, 1);
  const auto next = run_round(st, s);
  std::vector<std::vector<double>> locals;
  std::vector<double> sizes;
  for (const auto& n : next.nodes) {
    locals.push_back(n.local_model.values);
    sizes.push_back(static_cast<double>(n.train.size()));
  }
  const auto expected = oracle::direct_sum(locals, sizes);
  for (std::size_t i = 0; i < expected.size(); ++i) {
    EXPECT_NEAR(next.global_model.values[i], expected[i], 1e-14);
  }
}

TEST(RunRound, AppendsOneRecordAndIsDeterministic) {
  const auto st = small_federation();
  WeightingStrategy s1(StrategyKind::kDswm, 3, 1), s2(StrategyKind::kDswm, 3, 1);
  auto a = run_round(run_round(st, s1), s1);
  auto b = run_round(run_round(st, s2), s2);
  ASSERT_EQ(a.history.size(), 2u);
  EXPECT_EQ(a.round, 2);
  EXPECT_EQ(a.global_model, b.global_model);
  for (std::size_t t = 0; t < 2; ++t) {
    ASSERT_EQ(a.history[t].nodes.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) {
      EXPECT_EQ(a.history[t].nodes[i].contribution_weight, b.history[t].nodes[i].contribution_weight);
      EXPECT_EQ(a.history[t].nodes[i].test_auc, b.history[t].nodes[i].test_auc);
    }
  }
}

TEST(RunRound, WeightsStayInBounds) {
  auto st = small_federation();
  WeightingStrategy s(StrategyKind::kAswm, 3, 2);
  for (int t = 0; t < 5; ++t) st = run_round(st, s);
  for (const auto& rec : st.history) {
    for (const auto& n : rec.nodes) {
      EXPECT_GE(n.contribution_weight, st.bounds.min);
      EXPECT_LE(n.contribution_weight, st.bounds.max);
    }
  }
}

TEST(RunRound, StrategyFailureLeavesEverythingUnchanged) {
  const auto st = small_federation();
  StrategyConfig cfg;
  cfg.candidates = {-1.0, 0.5};
  WeightingStrategy s(StrategyKind::kDswm, 3, 1, cfg);
  EXPECT_THROW(run_round(st, s), StrategyError);
  EXPECT_EQ(s.dswm()->replay.size(), 0u);
  EXPECT_TRUE(st.history.empty());
}

TEST(RunRound, InvalidStateIsRejected) {
  auto st = small_federation();
  st.nodes[1].role = Role::kLeader;
  WeightingStrategy s(StrategyKind::kFedAvg, 3, 1);
  EXPECT_THROW(run_round(st, s), ConfigError);
  st = small_federation();
  st.nodes[2].val.labels.assign(st.nodes[2].val.labels.size(), 0);
  EXPECT_THROW(run_round(st, s), ConfigError);
}

TEST(EvaluateAll, NodeOptimalModelWinsOnItsOwnTestSet) {
  // Train one model per node to convergence, then evaluate each on node 0's
  // test split.
  auto st = small_federation(8);
  TrainingConfig cfg;
  cfg.epochs = 30;
  std::vector<ModelParams> own;
  for (const auto& n : st.nodes) {
    NodeState probe = n;
    probe.val = n.test;
    own.push_back(local_train(probe, st.global_model, cfg, 4).params);
  }
  st.global_model = own[0];
  const auto reports = evaluate_all(st);
  for (std::size_t k = 1; k < 3; ++k) {
    const double other =
        softmax_cross_entropy(forward(own[k], st.nodes[0].test), st.nodes[0].test.labels).loss;
    EXPECT_LE(reports[0].loss, other);
  }
}

TEST(EvaluateAll, PureAndSized) {
  const auto st = small_federation();
  const auto a = evaluate_all(st);
  const auto b = evaluate_all(st);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(a[i].auc, b[i].auc);
    EXPECT_EQ(a[i].loss, b[i].loss);
    EXPECT_EQ(a[i].n_samples, st.nodes[i].test.size());
  }
}

TEST(Bounds, ClampAndRoleNames) {
  WeightBounds b;
  EXPECT_EQ(b.clamp(0.0), 0.05);
  EXPECT_EQ(b.clamp(2.0), 1.0);
  EXPECT_EQ(b.clamp(0.3), 0.3);
  EXPECT_EQ(role_name(Role::kLeader), "leader");
  EXPECT_EQ(role_name(Role::kFollower), "follower");
}

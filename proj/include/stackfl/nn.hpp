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

// Minimal dense MLP engine: ReLU hidden layers, linear output layer,
// softmax cross-entropy with mean reduction, SGD and Adam updates.
//
// Parameter layout inside ModelParams::values, for each layer in order:
//   weights  out_dim x in_dim, row-major (W[o][i] at o * in_dim + i)
//   biases   out_dim
// so layer l starts right after the biases of layer l-1. Every model with the
// same layer_shapes therefore has the same flat layout, which is what makes
// elementwise aggregation across nodes well defined.

#ifndef STACKFL_NN_HPP_
#define STACKFL_NN_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "stackfl/matrix.hpp"

namespace stackfl {

struct LayerShape {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;

  friend bool operator==(const LayerShape&, const LayerShape&) = default;
};

std::size_t parameter_count(std::span<const LayerShape> shapes);

// Builds [(in, h0), (h0, h1), ..., (h_last, out)].
std::vector<LayerShape> mlp_shapes(std::size_t in_dim,
                                   std::span<const std::size_t> hidden,
                                   std::size_t out_dim);

struct ModelParams {
  std::vector<LayerShape> layer_shapes;
  std::vector<double> values;

  std::size_t weight_offset(std::size_t layer) const;
  std::size_t bias_offset(std::size_t layer) const;
  std::size_t input_dim() const { return layer_shapes.front().in_dim; }
  std::size_t output_dim() const { return layer_shapes.back().out_dim; }

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

struct Gradient {
  std::vector<double> values;
};

struct Batch {
  Matrix features;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
};

// Glorot-uniform weights, zero biases. Deterministic per (shapes, seed).
ModelParams mlp_init(std::vector<LayerShape> layer_shapes, std::uint64_t seed);

// Throws ShapeError when the feature width does not match the first layer.
Matrix forward(const ModelParams& params, const Matrix& features);
inline Matrix forward(const ModelParams& params, const Batch& batch) {
  return forward(params, batch.features);
}

struct LossAndProbs {
  double loss = 0.0;
  Matrix probs;
};

// Mean over rows of -log softmax(logits)[label]. Throws InputError for a
// label outside [0, cols).
LossAndProbs softmax_cross_entropy(const Matrix& logits,
                                   std::span<const int> labels);

struct LossAndGradient {
  double loss = 0.0;
  Gradient grad;
};

// Exact gradient of softmax_cross_entropy(forward(params, batch)).
LossAndGradient backward(const ModelParams& params, const Batch& batch);

// Backpropagates an arbitrary dLoss/dOutput (rows x output_dim) through the
// network. The caller owns the reduction: output_grad is used as given.
Gradient backward_from_output(const ModelParams& params,
                              const Matrix& features,
                              const Matrix& output_grad);

ModelParams sgd_step(const ModelParams& params, const Gradient& grad,
                     double lr);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::int64_t step = 0;
};

// Bias-corrected Adam. `state` is lazily sized on first use.
ModelParams adam_step(const ModelParams& params, const Gradient& grad,
                      AdamState& state, double lr,
                      const AdamConfig& config = {});

double l2_distance(const ModelParams& a, const ModelParams& b);

}  // namespace stackfl

#endif  // STACKFL_NN_HPP_

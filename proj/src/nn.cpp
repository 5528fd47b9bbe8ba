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

#include "stackfl/nn.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "stackfl/error.hpp"

namespace stackfl {

namespace {

void check_shapes(std::span<const LayerShape> shapes) {
  if (shapes.empty()) throw ConfigError("mlp: empty layer shape list");
  for (std::size_t l = 0; l < shapes.size(); ++l) {
    if (shapes[l].in_dim == 0 || shapes[l].out_dim == 0) {
      throw ConfigError("mlp: layer " + std::to_string(l) +
                        " has a zero dimension");
    }
    if (l > 0 && shapes[l].in_dim != shapes[l - 1].out_dim) {
      throw ConfigError("mlp: layer " + std::to_string(l) +
                        " input does not match previous output");
    }
  }
}

void check_params(const ModelParams& params) {
  check_shapes(params.layer_shapes);
  if (params.values.size() != parameter_count(params.layer_shapes)) {
    throw ShapeError("mlp: parameter vector length does not match shapes");
  }
}

// Activations of every layer; acts[0] is the input, acts[L] the logits.
// Hidden activations are stored post-ReLU.
std::vector<Matrix> forward_all(const ModelParams& params,
                                const Matrix& features) {
  check_params(params);
  if (features.cols() != params.input_dim()) {
    throw ShapeError("forward: got " + std::to_string(features.cols()) +
                     " features, model expects " +
                     std::to_string(params.input_dim()));
  }
  const std::size_t n_layers = params.layer_shapes.size();
  std::vector<Matrix> acts;
  acts.reserve(n_layers + 1);
  acts.push_back(features);
  for (std::size_t l = 0; l < n_layers; ++l) {
    const auto [in_dim, out_dim] = params.layer_shapes[l];
    const double* w = params.values.data() + params.weight_offset(l);
    const double* b = params.values.data() + params.bias_offset(l);
    const Matrix& x = acts.back();
    Matrix y(x.rows(), out_dim);
    const bool hidden = l + 1 < n_layers;
    for (std::size_t r = 0; r < x.rows(); ++r) {
      auto xr = x.row(r);
      auto yr = y.row(r);
      for (std::size_t o = 0; o < out_dim; ++o) {
        const double* wo = w + o * in_dim;
        double acc = b[o];
        for (std::size_t i = 0; i < in_dim; ++i) acc += wo[i] * xr[i];
        yr[o] = hidden ? std::max(acc, 0.0) : acc;
      }
    }
    acts.push_back(std::move(y));
  }
  for (double v : acts.back().data()) {
    if (!std::isfinite(v)) throw NumericError("forward: non-finite output");
  }
  return acts;
}

}  // namespace

std::size_t parameter_count(std::span<const LayerShape> shapes) {
  std::size_t total = 0;
  for (const auto& s : shapes) total += s.in_dim * s.out_dim + s.out_dim;
  return total;
}

std::vector<LayerShape> mlp_shapes(std::size_t in_dim,
                                   std::span<const std::size_t> hidden,
                                   std::size_t out_dim) {
  std::vector<LayerShape> shapes;
  std::size_t prev = in_dim;
  for (std::size_t h : hidden) {
    shapes.push_back({prev, h});
    prev = h;
  }
  shapes.push_back({prev, out_dim});
  return shapes;
}

std::size_t ModelParams::weight_offset(std::size_t layer) const {
  std::size_t off = 0;
  for (std::size_t l = 0; l < layer; ++l) {
    off += layer_shapes[l].in_dim * layer_shapes[l].out_dim +
           layer_shapes[l].out_dim;
  }
  return off;
}

std::size_t ModelParams::bias_offset(std::size_t layer) const {
  return weight_offset(layer) +
         layer_shapes[layer].in_dim * layer_shapes[layer].out_dim;
}

ModelParams mlp_init(std::vector<LayerShape> layer_shapes, std::uint64_t seed) {
  check_shapes(layer_shapes);
  ModelParams params;
  params.layer_shapes = std::move(layer_shapes);
  params.values.assign(parameter_count(params.layer_shapes), 0.0);
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l < params.layer_shapes.size(); ++l) {
    const auto [in_dim, out_dim] = params.layer_shapes[l];
    const double bound = std::sqrt(6.0 / static_cast<double>(in_dim + out_dim));
    std::uniform_real_distribution<double> dist(-bound, bound);
    double* w = params.values.data() + params.weight_offset(l);
    for (std::size_t k = 0; k < in_dim * out_dim; ++k) w[k] = dist(rng);
  }
  return params;
}

Matrix forward(const ModelParams& params, const Matrix& features) {
  return std::move(forward_all(params, features).back());
}

LossAndProbs softmax_cross_entropy(const Matrix& logits,
                                   std::span<const int> labels) {
  if (logits.rows() != labels.size()) {
    throw ShapeError("softmax_cross_entropy: row/label count mismatch");
  }
  if (labels.empty()) throw InputError("softmax_cross_entropy: empty batch");
  const std::size_t k = logits.cols();
  LossAndProbs out{0.0, Matrix(logits.rows(), k)};
  double total = 0.0;
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const int label = labels[r];
    if (label < 0 || static_cast<std::size_t>(label) >= k) {
      throw InputError("softmax_cross_entropy: label " +
                       std::to_string(label) + " out of range");
    }
    auto z = logits.row(r);
    auto p = out.probs.row(r);
    const double zmax = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      p[c] = std::exp(z[c] - zmax);
      sum += p[c];
    }
    for (std::size_t c = 0; c < k; ++c) p[c] /= sum;
    // log p[label] = z[label] - zmax - log(sum); avoids log(0) when the
    // probability underflows.
    total += -(z[label] - zmax - std::log(sum));
  }
  out.loss = total / static_cast<double>(logits.rows());
  return out;
}

Gradient backward_from_output(const ModelParams& params,
                              const Matrix& features,
                              const Matrix& output_grad) {
  const auto acts = forward_all(params, features);
  const std::size_t n_layers = params.layer_shapes.size();
  if (output_grad.rows() != features.rows() ||
      output_grad.cols() != params.output_dim()) {
    throw ShapeError("backward: output gradient has the wrong shape");
  }
  Gradient grad{std::vector<double>(params.values.size(), 0.0)};
  Matrix delta = output_grad;
  for (std::size_t l = n_layers; l-- > 0;) {
    const auto [in_dim, out_dim] = params.layer_shapes[l];
    const Matrix& x = acts[l];
    const double* w = params.values.data() + params.weight_offset(l);
    double* gw = grad.values.data() + params.weight_offset(l);
    double* gb = grad.values.data() + params.bias_offset(l);
    Matrix prev_delta(x.rows(), in_dim);
    for (std::size_t r = 0; r < x.rows(); ++r) {
      auto xr = x.row(r);
      auto dr = delta.row(r);
      auto pr = prev_delta.row(r);
      for (std::size_t o = 0; o < out_dim; ++o) {
        const double d = dr[o];
        if (d == 0.0) continue;
        gb[o] += d;
        double* gwo = gw + o * in_dim;
        const double* wo = w + o * in_dim;
        for (std::size_t i = 0; i < in_dim; ++i) {
          gwo[i] += d * xr[i];
          pr[i] += d * wo[i];
        }
      }
    }
    if (l > 0) {
      // ReLU derivative, using the stored post-activation values.
      for (std::size_t r = 0; r < x.rows(); ++r) {
        auto xr = x.row(r);
        auto pr = prev_delta.row(r);
        for (std::size_t i = 0; i < in_dim; ++i) {
          if (xr[i] <= 0.0) pr[i] = 0.0;
        }
      }
    }
    delta = std::move(prev_delta);
  }
  return grad;
}

LossAndGradient backward(const ModelParams& params, const Batch& batch) {
  const Matrix logits = forward(params, batch.features);
  auto [loss, probs] = softmax_cross_entropy(logits, batch.labels);
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  Matrix dlogits = std::move(probs);
  for (std::size_t r = 0; r < dlogits.rows(); ++r) {
    auto row = dlogits.row(r);
    row[static_cast<std::size_t>(batch.labels[r])] -= 1.0;
    for (double& v : row) v *= inv_n;
  }
  return {loss, backward_from_output(params, batch.features, dlogits)};
}

namespace {

void check_update(const ModelParams& params, const Gradient& grad, double lr) {
  if (grad.values.size() != params.values.size()) {
    throw ShapeError("optimizer: gradient length does not match parameters");
  }
  if (!(lr >= 0.0) || !std::isfinite(lr)) {
    throw ConfigError("optimizer: learning rate must be finite and >= 0");
  }
  for (double g : grad.values) {
    if (!std::isfinite(g)) throw NumericError("optimizer: non-finite gradient");
  }
}

}  // namespace

ModelParams sgd_step(const ModelParams& params, const Gradient& grad,
                     double lr) {
  check_update(params, grad, lr);
  ModelParams out = params;
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    out.values[i] -= lr * grad.values[i];
  }
  return out;
}

ModelParams adam_step(const ModelParams& params, const Gradient& grad,
                      AdamState& state, double lr, const AdamConfig& config) {
  check_update(params, grad, lr);
  const std::size_t n = params.values.size();
  if (state.first_moment.empty() && state.second_moment.empty()) {
    state.first_moment.assign(n, 0.0);
    state.second_moment.assign(n, 0.0);
    state.step = 0;
  }
  if (state.first_moment.size() != n || state.second_moment.size() != n) {
    throw ShapeError("adam: optimizer state does not match parameters");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  ModelParams out = params;
  for (std::size_t i = 0; i < n; ++i) {
    const double g = grad.values[i];
    double& m = state.first_moment[i];
    double& v = state.second_moment[i];
    m = config.beta1 * m + (1.0 - config.beta1) * g;
    v = config.beta2 * v + (1.0 - config.beta2) * g * g;
    out.values[i] -= lr * (m / c1) / (std::sqrt(v / c2) + config.epsilon);
  }
  return out;
}

double l2_distance(const ModelParams& a, const ModelParams& b) {
  if (a.values.size() != b.values.size()) {
    throw ShapeError("l2_distance: parameter vectors differ in length");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    const double d = a.values[i] - b.values[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

}  // namespace stackfl

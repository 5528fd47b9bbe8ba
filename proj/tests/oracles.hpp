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

// Reference implementations used by the unit and acceptance tests. They are
// written the slow, obvious way and share no code with the library.

#ifndef STACKFL_TESTS_ORACLES_HPP_
#define STACKFL_TESTS_ORACLES_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "stackfl/matrix.hpp"
#include "stackfl/nn.hpp"

namespace oracle {

// O(n^2) Mann-Whitney over explicit pairs; ties count 1/2.
inline double pair_auc(std::span<const double> scores, std::span<const int> labels) {
  double wins = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      pairs += 1.0;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / pairs;
}

// Per present class, pair_auc on that column vs rest, then the plain mean.
inline double pair_macro_auc(const stackfl::Matrix& probs, std::span<const int> labels) {
  double sum = 0.0;
  int present = 0;
  for (std::size_t k = 0; k < probs.cols(); ++k) {
    std::vector<double> col;
    std::vector<int> bin;
    bool any = false;
    for (std::size_t i = 0; i < probs.rows(); ++i) {
      col.push_back(probs(i, k));
      bin.push_back(labels[i] == static_cast<int>(k) ? 1 : 0);
      any = any || bin.back() == 1;
    }
    if (!any) continue;
    sum += pair_auc(col, bin);
    ++present;
  }
  return sum / present;
}

// Mean cross-entropy straight from the parameter layout, long double math.
inline double scalar_loss(const stackfl::ModelParams& p, const stackfl::Matrix& x,
                          std::span<const int> y) {
  long double total = 0.0L;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    std::vector<long double> act(x.cols());
    for (std::size_t c = 0; c < x.cols(); ++c) act[c] = x(r, c);
    for (std::size_t l = 0; l < p.layer_shapes.size(); ++l) {
      const auto [in, out] = p.layer_shapes[l];
      std::size_t off = 0;
      for (std::size_t m = 0; m < l; ++m) {
        off += p.layer_shapes[m].in_dim * p.layer_shapes[m].out_dim +
               p.layer_shapes[m].out_dim;
      }
      std::vector<long double> next(out);
      for (std::size_t o = 0; o < out; ++o) {
        long double z = p.values[off + in * out + o];
        for (std::size_t i = 0; i < in; ++i) z += p.values[off + o * in + i] * act[i];
        next[o] = (l + 1 < p.layer_shapes.size() && z < 0) ? 0.0L : z;
      }
      act = std::move(next);
    }
    long double mx = *std::max_element(act.begin(), act.end());
    long double s = 0.0L;
    for (long double a : act) s += std::exp(a - mx);
    total += -(act[static_cast<std::size_t>(y[r])] - mx - std::log(s));
  }
  return static_cast<double>(total / static_cast<long double>(x.rows()));
}

// Central difference of scalar_loss along coordinate k.
inline double fd_grad(stackfl::ModelParams p, const stackfl::Matrix& x,
                      std::span<const int> y, std::size_t k, double h) {
  const double v = p.values[k];
  p.values[k] = v + h;
  const double up = scalar_loss(p, x, y);
  p.values[k] = v - h;
  const double down = scalar_loss(p, x, y);
  return (up - down) / (2.0 * h);
}

inline double rel_err(double a, double n) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-6});
}

// sum_k C_k w_k / sum_k C_k, one coordinate at a time.
inline std::vector<double> direct_sum(const std::vector<std::vector<double>>& models,
                                      const std::vector<double>& c) {
  double total = 0.0;
  for (double v : c) total += v;
  std::vector<double> out(models.front().size(), 0.0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < models.size(); ++k) s += c[k] * models[k][i];
    out[i] = s / total;
  }
  return out;
}

inline stackfl::Matrix random_matrix(std::size_t rows, std::size_t cols,
                                     std::mt19937_64& rng, double lo = -1.0,
                                     double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  stackfl::Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = u(rng);
  }
  return m;
}

}  // namespace oracle

#endif  // STACKFL_TESTS_ORACLES_HPP_

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

#include "stackfl/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "stackfl/error.hpp"

namespace stackfl {

double auc_binary(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw ShapeError("auc_binary: scores and labels differ in length");
  }
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  double pos_rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    // 1-based ranks i+1..j share their average.
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      const int y = labels[order[k]];
      if (y != 0 && y != 1) throw InputError("auc_binary: labels must be 0/1");
      if (y == 1) {
        pos_rank_sum += avg_rank;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw UndefinedMetricError("auc_binary: need both classes present");
  }
  const double np = static_cast<double>(n_pos);
  const double u = pos_rank_sum - np * (np + 1.0) / 2.0;
  return u / (np * static_cast<double>(n_neg));
}

double auc_macro_ovr(const Matrix& probs, std::span<const int> labels) {
  if (probs.rows() != labels.size()) {
    throw ShapeError("auc_macro_ovr: row/label count mismatch");
  }
  const std::size_t k = probs.cols();
  std::vector<std::size_t> counts(k, 0);
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= k) {
      throw InputError("auc_macro_ovr: label out of range");
    }
    ++counts[static_cast<std::size_t>(y)];
  }
  std::vector<double> column(probs.rows());
  std::vector<int> is_class(probs.rows());
  double total = 0.0;
  int present = 0;
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] == 0) continue;
    ++present;
    for (std::size_t r = 0; r < probs.rows(); ++r) {
      column[r] = probs(r, c);
      is_class[r] = labels[r] == static_cast<int>(c) ? 1 : 0;
    }
    // A class that is every sample has no negatives; caught below.
    if (counts[c] == labels.size()) break;
    total += auc_binary(column, is_class);
  }
  if (present < 2) {
    throw UndefinedMetricError("auc_macro_ovr: need at least two classes");
  }
  return total / present;
}

double auc_micro_ovr(const Matrix& probs, std::span<const int> labels) {
  if (probs.rows() != labels.size()) {
    throw ShapeError("auc_micro_ovr: row/label count mismatch");
  }
  std::vector<double> scores;
  std::vector<int> hits;
  scores.reserve(probs.data().size());
  hits.reserve(probs.data().size());
  for (std::size_t r = 0; r < probs.rows(); ++r) {
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= probs.cols()) {
      throw InputError("auc_micro_ovr: label out of range");
    }
    for (std::size_t c = 0; c < probs.cols(); ++c) {
      scores.push_back(probs(r, c));
      hits.push_back(labels[r] == static_cast<int>(c) ? 1 : 0);
    }
  }
  return auc_binary(scores, hits);
}

double auc_ovr(const Matrix& probs, std::span<const int> labels,
               AucAverage average) {
  return average == AucAverage::kMacro ? auc_macro_ovr(probs, labels)
                                       : auc_micro_ovr(probs, labels);
}

std::vector<double> precision_per_class(std::span<const int> pred_labels,
                                        std::span<const int> true_labels,
                                        int n_classes) {
  if (pred_labels.size() != true_labels.size()) {
    throw ShapeError("precision: prediction/label count mismatch");
  }
  const auto k = static_cast<std::size_t>(n_classes);
  std::vector<std::size_t> tp(k, 0);
  std::vector<std::size_t> predicted(k, 0);
  for (std::size_t i = 0; i < pred_labels.size(); ++i) {
    const int p = pred_labels[i];
    const int t = true_labels[i];
    if (p < 0 || p >= n_classes || t < 0 || t >= n_classes) {
      throw InputError("precision: label out of range");
    }
    ++predicted[static_cast<std::size_t>(p)];
    if (p == t) ++tp[static_cast<std::size_t>(p)];
  }
  std::vector<double> out(k, 0.0);
  for (std::size_t c = 0; c < k; ++c) {
    if (predicted[c] > 0) {
      out[c] = static_cast<double>(tp[c]) / static_cast<double>(predicted[c]);
    }
  }
  return out;
}

std::vector<int> argmax_rows(const Matrix& m) {
  std::vector<int> out(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    out[r] = static_cast<int>(std::max_element(row.begin(), row.end()) -
                              row.begin());
  }
  return out;
}

EvalReport evaluate(const ModelParams& params, const Batch& batch,
                    AucAverage average) {
  const Matrix logits = forward(params, batch.features);
  auto [loss, probs] = softmax_cross_entropy(logits, batch.labels);
  EvalReport report;
  report.loss = loss;
  report.n_samples = batch.size();
  report.per_class_precision =
      precision_per_class(argmax_rows(probs), batch.labels,
                          static_cast<int>(params.output_dim()));
  report.auc = auc_ovr(probs, batch.labels, average);
  return report;
}

}  // namespace stackfl

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

#ifndef STACKFL_METRICS_HPP_
#define STACKFL_METRICS_HPP_

#include <cstddef>
#include <span>
#include <vector>

#include "stackfl/matrix.hpp"
#include "stackfl/nn.hpp"

namespace stackfl {

enum class AucAverage { kMacro, kMicro };

struct EvalReport {
  double auc = 0.5;
  double loss = 0.0;
  std::vector<double> per_class_precision;
  std::size_t n_samples = 0;
};

// Mann-Whitney U / (n_pos * n_neg) with ties counted 1/2, computed from
// average ranks. labels are 0/1. Throws UndefinedMetricError when only one
// class is present.
double auc_binary(std::span<const double> scores, std::span<const int> labels);

// Unweighted mean over present classes of the one-vs-rest AUC of each
// probability column. Needs at least two classes present.
double auc_macro_ovr(const Matrix& probs, std::span<const int> labels);

// Pools every (sample, class) cell into a single binary problem.
double auc_micro_ovr(const Matrix& probs, std::span<const int> labels);

double auc_ovr(const Matrix& probs, std::span<const int> labels,
               AucAverage average);

// TP_c / (TP_c + FP_c); a class that is never predicted scores 0.
std::vector<double> precision_per_class(std::span<const int> pred_labels,
                                        std::span<const int> true_labels,
                                        int n_classes);

std::vector<int> argmax_rows(const Matrix& m);

// Loss, AUC and precision of `params` on `batch`.
EvalReport evaluate(const ModelParams& params, const Batch& batch,
                    AucAverage average = AucAverage::kMacro);

}  // namespace stackfl

#endif  // STACKFL_METRICS_HPP_

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

#ifndef STACKFL_DATA_HPP_
#define STACKFL_DATA_HPP_

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stackfl/matrix.hpp"
#include "stackfl/nn.hpp"
#include "stackfl/rng.hpp"

namespace stackfl {

struct Dataset {
  Matrix features;          // n x d, image-like data lives in [0, 1]
  std::vector<int> labels;  // n entries in [0, n_classes)
  int n_classes = 0;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return features.cols(); }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

// Throws ConfigError when a Dataset invariant is broken.
void validate(const Dataset& dataset);

Dataset subset(const Dataset& dataset, std::span<const std::size_t> indices);
Batch to_batch(const Dataset& dataset);

// Per-class sample counts, length n_classes.
std::vector<std::size_t> class_counts(const Dataset& dataset);

struct Partition {
  std::vector<std::vector<std::size_t>> node_indices;
};

struct PartitionOptions {
  std::size_t min_samples_per_node = 10;
  std::size_t min_classes_per_node = 2;
  int max_retries = 100;
};

// One Dirichlet(concentration) draw via normalized Gamma variates.
std::vector<double> sample_dirichlet(std::span<const double> concentration,
                                     Rng& rng);

// Label-skewed split of `labels` across nodes. For each class a proportion
// vector p_c ~ Dirichlet(alpha * base) is drawn, base being target_sizes (or
// uniform), and the shuffled class members are cut by p_c. Every index is
// assigned exactly once. Draws leaving a node with too few samples or classes
// are redrawn, up to options.max_retries times.
Partition dirichlet_partition(
    std::span<const int> labels, std::size_t n_nodes, double alpha,
    const std::optional<std::vector<double>>& target_sizes,
    std::uint64_t seed, const PartitionOptions& options = {});

// The N(0, sigma^2) matrix that add_gaussian_noise adds for this seed.
Matrix gaussian_noise(std::size_t rows, std::size_t cols, double sigma,
                      std::uint64_t node_seed);

// clip(features + N(0, sigma^2), 0, 1); sigma == 0 returns the input as is.
Matrix add_gaussian_noise(const Matrix& features, double sigma,
                          std::uint64_t node_seed);

// K unit-variance Gaussian blobs with pairwise center distance class_sep,
// min-max scaled per feature into [0, 1]. Classes are balanced.
Dataset synthetic_dataset(std::size_t n, std::size_t d, int n_classes,
                          double class_sep, std::uint64_t seed);

// Binary format, little-endian:
//   "SFD1" | u32 n | u32 d | u32 K | n*d float32 row-major | n uint16 labels
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

struct SplitResult {
  Dataset train;
  Dataset val;
  Dataset test;
  bool stratified = true;
  std::vector<std::string> warnings;
};

// Seeded shuffle then contiguous cut, stratified per class. Falls back to an
// unstratified split (with a warning) when some class has fewer than 3
// samples.
SplitResult split(const Dataset& dataset,
                  const std::array<double, 3>& fractions, std::uint64_t seed);

}  // namespace stackfl

#endif  // STACKFL_DATA_HPP_

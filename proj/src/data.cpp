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

#include "stackfl/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>

#include "stackfl/error.hpp"

namespace stackfl {

namespace {

constexpr char kMagic[4] = {'S', 'F', 'D', '1'};

// Stream tags for derive_seed.
constexpr std::uint64_t kNoiseStream = 0x6e6f697365ULL;
constexpr std::uint64_t kSyntheticStream = 0x73796e7468ULL;
constexpr std::uint64_t kSplitStream = 0x73706c6974ULL;
constexpr std::uint64_t kPartitionStream = 0x7061727469ULL;

void put_u32(std::ostream& out, std::uint32_t v) {
  const char bytes[4] = {static_cast<char>(v & 0xff),
                         static_cast<char>((v >> 8) & 0xff),
                         static_cast<char>((v >> 16) & 0xff),
                         static_cast<char>((v >> 24) & 0xff)};
  out.write(bytes, 4);
}

void put_u16(std::ostream& out, std::uint16_t v) {
  const char bytes[2] = {static_cast<char>(v & 0xff),
                         static_cast<char>((v >> 8) & 0xff)};
  out.write(bytes, 2);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) {
    throw FormatError("dataset: truncated file");
  }
  return static_cast<std::uint32_t>(b[0]) |
         (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint16_t get_u16(std::istream& in) {
  unsigned char b[2];
  if (!in.read(reinterpret_cast<char*>(b), 2)) {
    throw FormatError("dataset: truncated file");
  }
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

std::size_t distinct_labels(std::span<const int> labels,
                            std::span<const std::size_t> indices) {
  std::set<int> seen;
  for (std::size_t i : indices) seen.insert(labels[i]);
  return seen.size();
}

// Splits `total` items into integer counts proportional to `weights` by the
// largest-remainder rule; ties go to the lower index.
std::vector<std::size_t> apportion(std::size_t total,
                                   std::span<const double> weights) {
  const double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<std::size_t> counts(weights.size(), 0);
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t j = 0; j < weights.size(); ++j) {
    const double exact = static_cast<double>(total) * weights[j] / sum;
    counts[j] = static_cast<std::size_t>(std::floor(exact));
    assigned += counts[j];
    remainders.emplace_back(exact - std::floor(exact), j);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; assigned < total; ++k, ++assigned) {
    ++counts[remainders[k % remainders.size()].second];
  }
  return counts;
}

}  // namespace

void validate(const Dataset& dataset) {
  if (dataset.labels.empty()) throw ConfigError("dataset: no samples");
  if (dataset.features.rows() != dataset.labels.size()) {
    throw ConfigError("dataset: feature rows and label count differ");
  }
  if (dataset.n_classes < 1) throw ConfigError("dataset: n_classes < 1");
  for (int y : dataset.labels) {
    if (y < 0 || y >= dataset.n_classes) {
      throw ConfigError("dataset: label " + std::to_string(y) +
                        " outside [0, n_classes)");
    }
  }
  for (double v : dataset.features.data()) {
    if (std::isnan(v)) throw ConfigError("dataset: NaN feature");
  }
}

Dataset subset(const Dataset& dataset, std::span<const std::size_t> indices) {
  Dataset out;
  out.features = dataset.features.select_rows(indices);
  out.labels.reserve(indices.size());
  for (std::size_t i : indices) out.labels.push_back(dataset.labels[i]);
  out.n_classes = dataset.n_classes;
  return out;
}

Batch to_batch(const Dataset& dataset) {
  return Batch{dataset.features, dataset.labels};
}

std::vector<std::size_t> class_counts(const Dataset& dataset) {
  std::vector<std::size_t> counts(static_cast<std::size_t>(dataset.n_classes), 0);
  for (int y : dataset.labels) ++counts[static_cast<std::size_t>(y)];
  return counts;
}

std::vector<double> sample_dirichlet(std::span<const double> concentration,
                                     Rng& rng) {
  std::vector<double> p(concentration.size());
  // Very small concentrations can underflow every Gamma draw to zero.
  for (int attempt = 0; attempt < 1000; ++attempt) {
    double sum = 0.0;
    for (std::size_t j = 0; j < concentration.size(); ++j) {
      std::gamma_distribution<double> gamma(concentration[j], 1.0);
      p[j] = gamma(rng);
      sum += p[j];
    }
    if (sum > 0.0 && std::isfinite(sum)) {
      for (double& v : p) v /= sum;
      return p;
    }
  }
  throw NumericError("dirichlet: every draw underflowed");
}

Partition dirichlet_partition(
    std::span<const int> labels, std::size_t n_nodes, double alpha,
    const std::optional<std::vector<double>>& target_sizes, std::uint64_t seed,
    const PartitionOptions& options) {
  if (labels.empty()) throw ConfigError("partition: empty label vector");
  if (n_nodes < 2) throw ConfigError("partition: need at least 2 nodes");
  if (!(alpha > 0.0) || !std::isfinite(alpha)) {
    throw ConfigError("partition: alpha must be positive and finite");
  }
  std::vector<double> base(n_nodes, 1.0 / static_cast<double>(n_nodes));
  if (target_sizes) {
    if (target_sizes->size() != n_nodes) {
      throw ConfigError("partition: target_sizes length != n_nodes");
    }
    double sum = 0.0;
    for (double s : *target_sizes) {
      if (!(s > 0.0)) throw ConfigError("partition: target sizes must be > 0");
      sum += s;
    }
    if (std::abs(sum - 1.0) > 1e-6) {
      throw ConfigError("partition: target_sizes must sum to 1");
    }
    base = *target_sizes;
  }
  std::vector<double> concentration(n_nodes);
  for (std::size_t j = 0; j < n_nodes; ++j) concentration[j] = alpha * base[j];

  const int max_label = *std::max_element(labels.begin(), labels.end());
  if (*std::min_element(labels.begin(), labels.end()) < 0) {
    throw ConfigError("partition: negative label");
  }
  std::vector<std::vector<std::size_t>> by_class(
      static_cast<std::size_t>(max_label) + 1);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    by_class[static_cast<std::size_t>(labels[i])].push_back(i);
  }

  Rng rng(derive_seed(seed, {kPartitionStream}));
  for (int attempt = 0; attempt <= options.max_retries; ++attempt) {
    Partition part;
    part.node_indices.assign(n_nodes, {});
    for (auto members : by_class) {
      if (members.empty()) continue;
      std::shuffle(members.begin(), members.end(), rng);
      const auto p = sample_dirichlet(concentration, rng);
      const std::size_t n_c = members.size();
      double cum = 0.0;
      std::size_t start = 0;
      for (std::size_t j = 0; j < n_nodes; ++j) {
        cum += p[j];
        std::size_t stop =
            j + 1 == n_nodes
                ? n_c
                : std::min(n_c, static_cast<std::size_t>(
                                    std::llround(cum * static_cast<double>(n_c))));
        stop = std::max(stop, start);
        auto& dst = part.node_indices[j];
        dst.insert(dst.end(), members.begin() + static_cast<std::ptrdiff_t>(start),
                   members.begin() + static_cast<std::ptrdiff_t>(stop));
        start = stop;
      }
    }
    bool ok = true;
    for (const auto& node : part.node_indices) {
      if (node.size() < options.min_samples_per_node ||
          distinct_labels(labels, node) < options.min_classes_per_node) {
        ok = false;
        break;
      }
    }
    if (ok) return part;
  }
  throw ConfigError("partition: no valid draw after " +
                    std::to_string(options.max_retries) +
                    " retries; raise alpha or the sample count");
}

Matrix gaussian_noise(std::size_t rows, std::size_t cols, double sigma,
                      std::uint64_t node_seed) {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) {
    throw ConfigError("noise: sigma must be finite and >= 0");
  }
  Matrix noise(rows, cols);
  if (sigma == 0.0) return noise;
  Rng rng(derive_seed(node_seed, {kNoiseStream}));
  std::normal_distribution<double> dist(0.0, sigma);
  for (double& v : noise.data()) v = dist(rng);
  return noise;
}

Matrix add_gaussian_noise(const Matrix& features, double sigma,
                          std::uint64_t node_seed) {
  Matrix noise = gaussian_noise(features.rows(), features.cols(), sigma,
                                node_seed);
  if (sigma == 0.0) return features;
  auto& out = noise.data();
  const auto& in = features.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::clamp(in[i] + out[i], 0.0, 1.0);
  }
  return noise;
}

Dataset synthetic_dataset(std::size_t n, std::size_t d, int n_classes,
                          double class_sep, std::uint64_t seed) {
  if (n_classes < 2 || d < 2 || n < static_cast<std::size_t>(n_classes)) {
    throw ConfigError("synthetic: need n >= K >= 2 and d >= 2");
  }
  if (!(class_sep >= 0.0) || !std::isfinite(class_sep)) {
    throw ConfigError("synthetic: class_sep must be finite and >= 0");
  }
  const auto k = static_cast<std::size_t>(n_classes);
  Rng rng(derive_seed(seed, {kSyntheticStream}));
  std::normal_distribution<double> normal(0.0, 1.0);

  // Scaled simplex vertices when d >= K (pairwise distance exactly
  // class_sep); otherwise random directions of the same radius.
  const double radius = class_sep / std::sqrt(2.0);
  Matrix centers(k, d);
  for (std::size_t c = 0; c < k; ++c) {
    if (d >= k) {
      centers(c, c) = radius;
    } else {
      double norm = 0.0;
      for (double& v : centers.row(c)) {
        v = normal(rng);
        norm += v * v;
      }
      norm = std::sqrt(norm);
      for (double& v : centers.row(c)) v *= radius / norm;
    }
  }

  Dataset ds;
  ds.n_classes = n_classes;
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) ds.labels[i] = static_cast<int>(i % k);
  std::shuffle(ds.labels.begin(), ds.labels.end(), rng);
  ds.features = Matrix(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    auto center = centers.row(static_cast<std::size_t>(ds.labels[i]));
    auto row = ds.features.row(i);
    for (std::size_t j = 0; j < d; ++j) row[j] = center[j] + normal(rng);
  }
  for (std::size_t j = 0; j < d; ++j) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t i = 0; i < n; ++i) {
      lo = std::min(lo, ds.features(i, j));
      hi = std::max(hi, ds.features(i, j));
    }
    const double range = hi - lo;
    for (std::size_t i = 0; i < n; ++i) {
      ds.features(i, j) = range > 0.0 ? (ds.features(i, j) - lo) / range : 0.5;
    }
  }
  return ds;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  validate(dataset);
  if (dataset.n_classes > 65536) {
    throw FormatError("dataset: more classes than uint16 labels can hold");
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("dataset: cannot open " + path.string());
  out.write(kMagic, 4);
  put_u32(out, static_cast<std::uint32_t>(dataset.size()));
  put_u32(out, static_cast<std::uint32_t>(dataset.dim()));
  put_u32(out, static_cast<std::uint32_t>(dataset.n_classes));
  for (double v : dataset.features.data()) {
    put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  for (int y : dataset.labels) put_u16(out, static_cast<std::uint16_t>(y));
  if (!out) throw IoError("dataset: write failed for " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("dataset: cannot open " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || !std::equal(magic, magic + 4, kMagic)) {
    throw FormatError("dataset: bad magic in " + path.string());
  }
  const std::uint32_t n = get_u32(in);
  const std::uint32_t d = get_u32(in);
  const std::uint32_t k = get_u32(in);
  if (n == 0 || d == 0 || k == 0 || k > 65536) {
    throw FormatError("dataset: degenerate header in " + path.string());
  }
  // Reject headers that promise more payload than the file holds before
  // allocating anything.
  const auto header_end = in.tellg();
  in.seekg(0, std::ios::end);
  const auto payload = static_cast<std::uint64_t>(in.tellg() - header_end);
  in.seekg(header_end);
  const std::uint64_t expected =
      4ULL * static_cast<std::uint64_t>(n) * d + 2ULL * n;
  if (payload != expected) {
    throw FormatError("dataset: payload size does not match header in " +
                      path.string());
  }
  Dataset ds;
  ds.n_classes = static_cast<int>(k);
  ds.features = Matrix(n, d);
  for (double& v : ds.features.data()) {
    v = static_cast<double>(std::bit_cast<float>(get_u32(in)));
  }
  ds.labels.resize(n);
  for (int& y : ds.labels) {
    y = get_u16(in);
    if (static_cast<std::uint32_t>(y) >= k) {
      throw FormatError("dataset: label out of range in " + path.string());
    }
  }
  return ds;
}

SplitResult split(const Dataset& dataset,
                  const std::array<double, 3>& fractions, std::uint64_t seed) {
  validate(dataset);
  for (double f : fractions) {
    if (!(f >= 0.0)) throw ConfigError("split: negative fraction");
  }
  if (std::abs(fractions[0] + fractions[1] + fractions[2] - 1.0) > 1e-9) {
    throw ConfigError("split: fractions must sum to 1");
  }
  const std::size_t n = dataset.size();
  const auto totals = apportion(n, fractions);
  Rng rng(derive_seed(seed, {kSplitStream}));

  SplitResult result;
  std::array<std::vector<std::size_t>, 3> parts;

  const auto counts = class_counts(dataset);
  const bool stratify = std::none_of(counts.begin(), counts.end(), [](auto c) {
    return c > 0 && c < 3;
  });

  if (!stratify) {
    result.stratified = false;
    result.warnings.push_back(
        "split: a class has fewer than 3 samples; falling back to an "
        "unstratified split");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::size_t pos = 0;
    for (std::size_t s = 0; s < 3; ++s) {
      parts[s].assign(order.begin() + static_cast<std::ptrdiff_t>(pos),
                      order.begin() + static_cast<std::ptrdiff_t>(pos + totals[s]));
      pos += totals[s];
    }
  } else {
    std::vector<std::vector<std::size_t>> by_class(counts.size());
    for (std::size_t i = 0; i < n; ++i) {
      by_class[static_cast<std::size_t>(dataset.labels[i])].push_back(i);
    }
    for (auto& members : by_class) std::shuffle(members.begin(), members.end(), rng);

    // Per-class quotas that add up exactly to the global split sizes: train
    // first, then val out of what each class has left, test takes the rest.
    std::vector<double> weights(by_class.size());
    for (std::size_t c = 0; c < by_class.size(); ++c) {
      weights[c] = static_cast<double>(by_class[c].size());
    }
    const auto train_q = apportion(totals[0], weights);
    for (std::size_t c = 0; c < by_class.size(); ++c) {
      weights[c] = static_cast<double>(by_class[c].size() - train_q[c]) + 1e-12;
    }
    auto val_q = apportion(totals[1], weights);
    for (std::size_t c = 0; c < by_class.size(); ++c) {
      // Largest-remainder can overshoot a nearly exhausted class by one;
      // move the surplus to the class with the most room.
      while (train_q[c] + val_q[c] > by_class[c].size()) {
        --val_q[c];
        std::size_t best = c;
        std::size_t room = 0;
        for (std::size_t o = 0; o < by_class.size(); ++o) {
          const std::size_t r = by_class[o].size() - train_q[o] - val_q[o];
          if (r > room) {
            room = r;
            best = o;
          }
        }
        ++val_q[best];
      }
    }
    for (std::size_t c = 0; c < by_class.size(); ++c) {
      const auto& m = by_class[c];
      const auto a = static_cast<std::ptrdiff_t>(train_q[c]);
      const auto b = static_cast<std::ptrdiff_t>(train_q[c] + val_q[c]);
      parts[0].insert(parts[0].end(), m.begin(), m.begin() + a);
      parts[1].insert(parts[1].end(), m.begin() + a, m.begin() + b);
      parts[2].insert(parts[2].end(), m.begin() + b, m.end());
    }
  }
  result.train = subset(dataset, parts[0]);
  result.val = subset(dataset, parts[1]);
  result.test = subset(dataset, parts[2]);
  return result;
}

}  // namespace stackfl

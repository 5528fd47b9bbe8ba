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

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "stackfl/error.hpp"
#include "stackfl/harness.hpp"

namespace stackfl {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size() || !std::isfinite(d)) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config: '" + key + "' expects a number, got '" + v + "'");
  }
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) {
    throw ConfigError("config: '" + key + "' expects a non-negative integer, got '" +
                      v + "'");
  }
  return out;
}

int to_int(const std::string& key, const std::string& v) {
  int out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) {
    throw ConfigError("config: '" + key + "' expects an integer, got '" + v + "'");
  }
  return out;
}

// Shortest %g form that reads back to the same double.
std::string fmt_double(double v) {
  char buf[64];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

template <typename T, typename F>
std::string join(const std::vector<T>& items, F&& fmt) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ',';
    out += fmt(items[i]);
  }
  return out;
}

ConfigKey real_key(std::string name, std::string help,
                   double ExperimentConfig::*field) {
  return {name, std::move(help),
          [name, field](ExperimentConfig& c, const std::string& v) {
            c.*field = to_double(name, v);
          },
          [field](const ExperimentConfig& c) { return fmt_double(c.*field); }};
}

template <typename Get>
ConfigKey real_ref(std::string name, std::string help, Get get) {
  return {name, std::move(help),
          [name, get](ExperimentConfig& c, const std::string& v) {
            get(c) = to_double(name, v);
          },
          [get](const ExperimentConfig& c) {
            return fmt_double(get(c));
          }};
}

template <typename Get>
ConfigKey size_ref(std::string name, std::string help, Get get) {
  return {name, std::move(help),
          [name, get](ExperimentConfig& c, const std::string& v) {
            get(c) = static_cast<std::size_t>(to_u64(name, v));
          },
          [get](const ExperimentConfig& c) {
            return std::to_string(get(c));
          }};
}

template <typename Get>
ConfigKey int_ref(std::string name, std::string help, Get get) {
  return {name, std::move(help),
          [name, get](ExperimentConfig& c, const std::string& v) {
            get(c) = to_int(name, v);
          },
          [get](const ExperimentConfig& c) {
            return std::to_string(get(c));
          }};
}

std::vector<ConfigKey> build_keys() {
  using C = ExperimentConfig;
  std::vector<ConfigKey> keys;
  keys.push_back({"data_path", "dataset file (SFD1 format); empty = synthetic",
                  [](C& c, const std::string& v) { c.data_path = v; },
                  [](const C& c) { return c.data_path; }});
  keys.push_back(size_ref("synthetic_n", "synthetic sample count",
                          [](auto& c) -> auto& { return c.synthetic_n; }));
  keys.push_back(size_ref("synthetic_d", "synthetic feature count",
                          [](auto& c) -> auto& { return c.synthetic_d; }));
  keys.push_back(int_ref("synthetic_classes", "synthetic class count",
                         [](auto& c) -> auto& { return c.synthetic_classes; }));
  keys.push_back(real_key("class_sep", "distance between synthetic class centers",
                          &C::class_sep));
  keys.push_back(size_ref("n_nodes", "number of nodes",
                          [](auto& c) -> auto& { return c.n_nodes; }));
  keys.push_back(
      {"target_sizes", "per-node share of the data, comma separated",
       [](C& c, const std::string& v) {
         c.target_sizes.clear();
         for (const auto& item : split_list(v)) {
           c.target_sizes.push_back(to_double("target_sizes", item));
         }
       },
       [](const C& c) { return join(c.target_sizes, fmt_double); }});
  keys.push_back(real_key("dirichlet_alpha", "Dirichlet concentration",
                          &C::dirichlet_alpha));
  keys.push_back(real_key("noise_sigma", "per-node Gaussian noise std",
                          &C::noise_sigma));
  keys.push_back(
      {"split_fractions", "train,val,test fractions",
       [](C& c, const std::string& v) {
         const auto items = split_list(v);
         if (items.size() != 3) {
           throw ConfigError("config: split_fractions needs three values");
         }
         for (std::size_t i = 0; i < 3; ++i) {
           c.split_fractions[i] = to_double("split_fractions", items[i]);
         }
       },
       [](const C& c) {
         return fmt_double(c.split_fractions[0]) + "," +
                fmt_double(c.split_fractions[1]) + "," +
                fmt_double(c.split_fractions[2]);
       }});
  keys.push_back({"strategy", "fedavg|pwfedavg|dswm|aswm (run)",
                  [](C& c, const std::string& v) { c.strategy = trim(v); },
                  [](const C& c) { return c.strategy; }});
  keys.push_back({"strategies", "comma separated strategy list (compare)",
                  [](C& c, const std::string& v) { c.strategies = split_list(v); },
                  [](const C& c) {
                    return join(c.strategies, [](const std::string& s) { return s; });
                  }});
  keys.push_back(int_ref("rounds", "global rounds T",
                         [](auto& c) -> auto& { return c.rounds; }));
  keys.push_back(int_ref("reps", "repetitions R",
                         [](auto& c) -> auto& { return c.reps; }));
  keys.push_back({"seed", "base seed; repetition r uses seed + r",
                  [](C& c, const std::string& v) { c.seed = to_u64("seed", v); },
                  [](const C& c) { return std::to_string(c.seed); }});
  keys.push_back(
      {"hidden_layers", "hidden layer widths of the local model, comma separated",
       [](C& c, const std::string& v) {
         c.hidden_layers.clear();
         for (const auto& item : split_list(v)) {
           c.hidden_layers.push_back(
               static_cast<std::size_t>(to_u64("hidden_layers", item)));
         }
       },
       [](const C& c) {
         return join(c.hidden_layers,
                     [](std::size_t h) { return std::to_string(h); });
       }});
  keys.push_back(int_ref("epochs", "local epochs per round",
                         [](auto& c) -> auto& { return c.training.epochs; }));
  keys.push_back(size_ref("batch_size", "local mini-batch size",
                          [](auto& c) -> auto& { return c.training.batch_size; }));
  keys.push_back(real_ref("lr", "local SGD learning rate",
                          [](auto& c) -> auto& { return c.training.lr; }));
  keys.push_back(real_ref("c_min", "lower contribution weight bound",
                          [](auto& c) -> auto& { return c.bounds.min; }));
  keys.push_back(real_ref("c_max", "upper contribution weight bound",
                          [](auto& c) -> auto& { return c.bounds.max; }));
  keys.push_back(
      {"auc_average", "macro|micro one-vs-rest AUC",
       [](C& c, const std::string& v) {
         const auto t = trim(v);
         if (t == "macro") {
           c.auc_average = AucAverage::kMacro;
         } else if (t == "micro") {
           c.auc_average = AucAverage::kMicro;
         } else {
           throw ConfigError("config: auc_average must be macro or micro");
         }
       },
       [](const C& c) {
         return std::string(c.auc_average == AucAverage::kMacro ? "macro"
                                                                : "micro");
       }});
  keys.push_back(
      {"candidates", "grid of candidate weights, comma separated",
       [](C& c, const std::string& v) {
         c.strategy_config.candidates.clear();
         for (const auto& item : split_list(v)) {
           c.strategy_config.candidates.push_back(to_double("candidates", item));
         }
       },
       [](const C& c) { return join(c.strategy_config.candidates, fmt_double); }});
  keys.push_back(size_ref("replay_capacity", "experience replay capacity",
                          [](auto& c) -> auto& {
                            return c.strategy_config.aswm.replay_capacity;
                          }));
  keys.push_back(size_ref("replay_batch", "replay sample size per policy update",
                          [](auto& c) -> auto& {
                            return c.strategy_config.aswm.replay_batch;
                          }));
  keys.push_back(int_ref("warmup_rounds", "rounds that apply grid weights",
                         [](auto& c) -> auto& {
                           return c.strategy_config.aswm.warmup_rounds;
                         }));
  keys.push_back(int_ref("policy_updates", "policy updates per round",
                         [](auto& c) -> auto& {
                           return c.strategy_config.aswm.updates_per_round;
                         }));
  keys.push_back(size_ref("policy_hidden", "hidden width of policy networks",
                          [](auto& c) -> auto& { return c.strategy_config.aswm.hidden; }));
  keys.push_back(real_ref("lr_actor", "actor Adam learning rate",
                          [](auto& c) -> auto& {
                            return c.strategy_config.aswm.train.lr_actor;
                          }));
  keys.push_back(real_ref("lr_critic", "critic Adam learning rate",
                          [](auto& c) -> auto& {
                            return c.strategy_config.aswm.train.lr_critic;
                          }));
  keys.push_back(real_ref("anticipation_weight",
                          "loss weight of the leader's anticipation heads",
                          [](auto& c) -> auto& {
                            return c.strategy_config.aswm.train.anticipation_weight;
                          }));
  keys.push_back(real_ref("explore_prob", "initial exploration probability",
                          [](auto& c) -> auto& {
                            return c.strategy_config.aswm.explore_prob;
                          }));
  keys.push_back(real_ref("explore_decay", "per-round exploration decay",
                          [](auto& c) -> auto& {
                            return c.strategy_config.aswm.explore_decay;
                          }));
  keys.push_back(real_ref("explore_width", "half-width of exploration jitter",
                          [](auto& c) -> auto& {
                            return c.strategy_config.aswm.explore_width;
                          }));
  keys.push_back({"out", "output directory",
                  [](C& c, const std::string& v) { c.out = trim(v); },
                  [](const C& c) { return c.out; }});
  return keys;
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = build_keys();
  return keys;
}

void apply_config_value(ExperimentConfig& config, const std::string& key,
                        const std::string& value) {
  for (const auto& k : config_keys()) {
    if (k.name == key) {
      k.set(config, trim(value));
      return;
    }
  }
  throw ConfigError("config: unknown key '" + key + "'");
}

ExperimentConfig parse_config(std::string_view text, ExperimentConfig base) {
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) {
      line.erase(hash);
    }
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config: line " + std::to_string(line_no) +
                        ": expected key = value");
    }
    apply_config_value(base, trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  return base;
}

ExperimentConfig load_config(const std::filesystem::path& path,
                             ExperimentConfig base) {
  std::ifstream in(path);
  if (!in) throw IoError("config: cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

std::string dump_config(const ExperimentConfig& config) {
  std::string out;
  for (const auto& k : config_keys()) {
    out += k.name + " = " + k.get(config) + "\n";
  }
  return out;
}

}  // namespace stackfl

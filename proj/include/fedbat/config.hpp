// Copyright 2026 The fedbat Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef FEDBAT_CONFIG_HPP
#define FEDBAT_CONFIG_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fedbat/codec.hpp"
#include "fedbat/dataset.hpp"

namespace fedbat {

// Stock experiment protocol.
inline constexpr double kDefaultRho = 6.0;
inline constexpr double kDefaultWarmupRatio = 0.5;
inline constexpr double kDefaultLearningRate = 0.1;
inline constexpr int kDefaultBatchSize = 64;
inline constexpr int kDefaultClientsPerRound = 10;

struct DatasetConfig {
  std::string kind = "blobs";  // blobs | idx
  // blobs
  Eigen::Index n = 5000;
  int dim = 32;
  int classes = 10;
  double spread = 0.3;
  Eigen::Index test_n = 1000;
  // idx
  std::string train_images, train_labels, test_images, test_labels;
};

struct ModelConfig {
  std::string kind = "mlp";  // logreg | mlp
  std::vector<int> hidden = {64};
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  int rounds = 100;
  CodecKind algorithm = CodecKind::kFedBat;
  CodecParams codec;  // defaults resolved per algorithm
  int n_clients = 30;
  int clients_per_round = kDefaultClientsPerRound;
  int local_steps = 10;
  int local_epochs = 0;  // > 0 overrides local_steps via mean shard size
  int batch_size = kDefaultBatchSize;
  double lr = kDefaultLearningRate;
  double warmup_ratio = kDefaultWarmupRatio;
  double rho = kDefaultRho;
  int eval_every = 1;
  std::string out_dir = "fedbat-out";
  bool dump_messages = false;

  DatasetConfig dataset;
  std::string partition_scheme = "iid";  // iid | dirichlet | label-shard
  double dirichlet_beta = 0.3;
  int labels_per_client = 3;
  ModelConfig model;

  void validate() const;  // throws ConfigError naming the offending field
};

// Line-oriented [section] / key = value format. '#' starts a comment.
// Unknown keys are rejected so typos cannot silently fall back to defaults.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config_file(const std::string& path);

// "section.key=value" override, applied after the file.
void apply_override(std::map<std::string, std::string>& kv,
                    const std::string& assignment);
ExperimentConfig parse_config_text(const std::string& text,
                                   const std::vector<std::string>& overrides);

// Full resolved config, reloadable; loading the echo reproduces the run.
std::string echo_config(const ExperimentConfig& cfg);

}  // namespace fedbat

#endif  // FEDBAT_CONFIG_HPP

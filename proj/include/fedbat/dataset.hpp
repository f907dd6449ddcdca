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

#ifndef FEDBAT_DATASET_HPP
#define FEDBAT_DATASET_HPP

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "fedbat/rng.hpp"
#include "fedbat/tensor.hpp"

namespace fedbat {

struct LabeledDataset {
  Mat features;  // n x d, values in [0, 1]
  std::vector<int> labels;
  int num_classes = 0;

  Eigen::Index size() const { return features.rows(); }
  void validate() const;
};

// IDX file pair (big-endian headers, magic 0x803 for images, 0x801 for
// labels). Pixels are scaled to [0, 1].
LabeledDataset load_idx(const std::string& images_path,
                        const std::string& labels_path);

// c seeded Gaussian clusters with balanced labels, min-max normalized per
// dimension. spread = 0 gives zero within-class variance.
LabeledDataset synth_blobs(Eigen::Index n, int dim, int classes, double spread,
                           std::uint64_t seed);

// Deterministic seeded shuffle split into (train, test).
std::pair<LabeledDataset, LabeledDataset> split_train_test(
    const LabeledDataset& data, Eigen::Index n_test, std::uint64_t seed);

enum class PartitionScheme { kIid, kDirichlet, kLabelShard };

struct PartitionSpec {
  PartitionScheme scheme = PartitionScheme::kIid;
  int n_clients = 1;
  std::uint64_t seed = 0;
  double beta = 0.3;         // dirichlet concentration
  int labels_per_client = 3; // label-shard
};

// Index shards: disjoint, covering, every shard nonempty (a sample is moved
// from the largest shard if a draw leaves one empty).
std::vector<std::vector<int>> partition(const LabeledDataset& data,
                                        const PartitionSpec& spec);

struct PartitionStats {
  std::vector<std::size_t> sizes;
  std::vector<std::vector<int>> label_counts;  // per client, per label
  double mean_pairwise_tv = 0.0;  // heterogeneity of label distributions
};

PartitionStats partition_stats(const std::vector<std::vector<int>>& shards,
                               const LabeledDataset& data);

void write_partition_stats_csv(const PartitionStats& stats, std::ostream& out);

}  // namespace fedbat

#endif  // FEDBAT_DATASET_HPP

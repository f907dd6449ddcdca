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

#include "fedbat/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <ostream>

namespace fedbat {

namespace {

std::uint32_t read_be_u32(std::ifstream& in, const char* what) {
  unsigned char buf[4];
  if (!in.read(reinterpret_cast<char*>(buf), 4))
    throw FormatError(std::string("idx: truncated ") + what);
  return (static_cast<std::uint32_t>(buf[0]) << 24) |
         (static_cast<std::uint32_t>(buf[1]) << 16) |
         (static_cast<std::uint32_t>(buf[2]) << 8) |
         static_cast<std::uint32_t>(buf[3]);
}

// Marsaglia-Tsang gamma sampler, unit scale.
double gamma_draw(double shape, SeededRng& rng) {
  if (shape < 1.0) {
    const double g = gamma_draw(shape + 1.0, rng);
    return g * std::pow(rng.uniform(), 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    const double x = rng.gaussian(1.0);
    const double t = 1.0 + c * x;
    if (t <= 0.0) continue;
    const double v = t * t * t;
    const double u = rng.uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (u > 0.0 && std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v))
      return d * v;
  }
}

std::vector<double> dirichlet_draw(double beta, int n, SeededRng& rng) {
  std::vector<double> g(static_cast<std::size_t>(n));
  double total = 0.0;
  for (auto& v : g) {
    v = gamma_draw(beta, rng);
    total += v;
  }
  if (total <= 0.0) total = 1.0;
  for (auto& v : g) v /= total;
  return g;
}

// Integer apportionment of n items by proportions, largest remainder rule.
std::vector<int> apportion(const std::vector<double>& props, int n) {
  std::vector<int> counts(props.size(), 0);
  std::vector<std::pair<double, std::size_t>> remainders;
  int assigned = 0;
  for (std::size_t i = 0; i < props.size(); ++i) {
    const double exact = props[i] * n;
    counts[i] = static_cast<int>(std::floor(exact));
    assigned += counts[i];
    remainders.emplace_back(exact - counts[i], i);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (int r = 0; r < n - assigned; ++r)
    counts[remainders[static_cast<std::size_t>(r) % remainders.size()].second] += 1;
  return counts;
}

void repair_empty_shards(std::vector<std::vector<int>>& shards) {
  for (;;) {
    int empty = -1;
    for (std::size_t k = 0; k < shards.size(); ++k)
      if (shards[k].empty()) { empty = static_cast<int>(k); break; }
    if (empty < 0) return;
    std::size_t largest = 0;
    for (std::size_t k = 1; k < shards.size(); ++k)
      if (shards[k].size() > shards[largest].size()) largest = k;
    if (shards[largest].size() <= 1)
      throw ArgumentError("partition: not enough samples to repair shards");
    shards[static_cast<std::size_t>(empty)].push_back(shards[largest].back());
    shards[largest].pop_back();
  }
}

}  // namespace

void LabeledDataset::validate() const {
  if (features.rows() < 1) throw ArgumentError("dataset: empty");
  if (labels.size() != static_cast<std::size_t>(features.rows()))
    throw DimensionError("dataset: label count mismatch");
  for (int y : labels)
    if (y < 0 || y >= num_classes)
      throw ArgumentError("dataset: label out of range");
}

LabeledDataset load_idx(const std::string& images_path,
                        const std::string& labels_path) {
  std::ifstream img(images_path, std::ios::binary);
  if (!img) throw FormatError("idx: cannot open '" + images_path + "'");
  if (read_be_u32(img, "image magic") != 0x00000803u)
    throw FormatError("idx: bad image magic (want 0x00000803)");
  const std::uint32_t n = read_be_u32(img, "image count");
  const std::uint32_t rows = read_be_u32(img, "image rows");
  const std::uint32_t cols = read_be_u32(img, "image cols");

  std::ifstream lab(labels_path, std::ios::binary);
  if (!lab) throw FormatError("idx: cannot open '" + labels_path + "'");
  if (read_be_u32(lab, "label magic") != 0x00000801u)
    throw FormatError("idx: bad label magic (want 0x00000801)");
  const std::uint32_t n_labels = read_be_u32(lab, "label count");
  if (n != n_labels)
    throw FormatError("idx: image/label count mismatch");

  const std::size_t dim = static_cast<std::size_t>(rows) * cols;
  std::vector<unsigned char> pixels(static_cast<std::size_t>(n) * dim);
  if (!img.read(reinterpret_cast<char*>(pixels.data()),
                static_cast<std::streamsize>(pixels.size())))
    throw FormatError("idx: truncated image data");
  std::vector<unsigned char> raw_labels(n);
  if (!lab.read(reinterpret_cast<char*>(raw_labels.data()), n))
    throw FormatError("idx: truncated label data");

  LabeledDataset data;
  data.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  for (std::uint32_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < dim; ++j)
      data.features(i, static_cast<Eigen::Index>(j)) =
          pixels[i * dim + j] / 255.0;
  data.labels.assign(raw_labels.begin(), raw_labels.end());
  data.num_classes =
      raw_labels.empty() ? 0 : *std::max_element(data.labels.begin(), data.labels.end()) + 1;
  data.validate();
  return data;
}

LabeledDataset synth_blobs(Eigen::Index n, int dim, int classes, double spread,
                           std::uint64_t seed) {
  if (classes < 2) throw ArgumentError("blobs: need at least 2 classes");
  if (n < classes) throw ArgumentError("blobs: fewer samples than classes");
  SeededRng root(seed);
  SeededRng center_rng = root.split("blob-centers");
  Mat centers(classes, dim);
  for (int c = 0; c < classes; ++c)
    for (int j = 0; j < dim; ++j)
      centers(c, j) = center_rng.uniform_range(0.25, 0.75);

  SeededRng noise_rng = root.split("blob-noise");
  LabeledDataset data;
  data.num_classes = classes;
  data.features.resize(n, dim);
  data.labels.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % classes);
    data.labels[static_cast<std::size_t>(i)] = label;
    for (int j = 0; j < dim; ++j)
      data.features(i, j) = centers(label, j) + noise_rng.gaussian(spread);
  }

  // Per-dimension min-max normalization into [0, 1]; a zero-range dimension
  // collapses to 0.
  for (int j = 0; j < dim; ++j) {
    const double lo = data.features.col(j).minCoeff();
    const double hi = data.features.col(j).maxCoeff();
    if (hi > lo)
      data.features.col(j) = (data.features.col(j).array() - lo) / (hi - lo);
    else
      data.features.col(j).setZero();
  }
  data.validate();
  return data;
}

std::pair<LabeledDataset, LabeledDataset> split_train_test(
    const LabeledDataset& data, Eigen::Index n_test, std::uint64_t seed) {
  if (n_test < 1 || n_test >= data.size())
    throw ArgumentError("split: test size out of range");
  std::vector<int> idx(static_cast<std::size_t>(data.size()));
  std::iota(idx.begin(), idx.end(), 0);
  SeededRng rng = SeededRng(seed).split("train-test-split");
  rng.shuffle(idx);

  auto take = [&](std::size_t first, std::size_t count) {
    LabeledDataset out;
    out.num_classes = data.num_classes;
    out.features.resize(static_cast<Eigen::Index>(count), data.features.cols());
    out.labels.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
      out.features.row(static_cast<Eigen::Index>(i)) = data.features.row(idx[first + i]);
      out.labels[i] = data.labels[static_cast<std::size_t>(idx[first + i])];
    }
    return out;
  };
  const std::size_t n_train = static_cast<std::size_t>(data.size() - n_test);
  return {take(0, n_train), take(n_train, static_cast<std::size_t>(n_test))};
}

std::vector<std::vector<int>> partition(const LabeledDataset& data,
                                        const PartitionSpec& spec) {
  data.validate();
  const int n_clients = spec.n_clients;
  if (n_clients < 1) throw ArgumentError("partition: n_clients must be >= 1");
  if (data.size() < n_clients)
    throw ArgumentError("partition: more clients than samples");
  SeededRng root(spec.seed);
  std::vector<std::vector<int>> shards(static_cast<std::size_t>(n_clients));

  switch (spec.scheme) {
    case PartitionScheme::kIid: {
      std::vector<int> idx(static_cast<std::size_t>(data.size()));
      std::iota(idx.begin(), idx.end(), 0);
      SeededRng rng = root.split("iid-shuffle");
      rng.shuffle(idx);
      const std::size_t n = idx.size();
      const std::size_t base = n / static_cast<std::size_t>(n_clients);
      const std::size_t extra = n % static_cast<std::size_t>(n_clients);
      std::size_t pos = 0;
      for (int k = 0; k < n_clients; ++k) {
        const std::size_t take = base + (static_cast<std::size_t>(k) < extra ? 1 : 0);
        shards[static_cast<std::size_t>(k)].assign(idx.begin() + static_cast<std::ptrdiff_t>(pos),
                                                   idx.begin() + static_cast<std::ptrdiff_t>(pos + take));
        pos += take;
      }
      break;
    }
    case PartitionScheme::kDirichlet: {
      if (!(spec.beta > 0.0)) throw ArgumentError("partition: beta must be > 0");
      for (int label = 0; label < data.num_classes; ++label) {
        std::vector<int> idx;
        for (Eigen::Index i = 0; i < data.size(); ++i)
          if (data.labels[static_cast<std::size_t>(i)] == label)
            idx.push_back(static_cast<int>(i));
        if (idx.empty()) continue;
        SeededRng shuffle_rng = root.split("dir-shuffle").split(static_cast<std::uint64_t>(label));
        shuffle_rng.shuffle(idx);
        SeededRng prop_rng = root.split("dir-prop").split(static_cast<std::uint64_t>(label));
        const auto props = dirichlet_draw(spec.beta, n_clients, prop_rng);
        const auto counts = apportion(props, static_cast<int>(idx.size()));
        std::size_t pos = 0;
        for (int k = 0; k < n_clients; ++k) {
          for (int c = 0; c < counts[static_cast<std::size_t>(k)]; ++c)
            shards[static_cast<std::size_t>(k)].push_back(idx[pos++]);
        }
      }
      break;
    }
    case PartitionScheme::kLabelShard: {
      const int s = spec.labels_per_client;
      if (s < 1 || s > data.num_classes)
        throw ArgumentError("partition: labels_per_client out of [1, C]");
      if (static_cast<long>(n_clients) * s < data.num_classes)
        throw ArgumentError(
            "partition: n_clients * labels_per_client must cover every label");
      std::vector<int> label_perm(static_cast<std::size_t>(data.num_classes));
      std::iota(label_perm.begin(), label_perm.end(), 0);
      SeededRng perm_rng = root.split("shard-label-perm");
      perm_rng.shuffle(label_perm);
      // Round-robin over the permutation: every label is held by some client
      // whenever N*s >= C.
      std::vector<std::vector<int>> holders(static_cast<std::size_t>(data.num_classes));
      for (int k = 0; k < n_clients; ++k)
        for (int j = 0; j < s; ++j) {
          const int label = label_perm[static_cast<std::size_t>((k * s + j) % data.num_classes)];
          holders[static_cast<std::size_t>(label)].push_back(k);
        }
      for (int label = 0; label < data.num_classes; ++label) {
        auto& owners = holders[static_cast<std::size_t>(label)];
        if (owners.empty()) continue;
        std::vector<int> idx;
        for (Eigen::Index i = 0; i < data.size(); ++i)
          if (data.labels[static_cast<std::size_t>(i)] == label)
            idx.push_back(static_cast<int>(i));
        SeededRng shuffle_rng = root.split("shard-shuffle").split(static_cast<std::uint64_t>(label));
        shuffle_rng.shuffle(idx);
        const std::size_t per = idx.size() / owners.size();
        const std::size_t extra = idx.size() % owners.size();
        std::size_t pos = 0;
        for (std::size_t o = 0; o < owners.size(); ++o) {
          const std::size_t take = per + (o < extra ? 1 : 0);
          for (std::size_t c = 0; c < take; ++c)
            shards[static_cast<std::size_t>(owners[o])].push_back(idx[pos++]);
        }
      }
      break;
    }
  }
  repair_empty_shards(shards);
  return shards;
}

PartitionStats partition_stats(const std::vector<std::vector<int>>& shards,
                               const LabeledDataset& data) {
  PartitionStats stats;
  const int classes = data.num_classes;
  for (const auto& shard : shards) {
    stats.sizes.push_back(shard.size());
    std::vector<int> counts(static_cast<std::size_t>(classes), 0);
    for (int i : shard)
      counts[static_cast<std::size_t>(data.labels[static_cast<std::size_t>(i)])] += 1;
    stats.label_counts.push_back(std::move(counts));
  }
  const std::size_t n = shards.size();
  double tv_sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      double tv = 0.0;
      for (int c = 0; c < classes; ++c) {
        const double pa = stats.sizes[a] ? static_cast<double>(stats.label_counts[a][static_cast<std::size_t>(c)]) / stats.sizes[a] : 0.0;
        const double pb = stats.sizes[b] ? static_cast<double>(stats.label_counts[b][static_cast<std::size_t>(c)]) / stats.sizes[b] : 0.0;
        tv += std::abs(pa - pb);
      }
      tv_sum += 0.5 * tv;
      ++pairs;
    }
  }
  stats.mean_pairwise_tv = pairs ? tv_sum / static_cast<double>(pairs) : 0.0;
  return stats;
}

void write_partition_stats_csv(const PartitionStats& stats, std::ostream& out) {
  out << "client,size";
  const std::size_t classes = stats.label_counts.empty() ? 0 : stats.label_counts[0].size();
  for (std::size_t c = 0; c < classes; ++c) out << ",label_" << c;
  out << "\n";
  for (std::size_t k = 0; k < stats.sizes.size(); ++k) {
    out << k << "," << stats.sizes[k];
    for (std::size_t c = 0; c < classes; ++c) out << "," << stats.label_counts[k][c];
    out << "\n";
  }
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", stats.mean_pairwise_tv);
  out << "mean_pairwise_tv," << buf;
  for (std::size_t c = 0; c < classes; ++c) out << ",";
  out << "\n";
}

}  // namespace fedbat

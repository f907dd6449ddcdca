#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "fedbat/dataset.hpp"

using namespace fedbat;
namespace fs = std::filesystem;

namespace {

void write_bytes(const fs::path& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

std::vector<unsigned char> idx_images_fixture() {
  return {0, 0, 8, 3,  0, 0, 0, 2,  0, 0, 0, 2,  0, 0, 0, 2,
          0, 51, 102, 153,  204, 255, 0, 255};
}

std::vector<unsigned char> idx_labels_fixture(unsigned char n = 2) {
  std::vector<unsigned char> b = {0, 0, 8, 1, 0, 0, 0, n};
  for (unsigned char i = 0; i < n; ++i) b.push_back(i % 2 ? 0 : 1);
  return b;
}

std::vector<std::vector<int>> label_indices(const LabeledDataset& d) {
  std::vector<std::vector<int>> out(static_cast<std::size_t>(d.num_classes));
  for (Eigen::Index i = 0; i < d.size(); ++i)
    out[static_cast<std::size_t>(d.labels[static_cast<std::size_t>(i)])].push_back(
        static_cast<int>(i));
  return out;
}

void check_partition_exact(const std::vector<std::vector<int>>& shards,
                           Eigen::Index n) {
  std::vector<int> all;
  for (const auto& s : shards) {
    REQUIRE(!s.empty());
    all.insert(all.end(), s.begin(), s.end());
  }
  std::sort(all.begin(), all.end());
  REQUIRE(static_cast<Eigen::Index>(all.size()) == n);
  for (Eigen::Index i = 0; i < n; ++i) CHECK(all[static_cast<std::size_t>(i)] == i);
}

}  // namespace

TEST_CASE("idx loader reads the hand-built fixture") {
  const auto dir = fs::temp_directory_path();
  write_bytes(dir / "imgs.idx", idx_images_fixture());
  write_bytes(dir / "labs.idx", idx_labels_fixture());
  const LabeledDataset d =
      load_idx((dir / "imgs.idx").string(), (dir / "labs.idx").string());
  REQUIRE(d.size() == 2);
  REQUIRE(d.features.cols() == 4);
  CHECK(d.features(0, 0) == 0.0);
  CHECK(d.features(0, 1) == 51.0 / 255.0);
  CHECK(d.features(0, 2) == 102.0 / 255.0);
  CHECK(d.features(0, 3) == 153.0 / 255.0);
  CHECK(d.features(1, 0) == 204.0 / 255.0);
  CHECK(d.features(1, 1) == 1.0);
  CHECK(d.features(1, 2) == 0.0);
  CHECK(d.features(1, 3) == 1.0);
  CHECK(d.labels == std::vector<int>{1, 0});
}

TEST_CASE("idx loader failure modes are distinct") {
  const auto dir = fs::temp_directory_path();
  write_bytes(dir / "imgs.idx", idx_images_fixture());
  write_bytes(dir / "labs.idx", idx_labels_fixture());

  auto bad_magic = idx_images_fixture();
  bad_magic[3] = 9;
  write_bytes(dir / "badmagic.idx", bad_magic);
  CHECK_THROWS_WITH_AS(
      load_idx((dir / "badmagic.idx").string(), (dir / "labs.idx").string()),
      doctest::Contains("magic"), FormatError);

  write_bytes(dir / "mismatch.idx", idx_labels_fixture(3));
  CHECK_THROWS_WITH_AS(
      load_idx((dir / "imgs.idx").string(), (dir / "mismatch.idx").string()),
      doctest::Contains("mismatch"), FormatError);

  auto truncated = idx_images_fixture();
  truncated.resize(20);
  write_bytes(dir / "trunc.idx", truncated);
  CHECK_THROWS_WITH_AS(
      load_idx((dir / "trunc.idx").string(), (dir / "labs.idx").string()),
      doctest::Contains("truncated"), FormatError);
}

TEST_CASE("blobs with zero spread have zero within-class variance") {
  const LabeledDataset d = synth_blobs(60, 5, 3, 0.0, 3);
  const auto by_label = label_indices(d);
  for (const auto& members : by_label) {
    REQUIRE(members.size() >= 2);
    for (std::size_t i = 1; i < members.size(); ++i)
      CHECK(d.features.row(members[i]) == d.features.row(members[0]));
  }
}

TEST_CASE("blob labels are balanced to within one") {
  const LabeledDataset d = synth_blobs(101, 4, 4, 0.3, 5);
  const auto by_label = label_indices(d);
  std::size_t lo = d.labels.size(), hi = 0;
  for (const auto& members : by_label) {
    lo = std::min(lo, members.size());
    hi = std::max(hi, members.size());
  }
  CHECK(hi - lo <= 1);
}

TEST_CASE("blob features are normalized and frozen") {
  const LabeledDataset d = synth_blobs(200, 8, 4, 0.25, 77);
  CHECK(d.features.minCoeff() == 0.0);
  CHECK(d.features.maxCoeff() == 1.0);
  double sum = 0, sumsq = 0;
  for (Eigen::Index i = 0; i < d.features.rows(); ++i)
    for (Eigen::Index j = 0; j < d.features.cols(); ++j) {
      sum += d.features(i, j);
      sumsq += d.features(i, j) * d.features(i, j);
    }
  CHECK(sum == doctest::Approx(797.21213906729031).epsilon(1e-12));
  CHECK(sumsq == doctest::Approx(454.84239078008017).epsilon(1e-12));
}

TEST_CASE("iid partition splits near-equally") {
  const LabeledDataset d = synth_blobs(1000, 4, 5, 0.3, 1);
  PartitionSpec spec;
  spec.scheme = PartitionScheme::kIid;
  spec.n_clients = 10;
  spec.seed = 4;
  const auto shards = partition(d, spec);
  check_partition_exact(shards, 1000);
  for (const auto& s : shards) CHECK(s.size() == 100);

  spec.n_clients = 7;  // 1000 = 7*142 + 6
  const auto uneven = partition(d, spec);
  check_partition_exact(uneven, 1000);
  for (const auto& s : uneven) CHECK((s.size() == 142 || s.size() == 143));
}

TEST_CASE("partition is deterministic in the spec") {
  const LabeledDataset d = synth_blobs(500, 4, 5, 0.3, 6);
  PartitionSpec spec;
  spec.scheme = PartitionScheme::kDirichlet;
  spec.beta = 0.3;
  spec.n_clients = 8;
  spec.seed = 12;
  CHECK(partition(d, spec) == partition(d, spec));
  spec.seed = 13;
  CHECK(partition(d, spec) != partition(d, {PartitionScheme::kDirichlet, 8, 12, 0.3, 3}));
}

TEST_CASE("dirichlet concentrates at huge beta") {
  const LabeledDataset d = synth_blobs(5000, 4, 5, 0.3, 9);
  PartitionSpec spec;
  spec.scheme = PartitionScheme::kDirichlet;
  spec.beta = 1e6;
  spec.n_clients = 5;
  spec.seed = 3;
  const auto shards = partition(d, spec);
  check_partition_exact(shards, 5000);
  const auto stats = partition_stats(shards, d);
  for (std::size_t k = 0; k < shards.size(); ++k)
    for (int c = 0; c < d.num_classes; ++c) {
      const double frac =
          static_cast<double>(stats.label_counts[k][static_cast<std::size_t>(c)]) / 1000.0;
      CHECK(frac == doctest::Approx(0.2).epsilon(0.05));  // 1/N +- 0.01 absolute
    }
}

TEST_CASE("label-shard gives every client exactly s labels") {
  const LabeledDataset d = synth_blobs(3000, 6, 10, 0.3, 21);
  PartitionSpec spec;
  spec.scheme = PartitionScheme::kLabelShard;
  spec.n_clients = 30;
  spec.labels_per_client = 3;
  spec.seed = 2;
  const auto shards = partition(d, spec);
  check_partition_exact(shards, 3000);
  const auto stats = partition_stats(shards, d);
  for (const auto& counts : stats.label_counts) {
    int support = 0;
    for (int c : counts) support += c > 0 ? 1 : 0;
    CHECK(support == 3);
  }
}

TEST_CASE("iid stats show low heterogeneity") {
  const LabeledDataset d = synth_blobs(2000, 4, 5, 0.3, 31);
  PartitionSpec spec;
  spec.scheme = PartitionScheme::kIid;
  spec.n_clients = 10;
  spec.seed = 8;
  const auto stats = partition_stats(partition(d, spec), d);
  CHECK(stats.mean_pairwise_tv <= 0.1);  // n/N = 200 samples per shard
}

TEST_CASE("dirichlet heterogeneity decreases in beta") {
  const LabeledDataset d = synth_blobs(2000, 4, 5, 0.3, 41);
  double tv[3] = {0, 0, 0};
  const double betas[3] = {0.1, 0.3, 100.0};
  for (int seed = 0; seed < 20; ++seed) {
    for (int b = 0; b < 3; ++b) {
      PartitionSpec spec;
      spec.scheme = PartitionScheme::kDirichlet;
      spec.beta = betas[b];
      spec.n_clients = 10;
      spec.seed = static_cast<std::uint64_t>(seed);
      tv[b] += partition_stats(partition(d, spec), d).mean_pairwise_tv / 20.0;
    }
  }
  CHECK(tv[0] > tv[1]);
  CHECK(tv[1] > tv[2]);
}

TEST_CASE("empty shards are repaired") {
  const LabeledDataset d = synth_blobs(24, 3, 2, 0.3, 51);
  PartitionSpec spec;
  spec.scheme = PartitionScheme::kDirichlet;
  spec.beta = 0.02;  // extreme skew: some raw draws leave clients empty
  spec.n_clients = 12;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    spec.seed = seed;
    check_partition_exact(partition(d, spec), 24);
  }
}

TEST_CASE("partition argument errors") {
  const LabeledDataset d = synth_blobs(40, 3, 4, 0.3, 61);
  PartitionSpec spec;
  spec.scheme = PartitionScheme::kLabelShard;
  spec.n_clients = 4;
  spec.labels_per_client = 5;  // > C
  CHECK_THROWS_AS(partition(d, spec), ArgumentError);
  spec.labels_per_client = 1;
  spec.n_clients = 3;  // 3 clients x 1 label cannot cover 4 classes
  CHECK_THROWS_AS(partition(d, spec), ArgumentError);
  spec.labels_per_client = 2;
  spec.n_clients = 41;  // more clients than samples
  CHECK_THROWS_AS(partition(d, spec), ArgumentError);
  // Minimal coverage still partitions exactly.
  spec.n_clients = 2;
  spec.labels_per_client = 2;
  check_partition_exact(partition(d, spec), 40);
}

TEST_CASE("train/test split is exact and deterministic") {
  const LabeledDataset d = synth_blobs(300, 4, 3, 0.3, 71);
  auto [train, test] = split_train_test(d, 60, 17);
  CHECK(train.size() == 240);
  CHECK(test.size() == 60);
  auto [train2, test2] = split_train_test(d, 60, 17);
  CHECK(train.features == train2.features);
  CHECK(test.labels == test2.labels);
}

TEST_CASE("stats csv shape") {
  const LabeledDataset d = synth_blobs(100, 3, 4, 0.3, 81);
  PartitionSpec spec;
  spec.scheme = PartitionScheme::kIid;
  spec.n_clients = 4;
  const auto stats = partition_stats(partition(d, spec), d);
  std::ostringstream out;
  write_partition_stats_csv(stats, out);
  const std::string text = out.str();
  CHECK(text.find("client,size,label_0,label_1,label_2,label_3") == 0);
  CHECK(text.find("mean_pairwise_tv") != std::string::npos);
}

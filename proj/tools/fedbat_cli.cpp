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

#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "fedbat/engine.hpp"
#include "fedbat/theory.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kSlopeBandLo = -1.3;
constexpr double kSlopeBandHi = -0.7;

int cmd_run(const std::string& config_path,
            const std::vector<std::string>& overrides,
            const std::string& out_flag) {
  std::ifstream in(config_path);
  if (!in) throw fedbat::ConfigError("config", "cannot open '" + config_path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  fedbat::ExperimentConfig cfg = fedbat::parse_config_text(buf.str(), overrides);

  if (const char* env = std::getenv("FEDBAT_OUT_DIR"); env && *env)
    cfg.out_dir = env;
  if (!out_flag.empty()) cfg.out_dir = out_flag;

  fs::create_directories(cfg.out_dir);
  if (cfg.dump_messages) fs::create_directories(fs::path(cfg.out_dir) / "messages");

  std::ofstream run_log(fs::path(cfg.out_dir) / "run.log");
  fedbat::RoundLogger log = [&](const fedbat::RoundRecord& r) {
    char line[160];
    std::snprintf(line, sizeof(line),
                  "round %d loss %.6f acc %.4f uplink %llu B wall %.3fs", r.round,
                  r.train_loss, r.test_accuracy,
                  static_cast<unsigned long long>(r.uplink_bytes_total),
                  r.wall_seconds);
    run_log << line << "\n";
    if (r.round % 10 == 0 || r.round + 1 == cfg.rounds)
      std::cout << line << "\n";
  };
  fedbat::MessageSink sink;
  if (cfg.dump_messages) {
    sink = [&](int round, const fedbat::UplinkMessage& msg) {
      const auto path = fs::path(cfg.out_dir) / "messages" /
                        ("round_" + std::to_string(round) + "_client_" +
                         std::to_string(fedbat::message_client(msg)) + ".fbat");
      fedbat::write_message_file(msg, path.string());
    };
  }

  const fedbat::RunResult result = fedbat::run_experiment(cfg, log, sink);
  fedbat::write_metrics_csv(result.records, fedbat::to_string(cfg.algorithm),
                            (fs::path(cfg.out_dir) / "metrics.csv").string());
  std::ofstream echo(fs::path(cfg.out_dir) / "config-echo.ini");
  echo << fedbat::echo_config(cfg);
  std::cout << "wrote " << (fs::path(cfg.out_dir) / "metrics.csv").string() << "\n";
  return 0;
}

int cmd_codec_bench(int inputs, const std::vector<int>& hidden, int classes,
                    bool logreg, const std::string& inspect_path) {
  if (!inspect_path.empty()) {
    const auto msg = fedbat::read_message_file(inspect_path);
    std::printf("message: kind=%s round=%u client=%u bytes=%zu\n",
                std::holds_alternative<fedbat::RawUpdateMessage>(msg) ? "raw" : "binary",
                fedbat::message_round(msg), fedbat::message_client(msg),
                fedbat::uplink_bytes(msg));
    const auto update = fedbat::decode_update(msg);
    for (std::size_t l = 0; l < update.size(); ++l)
      std::printf("  layer %zu: d=%lld linf=%.6g\n", l,
                  static_cast<long long>(update[l].size()),
                  update[l].lpNorm<Eigen::Infinity>());
    return 0;
  }
  const fedbat::ModelSpec spec =
      logreg ? fedbat::ModelSpec::logistic(inputs, classes)
             : fedbat::ModelSpec::mlp(inputs, hidden, classes);
  const auto sizes = spec.group_sizes();

  fedbat::RawUpdateMessage raw{0, 0, {}};
  fedbat::BinaryUpdateMessage bin{0, 0, {}};
  for (std::size_t l = 0; l < sizes.size(); ++l) {
    fedbat::RawLayerPayload rl;
    rl.layer_id = static_cast<std::uint32_t>(l);
    rl.count = static_cast<std::uint32_t>(sizes[l]);
    rl.values.assign(rl.count, 0.0f);
    raw.layers.push_back(std::move(rl));
    bin.layers.push_back(fedbat::encode_signs(static_cast<std::uint32_t>(l),
                                              fedbat::Vec::Ones(sizes[l]), 1.0));
  }
  const double raw_bytes = static_cast<double>(fedbat::uplink_bytes(raw));
  const double bin_bytes = static_cast<double>(fedbat::uplink_bytes(bin));

  std::printf("model: %lld parameters in %zu layers\n",
              static_cast<long long>(spec.total_params()), sizes.size());
  std::printf("%-14s %12s %8s\n", "codec", "bytes", "ratio");
  for (const auto kind :
       {fedbat::CodecKind::kFedAvgRaw, fedbat::CodecKind::kSignSgd,
        fedbat::CodecKind::kEfSignSgd, fedbat::CodecKind::kNoisySignSgd,
        fedbat::CodecKind::kStocSignSgd, fedbat::CodecKind::kFedBat}) {
    const double bytes =
        kind == fedbat::CodecKind::kFedAvgRaw ? raw_bytes : bin_bytes;
    std::printf("%-14s %12.0f %8.2f\n", fedbat::to_string(kind).c_str(), bytes,
                raw_bytes / bytes);
  }
  std::printf("per-layer breakdown (raw vs binary, message header included):\n");
  std::printf("  header: raw=18 binary=18\n");
  for (std::size_t l = 0; l < sizes.size(); ++l) {
    const auto d = static_cast<unsigned long long>(sizes[l]);
    std::printf("  layer %zu: d=%llu raw=%llu binary=%llu\n", l, d, 8 + 4 * d,
                8 + 4 + (d + 7) / 8);
  }
  return 0;
}

int cmd_partition(const std::string& scheme, int clients, double beta,
                  int labels_per_client, std::uint64_t seed, Eigen::Index n,
                  int dim, int classes, double spread,
                  const std::string& out_path) {
  fedbat::LabeledDataset data =
      fedbat::synth_blobs(n, dim, classes, spread, seed);
  fedbat::PartitionSpec spec;
  spec.n_clients = clients;
  spec.seed = seed;
  if (scheme == "iid") {
    spec.scheme = fedbat::PartitionScheme::kIid;
  } else if (scheme == "dirichlet") {
    spec.scheme = fedbat::PartitionScheme::kDirichlet;
    spec.beta = beta;
  } else if (scheme == "label-shard") {
    spec.scheme = fedbat::PartitionScheme::kLabelShard;
    spec.labels_per_client = labels_per_client;
  } else {
    throw fedbat::ConfigError("partition.scheme", "unknown scheme '" + scheme + "'");
  }
  const auto shards = fedbat::partition(data, spec);
  const auto stats = fedbat::partition_stats(shards, data);
  if (out_path.empty()) {
    fedbat::write_partition_stats_csv(stats, std::cout);
  } else {
    std::ofstream out(out_path);
    fedbat::write_partition_stats_csv(stats, out);
    std::cout << "wrote " << out_path << "\n";
  }
  return 0;
}

int cmd_theory(int clients, int dim, double heterogeneity, int tau, int rounds,
               int seeds, int fit_from, int partial_k, bool control,
               int minibatch, double lr_scale, std::uint64_t problem_seed,
               std::uint64_t run_seed, const std::string& json_path,
               const std::string& csv_path) {
  const fedbat::QuadraticProblem problem =
      fedbat::make_problem(clients, dim, heterogeneity, problem_seed);
  fedbat::TheoremRunSpec spec;
  spec.tau = tau;
  spec.rounds = rounds;
  spec.n_seeds = seeds;
  spec.k_clients = partial_k;
  spec.identity_binarizer = control;
  spec.minibatch_rows = minibatch;
  spec.lr_scale = lr_scale;
  spec.seed = run_seed;

  const auto result = fedbat::run_theorem_mode(problem, spec);
  const auto fit = fedbat::fit_rate_range(result.mean_gaps, fit_from, rounds);
  const bool pass = fit.slope >= kSlopeBandLo && fit.slope <= kSlopeBandHi;

  std::printf(
      "mu=%.4f L=%.4f Gamma=%.6f | slope=%.4f +-%.4f over rounds [%d, %d] | "
      "band [%.1f, %.1f] -> %s\n",
      problem.mu, problem.smoothness, problem.gamma_het, fit.slope,
      fit.half_width, fit.first_round, fit.last_round, kSlopeBandLo,
      kSlopeBandHi, pass ? "PASS" : "FAIL");

  if (!json_path.empty()) {
    json j{{"slope", fit.slope},
           {"half_width", fit.half_width},
           {"fit_rounds", {fit.first_round, fit.last_round}},
           {"band", {kSlopeBandLo, kSlopeBandHi}},
           {"pass", pass},
           {"mu", problem.mu},
           {"L", problem.smoothness},
           {"gamma_heterogeneity", problem.gamma_het},
           {"final_gap", result.mean_gaps.back()},
           {"control", control},
           {"tau", tau},
           {"rounds", rounds},
           {"seeds", seeds}};
    std::ofstream out(json_path);
    out << j.dump(2) << "\n";
  }
  if (!csv_path.empty()) {
    std::ofstream out(csv_path);
    out << "round,mean_gap";
    for (int s = 0; s < seeds; ++s) out << ",seed_" << s;
    out << "\n";
    for (std::size_t r = 0; r < result.mean_gaps.size(); ++r) {
      char buf[40];
      std::snprintf(buf, sizeof(buf), "%.12g", result.mean_gaps[r]);
      out << (r + 1) << "," << buf;
      for (const auto& g : result.seed_gaps) {
        std::snprintf(buf, sizeof(buf), "%.12g", g[r]);
        out << "," << buf;
      }
      out << "\n";
    }
  }
  return pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FedBAT federated-learning simulator and uplink-compression toolkit"};
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "Run an experiment from a config file");
  std::string config_path, out_flag;
  std::vector<std::string> overrides;
  run->add_option("config", config_path, "Config file path")->required();
  run->add_option("--set", overrides, "Override: section.key=value");
  run->add_option("--out", out_flag, "Output directory (overrides config and env)");

  // codec-bench
  auto* bench = app.add_subcommand("codec-bench", "Report per-codec uplink bytes");
  int inputs = 64, classes = 10;
  std::vector<int> hidden = {256};
  bool logreg = false;
  bench->add_option("--inputs", inputs, "Input dimension");
  bench->add_option("--hidden", hidden, "Hidden widths")->delimiter(',');
  bench->add_option("--classes", classes, "Class count");
  bench->add_flag("--logreg", logreg, "Use a logistic model");
  std::string inspect_path;
  bench->add_option("--inspect", inspect_path, "Summarize a dumped message file");

  // partition
  auto* part = app.add_subcommand("partition", "Partition a dataset and print stats");
  std::string scheme = "iid", part_out;
  int clients = 30, labels_per_client = 3, pdim = 32, pclasses = 10;
  double beta = 0.3, spread = 0.3;
  std::uint64_t pseed = 0;
  long long pn = 5000;
  part->add_option("--scheme", scheme, "iid | dirichlet | label-shard");
  part->add_option("--clients", clients, "Client count");
  part->add_option("--beta", beta, "Dirichlet concentration");
  part->add_option("--labels-per-client", labels_per_client, "Labels per client");
  part->add_option("--seed", pseed, "Seed");
  part->add_option("--n", pn, "Synthetic sample count");
  part->add_option("--dim", pdim, "Feature dimension");
  part->add_option("--classes", pclasses, "Class count");
  part->add_option("--spread", spread, "Cluster spread");
  part->add_option("--out", part_out, "Write stats CSV here instead of stdout");

  // theory
  auto* theory = app.add_subcommand("theory", "Convergence-rate verification run");
  int tclients = 8, tdim = 20, ttau = 5, trounds = 1000, tseeds = 10,
      fit_from = 100, partial_k = 0, minibatch = 0;
  double heterogeneity = 1.0, lr_scale = 1.0;
  std::uint64_t problem_seed = 7, run_seed = 1;
  std::string json_path, csv_path;
  bool control = false;
  theory->add_option("--clients", tclients, "Client count");
  theory->add_option("--dim", tdim, "Problem dimension");
  theory->add_option("--heterogeneity", heterogeneity, "Client offset scale");
  theory->add_option("--tau", ttau, "Local steps per round");
  theory->add_option("--rounds", trounds, "Rounds");
  theory->add_option("--seeds", tseeds, "Replicates to average");
  theory->add_option("--fit-from", fit_from, "First round of the slope window");
  theory->add_option("--partial", partial_k, "Aggregate only K sampled clients");
  theory->add_flag("--control", control, "q=0 control (identity compressor)");
  theory->add_option("--minibatch", minibatch, "Rows per stochastic gradient");
  theory->add_option("--lr-scale", lr_scale, "Scale on the theorem schedule");
  theory->add_option("--problem-seed", problem_seed, "Problem instance seed");
  theory->add_option("--run-seed", run_seed, "Run randomness seed");
  theory->add_option("--json", json_path, "JSON summary path");
  theory->add_option("--csv", csv_path, "Per-round gap CSV path");

  try {
    app.parse(argc, argv);
    if (*run) return cmd_run(config_path, overrides, out_flag);
    if (*bench) return cmd_codec_bench(inputs, hidden, classes, logreg, inspect_path);
    if (*part)
      return cmd_partition(scheme, clients, beta, labels_per_client, pseed,
                           static_cast<Eigen::Index>(pn), pdim, pclasses,
                           spread, part_out);
    if (*theory)
      return cmd_theory(tclients, tdim, heterogeneity, ttau, trounds, tseeds,
                        fit_from, partial_k, control, minibatch, lr_scale,
                        problem_seed, run_seed, json_path, csv_path);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const fedbat::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const fedbat::DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return 1;
  } catch (const fedbat::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

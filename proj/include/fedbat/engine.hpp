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

#ifndef FEDBAT_ENGINE_HPP
#define FEDBAT_ENGINE_HPP

#include <cstdint>
#include <functional>
#include <vector>

#include "fedbat/codec.hpp"
#include "fedbat/config.hpp"
#include "fedbat/dataset.hpp"
#include "fedbat/metrics.hpp"
#include "fedbat/nn.hpp"
#include "fedbat/rng.hpp"

namespace fedbat {

struct ClientState {
  int client_id = 0;
  std::vector<int> shard;  // indices into the training set
  double weight = 0.0;     // p_k, shard share of all data
  ErrorFeedbackState ef_residual;
};

struct RoundPlan {
  int round = 0;
  std::vector<int> selected;  // ascending client ids, |selected| = K
};

// Uniform sample of k of n clients without replacement.
RoundPlan sample_clients(int n, int k, SeededRng& rng);

struct LocalTrainConfig {
  int tau = 10;
  double phi = kDefaultWarmupRatio;
  double rho = kDefaultRho;
  double eta = kDefaultLearningRate;
  int batch_size = kDefaultBatchSize;
  CodecKind algorithm = CodecKind::kFedBat;
  CodecParams codec;

  int warmup_steps() const;  // floor(phi * tau)
  void validate() const;
};

// One local step's worth of gradient information. A client problem hands out
// one minibatch per call; the trainer decides the evaluation point.
class LocalProblem {
 public:
  virtual ~LocalProblem() = default;
  virtual std::vector<Eigen::Index> layer_sizes() const = 0;

  struct StepGrad {
    double loss = 0.0;
    std::vector<Vec> grad_m;
    std::vector<double> grad_alpha_e;  // binarized mode only
  };

  // Gradient w.r.t. m at w + m.
  virtual StepGrad eval_shifted(const std::vector<Vec>& m) = 0;
  // Straight-through gradient w.r.t. (m, alpha_e) at w + S(m, alpha).
  virtual StepGrad eval_binarized(const std::vector<Vec>& m,
                                  const std::vector<StepSizeParam>& steps,
                                  SeededRng& rng) = 0;
};

// Model + data shard as a LocalProblem; one seeded-shuffle pass over the
// shard per local epoch, consecutive minibatches within it.
class NnLocalProblem final : public LocalProblem {
 public:
  NnLocalProblem(const GlobalModel& model, const LabeledDataset& data,
                 const std::vector<int>& shard, int batch_size,
                 SeededRng batch_rng);

  std::vector<Eigen::Index> layer_sizes() const override;
  StepGrad eval_shifted(const std::vector<Vec>& m) override;
  StepGrad eval_binarized(const std::vector<Vec>& m,
                          const std::vector<StepSizeParam>& steps,
                          SeededRng& rng) override;

 private:
  Batch next_batch();
  const GlobalModel& model_;
  const LabeledDataset& data_;
  std::vector<int> order_;
  std::size_t pos_ = 0;
  int batch_size_;
  SeededRng batch_rng_;
};

enum class StepType : std::uint8_t { kFullPrecision, kBinarizationAware };

struct FedbatLocalResult {
  std::vector<Vec> signs;         // per layer, exactly +-1
  std::vector<double> alphas;     // effective step size per layer
  std::vector<StepType> trace;    // one entry per local step
  int init_step = -1;             // step index where the step size was set
  std::vector<double> alpha_prime_init;
  std::vector<Vec> update_at_init;  // m snapshot when initialization fired
  double mean_loss = 0.0;
};

// Warm-up then binarization-aware local training: m starts at zero, runs
// floor(phi*tau) full-precision steps, initializes the per-layer step size,
// then trains (m, alpha_e) through the binarizer for the remaining steps.
// The uploaded signs are a fresh binarization of the final update.
FedbatLocalResult local_train_fedbat(LocalProblem& problem,
                                     const LocalTrainConfig& cfg,
                                     SeededRng& binarize_rng);

struct BaselineLocalResult {
  UpdateDelta delta;
  double mean_loss = 0.0;
};

// tau plain SGD steps from w; the returned delta is w_final - w.
BaselineLocalResult local_train_baseline(LocalProblem& problem,
                                         const LocalTrainConfig& cfg);

// w_{t+1} = w_t + sum p'_k decode(message_k), weights renormalized over the
// sampled set, summed in ascending client id order.
GlobalModel aggregate(const GlobalModel& model,
                      const std::vector<UplinkMessage>& messages,
                      const RoundPlan& plan,
                      const std::vector<double>& client_weights);

struct RunResult {
  std::vector<RoundRecord> records;
  GlobalModel final_model;
  std::vector<ClientState> clients;
};

using RoundLogger = std::function<void(const RoundRecord&)>;
using MessageSink = std::function<void(int round, const UplinkMessage&)>;

RunResult run_experiment(const ExperimentConfig& cfg,
                         const RoundLogger& log = nullptr,
                         const MessageSink& sink = nullptr);

// Materialized data + shards + model spec for a config; exposed so the CLI
// subcommands can reuse the exact construction run_experiment performs.
struct ExperimentSetup {
  LabeledDataset train;
  LabeledDataset test;
  std::vector<std::vector<int>> shards;
  ModelSpec model_spec;
};
ExperimentSetup build_setup(const ExperimentConfig& cfg);

// epochs -> steps via the mean shard size (single tau for every client).
int steps_from_epochs(int epochs, int batch_size,
                      const std::vector<std::vector<int>>& shards);

}  // namespace fedbat

#endif  // FEDBAT_ENGINE_HPP

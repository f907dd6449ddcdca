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

#include "fedbat/engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <set>

namespace fedbat {

RoundPlan sample_clients(int n, int k, SeededRng& rng) {
  if (k < 1 || k > n) throw ArgumentError("sample_clients: need 1 <= k <= n");
  std::vector<int> ids(static_cast<std::size_t>(n));
  std::iota(ids.begin(), ids.end(), 0);
  // Partial Fisher-Yates: the first k entries are a uniform sample.
  for (int i = 0; i < k; ++i) {
    const std::size_t j =
        static_cast<std::size_t>(i) +
        static_cast<std::size_t>(rng.next_below(static_cast<std::uint64_t>(n - i)));
    std::swap(ids[static_cast<std::size_t>(i)], ids[j]);
  }
  RoundPlan plan;
  plan.selected.assign(ids.begin(), ids.begin() + k);
  std::sort(plan.selected.begin(), plan.selected.end());
  return plan;
}

int LocalTrainConfig::warmup_steps() const {
  return static_cast<int>(std::floor(phi * tau));
}

void LocalTrainConfig::validate() const {
  if (tau < 1) throw ConfigError("local_steps", "must be >= 1");
  if (phi < 0.0 || phi > 1.0) throw ConfigError("warmup_ratio", "must be in [0, 1]");
  if (rho < 0.0) throw ConfigError("rho", "must be >= 0");
  if (eta < 0.0) throw ConfigError("lr", "must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size", "must be >= 1");
  if (algorithm == CodecKind::kFedBat && warmup_steps() >= tau)
    throw ConfigError("warmup_ratio",
                      "floor(phi*tau) must leave at least one binarization-aware step");
}

NnLocalProblem::NnLocalProblem(const GlobalModel& model,
                               const LabeledDataset& data,
                               const std::vector<int>& shard, int batch_size,
                               SeededRng batch_rng)
    : model_(model),
      data_(data),
      order_(shard),
      batch_size_(batch_size),
      batch_rng_(batch_rng) {
  if (shard.empty()) throw ArgumentError("local problem: empty shard");
  pos_ = order_.size();  // first call starts a fresh epoch
}

std::vector<Eigen::Index> NnLocalProblem::layer_sizes() const {
  return model_.spec.group_sizes();
}

Batch NnLocalProblem::next_batch() {
  if (pos_ >= order_.size()) {
    batch_rng_.shuffle(order_);
    pos_ = 0;
  }
  const std::size_t take =
      std::min(static_cast<std::size_t>(batch_size_), order_.size() - pos_);
  Batch batch;
  batch.inputs.resize(static_cast<Eigen::Index>(take), data_.features.cols());
  batch.labels.resize(take);
  for (std::size_t i = 0; i < take; ++i) {
    const int idx = order_[pos_ + i];
    batch.inputs.row(static_cast<Eigen::Index>(i)) = data_.features.row(idx);
    batch.labels[i] = data_.labels[static_cast<std::size_t>(idx)];
  }
  pos_ += take;
  return batch;
}

LocalProblem::StepGrad NnLocalProblem::eval_shifted(const std::vector<Vec>& m) {
  const Batch batch = next_batch();
  ForwardCache cache = forward(model_, ForwardMode::shifted(m), batch);
  const double loss = cache.loss;
  Gradients g = backward(cache);
  return {loss, std::move(g.groups), {}};
}

LocalProblem::StepGrad NnLocalProblem::eval_binarized(
    const std::vector<Vec>& m, const std::vector<StepSizeParam>& steps,
    SeededRng& rng) {
  const Batch batch = next_batch();
  ForwardCache cache = forward(model_, ForwardMode::binarized(m, steps, rng), batch);
  const double loss = cache.loss;
  Gradients g = backward(cache);
  return {loss, std::move(g.groups), std::move(g.alpha_e)};
}

FedbatLocalResult local_train_fedbat(LocalProblem& problem,
                                     const LocalTrainConfig& cfg,
                                     SeededRng& binarize_rng) {
  cfg.validate();
  if (cfg.algorithm != CodecKind::kFedBat)
    throw ContractError("local_train_fedbat: config algorithm is not fedbat");
  const auto sizes = problem.layer_sizes();
  std::vector<Vec> m;
  for (Eigen::Index n : sizes) m.push_back(Vec::Zero(n));
  std::vector<StepSizeParam> steps(sizes.size());

  const int warm = cfg.warmup_steps();
  FedbatLocalResult res;
  double loss_sum = 0.0;
  for (int s = 0; s < cfg.tau; ++s) {
    if (s < warm) {
      auto g = problem.eval_shifted(m);
      sgd_step(m, g.grad_m, cfg.eta);
      loss_sum += g.loss;
      res.trace.push_back(StepType::kFullPrecision);
      continue;
    }
    if (s == warm) {
      res.init_step = s;
      res.update_at_init = m;
      for (std::size_t l = 0; l < m.size(); ++l) {
        steps[l] = init_step_size(m[l], cfg.rho);
        res.alpha_prime_init.push_back(steps[l].alpha_prime);
      }
    }
    auto g = problem.eval_binarized(m, steps, binarize_rng);
    sgd_step(m, g.grad_m, cfg.eta);
    for (std::size_t l = 0; l < steps.size(); ++l)
      steps[l].alpha_e -= cfg.eta * g.grad_alpha_e[l];
    loss_sum += g.loss;
    res.trace.push_back(StepType::kBinarizationAware);
  }

  // Upload is a fresh binarization of the final update, per layer.
  for (std::size_t l = 0; l < m.size(); ++l) {
    auto [mhat, rec] = binarize_forward(m[l], steps[l], binarize_rng);
    Vec signs(mhat.size());
    for (Eigen::Index i = 0; i < mhat.size(); ++i)
      signs(i) = mhat(i) > 0.0 ? 1.0 : -1.0;
    res.signs.push_back(std::move(signs));
    res.alphas.push_back(effective_alpha(steps[l]));
  }
  res.mean_loss = loss_sum / cfg.tau;
  return res;
}

BaselineLocalResult local_train_baseline(LocalProblem& problem,
                                         const LocalTrainConfig& cfg) {
  cfg.validate();
  if (cfg.algorithm == CodecKind::kFedBat)
    throw ContractError("local_train_baseline: use local_train_fedbat");
  const auto sizes = problem.layer_sizes();
  BaselineLocalResult res;
  for (Eigen::Index n : sizes) res.delta.layers.push_back(Vec::Zero(n));
  double loss_sum = 0.0;
  for (int s = 0; s < cfg.tau; ++s) {
    auto g = problem.eval_shifted(res.delta.layers);
    sgd_step(res.delta.layers, g.grad_m, cfg.eta);
    loss_sum += g.loss;
  }
  res.mean_loss = loss_sum / cfg.tau;
  return res;
}

GlobalModel aggregate(const GlobalModel& model,
                      const std::vector<UplinkMessage>& messages,
                      const RoundPlan& plan,
                      const std::vector<double>& client_weights) {
  if (messages.size() != plan.selected.size())
    throw ContractError("aggregate: message count does not match the plan");
  std::vector<const UplinkMessage*> by_client(client_weights.size(), nullptr);
  for (const auto& msg : messages) {
    const std::uint32_t id = message_client(msg);
    if (id >= by_client.size() || by_client[id] != nullptr)
      throw ContractError("aggregate: duplicate or unknown client message");
    by_client[id] = &msg;
  }
  double weight_sum = 0.0;
  for (int k : plan.selected) {
    if (by_client[static_cast<std::size_t>(k)] == nullptr)
      throw ContractError("aggregate: missing message for sampled client");
    weight_sum += client_weights[static_cast<std::size_t>(k)];
  }

  GlobalModel out = model;
  for (int k : plan.selected) {  // ascending ids: fixed summation order
    const double p = client_weights[static_cast<std::size_t>(k)] / weight_sum;
    const auto update = decode_update(*by_client[static_cast<std::size_t>(k)]);
    if (update.size() != out.groups.size())
      throw DimensionError("aggregate: layer count mismatch");
    for (std::size_t l = 0; l < update.size(); ++l) {
      if (update[l].size() != out.groups[l].size())
        throw DimensionError("aggregate: layer size mismatch");
      out.groups[l] += p * update[l];
    }
  }
  return out;
}

ExperimentSetup build_setup(const ExperimentConfig& cfg) {
  cfg.validate();
  ExperimentSetup setup;
  if (cfg.dataset.kind == "blobs") {
    const LabeledDataset all =
        synth_blobs(cfg.dataset.n + cfg.dataset.test_n, cfg.dataset.dim,
                    cfg.dataset.classes, cfg.dataset.spread, cfg.seed);
    auto [train, test] = split_train_test(all, cfg.dataset.test_n, cfg.seed);
    setup.train = std::move(train);
    setup.test = std::move(test);
  } else {
    setup.train = load_idx(cfg.dataset.train_images, cfg.dataset.train_labels);
    setup.test = load_idx(cfg.dataset.test_images, cfg.dataset.test_labels);
    setup.test.num_classes = setup.train.num_classes =
        std::max(setup.train.num_classes, setup.test.num_classes);
  }

  PartitionSpec pspec;
  pspec.n_clients = cfg.n_clients;
  pspec.seed = cfg.seed;
  if (cfg.partition_scheme == "iid") {
    pspec.scheme = PartitionScheme::kIid;
  } else if (cfg.partition_scheme == "dirichlet") {
    pspec.scheme = PartitionScheme::kDirichlet;
    pspec.beta = cfg.dirichlet_beta;
  } else {
    pspec.scheme = PartitionScheme::kLabelShard;
    pspec.labels_per_client = cfg.labels_per_client;
  }
  setup.shards = partition(setup.train, pspec);

  const int dim = static_cast<int>(setup.train.features.cols());
  const int classes = setup.train.num_classes;
  setup.model_spec = cfg.model.kind == "logreg"
                         ? ModelSpec::logistic(dim, classes)
                         : ModelSpec::mlp(dim, cfg.model.hidden, classes);
  return setup;
}

int steps_from_epochs(int epochs, int batch_size,
                      const std::vector<std::vector<int>>& shards) {
  std::size_t total = 0;
  for (const auto& s : shards) total += s.size();
  const double mean = static_cast<double>(total) / static_cast<double>(shards.size());
  const int per_epoch = static_cast<int>(std::ceil(mean / batch_size));
  return std::max(1, epochs * std::max(1, per_epoch));
}

RunResult run_experiment(const ExperimentConfig& cfg, const RoundLogger& log,
                         const MessageSink& sink) {
  ExperimentSetup setup = build_setup(cfg);

  LocalTrainConfig ltc;
  ltc.tau = cfg.local_epochs > 0
                ? steps_from_epochs(cfg.local_epochs, cfg.batch_size, setup.shards)
                : cfg.local_steps;
  ltc.phi = cfg.warmup_ratio;
  ltc.rho = cfg.rho;
  ltc.eta = cfg.lr;
  ltc.batch_size = cfg.batch_size;
  ltc.algorithm = cfg.algorithm;
  ltc.codec = cfg.codec;
  ltc.validate();

  SeededRng root(cfg.seed);
  SeededRng init_rng = root.split("model-init");
  GlobalModel model = GlobalModel::init(setup.model_spec, init_rng);

  RunResult result;
  result.clients.resize(static_cast<std::size_t>(cfg.n_clients));
  const double total_n = static_cast<double>(setup.train.size());
  double weight_sum = 0.0;
  for (int k = 0; k < cfg.n_clients; ++k) {
    auto& c = result.clients[static_cast<std::size_t>(k)];
    c.client_id = k;
    c.shard = setup.shards[static_cast<std::size_t>(k)];
    c.weight = static_cast<double>(c.shard.size()) / total_n;
    c.ef_residual = ErrorFeedbackState::zeros(setup.model_spec.group_sizes());
    weight_sum += c.weight;
  }
  if (std::abs(weight_sum - 1.0) > 1e-12)
    throw ContractError("run_experiment: client weights do not sum to 1");

  double last_acc =
      evaluate(model, setup.test.features, setup.test.labels).accuracy;

  for (int t = 0; t < cfg.rounds; ++t) {
    const auto t0 = std::chrono::steady_clock::now();
    SeededRng round_stream = root.split("round").split(static_cast<std::uint64_t>(t));
    SeededRng sampling_rng = round_stream.split("sampling");
    RoundPlan plan = sample_clients(cfg.n_clients, cfg.clients_per_round, sampling_rng);
    plan.round = t;

    std::vector<UplinkMessage> messages;
    std::uint64_t bytes = 0;
    double loss_sum = 0.0;
    for (int k : plan.selected) {
      auto& client = result.clients[static_cast<std::size_t>(k)];
      SeededRng client_stream = round_stream.split("client").split(static_cast<std::uint64_t>(k));
      NnLocalProblem problem(model, setup.train, client.shard, cfg.batch_size,
                             client_stream.split("batches"));
      SeededRng codec_rng = client_stream.split("codec");
      UplinkMessage msg;
      if (cfg.algorithm == CodecKind::kFedBat) {
        SeededRng bin_rng = client_stream.split("binarize");
        FedbatLocalResult local = local_train_fedbat(problem, ltc, bin_rng);
        UpdateDelta delta;
        delta.layers = std::move(local.signs);
        for (double a : local.alphas)
          delta.steps.push_back(StepSizeParam{a, 0.0, cfg.rho});
        msg = compress(CodecKind::kFedBat, ltc.codec, static_cast<std::uint32_t>(t),
                       static_cast<std::uint32_t>(k), delta, nullptr, codec_rng);
        loss_sum += local.mean_loss;
      } else {
        BaselineLocalResult local = local_train_baseline(problem, ltc);
        msg = compress(cfg.algorithm, ltc.codec, static_cast<std::uint32_t>(t),
                       static_cast<std::uint32_t>(k), local.delta,
                       &client.ef_residual, codec_rng);
        loss_sum += local.mean_loss;
      }
      bytes += uplink_bytes(msg);
      if (sink) sink(t, msg);
      messages.push_back(std::move(msg));
    }

    std::vector<double> weights;
    for (const auto& c : result.clients) weights.push_back(c.weight);
    model = aggregate(model, messages, plan, weights);

    if ((t + 1) % cfg.eval_every == 0 || t == cfg.rounds - 1)
      last_acc = evaluate(model, setup.test.features, setup.test.labels).accuracy;

    RoundRecord rec;
    rec.round = t;
    rec.train_loss = loss_sum / static_cast<double>(plan.selected.size());
    rec.test_accuracy = last_acc;
    rec.uplink_bytes_total = bytes;
    rec.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    rec.seed_fingerprint =
        detail::mix64(cfg.seed + detail::kGolden * (static_cast<std::uint64_t>(t) + 1));
    if (log) log(rec);
    result.records.push_back(rec);
  }
  result.final_model = std::move(model);
  return result;
}

}  // namespace fedbat

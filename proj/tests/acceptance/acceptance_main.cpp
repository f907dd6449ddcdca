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
//
// Acceptance suite: one verdict line per criterion, nonzero exit on failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedbat/engine.hpp"
#include "fedbat/theory.hpp"

using namespace fedbat;

namespace {

struct Failure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require(bool cond, const std::string& what) {
  if (!cond) throw Failure(what);
}

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

// --- 1. Unbiased stochastic binarization -----------------------------------

void criterion_unbiased() {
  SeededRng rng(2024);
  const int draws = 100000;
  for (int pair = 0; pair < 100; ++pair) {
    const double alpha = rng.uniform_range(0.05, 2.0);
    const double x = rng.uniform_range(-alpha, alpha);
    StepSizeParam step{alpha, 0.0, 0.0};
    auto [out, rec] = binarize_forward(Vec::Constant(draws, x), step, rng);
    const double mean = out.mean();
    const double stderr_ = std::sqrt((alpha - x) * (alpha + x) / draws);
    require(std::abs(mean - x) <= 4.0 * stderr_ + 1e-12,
            "pair " + std::to_string(pair) + ": mean " + fmt(mean) + " vs x " +
                fmt(x) + " exceeds 4 standard errors");
  }
}

// --- 2. Straight-through gradient tables ------------------------------------

void criterion_ste_tables() {
  for (double alpha : {0.5, 1.0, 2.0}) {
    for (double u : {1.0, -0.5, 2.0}) {
      for (double rho : {0.0, 6.0}) {
        const StepSizeParam step{alpha, 0.0, rho};
        for (double x : {-2 * alpha, -alpha, -alpha / 2, 0.0, alpha / 2, alpha,
                         2 * alpha}) {
          const bool inside = x >= -alpha && x <= alpha;
          for (std::uint8_t c : {std::uint8_t{0}, std::uint8_t{1}}) {
            BinarizeRecord rec;
            rec.regions = {x > alpha    ? Region::kAbove
                           : x < -alpha ? Region::kBelow
                                        : Region::kInside};
            rec.floor_bits = {c};
            Vec m(1), up(1);
            m(0) = x;
            up(0) = u;
            const BinarizeGrad g = binarize_backward(up, m, step, rec);
            const double want_m = inside ? u : 0.0;
            require(g.grad_m(0) == want_m, "m-gradient mismatch (zero tolerance)");
            const double galpha = x > alpha    ? 1.0
                                  : x < -alpha ? -1.0
                                               : 2.0 * c - (x + alpha) / alpha;
            require(g.grad_alpha_e == u * galpha * rho * alpha,
                    "alpha_e gradient mismatch (zero tolerance)");
            if (!inside) break;
          }
        }
      }
    }
  }
  // Forward/backward coupling: the recorded floor drives the middle branch.
  SeededRng rng(5);
  const StepSizeParam step{1.0, 0.0, 2.0};
  const Vec zeros = Vec::Zero(64);
  auto [out, rec] = binarize_forward(zeros, step, rng);
  const BinarizeGrad g = binarize_backward(Vec::Ones(64), zeros, step, rec);
  require(g.grad_alpha_e == out.sum() * 2.0,
          "cached-floor branch does not reproduce the forward rounding");
}

// --- 3. Finite-difference backprop -------------------------------------------

void criterion_finite_difference() {
  SeededRng root(404);
  const ModelSpec spec = ModelSpec::mlp(5, {8}, 4);  // 84 parameters
  SeededRng init = root.split("init");
  const GlobalModel model = GlobalModel::init(spec, init);
  Batch batch;
  batch.inputs.resize(6, 5);
  SeededRng brng = root.split("batch");
  for (int r = 0; r < 6; ++r)
    for (int c = 0; c < 5; ++c) batch.inputs(r, c) = brng.uniform();
  batch.labels = {0, 1, 2, 3, 0, 2};

  std::vector<Vec> m;
  SeededRng mrng = root.split("m");
  for (const auto& g : model.groups) {
    Vec v(g.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = mrng.uniform_range(-0.2, 0.2);
    m.push_back(v);
  }
  ForwardCache cache = forward(model, ForwardMode::shifted(m), batch);
  const Gradients grads = backward(cache);
  const double h = 1e-5;
  double max_rel = 0.0;
  for (std::size_t l = 0; l < m.size(); ++l) {
    for (Eigen::Index i = 0; i < m[l].size(); ++i) {
      auto mp = m, mm = m;
      mp[l](i) += h;
      mm[l](i) -= h;
      const double fd = (forward(model, ForwardMode::shifted(mp), batch).loss -
                         forward(model, ForwardMode::shifted(mm), batch).loss) /
                        (2 * h);
      max_rel = std::max(max_rel, std::abs(grads.groups[l](i) - fd) /
                                      std::max(std::abs(fd), 1e-6));
    }
  }
  require(max_rel <= 1e-4,
          "max relative FD error " + fmt(max_rel) + " exceeds 1e-4");

  // Identity-substituted binarizer must equal shifted mode bit-exactly.
  ForwardMode ident;
  ident.kind = ForwardMode::Kind::kBinarized;
  ident.update = &m;
  ident.identity_binarizer = true;
  ForwardCache ci = forward(model, ident, batch);
  ForwardCache cs = forward(model, ForwardMode::shifted(m), batch);
  require(ci.loss == cs.loss, "identity binarizer loss differs from shifted");
  const Gradients gi = backward(ci);
  const Gradients gs = backward(cs);
  for (std::size_t l = 0; l < gi.groups.size(); ++l)
    require(gi.groups[l] == gs.groups[l],
            "identity binarizer gradients differ from shifted");
}

// --- 4. Compression factor and round-trip -----------------------------------

void criterion_compression() {
  const ModelSpec spec = ModelSpec::mlp(64, {128, 32}, 10);
  require(spec.total_params() >= 10000, "model too small for the criterion");
  require(spec.num_dense() <= 20, "layer budget exceeded");
  const auto sizes = spec.group_sizes();

  RawUpdateMessage raw{0, 0, {}};
  BinaryUpdateMessage bin{0, 0, {}};
  for (std::size_t l = 0; l < sizes.size(); ++l) {
    raw.layers.push_back({static_cast<std::uint32_t>(l),
                          static_cast<std::uint32_t>(sizes[l]),
                          std::vector<float>(static_cast<std::size_t>(sizes[l]), 0.5f)});
    bin.layers.push_back(
        encode_signs(static_cast<std::uint32_t>(l), Vec::Ones(sizes[l]), 0.01));
  }
  const double ratio = static_cast<double>(uplink_bytes(UplinkMessage{raw})) /
                       static_cast<double>(uplink_bytes(UplinkMessage{bin}));
  require(ratio >= 30.0, "uplink ratio " + fmt(ratio) + " below 30");

  SeededRng rng(777);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n_layers = 1 + static_cast<int>(rng.next_below(5));
    BinaryUpdateMessage msg{static_cast<std::uint32_t>(trial), 3, {}};
    for (int l = 0; l < n_layers; ++l) {
      const Eigen::Index d = 1 + static_cast<Eigen::Index>(rng.next_below(200));
      Vec signs(d);
      for (Eigen::Index i = 0; i < d; ++i)
        signs(i) = rng.uniform() < 0.5 ? -1.0 : 1.0;
      msg.layers.push_back(encode_signs(static_cast<std::uint32_t>(l), signs,
                                        rng.uniform_range(0.001, 2.0)));
    }
    const UplinkMessage round_trip =
        parse_message(serialize_message(UplinkMessage{msg}));
    const auto& parsed = std::get<BinaryUpdateMessage>(round_trip);
    require(parsed.layers.size() == msg.layers.size(), "layer count changed");
    for (std::size_t l = 0; l < msg.layers.size(); ++l) {
      require(decode_signs(parsed.layers[l]) == decode_signs(msg.layers[l]),
              "decode(encode(v)) != v");
      require(parsed.layers[l].alpha == msg.layers[l].alpha, "alpha changed");
    }
  }
}

// --- 5. FedAvg oracle equivalence --------------------------------------------

void criterion_fedavg_oracle() {
  LabeledDataset data;
  data.features = make_matrix(2, 1, {0.5, 1.0});
  data.labels = {0, 1};
  data.num_classes = 2;
  GlobalModel model = GlobalModel::zeros(ModelSpec::logistic(1, 2));

  LocalTrainConfig ltc;
  ltc.tau = 1;
  ltc.phi = 0.0;
  ltc.eta = 0.25;
  ltc.batch_size = 64;
  ltc.algorithm = CodecKind::kFedAvgRaw;

  std::vector<UplinkMessage> messages;
  SeededRng root(1);
  for (int k = 0; k < 2; ++k) {
    NnLocalProblem problem(model, data, {k}, ltc.batch_size,
                           root.split("batches").split(static_cast<std::uint64_t>(k)));
    const auto local = local_train_baseline(problem, ltc);
    SeededRng codec_rng = root.split("codec").split(static_cast<std::uint64_t>(k));
    messages.push_back(compress(CodecKind::kFedAvgRaw, {}, 0,
                                static_cast<std::uint32_t>(k), local.delta,
                                nullptr, codec_rng));
  }
  RoundPlan plan;
  plan.selected = {0, 1};
  const GlobalModel out = aggregate(model, messages, plan, {0.5, 0.5});

  // Hand computation: zero weights give softmax (1/2, 1/2); with batch size 1
  // the gradient of the dense group for sample (x, y) is
  // [(p0-[y=0]) x, (p1-[y=1]) x, p0-[y=0], p1-[y=1]] and m = -eta * grad.
  const Vec m0 = make_vector({0.0625, -0.0625, 0.125, -0.125});
  const Vec m1 = make_vector({-0.125, 0.125, -0.125, 0.125});
  const Vec expect = 0.5 * m0 + 0.5 * m1;
  require((out.groups[0] - expect).lpNorm<Eigen::Infinity>() <= 1e-12,
          "aggregate deviates from the hand-computed weighted update");
}

// --- 6. Strongly convex rate -------------------------------------------------

void criterion_theorem_rate() {
  const QuadraticProblem problem = make_problem(8, 20, 1.0, 7);
  require(problem.gamma_het > 0.0, "problem must be heterogeneous");

  TheoremRunSpec spec;
  spec.tau = 5;
  spec.rounds = 1000;
  spec.n_seeds = 10;
  spec.seed = 1;
  const auto fedbat_run = run_theorem_mode(problem, spec);
  const RateFit fit = fit_rate_range(fedbat_run.mean_gaps, 100, 1000);
  require(fit.slope >= -1.3 && fit.slope <= -0.7,
          "fedbat slope " + fmt(fit.slope) + " outside [-1.3, -0.7]");

  // q = 0 control: the binarizer is replaced by the identity; stochastic
  // gradients supply the sigma > 0 noise the O(1/T) floor is made of.
  TheoremRunSpec control = spec;
  control.identity_binarizer = true;
  control.minibatch_rows = 5;
  const auto control_run = run_theorem_mode(problem, control);
  const RateFit cfit = fit_rate_range(control_run.mean_gaps, 100, 1000);
  require(cfit.slope >= -1.3 && cfit.slope <= -0.7,
          "control slope " + fmt(cfit.slope) + " outside [-1.3, -0.7]");

  TheoremRunSpec partial = spec;
  partial.k_clients = 8;  // K = N
  const auto partial_run = run_theorem_mode(problem, partial);
  for (int s = 0; s < spec.n_seeds; ++s)
    for (int r = 0; r < spec.rounds; ++r)
      require(partial_run.seed_gaps[static_cast<std::size_t>(s)]
                                   [static_cast<std::size_t>(r)] ==
                  fedbat_run.seed_gaps[static_cast<std::size_t>(s)]
                                      [static_cast<std::size_t>(r)],
              "K=N partial participation is not bit-exact with full");
}

// --- 7. Qualitative accuracy ordering ----------------------------------------

double ordering_accuracy(CodecKind kind, std::uint64_t seed) {
  ExperimentConfig cfg;
  cfg.algorithm = kind;
  cfg.codec = default_codec_params(kind);
  cfg.seed = seed;
  cfg.rounds = 100;
  cfg.n_clients = 30;
  cfg.clients_per_round = 10;
  cfg.local_epochs = 10;  // 3 batches per mean shard -> tau = 30
  cfg.batch_size = 64;
  cfg.lr = 0.1;
  cfg.warmup_ratio = 0.5;
  cfg.rho = 6.0;
  cfg.eval_every = 100;  // the criterion compares final accuracies
  cfg.dataset.n = 5000;
  cfg.dataset.test_n = 1000;
  cfg.dataset.dim = 32;
  cfg.dataset.classes = 10;
  cfg.dataset.spread = 0.25;
  cfg.partition_scheme = "label-shard";
  cfg.labels_per_client = 3;
  cfg.model.kind = "mlp";
  cfg.model.hidden = {64};
  return run_experiment(cfg).records.back().test_accuracy;
}

void criterion_ordering() {
  const std::vector<CodecKind> kinds = {
      CodecKind::kFedAvgRaw,   CodecKind::kSignSgd,  CodecKind::kEfSignSgd,
      CodecKind::kNoisySignSgd, CodecKind::kStocSignSgd, CodecKind::kFedBat};
  std::vector<double> acc(kinds.size(), 0.0);
  for (std::uint64_t seed = 1000; seed < 1005; ++seed)
    for (std::size_t i = 0; i < kinds.size(); ++i)
      acc[i] += ordering_accuracy(kinds[i], seed) / 5.0;
  const double fedavg = acc[0], signsgd = acc[1], ef = acc[2], noisy = acc[3],
               stoc = acc[4], fedbat = acc[5];
  std::printf("        accuracies: fedavg %.4f signsgd %.4f ef %.4f noisy %.4f "
              "stoc %.4f fedbat %.4f\n",
              fedavg, signsgd, ef, noisy, stoc, fedbat);
  require(fedbat >= signsgd + 0.02,
          "(a) fedbat " + fmt(fedbat) + " not >= signsgd " + fmt(signsgd) + " + 2pts");
  require(fedbat >= fedavg - 0.02,
          "(b) fedbat " + fmt(fedbat) + " not within 2pts of fedavg " + fmt(fedavg));
  require(ef >= signsgd - 0.01, "(c) ef below signsgd - 1pt");
  require(noisy >= signsgd - 0.01, "(c) noisy below signsgd - 1pt");
  require(stoc >= signsgd - 0.01, "(c) stoc below signsgd - 1pt");
}

// --- 8. Warm-up protocol -------------------------------------------------------

void criterion_warmup() {
  const LabeledDataset data = synth_blobs(200, 8, 4, 0.3, 15);
  SeededRng root(21);
  SeededRng init = root.split("init");
  const GlobalModel model = GlobalModel::init(ModelSpec::mlp(8, {12}, 4), init);
  std::vector<int> shard(120);
  std::iota(shard.begin(), shard.end(), 0);
  NnLocalProblem problem(model, data, shard, 32, root.split("batches"));

  LocalTrainConfig cfg;
  cfg.tau = 10;
  cfg.phi = 0.5;
  cfg.rho = 6.0;
  cfg.eta = 0.1;
  cfg.algorithm = CodecKind::kFedBat;
  SeededRng bin_rng = root.split("binarize");
  const FedbatLocalResult res = local_train_fedbat(problem, cfg, bin_rng);

  require(res.trace.size() == 10, "trace length");
  for (int s = 0; s < 10; ++s)
    require(res.trace[static_cast<std::size_t>(s)] ==
                (s < 5 ? StepType::kFullPrecision : StepType::kBinarizationAware),
            "step " + std::to_string(s) + " has the wrong mode");
  require(res.init_step == 5, "initialization fired at step " +
                                  std::to_string(res.init_step) + ", want 5");
  for (std::size_t l = 0; l < res.alpha_prime_init.size(); ++l) {
    double l1 = 0.0;  // independent of the library norm
    for (Eigen::Index i = 0; i < res.update_at_init[l].size(); ++i)
      l1 += std::abs(res.update_at_init[l](i));
    const double want = l1 / static_cast<double>(res.update_at_init[l].size());
    require(std::abs(res.alpha_prime_init[l] - want) <= 1e-15 * (1.0 + want),
            "layer " + std::to_string(l) + " alpha' != |m|_1 / d");
  }
}

// --- 9. Determinism ------------------------------------------------------------

void criterion_determinism() {
  ExperimentConfig cfg;
  cfg.algorithm = CodecKind::kFedBat;
  cfg.codec = default_codec_params(cfg.algorithm);
  cfg.seed = 99;
  cfg.rounds = 5;
  cfg.n_clients = 6;
  cfg.clients_per_round = 3;
  cfg.local_steps = 6;
  cfg.batch_size = 16;
  cfg.dataset.n = 600;
  cfg.dataset.test_n = 120;
  cfg.dataset.dim = 8;
  cfg.dataset.classes = 4;
  cfg.dataset.spread = 0.3;
  cfg.partition_scheme = "dirichlet";
  cfg.dirichlet_beta = 0.3;
  cfg.model.kind = "mlp";
  cfg.model.hidden = {16};

  const std::string a = metrics_csv(run_experiment(cfg).records, "fedbat");
  const std::string b = metrics_csv(run_experiment(cfg).records, "fedbat");
  require(a == b, "two runs of the same config produced different CSV bytes");

  cfg.algorithm = CodecKind::kEfSignSgd;
  cfg.codec = default_codec_params(cfg.algorithm);
  const std::string c = metrics_csv(run_experiment(cfg).records, "ef-signsgd");
  const std::string d = metrics_csv(run_experiment(cfg).records, "ef-signsgd");
  require(c == d, "ef-signsgd runs diverge across repeats");
}

// --- 10. Error-feedback residual identity ---------------------------------------

void criterion_ef_identity() {
  SeededRng rng(314);
  auto state = ErrorFeedbackState::zeros({48, 12});
  for (int round = 0; round < 200; ++round) {
    UpdateDelta delta;
    for (Eigen::Index n : {Eigen::Index{48}, Eigen::Index{12}}) {
      Vec m(n);
      for (Eigen::Index i = 0; i < n; ++i) m(i) = rng.uniform_range(-1.0, 1.0);
      delta.layers.push_back(std::move(m));
    }
    const std::vector<Vec> before = state.layers;
    const auto msg = compress(CodecKind::kEfSignSgd, {},
                              static_cast<std::uint32_t>(round), 0, delta, &state, rng);
    const auto mhat = decode_update(msg);
    for (std::size_t l = 0; l < delta.layers.size(); ++l) {
      const Vec b = delta.layers[l] + before[l];
      require((b - (mhat[l] + state.layers[l])).lpNorm<Eigen::Infinity>() <= 1e-12,
              "b != mhat + e_new at round " + std::to_string(round));
    }
  }

  // Residuals persist across non-participating rounds.
  ExperimentConfig cfg;
  cfg.algorithm = CodecKind::kEfSignSgd;
  cfg.codec = default_codec_params(cfg.algorithm);
  cfg.seed = 77;
  cfg.rounds = 4;
  cfg.n_clients = 6;
  cfg.clients_per_round = 1;
  cfg.local_steps = 3;
  cfg.batch_size = 16;
  cfg.dataset.n = 300;
  cfg.dataset.test_n = 60;
  cfg.dataset.dim = 6;
  cfg.dataset.classes = 3;
  cfg.dataset.spread = 0.3;
  cfg.model.kind = "logreg";

  std::vector<bool> sampled(6, false);
  MessageSink sink = [&](int, const UplinkMessage& msg) {
    sampled[message_client(msg)] = true;
  };
  const RunResult run = run_experiment(cfg, nullptr, sink);
  for (const auto& client : run.clients) {
    bool nonzero = false;
    for (const auto& layer : client.ef_residual.layers)
      nonzero = nonzero || !layer.isZero(0.0);
    if (!sampled[static_cast<std::size_t>(client.client_id)])
      require(!nonzero, "unsampled client residual changed");
    else
      require(nonzero, "sampled client residual never updated");
  }
}

struct Criterion {
  int id;
  const char* name;
  std::function<void()> body;
  double budget_seconds;  // 0 = no stated budget
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {1, "unbiased binarization (100 pairs x 1e5 draws)", criterion_unbiased, 10.0},
      {2, "straight-through gradient tables (exact)", criterion_ste_tables, 0.0},
      {3, "finite-difference backprop + identity hook", criterion_finite_difference, 0.0},
      {4, "compression factor >= 30 and codec round-trip", criterion_compression, 0.0},
      {5, "fedavg oracle equivalence (1e-12)", criterion_fedavg_oracle, 0.0},
      {6, "strongly convex O(1/T) rate, control, K=N", criterion_theorem_rate, 120.0},
      {7, "qualitative accuracy ordering at desk scale", criterion_ordering, 600.0},
      {8, "warm-up protocol trace and step-size init", criterion_warmup, 0.0},
      {9, "byte-identical metrics across repeated runs", criterion_determinism, 0.0},
      {10, "error-feedback residual identity + persistence", criterion_ef_identity, 0.0},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    std::string error;
    try {
      c.body();
    } catch (const std::exception& e) {
      error = e.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    bool ok = error.empty();
    if (ok && c.budget_seconds > 0.0 && secs > c.budget_seconds) {
      ok = false;
      error = "runtime " + fmt(secs) + "s exceeds budget " + fmt(c.budget_seconds) + "s";
    }
    std::printf("[%s] criterion %2d: %s (%.1fs)%s%s\n", ok ? "PASS" : "FAIL", c.id,
                c.name, secs, error.empty() ? "" : " - ", error.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
  }
  if (failures > 0) std::printf("%d criterion(s) failed\n", failures);
  return failures;
}

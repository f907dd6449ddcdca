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

#ifndef FEDBAT_NN_HPP
#define FEDBAT_NN_HPP

#include <string>
#include <vector>

#include "fedbat/binarizer.hpp"
#include "fedbat/rng.hpp"
#include "fedbat/tensor.hpp"

namespace fedbat {

enum class LayerKind { kDense, kRelu, kSoftmaxXent };

struct LayerSpec {
  LayerKind kind;
  int in_dim = 0;   // dense only
  int out_dim = 0;  // dense only
};

// Feed-forward classifier description. Dense layers carry parameters; the
// last layer must be the softmax cross-entropy head.
struct ModelSpec {
  std::vector<LayerSpec> layers;

  static ModelSpec logistic(int inputs, int classes);
  static ModelSpec mlp(int inputs, const std::vector<int>& hidden, int classes);

  void validate() const;
  int num_dense() const;
  int input_dim() const;
  int num_classes() const;
  // Parameters of dense layer l as one flat group: weights (out x in,
  // row-major) followed by the bias. One binarization step size covers the
  // whole group, bias included.
  Eigen::Index group_size(int dense_index) const;
  Eigen::Index total_params() const;
  std::vector<Eigen::Index> group_sizes() const;
};

// Server-side parameter set: one flat vector per dense layer.
struct GlobalModel {
  ModelSpec spec;
  std::vector<Vec> groups;

  // He-scaled weights from the given stream, zero biases.
  static GlobalModel init(const ModelSpec& spec, SeededRng& rng);
  static GlobalModel zeros(const ModelSpec& spec);
};

struct Batch {
  Mat inputs;               // batch x input_dim
  std::vector<int> labels;  // in [0, num_classes)
};

// What the forward pass evaluates and which parameters receive gradients:
// plain trains w, shifted trains m at w+m, binarized trains (m, alpha_e) at
// w + S(m, alpha) through the straight-through estimator.
struct ForwardMode {
  enum class Kind { kPlain, kShifted, kBinarized };
  Kind kind = Kind::kPlain;
  const std::vector<Vec>* update = nullptr;
  const std::vector<StepSizeParam>* steps = nullptr;
  SeededRng* rng = nullptr;
  // Test hook: substitute the identity for S. Reproduces shifted mode
  // bit-exactly while exercising the binarized code path.
  bool identity_binarizer = false;

  static ForwardMode plain() { return {}; }
  static ForwardMode shifted(const std::vector<Vec>& m) {
    return {Kind::kShifted, &m, nullptr, nullptr, false};
  }
  static ForwardMode binarized(const std::vector<Vec>& m,
                               const std::vector<StepSizeParam>& steps,
                               SeededRng& rng) {
    return {Kind::kBinarized, &m, &steps, &rng, false};
  }
};

// Everything backward() needs, captured by value.
struct ForwardCache {
  double loss = 0.0;
  ForwardMode::Kind kind = ForwardMode::Kind::kPlain;
  bool identity_binarizer = false;
  ModelSpec spec;
  std::vector<int> labels;
  Mat probs;                       // batch x classes, softmax output
  std::vector<Mat> dense_inputs;   // per dense layer
  std::vector<Mat> relu_masks;     // per relu layer
  std::vector<Vec> effective;      // per dense layer, w (+ m or S(m))
  std::vector<Vec> update;         // binarized/shifted: m snapshot
  std::vector<StepSizeParam> steps;
  std::vector<BinarizeRecord> records;  // binarized only
  bool consumed = false;
};

ForwardCache forward(const GlobalModel& model, const ForwardMode& mode,
                     const Batch& batch);

struct Gradients {
  // Aligned with model groups; gradients of w (plain), m (shifted), or the
  // band-masked m (binarized).
  std::vector<Vec> groups;
  // Binarized mode: one alpha_e gradient per dense layer, else empty.
  std::vector<double> alpha_e;
};

// Consumes the cache; a second call on the same cache is rejected.
Gradients backward(ForwardCache& cache);

// p <- p - eta * g, elementwise. eta = 0 is a legal no-op.
void sgd_step(std::vector<Vec>& params, const std::vector<Vec>& grads,
              double eta);

struct EvalResult {
  double accuracy = 0.0;
  double mean_loss = 0.0;
};

// Argmax accuracy (ties broken by lowest class index) and mean loss of the
// server model on a labeled set.
EvalResult evaluate(const GlobalModel& model, const Mat& features,
                    const std::vector<int>& labels);

}  // namespace fedbat

#endif  // FEDBAT_NN_HPP

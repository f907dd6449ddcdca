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

#include "fedbat/nn.hpp"

#include <cmath>

namespace fedbat {

namespace {

Eigen::Map<const Mat> weight_view(const Vec& group, int out, int in) {
  return Eigen::Map<const Mat>(group.data(), out, in);
}

Eigen::Map<const Vec> bias_view(const Vec& group, int out, int in) {
  return Eigen::Map<const Vec>(group.data() + static_cast<std::ptrdiff_t>(out) * in, out);
}

}  // namespace

ModelSpec ModelSpec::logistic(int inputs, int classes) {
  ModelSpec spec;
  spec.layers.push_back({LayerKind::kDense, inputs, classes});
  spec.layers.push_back({LayerKind::kSoftmaxXent});
  spec.validate();
  return spec;
}

ModelSpec ModelSpec::mlp(int inputs, const std::vector<int>& hidden,
                         int classes) {
  ModelSpec spec;
  int prev = inputs;
  for (int h : hidden) {
    spec.layers.push_back({LayerKind::kDense, prev, h});
    spec.layers.push_back({LayerKind::kRelu});
    prev = h;
  }
  spec.layers.push_back({LayerKind::kDense, prev, classes});
  spec.layers.push_back({LayerKind::kSoftmaxXent});
  spec.validate();
  return spec;
}

void ModelSpec::validate() const {
  if (layers.empty() || layers.back().kind != LayerKind::kSoftmaxXent)
    throw ArgumentError("model: last layer must be the softmax-xent head");
  int prev = -1;
  for (const auto& l : layers) {
    if (l.kind == LayerKind::kDense) {
      if (l.in_dim < 1 || l.out_dim < 1)
        throw ArgumentError("model: dense layer with empty shape");
      if (prev >= 0 && l.in_dim != prev)
        throw DimensionError("model: dense in_dim does not chain");
      prev = l.out_dim;
    }
  }
  if (num_dense() < 1) throw ArgumentError("model: needs a dense layer");
}

int ModelSpec::num_dense() const {
  int n = 0;
  for (const auto& l : layers)
    if (l.kind == LayerKind::kDense) ++n;
  return n;
}

int ModelSpec::input_dim() const {
  for (const auto& l : layers)
    if (l.kind == LayerKind::kDense) return l.in_dim;
  return 0;
}

int ModelSpec::num_classes() const {
  int out = 0;
  for (const auto& l : layers)
    if (l.kind == LayerKind::kDense) out = l.out_dim;
  return out;
}

Eigen::Index ModelSpec::group_size(int dense_index) const {
  int seen = 0;
  for (const auto& l : layers) {
    if (l.kind != LayerKind::kDense) continue;
    if (seen == dense_index)
      return static_cast<Eigen::Index>(l.out_dim) * l.in_dim + l.out_dim;
    ++seen;
  }
  throw ArgumentError("model: dense index out of range");
}

Eigen::Index ModelSpec::total_params() const {
  Eigen::Index n = 0;
  for (int l = 0; l < num_dense(); ++l) n += group_size(l);
  return n;
}

std::vector<Eigen::Index> ModelSpec::group_sizes() const {
  std::vector<Eigen::Index> out;
  for (int l = 0; l < num_dense(); ++l) out.push_back(group_size(l));
  return out;
}

GlobalModel GlobalModel::init(const ModelSpec& spec, SeededRng& rng) {
  spec.validate();
  GlobalModel model;
  model.spec = spec;
  int dense = 0;
  for (const auto& l : spec.layers) {
    if (l.kind != LayerKind::kDense) continue;
    Vec g = Vec::Zero(spec.group_size(dense));
    const double sigma = std::sqrt(2.0 / l.in_dim);
    const Eigen::Index n_w = static_cast<Eigen::Index>(l.out_dim) * l.in_dim;
    for (Eigen::Index i = 0; i < n_w; ++i) g(i) = rng.gaussian(sigma);
    model.groups.push_back(std::move(g));  // biases stay zero
    ++dense;
  }
  return model;
}

GlobalModel GlobalModel::zeros(const ModelSpec& spec) {
  spec.validate();
  GlobalModel model;
  model.spec = spec;
  for (int l = 0; l < spec.num_dense(); ++l)
    model.groups.push_back(Vec::Zero(spec.group_size(l)));
  return model;
}

ForwardCache forward(const GlobalModel& model, const ForwardMode& mode,
                     const Batch& batch) {
  const ModelSpec& spec = model.spec;
  if (batch.inputs.rows() < 1) throw ArgumentError("forward: empty batch");
  if (batch.inputs.cols() != spec.input_dim())
    throw DimensionError("forward: input dim mismatch");
  if (batch.labels.size() != static_cast<std::size_t>(batch.inputs.rows()))
    throw DimensionError("forward: labels/inputs count mismatch");
  const int classes = spec.num_classes();
  for (int y : batch.labels)
    if (y < 0 || y >= classes) throw ArgumentError("forward: label out of range");
  require_finite(batch.inputs, "forward inputs");

  ForwardCache cache;
  cache.kind = mode.kind;
  cache.identity_binarizer = mode.identity_binarizer;
  cache.spec = spec;
  cache.labels = batch.labels;

  const int n_dense = spec.num_dense();
  if (mode.kind != ForwardMode::Kind::kPlain) {
    if (mode.update == nullptr ||
        mode.update->size() != static_cast<std::size_t>(n_dense))
      throw ContractError("forward: update blocks missing or misshapen");
    cache.update = *mode.update;
  }
  if (mode.kind == ForwardMode::Kind::kBinarized) {
    if (!mode.identity_binarizer &&
        (mode.steps == nullptr ||
         mode.steps->size() != static_cast<std::size_t>(n_dense) ||
         mode.rng == nullptr))
      throw ContractError("forward: binarized mode needs step sizes and rng");
    if (mode.steps != nullptr) cache.steps = *mode.steps;
  }

  // Effective parameters per mode.
  for (int l = 0; l < n_dense; ++l) {
    if (cache.update.size() > 0 &&
        cache.update[static_cast<std::size_t>(l)].size() != spec.group_size(l))
      throw DimensionError("forward: update block size mismatch");
    switch (mode.kind) {
      case ForwardMode::Kind::kPlain:
        cache.effective.push_back(model.groups[static_cast<std::size_t>(l)]);
        break;
      case ForwardMode::Kind::kShifted:
        cache.effective.push_back(model.groups[static_cast<std::size_t>(l)] +
                                  cache.update[static_cast<std::size_t>(l)]);
        break;
      case ForwardMode::Kind::kBinarized: {
        if (mode.identity_binarizer) {
          cache.effective.push_back(model.groups[static_cast<std::size_t>(l)] +
                                    cache.update[static_cast<std::size_t>(l)]);
        } else {
          auto [mhat, rec] = binarize_forward(
              cache.update[static_cast<std::size_t>(l)],
              cache.steps[static_cast<std::size_t>(l)], *mode.rng);
          cache.effective.push_back(model.groups[static_cast<std::size_t>(l)] +
                                    mhat);
          cache.records.push_back(std::move(rec));
        }
        break;
      }
    }
  }

  // Forward sweep.
  Mat a = batch.inputs;
  int dense = 0;
  for (const auto& layer : spec.layers) {
    switch (layer.kind) {
      case LayerKind::kDense: {
        const Vec& g = cache.effective[static_cast<std::size_t>(dense)];
        cache.dense_inputs.push_back(a);
        const auto w = weight_view(g, layer.out_dim, layer.in_dim);
        const auto b = bias_view(g, layer.out_dim, layer.in_dim);
        a = (a * w.transpose()).rowwise() + b.transpose();
        ++dense;
        break;
      }
      case LayerKind::kRelu: {
        Mat mask = (a.array() > 0.0).cast<double>();
        a = a.cwiseProduct(mask);
        cache.relu_masks.push_back(std::move(mask));
        break;
      }
      case LayerKind::kSoftmaxXent: {
        const Eigen::Index batch_n = a.rows();
        Mat probs(batch_n, a.cols());
        double loss = 0.0;
        for (Eigen::Index r = 0; r < batch_n; ++r) {
          const double mx = a.row(r).maxCoeff();
          const Eigen::ArrayXd e = (a.row(r).array() - mx).exp();
          const double z = e.sum();
          probs.row(r) = (e / z).matrix();
          loss += std::log(z) + mx - a(r, batch.labels[static_cast<std::size_t>(r)]);
        }
        cache.probs = std::move(probs);
        cache.loss = loss / static_cast<double>(batch_n);
        break;
      }
    }
  }
  return cache;
}

Gradients backward(ForwardCache& cache) {
  if (cache.consumed) throw ContractError("backward: cache already consumed");
  cache.consumed = true;
  const ModelSpec& spec = cache.spec;
  const Eigen::Index batch_n = cache.probs.rows();

  Mat g = cache.probs;  // dL/dlogits = (probs - onehot)/B
  for (Eigen::Index r = 0; r < batch_n; ++r)
    g(r, cache.labels[static_cast<std::size_t>(r)]) -= 1.0;
  g /= static_cast<double>(batch_n);

  const int n_dense = spec.num_dense();
  std::vector<Vec> eff_grads(static_cast<std::size_t>(n_dense));
  int dense = n_dense;
  int relu = static_cast<int>(cache.relu_masks.size());
  for (auto it = spec.layers.rbegin(); it != spec.layers.rend(); ++it) {
    switch (it->kind) {
      case LayerKind::kSoftmaxXent:
        break;
      case LayerKind::kRelu:
        --relu;
        g = g.cwiseProduct(cache.relu_masks[static_cast<std::size_t>(relu)]);
        break;
      case LayerKind::kDense: {
        --dense;
        const Mat& x = cache.dense_inputs[static_cast<std::size_t>(dense)];
        const Vec& eg = cache.effective[static_cast<std::size_t>(dense)];
        const auto w = weight_view(eg, it->out_dim, it->in_dim);
        Vec grad(spec.group_size(dense));
        Eigen::Map<Mat>(grad.data(), it->out_dim, it->in_dim) = g.transpose() * x;
        Eigen::Map<Vec>(grad.data() + static_cast<std::ptrdiff_t>(it->out_dim) * it->in_dim,
                        it->out_dim) = g.colwise().sum().transpose();
        eff_grads[static_cast<std::size_t>(dense)] = std::move(grad);
        if (dense > 0) g = g * w;  // propagate only where still needed
        break;
      }
    }
  }

  Gradients out;
  if (cache.kind == ForwardMode::Kind::kBinarized && !cache.identity_binarizer) {
    for (int l = 0; l < n_dense; ++l) {
      const auto idx = static_cast<std::size_t>(l);
      BinarizeGrad bg = binarize_backward(eff_grads[idx], cache.update[idx],
                                          cache.steps[idx], cache.records[idx]);
      out.groups.push_back(std::move(bg.grad_m));
      out.alpha_e.push_back(bg.grad_alpha_e);
    }
  } else {
    out.groups = std::move(eff_grads);
  }
  return out;
}

void sgd_step(std::vector<Vec>& params, const std::vector<Vec>& grads,
              double eta) {
  if (eta < 0.0) throw ArgumentError("sgd_step: negative learning rate");
  if (params.size() != grads.size())
    throw DimensionError("sgd_step: block count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].size() != grads[i].size())
      throw DimensionError("sgd_step: block shape mismatch");
    params[i] -= eta * grads[i];
  }
}

EvalResult evaluate(const GlobalModel& model, const Mat& features,
                    const std::vector<int>& labels) {
  if (features.rows() < 1) throw ArgumentError("evaluate: empty dataset");
  Batch batch{features, labels};
  ForwardCache cache = forward(model, ForwardMode::plain(), batch);
  int hits = 0;
  for (Eigen::Index r = 0; r < cache.probs.rows(); ++r) {
    int best = 0;
    for (Eigen::Index c = 1; c < cache.probs.cols(); ++c)
      if (cache.probs(r, c) > cache.probs(r, best)) best = static_cast<int>(c);
    if (best == labels[static_cast<std::size_t>(r)]) ++hits;
  }
  return {static_cast<double>(hits) / static_cast<double>(features.rows()),
          cache.loss};
}

}  // namespace fedbat

// Copyright 2026 The dpfl Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef DPFL_MODEL_MODEL_HPP_
#define DPFL_MODEL_MODEL_HPP_

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "dpfl/common/error.hpp"
#include "dpfl/common/random.hpp"
#include "dpfl/model/dataset.hpp"

namespace dpfl {

struct LayerShape {
  std::string name;
  std::vector<size_t> dims;

  size_t size() const {
    size_t n = 1;
    for (size_t d : dims) n *= d;
    return n;
  }
  bool operator==(const LayerShape&) const = default;
};

// Flat parameter vector plus the layer layout it is read through. This is the
// unit exchanged between hospitals and the server.
struct ModelParams {
  std::vector<double> values;
  std::vector<LayerShape> shape;

  size_t size() const { return values.size(); }

  void validate() const {
    size_t total = 0;
    for (const auto& l : shape) total += l.size();
    require(total == values.size(),
            "model: shape describes " + std::to_string(total) +
                " parameters but " + std::to_string(values.size()) + " present");
    for (size_t i = 0; i < values.size(); ++i) {
      require(std::isfinite(values[i]),
              "model: non-finite parameter at index " + std::to_string(i));
    }
  }

  bool operator==(const ModelParams&) const = default;
};

struct PerSampleGradient {
  std::vector<double> values;
};

enum class ModelKind { kLogistic, kMlp };

inline ModelParams make_logistic_model(size_t num_features,
                                       size_t num_classes) {
  require(num_features >= 1 && num_classes >= 2,
          "logistic model needs features and >= 2 classes");
  ModelParams m;
  m.shape = {{"logits.weight", {num_classes, num_features}},
             {"logits.bias", {num_classes}}};
  m.values.assign(num_classes * num_features + num_classes, 0.0);
  return m;
}

// One tanh hidden layer. Weights ~ N(0, 1/fan_in), biases zero.
inline ModelParams make_mlp_model(size_t num_features, size_t hidden,
                                  size_t num_classes, NoiseSource& rng) {
  require(num_features >= 1 && hidden >= 1 && num_classes >= 2,
          "mlp model needs features, hidden units and >= 2 classes");
  ModelParams m;
  m.shape = {{"hidden.weight", {hidden, num_features}},
             {"hidden.bias", {hidden}},
             {"logits.weight", {num_classes, hidden}},
             {"logits.bias", {num_classes}}};
  m.values.reserve(hidden * num_features + hidden + num_classes * hidden +
                   num_classes);
  const double s1 = 1.0 / std::sqrt(static_cast<double>(num_features));
  for (size_t i = 0; i < hidden * num_features; ++i) m.values.push_back(rng.gaussian(s1));
  m.values.insert(m.values.end(), hidden, 0.0);
  const double s2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (size_t i = 0; i < num_classes * hidden; ++i) m.values.push_back(rng.gaussian(s2));
  m.values.insert(m.values.end(), num_classes, 0.0);
  return m;
}

namespace internal {

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatMap = Eigen::Map<const RowMatrix>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;
using VecMap = Eigen::Map<Eigen::VectorXd>;

struct Layout {
  ModelKind kind;
  size_t in = 0;
  size_t hidden = 0;
  size_t classes = 0;
};

inline Layout layout_of(const ModelParams& m) {
  m.validate();
  const auto& s = m.shape;
  if (s.size() == 2 && s[0].name == "logits.weight" && s[1].name == "logits.bias" &&
      s[0].dims.size() == 2 && s[1].dims.size() == 1 && s[0].dims[0] == s[1].dims[0]) {
    return {ModelKind::kLogistic, s[0].dims[1], 0, s[0].dims[0]};
  }
  if (s.size() == 4 && s[0].name == "hidden.weight" && s[1].name == "hidden.bias" &&
      s[2].name == "logits.weight" && s[3].name == "logits.bias" &&
      s[0].dims.size() == 2 && s[2].dims.size() == 2 &&
      s[1].dims == std::vector<size_t>{s[0].dims[0]} &&
      s[2].dims[1] == s[0].dims[0] &&
      s[3].dims == std::vector<size_t>{s[2].dims[0]}) {
    return {ModelKind::kMlp, s[0].dims[1], s[0].dims[0], s[2].dims[0]};
  }
  throw InvalidArgument("model: unrecognised layer layout");
}

// log(sum(exp(z))) without overflow.
inline double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd>& z) {
  const double zmax = z.maxCoeff();
  return zmax + std::log((z.array() - zmax).exp().sum());
}

// Forward + backward for one sample. Writes the gradient into `grad` (same
// layout as the model) and returns the cross-entropy loss.
inline double sample_backward(const ModelParams& m, const Layout& lay,
                              const LabeledSample& x, std::span<double> grad) {
  const ConstVecMap input(x.features.data(), static_cast<Eigen::Index>(lay.in));
  const auto label = static_cast<Eigen::Index>(x.label);
  const double* p = m.values.data();
  double* g = grad.data();
  const auto in = static_cast<Eigen::Index>(lay.in);
  const auto cls = static_cast<Eigen::Index>(lay.classes);

  if (lay.kind == ModelKind::kLogistic) {
    ConstMatMap w(p, cls, in);
    ConstVecMap b(p + cls * in, cls);
    Eigen::VectorXd z = w * input + b;
    const double lse = log_sum_exp(z);
    Eigen::VectorXd delta = (z.array() - lse).exp();
    const double loss = lse - z(label);
    delta(label) -= 1.0;
    MatMap(g, cls, in).noalias() = delta * input.transpose();
    VecMap(g + cls * in, cls) = delta;
    return loss;
  }

  const auto hid = static_cast<Eigen::Index>(lay.hidden);
  ConstMatMap w1(p, hid, in);
  ConstVecMap b1(p + hid * in, hid);
  ConstMatMap w2(p + hid * in + hid, cls, hid);
  ConstVecMap b2(p + hid * in + hid + cls * hid, cls);
  Eigen::VectorXd h = (w1 * input + b1).array().tanh();
  Eigen::VectorXd z = w2 * h + b2;
  const double lse = log_sum_exp(z);
  Eigen::VectorXd delta2 = (z.array() - lse).exp();
  const double loss = lse - z(label);
  delta2(label) -= 1.0;
  Eigen::VectorXd delta1 =
      (w2.transpose() * delta2).array() * (1.0 - h.array().square());
  MatMap(g, hid, in).noalias() = delta1 * input.transpose();
  VecMap(g + hid * in, hid) = delta1;
  MatMap(g + hid * in + hid, cls, hid).noalias() = delta2 * h.transpose();
  VecMap(g + hid * in + hid + cls * hid, cls) = delta2;
  return loss;
}

inline void check_sample(const Layout& lay, const LabeledSample& s) {
  if (s.features.size() != lay.in) {
    throw InvalidArgument("sample has " + std::to_string(s.features.size()) +
                          " features, model expects " + std::to_string(lay.in));
  }
  if (s.label < 0 || static_cast<size_t>(s.label) >= lay.classes) {
    throw InvalidArgument("sample label " + std::to_string(s.label) +
                          " outside model's class range");
  }
}

inline RowMatrix stack_features(std::span<const LabeledSample> batch,
                                const Layout& lay) {
  RowMatrix x(static_cast<Eigen::Index>(batch.size()),
              static_cast<Eigen::Index>(lay.in));
  for (size_t i = 0; i < batch.size(); ++i) {
    check_sample(lay, batch[i]);
    x.row(static_cast<Eigen::Index>(i)) =
        ConstVecMap(batch[i].features.data(), x.cols()).transpose();
  }
  return x;
}

// Logits for a stacked batch (rows = samples).
inline RowMatrix forward_logits(const ModelParams& m, const Layout& lay,
                                const RowMatrix& x, RowMatrix* hidden = nullptr) {
  const double* p = m.values.data();
  const auto in = static_cast<Eigen::Index>(lay.in);
  const auto cls = static_cast<Eigen::Index>(lay.classes);
  if (lay.kind == ModelKind::kLogistic) {
    ConstMatMap w(p, cls, in);
    ConstVecMap b(p + cls * in, cls);
    RowMatrix z = x * w.transpose();
    z.rowwise() += b.transpose();
    return z;
  }
  const auto hid = static_cast<Eigen::Index>(lay.hidden);
  ConstMatMap w1(p, hid, in);
  ConstVecMap b1(p + hid * in, hid);
  ConstMatMap w2(p + hid * in + hid, cls, hid);
  ConstVecMap b2(p + hid * in + hid + cls * hid, cls);
  RowMatrix a = x * w1.transpose();
  a.rowwise() += b1.transpose();
  RowMatrix h = a.array().tanh();
  RowMatrix z = h * w2.transpose();
  z.rowwise() += b2.transpose();
  if (hidden != nullptr) *hidden = std::move(h);
  return z;
}

}  // namespace internal

struct LossAndGrads {
  double loss = 0.0;  // mean cross-entropy over the batch
  std::vector<PerSampleGradient> grads;
};

// One explicit backward pass per example.
inline LossAndGrads loss_and_per_sample_grads(
    const ModelParams& model, std::span<const LabeledSample> batch) {
  if (batch.empty()) throw InvalidArgument("loss_and_per_sample_grads: empty batch");
  const auto lay = internal::layout_of(model);
  LossAndGrads out;
  out.grads.resize(batch.size());
  double total = 0.0;
  for (size_t i = 0; i < batch.size(); ++i) {
    internal::check_sample(lay, batch[i]);
    out.grads[i].values.assign(model.size(), 0.0);
    total += internal::sample_backward(model, lay, batch[i], out.grads[i].values);
  }
  out.loss = total / static_cast<double>(batch.size());
  return out;
}

struct LossAndGradient {
  double loss = 0.0;
  std::vector<double> gradient;
};

// Gradient of the mean loss, computed with whole-batch matrix products rather
// than per-example passes.
inline LossAndGradient mean_loss_and_gradient(
    const ModelParams& model, std::span<const LabeledSample> batch) {
  if (batch.empty()) throw InvalidArgument("mean_loss_and_gradient: empty batch");
  using internal::RowMatrix;
  const auto lay = internal::layout_of(model);
  const RowMatrix x = internal::stack_features(batch, lay);
  RowMatrix h;
  RowMatrix z = internal::forward_logits(model, lay, x, &h);
  const auto n = static_cast<double>(batch.size());

  Eigen::VectorXd lse(z.rows());
  for (Eigen::Index i = 0; i < z.rows(); ++i) lse(i) = internal::log_sum_exp(z.row(i).transpose());
  RowMatrix delta = (z.colwise() - lse).array().exp();
  double loss = 0.0;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const auto y = static_cast<Eigen::Index>(batch[static_cast<size_t>(i)].label);
    loss += lse(i) - z(i, y);
    delta(i, y) -= 1.0;
  }
  delta /= n;

  LossAndGradient out{loss / n, std::vector<double>(model.size())};
  double* g = out.gradient.data();
  const auto in = static_cast<Eigen::Index>(lay.in);
  const auto cls = static_cast<Eigen::Index>(lay.classes);
  if (lay.kind == ModelKind::kLogistic) {
    internal::MatMap(g, cls, in).noalias() = delta.transpose() * x;
    internal::VecMap(g + cls * in, cls) = delta.colwise().sum().transpose();
    return out;
  }
  const auto hid = static_cast<Eigen::Index>(lay.hidden);
  const double* p = model.values.data();
  internal::ConstMatMap w2(p + hid * in + hid, cls, hid);
  RowMatrix delta1 = (delta * w2).array() * (1.0 - h.array().square());
  internal::MatMap(g, hid, in).noalias() = delta1.transpose() * x;
  internal::VecMap(g + hid * in, hid) = delta1.colwise().sum().transpose();
  internal::MatMap(g + hid * in + hid, cls, hid).noalias() = delta.transpose() * h;
  internal::VecMap(g + hid * in + hid + cls * hid, cls) =
      delta.colwise().sum().transpose();
  return out;
}

// Mean cross-entropy of a batch, no gradient.
inline double mean_loss(const ModelParams& model,
                        std::span<const LabeledSample> batch) {
  require(!batch.empty(), "mean_loss: empty batch");
  const auto lay = internal::layout_of(model);
  const auto z = internal::forward_logits(model, lay, internal::stack_features(batch, lay));
  double loss = 0.0;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const auto y = static_cast<Eigen::Index>(batch[static_cast<size_t>(i)].label);
    loss += internal::log_sum_exp(z.row(i).transpose()) - z(i, y);
  }
  return loss / static_cast<double>(batch.size());
}

struct Evaluation {
  double accuracy = 0.0;
  double loss = 0.0;
};

// Argmax accuracy (ties go to the lowest class index) and mean cross-entropy.
inline Evaluation evaluate(const ModelParams& model, const Dataset& data) {
  if (data.empty()) throw InvalidArgument("evaluate: empty dataset");
  const auto lay = internal::layout_of(model);
  const auto& samples = data.samples();
  const auto z = internal::forward_logits(model, lay, internal::stack_features(samples, lay));
  size_t correct = 0;
  double loss = 0.0;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    Eigen::Index best = 0;
    z.row(i).maxCoeff(&best);
    const auto y = static_cast<Eigen::Index>(samples[static_cast<size_t>(i)].label);
    if (best == y) ++correct;
    loss += internal::log_sum_exp(z.row(i).transpose()) - z(i, y);
  }
  const auto n = static_cast<double>(samples.size());
  return {static_cast<double>(correct) / n, loss / n};
}

// FNV-1a over the raw parameter bytes; used to compare model snapshots.
inline uint64_t model_hash(const ModelParams& m) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (double v : m.values) {
    uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    for (int i = 0; i < 8; ++i) {
      h ^= (bits >> (8 * i)) & 0xff;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

}  // namespace dpfl

#endif  // DPFL_MODEL_MODEL_HPP_

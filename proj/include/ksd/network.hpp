// ksd/network.hpp

// Copyright 2026  The ksd authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef KSD_NETWORK_HPP_
#define KSD_NETWORK_HPP_

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "ksd/errors.hpp"
#include "ksd/rng.hpp"

// Feedforward multilayer perceptron.  Everything here is batched: a batch
// of N samples moves through the network as N x dim matrices, one row per
// sample, and the per-sample entry points are one-row wrappers.  All math
// is 64-bit.

namespace ksd {

enum class Nonlinearity { logistic, linear };

enum class LossKind { squared_error, softmax_cross_entropy };

/// Architecture description: layer sizes (input first), one nonlinearity
/// per non-input layer, and the loss attached to the output.
struct NetworkSpec {
  std::vector<int> layer_dims;
  std::vector<Nonlinearity> nonlinearities;
  LossKind loss_kind = LossKind::squared_error;

  /// Number of weight layers.
  int depth() const { return static_cast<int>(layer_dims.size()) - 1; }
  int input_dim() const { return layer_dims.front(); }
  int output_dim() const { return layer_dims.back(); }

  int param_dim() const {
    int total = 0;
    for (int l = 0; l < depth(); ++l)
      total += layer_dims[l + 1] * (layer_dims[l] + 1);
    return total;
  }

  void validate() const {
    if (layer_dims.size() < 2)
      throw InvalidInput("NetworkSpec: need at least input and output dims");
    for (int d : layer_dims)
      if (d < 1) throw InvalidInput("NetworkSpec: layer dims must be >= 1");
    if (nonlinearities.size() != layer_dims.size() - 1)
      throw InvalidInput("NetworkSpec: need one nonlinearity per weight layer");
    // With cross-entropy the softmax lives inside the loss, so the final
    // layer must emit raw logits.
    if (loss_kind == LossKind::softmax_cross_entropy &&
        nonlinearities.back() != Nonlinearity::linear)
      throw InvalidInput(
          "NetworkSpec: softmax_cross_entropy requires a linear final layer");
  }
};

/// Addresses the per-layer blocks inside a flat parameter vector.  Layout
/// for layer l (0-based): weight matrix (dims[l+1] x dims[l], column-major)
/// followed by the bias vector (dims[l+1]).
class ParamLayout {
 public:
  explicit ParamLayout(const NetworkSpec &spec) {
    const int depth = spec.depth();
    w_offset_.resize(depth);
    b_offset_.resize(depth);
    rows_.resize(depth);
    cols_.resize(depth);
    int offset = 0;
    for (int l = 0; l < depth; ++l) {
      rows_[l] = spec.layer_dims[l + 1];
      cols_[l] = spec.layer_dims[l];
      w_offset_[l] = offset;
      offset += rows_[l] * cols_[l];
      b_offset_[l] = offset;
      offset += rows_[l];
    }
    total_ = offset;
  }

  int total() const { return total_; }
  int depth() const { return static_cast<int>(rows_.size()); }

  Eigen::Map<const Eigen::MatrixXd> weight(const Eigen::VectorXd &theta,
                                           int l) const {
    return {theta.data() + w_offset_[l], rows_[l], cols_[l]};
  }
  Eigen::Map<Eigen::MatrixXd> weight(Eigen::VectorXd &theta, int l) const {
    return {theta.data() + w_offset_[l], rows_[l], cols_[l]};
  }
  Eigen::Map<const Eigen::VectorXd> bias(const Eigen::VectorXd &theta,
                                         int l) const {
    return {theta.data() + b_offset_[l], rows_[l]};
  }
  Eigen::Map<Eigen::VectorXd> bias(Eigen::VectorXd &theta, int l) const {
    return {theta.data() + b_offset_[l], rows_[l]};
  }

  void check(const Eigen::VectorXd &theta) const {
    if (theta.size() != total_)
      throw InvalidInput("parameter vector has size " +
                         std::to_string(theta.size()) + ", layout needs " +
                         std::to_string(total_));
  }

 private:
  std::vector<int> w_offset_, b_offset_, rows_, cols_;
  int total_ = 0;
};

/// Fresh parameters: layer-l weights i.i.d. uniform on
/// [-scale/sqrt(fan_in), scale/sqrt(fan_in)], biases zero.
inline Eigen::VectorXd init_params(const NetworkSpec &spec, std::uint64_t seed,
                                   double scale = 1.0) {
  spec.validate();
  ParamLayout layout(spec);
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(layout.total());
  Rng rng(mix_seed(seed, 0x1e17));
  for (int l = 0; l < layout.depth(); ++l) {
    const double bound = scale / std::sqrt(double(spec.layer_dims[l]));
    auto w = layout.weight(theta, l);
    double *data = w.data();
    const int count = static_cast<int>(w.size());
    for (int i = 0; i < count; ++i) data[i] = bound * rng.uniform_sym();
  }
  return theta;
}

namespace detail {

// Pre-activations are clamped before exponentiation so a wild linear layer
// saturates instead of producing inf/NaN inside exp.
inline Eigen::MatrixXd apply_nonlinearity(Nonlinearity nl,
                                          const Eigen::MatrixXd &h) {
  if (nl == Nonlinearity::linear) return h;
  return (1.0 / (1.0 + (-h.array().min(500.0).max(-500.0)).exp())).matrix();
}

// phi' expressed through the outputs: logistic' = v (1 - v).
inline Eigen::ArrayXXd derivative_from_output(Nonlinearity nl,
                                              const Eigen::MatrixXd &v) {
  if (nl == Nonlinearity::linear)
    return Eigen::ArrayXXd::Ones(v.rows(), v.cols());
  return v.array() * (1.0 - v.array());
}

// phi'' through the outputs: logistic'' = v (1 - v) (1 - 2v).
inline Eigen::ArrayXXd second_derivative_from_output(Nonlinearity nl,
                                                     const Eigen::MatrixXd &v) {
  if (nl == Nonlinearity::linear)
    return Eigen::ArrayXXd::Zero(v.rows(), v.cols());
  return v.array() * (1.0 - v.array()) * (1.0 - 2.0 * v.array());
}

inline Eigen::MatrixXd row_softmax(const Eigen::MatrixXd &logits) {
  Eigen::ArrayXXd shifted =
      logits.array().colwise() - logits.rowwise().maxCoeff().array();
  Eigen::ArrayXXd e = shifted.exp();
  return (e.colwise() / e.rowwise().sum()).matrix();
}

}  // namespace detail

/// Forward-pass record: h[l] and v[l] for l = 0..L, one sample per row.
/// v[0] is the input and h[0] stays empty.
struct Activations {
  std::vector<Eigen::MatrixXd> h;
  std::vector<Eigen::MatrixXd> v;
  const Eigen::MatrixXd &output() const { return v.back(); }
};

namespace detail {

inline Activations forward_impl(const NetworkSpec &spec,
                                const Eigen::VectorXd &theta,
                                const Eigen::MatrixXd &inputs) {
  ParamLayout layout(spec);
  layout.check(theta);
  if (inputs.cols() != spec.input_dim())
    throw InvalidInput("forward: input has " + std::to_string(inputs.cols()) +
                       " columns, spec wants " +
                       std::to_string(spec.input_dim()));
  const int depth = spec.depth();
  Activations acts;
  acts.h.resize(depth + 1);
  acts.v.resize(depth + 1);
  acts.v[0] = inputs;
  for (int l = 0; l < depth; ++l) {
    acts.h[l + 1].noalias() = acts.v[l] * layout.weight(theta, l).transpose();
    acts.h[l + 1].rowwise() += layout.bias(theta, l).transpose();
    if (!acts.h[l + 1].allFinite())
      throw NumericalOverflow("forward: non-finite pre-activation in layer " +
                              std::to_string(l + 1));
    acts.v[l + 1] = detail::apply_nonlinearity(spec.nonlinearities[l],
                                               acts.h[l + 1]);
  }
  return acts;
}

}  // namespace detail

/// Forward pass.  A column-vector argument is one sample; anything with
/// more than one compile-time column is a batch, one sample per row.
template <typename Derived>
inline Activations forward(const NetworkSpec &spec, const Eigen::VectorXd &theta,
                           const Eigen::MatrixBase<Derived> &input) {
  if constexpr (Eigen::MatrixBase<Derived>::ColsAtCompileTime == 1)
    return detail::forward_impl(spec, theta, input.transpose());
  else
    return detail::forward_impl(spec, theta, input);
}

/// Squared-error loss of one output row: ||v - y||^2.
inline double loss(const NetworkSpec &spec, const Eigen::VectorXd &output,
                   const Eigen::VectorXd &target) {
  if (spec.loss_kind != LossKind::squared_error)
    throw InvalidInput("loss: vector target requires squared_error");
  if (output.size() != target.size())
    throw InvalidInput("loss: output/target size mismatch");
  return (output - target).squaredNorm();
}

/// Cross-entropy of one output row of logits: -v[label] + log sum exp(v).
inline double loss(const NetworkSpec &spec, const Eigen::VectorXd &output,
                   int label) {
  if (spec.loss_kind != LossKind::softmax_cross_entropy)
    throw InvalidInput("loss: class target requires softmax_cross_entropy");
  if (label < 0 || label >= output.size())
    throw InvalidInput("loss: class index " + std::to_string(label) +
                       " out of range");
  const double vmax = output.maxCoeff();
  const double lse = vmax + std::log((output.array() - vmax).exp().sum());
  return lse - output[label];
}

/// A batch of samples: inputs one row each, plus either a target matrix
/// (squared_error) or a label vector (softmax_cross_entropy) — only the
/// field matching the loss kind is consulted.
struct Batch {
  Eigen::MatrixXd inputs;
  Eigen::MatrixXd targets;
  Eigen::VectorXi labels;
  int size() const { return static_cast<int>(inputs.rows()); }
};

/// One training sample; `label` is used for classification, `y` otherwise.
struct Sample {
  Eigen::VectorXd x;
  Eigen::VectorXd y;
  int label = -1;
};

inline Batch batch_from_sample(const NetworkSpec &spec, const Sample &sample) {
  Batch b;
  b.inputs = sample.x.transpose();
  if (spec.loss_kind == LossKind::squared_error)
    b.targets = sample.y.transpose();
  else
    b.labels = Eigen::VectorXi::Constant(1, sample.label);
  return b;
}

namespace detail {

inline void check_batch(const NetworkSpec &spec, const Batch &batch) {
  if (batch.size() == 0) throw InvalidInput("batch is empty");
  if (spec.loss_kind == LossKind::squared_error) {
    if (batch.targets.rows() != batch.size() ||
        batch.targets.cols() != spec.output_dim())
      throw InvalidInput("batch targets do not match output dim");
  } else {
    if (batch.labels.size() != batch.size())
      throw InvalidInput("batch labels do not match batch size");
    for (int i = 0; i < batch.labels.size(); ++i)
      if (batch.labels[i] < 0 || batch.labels[i] >= spec.output_dim())
        throw InvalidInput("batch label out of range");
  }
}

// Summed loss over the batch (no normalization, no regularizer).
inline double loss_sum(const NetworkSpec &spec, const Eigen::MatrixXd &outputs,
                       const Batch &batch) {
  if (spec.loss_kind == LossKind::squared_error)
    return (outputs - batch.targets).squaredNorm();
  Eigen::VectorXd row_max = outputs.rowwise().maxCoeff();
  Eigen::ArrayXd lse =
      (outputs.array().colwise() - row_max.array()).exp().rowwise().sum().log() +
      row_max.array();
  // Per-sample differences keep every addend non-negative; a batch-level
  // subtraction of two large sums can cancel below zero near a perfect fit.
  double total = 0.0;
  for (int i = 0; i < batch.size(); ++i)
    total += lse[i] - outputs(i, batch.labels[i]);
  return total;
}

// dE/dv^{(L)}, one row per sample.
inline Eigen::MatrixXd loss_output_gradient(const NetworkSpec &spec,
                                            const Eigen::MatrixXd &outputs,
                                            const Batch &batch) {
  if (spec.loss_kind == LossKind::squared_error)
    return 2.0 * (outputs - batch.targets);
  Eigen::MatrixXd g = row_softmax(outputs);
  for (int i = 0; i < batch.size(); ++i) g(i, batch.labels[i]) -= 1.0;
  return g;
}

// Sum of squared weight entries (biases excluded).
inline double weight_squared_norm(const ParamLayout &layout,
                                  const Eigen::VectorXd &theta) {
  double total = 0.0;
  for (int l = 0; l < layout.depth(); ++l)
    total += layout.weight(theta, l).squaredNorm();
  return total;
}

}  // namespace detail

/// Mean loss over the batch plus (l2/2)||weights||^2; biases are never
/// regularized.
inline double objective(const NetworkSpec &spec, const Eigen::VectorXd &theta,
                        const Batch &batch, double l2_coeff = 0.0) {
  detail::check_batch(spec, batch);
  ParamLayout layout(spec);
  layout.check(theta);
  Activations acts = forward(spec, theta, batch.inputs);
  double value = detail::loss_sum(spec, acts.output(), batch) / batch.size();
  if (l2_coeff != 0.0)
    value += 0.5 * l2_coeff * detail::weight_squared_norm(layout, theta);
  return value;
}

/// Objective and its gradient in one pass; returns the value.
inline double objective_and_gradient(const NetworkSpec &spec,
                                     const Eigen::VectorXd &theta,
                                     const Batch &batch, double l2_coeff,
                                     Eigen::VectorXd &grad_out) {
  detail::check_batch(spec, batch);
  ParamLayout layout(spec);
  layout.check(theta);
  const int depth = spec.depth();
  const int n = batch.size();
  Activations acts = forward(spec, theta, batch.inputs);
  const double value =
      detail::loss_sum(spec, acts.output(), batch) / n +
      (l2_coeff != 0.0
           ? 0.5 * l2_coeff * detail::weight_squared_norm(layout, theta)
           : 0.0);

  grad_out = Eigen::VectorXd::Zero(layout.total());
  Eigen::MatrixXd e = detail::loss_output_gradient(spec, acts.output(), batch);
  for (int l = depth - 1; l >= 0; --l) {
    Eigen::MatrixXd delta =
        (e.array() *
         detail::derivative_from_output(spec.nonlinearities[l], acts.v[l + 1]))
            .matrix();
    layout.weight(grad_out, l).noalias() = delta.transpose() * acts.v[l] / n;
    layout.bias(grad_out, l) = delta.colwise().sum().transpose() / n;
    if (l2_coeff != 0.0)
      layout.weight(grad_out, l) += l2_coeff * layout.weight(theta, l);
    if (l > 0) e.noalias() = delta * layout.weight(theta, l);
  }
  return value;
}

/// Gradient of the regularized mean objective.
inline Eigen::VectorXd gradient(const NetworkSpec &spec,
                                const Eigen::VectorXd &theta,
                                const Batch &batch, double l2_coeff = 0.0) {
  Eigen::VectorXd grad;
  objective_and_gradient(spec, theta, batch, l2_coeff, grad);
  return grad;
}

/// Diagonal of the per-sample gradient second-moment matrix:
/// entry j = (1/N) sum_i (g_i)_j^2, with g_i the unregularized per-sample
/// loss gradient.  The per-layer blocks reduce to matrix products of
/// squared activations, so no per-sample loop is needed.
inline Eigen::VectorXd fisher_diagonal(const NetworkSpec &spec,
                                       const Eigen::VectorXd &theta,
                                       const Batch &batch) {
  detail::check_batch(spec, batch);
  ParamLayout layout(spec);
  layout.check(theta);
  const int depth = spec.depth();
  const int n = batch.size();
  Activations acts = forward(spec, theta, batch.inputs);
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(layout.total());
  Eigen::MatrixXd e = detail::loss_output_gradient(spec, acts.output(), batch);
  for (int l = depth - 1; l >= 0; --l) {
    Eigen::MatrixXd delta =
        (e.array() *
         detail::derivative_from_output(spec.nonlinearities[l], acts.v[l + 1]))
            .matrix();
    Eigen::MatrixXd delta_sq = delta.array().square().matrix();
    Eigen::MatrixXd v_sq = acts.v[l].array().square().matrix();
    layout.weight(diag, l).noalias() = delta_sq.transpose() * v_sq / n;
    layout.bias(diag, l) = delta_sq.colwise().sum().transpose() / n;
    if (l > 0) e.noalias() = delta * layout.weight(theta, l);
  }
  return diag;
}

}  // namespace ksd

#endif  // KSD_NETWORK_HPP_

// ksd/curvature.hpp

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

#ifndef KSD_CURVATURE_HPP_
#define KSD_CURVATURE_HPP_

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "ksd/errors.hpp"
#include "ksd/network.hpp"

// Matrix-free curvature-times-vector products.  Neither the Gauss-Newton
// matrix G = J^T H_E J nor the exact Hessian is ever formed; both actions
// cost a small constant number of forward/backward-shaped sweeps.  As in
// the network module, batches move through as one-row-per-sample matrices.

namespace ksd {

enum class CurvatureKind { gauss_newton, hessian };

/// Action of the loss Hessian d2E/dv2 at `output` on `u`.  For squared
/// error this is the constant 2I; for softmax cross-entropy it is
/// diag(p) - p p^T applied as p.*u - p (p.u), with p = softmax(output).
/// Both are independent of the target.
inline Eigen::VectorXd loss_hessian_action(LossKind kind,
                                           const Eigen::VectorXd &output,
                                           const Eigen::VectorXd &u) {
  if (output.size() != u.size())
    throw InvalidInput("loss_hessian_action: output/u size mismatch");
  if (kind == LossKind::squared_error) return 2.0 * u;
  Eigen::ArrayXd shifted = output.array() - output.maxCoeff();
  Eigen::ArrayXd p = shifted.exp();
  p /= p.sum();
  const double pu = (p * u.array()).sum();
  return (p * u.array() - p * pu).matrix();
}

namespace detail {

// Row-wise loss-Hessian action: row i of the result is
// loss_hessian_action applied to (outputs.row(i), U.row(i)).
inline Eigen::MatrixXd loss_hessian_action_rows(LossKind kind,
                                                const Eigen::MatrixXd &outputs,
                                                const Eigen::MatrixXd &U) {
  if (kind == LossKind::squared_error) return 2.0 * U;
  Eigen::MatrixXd P = row_softmax(outputs);
  Eigen::ArrayXd s = (P.array() * U.array()).rowwise().sum();
  return (P.array() * U.array() - P.array().colwise() * s).matrix();
}

// Sum over the batch of per-sample curvature products B_i * dir (no
// normalization, no regularizer).  Shared core of the public entry points.
inline Eigen::VectorXd curvature_product_sum(const NetworkSpec &spec,
                                             const Eigen::VectorXd &theta,
                                             const Eigen::VectorXd &dir,
                                             const Batch &batch,
                                             CurvatureKind kind) {
  ParamLayout layout(spec);
  layout.check(theta);
  layout.check(dir);
  check_batch(spec, batch);
  const int depth = spec.depth();
  const int n = batch.size();
  Activations acts = forward(spec, theta, batch.inputs);

  // Forward sweep of directional derivatives: H1[l] and V1[l] hold the
  // derivative of h[l] and v[l] along `dir`, one row per sample.
  std::vector<Eigen::MatrixXd> H1(depth + 1), V1(depth + 1);
  V1[0] = Eigen::MatrixXd::Zero(n, spec.input_dim());
  for (int l = 0; l < depth; ++l) {
    H1[l + 1].noalias() = V1[l] * layout.weight(theta, l).transpose();
    H1[l + 1].noalias() += acts.v[l] * layout.weight(dir, l).transpose();
    H1[l + 1].rowwise() += layout.bias(dir, l).transpose();
    V1[l + 1] = (derivative_from_output(spec.nonlinearities[l], acts.v[l + 1]) *
                 H1[l + 1].array())
                    .matrix();
    if (!V1[l + 1].allFinite())
      throw NumericalOverflow(
          "curvature product: non-finite directional derivative in layer " +
          std::to_string(l + 1));
  }

  Eigen::VectorXd result = Eigen::VectorXd::Zero(layout.total());
  if (kind == CurvatureKind::gauss_newton) {
    // Backward sweep of Algorithm-style hat quantities: e2 rows are
    // vhat2[l], the loss-Hessian action pulled back through the net.
    Eigen::MatrixXd e2 =
        loss_hessian_action_rows(spec.loss_kind, acts.output(), V1[depth]);
    for (int l = depth - 1; l >= 0; --l) {
      Eigen::MatrixXd h2 =
          (e2.array() *
           derivative_from_output(spec.nonlinearities[l], acts.v[l + 1]))
              .matrix();
      layout.weight(result, l).noalias() = h2.transpose() * acts.v[l];
      layout.bias(result, l) = h2.colwise().sum().transpose();
      if (l > 0) e2.noalias() = h2 * layout.weight(theta, l);
    }
  } else {
    // Directional derivative of the whole backprop pass.  E carries the
    // plain backpropagated errors, RE their derivative along `dir`.
    Eigen::MatrixXd E = loss_output_gradient(spec, acts.output(), batch);
    Eigen::MatrixXd RE =
        loss_hessian_action_rows(spec.loss_kind, acts.output(), V1[depth]);
    for (int l = depth - 1; l >= 0; --l) {
      Eigen::ArrayXXd d1 =
          derivative_from_output(spec.nonlinearities[l], acts.v[l + 1]);
      Eigen::ArrayXXd d2 =
          second_derivative_from_output(spec.nonlinearities[l], acts.v[l + 1]);
      Eigen::MatrixXd delta = (E.array() * d1).matrix();
      Eigen::MatrixXd rdelta =
          (RE.array() * d1 + E.array() * d2 * H1[l + 1].array()).matrix();
      layout.weight(result, l).noalias() =
          rdelta.transpose() * acts.v[l] + delta.transpose() * V1[l];
      layout.bias(result, l) = rdelta.colwise().sum().transpose();
      if (l > 0) {
        RE.noalias() = rdelta * layout.weight(theta, l) +
                       delta * layout.weight(dir, l);
        E.noalias() = delta * layout.weight(theta, l);
      }
    }
  }
  if (!result.allFinite())
    throw NumericalOverflow("curvature product: non-finite result");
  return result;
}

}  // namespace detail

/// Gauss-Newton product G * dir for one sample, G = J^T H_E J.
inline Eigen::VectorXd multiply_G(const NetworkSpec &spec,
                                  const Eigen::VectorXd &theta,
                                  const Eigen::VectorXd &dir,
                                  const Sample &sample) {
  return detail::curvature_product_sum(spec, theta, dir,
                                       batch_from_sample(spec, sample),
                                       CurvatureKind::gauss_newton);
}

/// Exact Hessian product H * dir for one sample's loss.
inline Eigen::VectorXd multiply_H(const NetworkSpec &spec,
                                  const Eigen::VectorXd &theta,
                                  const Eigen::VectorXd &dir,
                                  const Sample &sample) {
  return detail::curvature_product_sum(spec, theta, dir,
                                       batch_from_sample(spec, sample),
                                       CurvatureKind::hessian);
}

/// Mean curvature product over the batch plus the regularizer's l2 * I
/// contribution on the weight entries (biases excluded, matching the
/// objective's L2 term).
inline Eigen::VectorXd batch_curvature_product(const NetworkSpec &spec,
                                               const Eigen::VectorXd &theta,
                                               const Eigen::VectorXd &dir,
                                               const Batch &batch,
                                               CurvatureKind kind,
                                               double l2_coeff = 0.0) {
  Eigen::VectorXd result =
      detail::curvature_product_sum(spec, theta, dir, batch, kind) /
      batch.size();
  if (l2_coeff != 0.0) {
    ParamLayout layout(spec);
    for (int l = 0; l < layout.depth(); ++l)
      layout.weight(result, l) += l2_coeff * layout.weight(dir, l);
  }
  return result;
}

}  // namespace ksd

#endif  // KSD_CURVATURE_HPP_

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

#include "ksd/curvature.hpp"

#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "ksd/rng.hpp"

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

ksd::NetworkSpec make_spec(std::vector<int> dims,
                           std::vector<ksd::Nonlinearity> nls,
                           ksd::LossKind loss) {
  ksd::NetworkSpec spec;
  spec.layer_dims = std::move(dims);
  spec.nonlinearities = std::move(nls);
  spec.loss_kind = loss;
  spec.validate();
  return spec;
}

ksd::NetworkSpec small_spec(ksd::LossKind loss) {
  ksd::Nonlinearity last = loss == ksd::LossKind::softmax_cross_entropy
                               ? ksd::Nonlinearity::linear
                               : ksd::Nonlinearity::logistic;
  return make_spec({4, 3, 2}, {ksd::Nonlinearity::logistic, last}, loss);
}

ksd::Batch random_batch(const ksd::NetworkSpec &spec, int n, ksd::Rng &rng) {
  ksd::Batch batch;
  batch.inputs.resize(n, spec.input_dim());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < spec.input_dim(); ++j)
      batch.inputs(i, j) = rng.gaussian();
  if (spec.loss_kind == ksd::LossKind::squared_error) {
    batch.targets.resize(n, spec.output_dim());
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < spec.output_dim(); ++j)
        batch.targets(i, j) = rng.gaussian();
  } else {
    batch.labels.resize(n);
    for (int i = 0; i < n; ++i)
      batch.labels[i] = static_cast<int>(rng.below(spec.output_dim()));
  }
  return batch;
}

ksd::Sample sample_from_batch(const ksd::NetworkSpec &spec,
                              const ksd::Batch &batch, int i) {
  ksd::Sample s;
  s.x = batch.inputs.row(i).transpose();
  if (spec.loss_kind == ksd::LossKind::squared_error)
    s.y = batch.targets.row(i).transpose();
  else
    s.label = batch.labels[i];
  return s;
}

VectorXd random_direction(int dim, ksd::Rng &rng) {
  VectorXd d(dim);
  for (int j = 0; j < dim; ++j) d[j] = rng.gaussian();
  return d;
}

// Network-output Jacobian dv^(L)/dtheta for one sample, columns by central
// differences.  Frozen oracle for the Gauss-Newton product.
MatrixXd fd_jacobian(const ksd::NetworkSpec &spec, const VectorXd &theta,
                     const VectorXd &x, double step = 1e-5) {
  MatrixXd jac(spec.output_dim(), theta.size());
  VectorXd probe = theta;
  for (int j = 0; j < theta.size(); ++j) {
    probe[j] = theta[j] + step;
    VectorXd up = ksd::forward(spec, probe, x).output().row(0).transpose();
    probe[j] = theta[j] - step;
    VectorXd down = ksd::forward(spec, probe, x).output().row(0).transpose();
    probe[j] = theta[j];
    jac.col(j) = (up - down) / (2.0 * step);
  }
  return jac;
}

// Explicit loss Hessian d2E/dv2 at the given output row.
MatrixXd explicit_loss_hessian(const ksd::NetworkSpec &spec,
                               const VectorXd &output) {
  const int k = static_cast<int>(output.size());
  if (spec.loss_kind == ksd::LossKind::squared_error)
    return 2.0 * MatrixXd::Identity(k, k);
  Eigen::ArrayXd p = (output.array() - output.maxCoeff()).exp();
  p /= p.sum();
  return MatrixXd(p.matrix().asDiagonal()) - p.matrix() * p.matrix().transpose();
}

// Hessian of the mean batch objective, columns by central differences of
// the (already finite-difference-validated) analytic gradient.
MatrixXd fd_hessian(const ksd::NetworkSpec &spec, const VectorXd &theta,
                    const ksd::Batch &batch, double step = 1e-5) {
  MatrixXd hess(theta.size(), theta.size());
  VectorXd probe = theta;
  for (int j = 0; j < theta.size(); ++j) {
    probe[j] = theta[j] + step;
    VectorXd up = ksd::gradient(spec, probe, batch, 0.0);
    probe[j] = theta[j] - step;
    VectorXd down = ksd::gradient(spec, probe, batch, 0.0);
    probe[j] = theta[j];
    hess.col(j) = (up - down) / (2.0 * step);
  }
  return hess;
}

}  // namespace

TEST_CASE("loss_hessian_action squared error", "[curvature]") {
  VectorXd v = VectorXd::Zero(2), u(2);
  u << 1.0, -1.0;
  VectorXd r = ksd::loss_hessian_action(ksd::LossKind::squared_error, v, u);
  CHECK(r[0] == 2.0);
  CHECK(r[1] == -2.0);
}

TEST_CASE("loss_hessian_action softmax", "[curvature]") {
  VectorXd logits = VectorXd::Zero(2), u(2);
  u << 1.0, 0.0;
  VectorXd r = ksd::loss_hessian_action(ksd::LossKind::softmax_cross_entropy,
                                        logits, u);
  CHECK_THAT(r[0], Catch::Matchers::WithinAbs(0.25, 1e-15));
  CHECK_THAT(r[1], Catch::Matchers::WithinAbs(-0.25, 1e-15));

  // (diag(p) - pp^T) 1 = p - p = 0 for any logits.
  ksd::Rng rng(3);
  VectorXd wild = random_direction(7, rng) * 10.0;
  VectorXd ones = VectorXd::Ones(7);
  VectorXd z = ksd::loss_hessian_action(ksd::LossKind::softmax_cross_entropy,
                                        wild, ones);
  CHECK(z.cwiseAbs().maxCoeff() < 1e-15);

  CHECK_THROWS_AS(ksd::loss_hessian_action(
                      ksd::LossKind::squared_error, logits, VectorXd::Zero(3)),
                  ksd::InvalidInput);
}

TEST_CASE("curvature product of zero direction is zero", "[curvature]") {
  for (ksd::LossKind loss :
       {ksd::LossKind::squared_error, ksd::LossKind::softmax_cross_entropy}) {
    ksd::NetworkSpec spec = small_spec(loss);
    VectorXd theta = ksd::init_params(spec, 2, 1.0);
    ksd::Rng rng(5);
    ksd::Batch batch = random_batch(spec, 3, rng);
    ksd::Sample sample = sample_from_batch(spec, batch, 0);
    VectorXd zero = VectorXd::Zero(spec.param_dim());
    CHECK(ksd::multiply_G(spec, theta, zero, sample).isZero(0.0));
    CHECK(ksd::multiply_H(spec, theta, zero, sample).isZero(0.0));
  }
}

TEST_CASE("Gauss-Newton hand example on a single linear layer", "[curvature]") {
  // Squared loss through one linear 2x2 layer: G dir has weight block
  // 2 (W1 x) x^T regardless of theta.
  ksd::NetworkSpec spec = make_spec({2, 2}, {ksd::Nonlinearity::linear},
                                    ksd::LossKind::squared_error);
  ksd::ParamLayout layout(spec);
  VectorXd theta = ksd::init_params(spec, 8, 1.0);
  VectorXd dir = VectorXd::Zero(spec.param_dim());
  layout.weight(dir, 0) << 1.0, 2.0, 3.0, 4.0;
  ksd::Sample sample;
  sample.x = VectorXd(2);
  sample.x << 1.0, 0.0;
  sample.y = VectorXd::Zero(2);
  VectorXd out = ksd::multiply_G(spec, theta, dir, sample);
  MatrixXd w2 = layout.weight(out, 0);
  CHECK(w2(0, 0) == 2.0);
  CHECK(w2(0, 1) == 0.0);
  CHECK(w2(1, 0) == 6.0);
  CHECK(w2(1, 1) == 0.0);
  // bhat2 = hhat2 = 2 W1 x.
  CHECK(VectorXd(layout.bias(out, 0))[0] == 2.0);
  CHECK(VectorXd(layout.bias(out, 0))[1] == 6.0);
}

TEST_CASE("multiply_G matches the explicit J^T H J product", "[curvature]") {
  for (ksd::LossKind loss :
       {ksd::LossKind::squared_error, ksd::LossKind::softmax_cross_entropy}) {
    ksd::NetworkSpec spec = small_spec(loss);
    VectorXd theta = ksd::init_params(spec, 21, 1.5);
    ksd::Rng rng(22);
    ksd::Batch batch = random_batch(spec, 1, rng);
    ksd::Sample sample = sample_from_batch(spec, batch, 0);
    VectorXd dir = random_direction(spec.param_dim(), rng);

    MatrixXd jac = fd_jacobian(spec, theta, sample.x);
    VectorXd output =
        ksd::forward(spec, theta, sample.x).output().row(0).transpose();
    MatrixXd h_e = explicit_loss_hessian(spec, output);
    VectorXd oracle = jac.transpose() * (h_e * (jac * dir));

    VectorXd got = ksd::multiply_G(spec, theta, dir, sample);
    for (int j = 0; j < got.size(); ++j) {
      INFO("loss kind " << int(loss) << ", coordinate " << j);
      CHECK(std::abs(got[j] - oracle[j]) <=
            1e-5 * (1.0 + std::abs(oracle[j])));
    }
  }
}

TEST_CASE("multiply_H matches finite differences of the gradient",
          "[curvature]") {
  for (ksd::LossKind loss :
       {ksd::LossKind::squared_error, ksd::LossKind::softmax_cross_entropy}) {
    ksd::NetworkSpec spec = small_spec(loss);
    VectorXd theta = ksd::init_params(spec, 33, 1.5);
    ksd::Rng rng(34);
    ksd::Batch batch = random_batch(spec, 1, rng);
    ksd::Sample sample = sample_from_batch(spec, batch, 0);
    VectorXd dir = random_direction(spec.param_dim(), rng);

    const double eps = 1e-5;
    VectorXd up = ksd::gradient(spec, VectorXd(theta + eps * dir), batch, 0.0);
    VectorXd down =
        ksd::gradient(spec, VectorXd(theta - eps * dir), batch, 0.0);
    VectorXd oracle = (up - down) / (2.0 * eps);

    VectorXd got = ksd::multiply_H(spec, theta, dir, sample);
    for (int j = 0; j < got.size(); ++j) {
      INFO("loss kind " << int(loss) << ", coordinate " << j);
      CHECK(std::abs(got[j] - oracle[j]) <=
            1e-4 * (1.0 + std::abs(oracle[j])));
    }
  }
}

TEST_CASE("Hessian equals Gauss-Newton on a single-layer linear model",
          "[curvature]") {
  ksd::NetworkSpec spec = make_spec({3, 2}, {ksd::Nonlinearity::linear},
                                    ksd::LossKind::squared_error);
  VectorXd theta = ksd::init_params(spec, 44, 1.0);
  ksd::Rng rng(45);
  ksd::Batch batch = random_batch(spec, 1, rng);
  ksd::Sample sample = sample_from_batch(spec, batch, 0);
  VectorXd dir = random_direction(spec.param_dim(), rng);
  VectorXd g = ksd::multiply_G(spec, theta, dir, sample);
  VectorXd h = ksd::multiply_H(spec, theta, dir, sample);
  CHECK(g == h);
}

TEST_CASE("batch product normalization and regularizer coupling",
          "[curvature]") {
  ksd::NetworkSpec spec = small_spec(ksd::LossKind::squared_error);
  ksd::ParamLayout layout(spec);
  VectorXd theta = ksd::init_params(spec, 50, 1.0);
  ksd::Rng rng(51);
  ksd::Batch batch = random_batch(spec, 4, rng);
  VectorXd dir = random_direction(spec.param_dim(), rng);

  ksd::Batch doubled;
  doubled.inputs.resize(8, spec.input_dim());
  doubled.targets.resize(8, spec.output_dim());
  doubled.inputs << batch.inputs, batch.inputs;
  doubled.targets << batch.targets, batch.targets;

  VectorXd once = ksd::batch_curvature_product(
      spec, theta, dir, batch, ksd::CurvatureKind::gauss_newton, 0.0);
  VectorXd twice = ksd::batch_curvature_product(
      spec, theta, dir, doubled, ksd::CurvatureKind::gauss_newton, 0.0);
  CHECK((once - twice).cwiseAbs().maxCoeff() < 1e-13);

  // l2 adds exactly l2 * dir on the weight blocks and nothing on biases.
  const double l2 = 0.375;
  VectorXd with_l2 = ksd::batch_curvature_product(
      spec, theta, dir, batch, ksd::CurvatureKind::gauss_newton, l2);
  VectorXd expected = once;
  for (int l = 0; l < layout.depth(); ++l)
    layout.weight(expected, l) += l2 * layout.weight(dir, l);
  CHECK(with_l2 == expected);
}

TEST_CASE("batch products are symmetric and linear", "[curvature]") {
  for (ksd::LossKind loss :
       {ksd::LossKind::squared_error, ksd::LossKind::softmax_cross_entropy}) {
    ksd::NetworkSpec spec = small_spec(loss);
    VectorXd theta = ksd::init_params(spec, 60, 1.0);
    ksd::Rng rng(61);
    ksd::Batch batch = random_batch(spec, 5, rng);
    VectorXd u = random_direction(spec.param_dim(), rng);
    VectorXd v = random_direction(spec.param_dim(), rng);

    for (ksd::CurvatureKind kind :
         {ksd::CurvatureKind::gauss_newton, ksd::CurvatureKind::hessian}) {
      VectorXd bu =
          ksd::batch_curvature_product(spec, theta, u, batch, kind, 0.01);
      VectorXd bv =
          ksd::batch_curvature_product(spec, theta, v, batch, kind, 0.01);
      INFO("loss kind " << int(loss) << ", curvature kind " << int(kind));
      CHECK_THAT(u.dot(bv), Catch::Matchers::WithinAbs(v.dot(bu),
                                                       1e-10 * (1.0 + std::abs(u.dot(bv)))));

      const double alpha = 0.7, beta = -1.3;
      VectorXd mixed = ksd::batch_curvature_product(
          spec, theta, VectorXd(alpha * u + beta * v), batch, kind, 0.01);
      VectorXd combo = alpha * bu + beta * bv;
      CHECK((mixed - combo).cwiseAbs().maxCoeff() <=
            1e-10 * (1.0 + combo.cwiseAbs().maxCoeff()));
    }
  }
}

TEST_CASE("Gauss-Newton products are positive semidefinite", "[curvature]") {
  for (ksd::LossKind loss :
       {ksd::LossKind::squared_error, ksd::LossKind::softmax_cross_entropy}) {
    ksd::NetworkSpec spec = small_spec(loss);
    VectorXd theta = ksd::init_params(spec, 70, 1.5);
    ksd::Rng rng(71);
    ksd::Batch batch = random_batch(spec, 5, rng);
    for (int trial = 0; trial < 10; ++trial) {
      VectorXd v = random_direction(spec.param_dim(), rng);
      VectorXd gv = ksd::batch_curvature_product(
          spec, theta, v, batch, ksd::CurvatureKind::gauss_newton, 0.0);
      CHECK(v.dot(gv) >= -1e-12 * v.squaredNorm());
    }
  }
}

TEST_CASE("explicit assembly matches the dense curvature matrices",
          "[curvature]") {
  // Small enough (20 parameters) to assemble column by column.
  for (ksd::LossKind loss :
       {ksd::LossKind::squared_error, ksd::LossKind::softmax_cross_entropy}) {
    ksd::Nonlinearity last = loss == ksd::LossKind::softmax_cross_entropy
                                 ? ksd::Nonlinearity::linear
                                 : ksd::Nonlinearity::logistic;
    ksd::NetworkSpec spec =
        make_spec({3, 3, 2}, {ksd::Nonlinearity::logistic, last}, loss);
    const int dim = spec.param_dim();
    REQUIRE(dim <= 50);
    VectorXd theta = ksd::init_params(spec, 80, 1.5);
    ksd::Rng rng(81);
    ksd::Batch batch = random_batch(spec, 3, rng);

    MatrixXd assembled_g(dim, dim), assembled_h(dim, dim);
    for (int j = 0; j < dim; ++j) {
      VectorXd unit = VectorXd::Unit(dim, j);
      assembled_g.col(j) = ksd::batch_curvature_product(
          spec, theta, unit, batch, ksd::CurvatureKind::gauss_newton, 0.0);
      assembled_h.col(j) = ksd::batch_curvature_product(
          spec, theta, unit, batch, ksd::CurvatureKind::hessian, 0.0);
    }

    // Dense Gauss-Newton: average of per-sample J^T H_E J.
    MatrixXd dense_g = MatrixXd::Zero(dim, dim);
    for (int i = 0; i < batch.size(); ++i) {
      ksd::Sample s = sample_from_batch(spec, batch, i);
      MatrixXd jac = fd_jacobian(spec, theta, s.x);
      VectorXd output =
          ksd::forward(spec, theta, s.x).output().row(0).transpose();
      dense_g.noalias() +=
          jac.transpose() * explicit_loss_hessian(spec, output) * jac;
    }
    dense_g /= batch.size();
    MatrixXd dense_h = fd_hessian(spec, theta, batch);

    INFO("loss kind " << int(loss));
    CHECK((assembled_g - dense_g).cwiseAbs().maxCoeff() <=
          1e-5 * (1.0 + dense_g.cwiseAbs().maxCoeff()));
    CHECK((assembled_h - dense_h).cwiseAbs().maxCoeff() <=
          1e-5 * (1.0 + dense_h.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("empty batch is rejected by batch_curvature_product", "[curvature]") {
  ksd::NetworkSpec spec = small_spec(ksd::LossKind::squared_error);
  VectorXd theta = ksd::init_params(spec, 90, 1.0);
  ksd::Batch empty;
  empty.inputs.resize(0, spec.input_dim());
  empty.targets.resize(0, spec.output_dim());
  CHECK_THROWS_AS(
      ksd::batch_curvature_product(spec, theta, theta, empty,
                                   ksd::CurvatureKind::gauss_newton, 0.0),
      ksd::InvalidInput);
}

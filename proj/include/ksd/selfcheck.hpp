// ksd/selfcheck.hpp

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

#ifndef KSD_SELFCHECK_HPP_
#define KSD_SELFCHECK_HPP_

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "ksd/curvature.hpp"
#include "ksd/linalg.hpp"
#include "ksd/network.hpp"
#include "ksd/optimizers.hpp"
#include "ksd/rng.hpp"
#include "ksd/subspace.hpp"

// Oracle equivalence checks runnable outside the unit-test harness: each
// one rebuilds its reference quantity from scratch (finite differences,
// explicit assembly, textbook CG) and compares the production code
// against it.  All tolerances and trial counts are pinned here.

namespace ksd {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

namespace selfcheck {

inline std::string format_detail(double worst, double tol) {
  char buffer[96];
  std::snprintf(buffer, sizeof buffer, "worst %.3g (tolerance %.3g)", worst, tol);
  return buffer;
}

inline Eigen::VectorXd random_vector(Rng &rng, int dim) {
  Eigen::VectorXd v(dim);
  for (int i = 0; i < dim; ++i) v[i] = rng.gaussian();
  return v;
}

inline Batch random_batch(Rng &rng, const NetworkSpec &spec, int n) {
  Batch batch;
  batch.inputs.resize(n, spec.input_dim());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < spec.input_dim(); ++j)
      batch.inputs(i, j) = rng.uniform01();
  if (spec.loss_kind == LossKind::softmax_cross_entropy) {
    batch.labels.resize(n);
    for (int i = 0; i < n; ++i)
      batch.labels[i] = static_cast<int>(rng.below(spec.output_dim()));
  } else {
    batch.targets.resize(n, spec.output_dim());
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < spec.output_dim(); ++j)
        batch.targets(i, j) = rng.uniform01();
  }
  return batch;
}

inline NetworkSpec check_spec(LossKind loss, std::vector<int> dims) {
  NetworkSpec spec;
  spec.layer_dims = std::move(dims);
  spec.nonlinearities.assign(spec.layer_dims.size() - 1,
                             Nonlinearity::logistic);
  if (loss == LossKind::softmax_cross_entropy)
    spec.nonlinearities.back() = Nonlinearity::linear;
  spec.loss_kind = loss;
  return spec;
}

/// Criterion: backprop gradient vs central finite differences on 4-3-2
/// nets, both losses, relative error below 1e-6.
inline CheckResult check_gradient_oracle() {
  CheckResult res{"gradient vs finite differences", false, ""};
  const double tol = 1e-6;
  double worst = 0.0;
  Rng rng(101);
  for (const LossKind loss :
       {LossKind::squared_error, LossKind::softmax_cross_entropy}) {
    const NetworkSpec spec = check_spec(loss, {4, 3, 2});
    for (int trial = 0; trial < 5; ++trial) {
      const Eigen::VectorXd theta = init_params(spec, rng.below(1u << 30));
      const Batch batch = random_batch(rng, spec, 4);
      const Eigen::VectorXd grad = gradient(spec, theta, batch, 0.0);

      const double h = 1e-5;
      double scale = 1.0;
      for (int i = 0; i < theta.size(); ++i) {
        Eigen::VectorXd tp = theta, tm = theta;
        tp[i] += h;
        tm[i] -= h;
        const double fd = (objective(spec, tp, batch) - objective(spec, tm, batch)) /
                          (2.0 * h);
        scale = std::max(scale, std::abs(fd));
        worst = std::max(worst, std::abs(grad[i] - fd) / scale);
      }
    }
  }
  res.passed = worst < tol;
  res.detail = format_detail(worst, tol);
  return res;
}

namespace detail {

/// Finite-difference Jacobian of the network output for one sample.
inline Eigen::MatrixXd fd_jacobian(const NetworkSpec &spec,
                                   const Eigen::VectorXd &theta,
                                   const Eigen::VectorXd &x) {
  const double h = 1e-6;
  Eigen::MatrixXd jac(spec.output_dim(), theta.size());
  for (int i = 0; i < theta.size(); ++i) {
    Eigen::VectorXd tp = theta, tm = theta;
    tp[i] += h;
    tm[i] -= h;
    const Eigen::VectorXd op = forward(spec, tp, x).output().row(0);
    const Eigen::VectorXd om = forward(spec, tm, x).output().row(0);
    jac.col(i) = (op - om) / (2.0 * h);
  }
  return jac;
}

/// Explicit loss Hessian w.r.t. the network output at one sample.
inline Eigen::MatrixXd explicit_loss_hessian(const NetworkSpec &spec,
                                             const Eigen::VectorXd &theta,
                                             const Eigen::VectorXd &x) {
  const int m = spec.output_dim();
  if (spec.loss_kind == LossKind::squared_error)
    return 2.0 * Eigen::MatrixXd::Identity(m, m);
  const Eigen::VectorXd out = forward(spec, theta, x).output().row(0);
  const Eigen::VectorXd p = ksd::detail::row_softmax(out.transpose()).row(0);
  return Eigen::MatrixXd(p.asDiagonal()) - p * p.transpose();
}

}  // namespace detail

/// Criterion: multiply_G vs the explicitly assembled J^T H_E J on small
/// nets, 20 random trials, relative error below 1e-5.
inline CheckResult check_gauss_newton_oracle() {
  CheckResult res{"Gauss-Newton product vs explicit J^T H J", false, ""};
  const double tol = 1e-5;
  double worst = 0.0;
  Rng rng(202);
  for (int trial = 0; trial < 20; ++trial) {
    const LossKind loss = (trial % 2 == 0) ? LossKind::squared_error
                                           : LossKind::softmax_cross_entropy;
    const NetworkSpec spec = check_spec(loss, {3, 4, 2});  // 26 params
    const Eigen::VectorXd theta = init_params(spec, rng.below(1u << 30));
    Sample sample;
    sample.x = random_vector(rng, 3).cwiseAbs();
    sample.y = Eigen::VectorXd::Zero(2);
    sample.label = 0;

    const Eigen::MatrixXd jac = detail::fd_jacobian(spec, theta, sample.x);
    const Eigen::MatrixXd h_e = detail::explicit_loss_hessian(spec, theta, sample.x);
    const Eigen::MatrixXd g_ref = jac.transpose() * h_e * jac;

    const Eigen::VectorXd v = random_vector(rng, static_cast<int>(theta.size()));
    const Eigen::VectorXd got = multiply_G(spec, theta, v, sample);
    const Eigen::VectorXd want = g_ref * v;
    const double scale = std::max(1.0, want.norm());
    worst = std::max(worst, (got - want).norm() / scale);
  }
  res.passed = worst < tol;
  res.detail = format_detail(worst, tol);
  return res;
}

/// Criterion: multiply_H vs finite differences of the gradient, 20
/// trials below 1e-4, plus the symmetry identity u^T H v == v^T H u.
inline CheckResult check_hessian_oracle() {
  CheckResult res{"Hessian product vs gradient differences", false, ""};
  const double tol = 1e-4;
  const double sym_tol = 1e-10;
  double worst = 0.0, worst_sym = 0.0;
  Rng rng(303);
  for (int trial = 0; trial < 20; ++trial) {
    const LossKind loss = (trial % 2 == 0) ? LossKind::squared_error
                                           : LossKind::softmax_cross_entropy;
    const NetworkSpec spec = check_spec(loss, {3, 4, 2});
    const Eigen::VectorXd theta = init_params(spec, rng.below(1u << 30));
    const Batch batch = random_batch(rng, spec, 3);
    const int dim = static_cast<int>(theta.size());

    const Eigen::VectorXd v = random_vector(rng, dim);
    const Eigen::VectorXd got =
        batch_curvature_product(spec, theta, v, batch, CurvatureKind::hessian);

    const double h = 1e-5;
    const Eigen::VectorXd gp = gradient(spec, theta + h * v, batch);
    const Eigen::VectorXd gm = gradient(spec, theta - h * v, batch);
    const Eigen::VectorXd want = (gp - gm) / (2.0 * h);
    const double scale = std::max(1.0, want.norm());
    worst = std::max(worst, (got - want).norm() / scale);

    const Eigen::VectorXd u = random_vector(rng, dim);
    const Eigen::VectorXd hu =
        batch_curvature_product(spec, theta, u, batch, CurvatureKind::hessian);
    const double uhv = u.dot(got);
    const double vhu = v.dot(hu);
    worst_sym = std::max(
        worst_sym, std::abs(uhv - vhu) / std::max(1.0, std::abs(uhv)));
  }
  res.passed = worst < tol && worst_sym < sym_tol;
  res.detail = format_detail(worst, tol) + ", symmetry " +
               format_detail(worst_sym, sym_tol);
  return res;
}

/// Criterion: v^T G v >= -1e-12 ||v||^2 for 100 random directions.
inline CheckResult check_gauss_newton_psd() {
  CheckResult res{"Gauss-Newton positive semidefiniteness", false, ""};
  double worst = 0.0;  // most negative normalized curvature seen
  Rng rng(404);
  for (int trial = 0; trial < 100; ++trial) {
    const LossKind loss = (trial % 2 == 0) ? LossKind::squared_error
                                           : LossKind::softmax_cross_entropy;
    const NetworkSpec spec = check_spec(loss, {4, 5, 3});
    const Eigen::VectorXd theta = init_params(spec, rng.below(1u << 30));
    const Batch batch = random_batch(rng, spec, 4);
    const Eigen::VectorXd v =
        random_vector(rng, static_cast<int>(theta.size()));
    const Eigen::VectorXd gv = batch_curvature_product(
        spec, theta, v, batch, CurvatureKind::gauss_newton);
    worst = std::min(worst, v.dot(gv) / v.squaredNorm());
  }
  res.passed = worst >= -1e-12;
  res.detail = format_detail(worst, -1e-12);
  return res;
}

/// Criterion: the accumulated reduced curvature equals V^T B V assembled
/// column by column, and V is orthonormal, both to 1e-8.
inline CheckResult check_basis_oracle() {
  CheckResult res{"Krylov basis orthonormality and reduced curvature", false, ""};
  const double tol = 1e-8;
  double worst = 0.0;
  Rng rng(505);
  const NetworkSpec spec = check_spec(LossKind::squared_error, {5, 4, 5});
  const Eigen::VectorXd theta = init_params(spec, 17);
  const Batch batch = random_batch(rng, spec, 8);
  const int dim = static_cast<int>(theta.size());

  const Eigen::VectorXd grad = gradient(spec, theta, batch);
  const Preconditioner precond =
      Preconditioner::from_fisher(fisher_diagonal(spec, theta, batch), 1e-4);
  Eigen::VectorXd d_prev = Eigen::VectorXd::Zero(dim);
  d_prev[0] = 1.0;
  const KrylovBasis basis =
      build_basis(spec, theta, grad, precond, batch, 6,
                  CurvatureKind::gauss_newton, d_prev);

  const int m = basis.cols();
  const Eigen::MatrixXd gram = basis.V.transpose() * basis.V;
  worst = std::max(worst,
                   (gram - Eigen::MatrixXd::Identity(m, m)).cwiseAbs().maxCoeff());

  Eigen::MatrixXd bv(dim, m);
  for (int j = 0; j < m; ++j)
    bv.col(j) = batch_curvature_product(spec, theta, basis.V.col(j), batch,
                                        CurvatureKind::gauss_newton);
  const Eigen::MatrixXd reference = basis.V.transpose() * bv;
  const double scale = std::max(1.0, reference.cwiseAbs().maxCoeff());
  worst = std::max(worst,
                   (basis.Hbar.mat() - reference).cwiseAbs().maxCoeff() / scale);
  res.passed = worst < tol;
  res.detail = format_detail(worst, tol);
  return res;
}

/// Criterion: for each damping value, the K-step CG solution of
/// (B + lambda D) x = -g stays inside span(V) with relative residual
/// below 1e-8, on a 30-parameter PSD quadratic.
inline CheckResult check_cg_containment() {
  CheckResult res{"Krylov span contains damped CG solutions", false, ""};
  const double tol = 1e-8;
  double worst = 0.0;
  const int dim = 30;
  const int num_k = 6;
  Rng rng(606);
  Eigen::MatrixXd root(dim, dim);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) root(i, j) = rng.gaussian();
  const Eigen::MatrixXd b_mat =
      root.transpose() * root / dim + 0.1 * Eigen::MatrixXd::Identity(dim, dim);
  const Eigen::VectorXd g = random_vector(rng, dim);
  const Eigen::VectorXd diag = b_mat.diagonal();
  const Preconditioner precond{diag};
  const auto apply = [&](const Eigen::VectorXd &v) {
    return Eigen::VectorXd(b_mat * v);
  };
  Eigen::VectorXd d_prev = Eigen::VectorXd::Zero(dim);
  d_prev[0] = 1.0;
  const KrylovBasis basis =
      build_basis_with_operator(g, precond, num_k, apply, d_prev);
  const Eigen::MatrixXd &v = basis.V;

  for (const double lambda : {0.0, 0.01, 0.1, 1.0, 10.0}) {
    // hf_pcg adds lambda I itself; the callback supplies the remaining
    // lambda (D - I) so the solved system is (B + lambda D).
    const auto damped = [&](const Eigen::VectorXd &w) {
      return Eigen::VectorXd(b_mat * w +
                             lambda * (diag.array() * w.array()).matrix() -
                             lambda * w);
    };
    const Eigen::VectorXd x =
        hf_pcg(damped, Eigen::VectorXd(-g), Eigen::VectorXd::Zero(dim),
               precond, lambda, num_k, 0.0)
            .d;
    const Eigen::VectorXd outside = x - v * (v.transpose() * x);
    worst = std::max(worst, outside.norm() / x.norm());
  }
  res.passed = worst < tol;
  res.detail = format_detail(worst, tol);
  return res;
}

/// Criterion: flooring forces positive definiteness — Cholesky succeeds —
/// on 100 random symmetric matrices, indefinite ones included.
inline CheckResult check_flooring() {
  CheckResult res{"eigenvalue flooring forces positive definiteness", false, ""};
  Rng rng(707);
  int failures = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int dim = 2 + static_cast<int>(rng.below(7));
    Eigen::MatrixXd raw(dim, dim);
    for (int i = 0; i < dim; ++i)
      for (int j = 0; j < dim; ++j) raw(i, j) = rng.gaussian();
    Eigen::MatrixXd sym = 0.5 * (raw + raw.transpose());
    if (trial % 3 == 1) sym -= 2.0 * Eigen::MatrixXd::Identity(dim, dim);
    if (trial % 3 == 2) sym = -sym * sym.transpose();  // negative semidefinite
    const SymMatrix floored = floor_eigenvalues(SymMatrix(sym), 1e-4);
    try {
      cholesky(floored);
    } catch (const NotPositiveDefinite &) {
      ++failures;
    }
  }
  res.passed = failures == 0;
  res.detail = std::to_string(failures) + " of 100 trials failed Cholesky";
  return res;
}

}  // namespace selfcheck

/// Runs every oracle check; deterministic, no external inputs.
inline std::vector<CheckResult> run_oracle_checks() {
  return {selfcheck::check_gradient_oracle(),
          selfcheck::check_gauss_newton_oracle(),
          selfcheck::check_hessian_oracle(),
          selfcheck::check_gauss_newton_psd(),
          selfcheck::check_basis_oracle(),
          selfcheck::check_cg_containment(),
          selfcheck::check_flooring()};
}

}  // namespace ksd

#endif  // KSD_SELFCHECK_HPP_

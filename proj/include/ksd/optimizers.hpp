// ksd/optimizers.hpp

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

#ifndef KSD_OPTIMIZERS_HPP_
#define KSD_OPTIMIZERS_HPP_

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <utility>
#include <vector>

#include "ksd/bfgs.hpp"
#include "ksd/curvature.hpp"
#include "ksd/data.hpp"
#include "ksd/errors.hpp"
#include "ksd/line_search.hpp"
#include "ksd/network.hpp"
#include "ksd/rng.hpp"
#include "ksd/subspace.hpp"

// Optimization drivers: the Krylov-subspace method and the SGD, L-BFGS,
// and truncated-Newton baselines.  All drivers share the record/monitor
// conventions below, and every random choice is keyed by (seed,
// iteration) so a run is a pure function of its inputs.

namespace ksd {

/// One history entry: the sampled training objective at the start of
/// iteration `iteration`, and wall time since the run began.
struct IterationRecord {
  int iteration = 0;
  double seconds = 0.0;
  double train_obj = 0.0;
};

using ConvergenceRecords = std::vector<IterationRecord>;

/// Observation hook called after each record is appended, with the
/// current parameters.  Returning false stops the run early.
using Monitor =
    std::function<bool(const IterationRecord &, const Eigen::VectorXd &)>;

namespace detail {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Krylov subspace descent
// ---------------------------------------------------------------------------

struct KsdConfig {
  int k = 20;                // Krylov subspace dimension K; basis has K+1 cols
  int bfgs_iters = 30;       // inner BFGS iteration cap
  double eps_floor = 1e-4;   // floor for both the preconditioner and Hhat
  double l2_coeff = 0.0;
  int max_outer_iters = 100;
  std::uint64_t seed = 0;
  CurvatureKind curvature = CurvatureKind::gauss_newton;

  void validate() const {
    if (k < 1) throw InvalidInput("KsdConfig: K must be positive");
    if (bfgs_iters < 1) throw InvalidInput("KsdConfig: bfgs_iters must be positive");
    if (!(eps_floor > 0.0) || !(eps_floor < 1.0))
      throw InvalidInput("KsdConfig: eps_floor must lie in (0, 1)");
    if (l2_coeff < 0.0) throw InvalidInput("KsdConfig: negative l2_coeff");
    if (max_outer_iters < 1)
      throw InvalidInput("KsdConfig: max_outer_iters must be positive");
  }
};

/// Loop variables of one optimizer run.
struct OptimizerState {
  Eigen::VectorXd theta;
  Eigen::VectorXd d_prev;
  int iteration = 0;
  std::uint64_t seed = 0;
};

struct KsdResult {
  Eigen::VectorXd theta;
  ConvergenceRecords history;
};

/// Per-iteration internals, captured only when requested by tests.
struct KsdDiagnostics {
  std::vector<Eigen::MatrixXd> bases;        // orthonormal V of each iteration
  std::vector<Eigen::VectorXd> steps;        // accepted step Vbar a*
  std::vector<double> subspace_values;       // BFGS objective at a*
};

/// Objective on `subset_c` as a function of subspace coordinates:
/// value at theta + Vbar a, gradient Vbar^T grad(theta + Vbar a).
inline double subspace_objective(const NetworkSpec &spec,
                                 const Eigen::VectorXd &theta,
                                 const Eigen::MatrixXd &vbar,
                                 const Eigen::VectorXd &a,
                                 const Batch &subset_c, double l2_coeff,
                                 Eigen::VectorXd *grad_out = nullptr) {
  if (vbar.rows() != theta.size() || vbar.cols() != a.size())
    throw InvalidInput("subspace_objective: dimension mismatch");
  Eigen::VectorXd step = vbar * a;
  Eigen::VectorXd th = theta + step;
  if (grad_out == nullptr) return objective(spec, th, subset_c, l2_coeff);
  Eigen::VectorXd grad(theta.size());
  const double value = objective_and_gradient(spec, th, subset_c, l2_coeff, grad);
  *grad_out = vbar.transpose() * grad;
  return value;
}

/// One run of Krylov subspace descent.  Per iteration: subsets A/B/C are
/// drawn from `plan`; the gradient and the floored Fisher preconditioner
/// come from A; the basis and reduced curvature from B; the subspace BFGS
/// objective from C.  The recorded objective is the value on A at the
/// start of the iteration.  A zero sampled gradient terminates the run.
inline KsdResult ksd_run(const NetworkSpec &spec, const Dataset &data,
                         const KsdConfig &config, const SubsetPlan &plan,
                         const Monitor &monitor = {},
                         const Eigen::VectorXd *theta0 = nullptr,
                         KsdDiagnostics *diagnostics = nullptr) {
  config.validate();
  plan.validate();
  data.validate();
  OptimizerState state;
  state.seed = config.seed;
  state.theta = theta0 != nullptr ? *theta0 : init_params(spec, config.seed);
  ParamLayout(spec).check(state.theta);
  state.d_prev = Eigen::VectorXd::Zero(state.theta.size());
  state.d_prev[0] = 1.0;

  KsdResult res;
  const auto start = detail::Clock::now();
  for (int n = 0; n < config.max_outer_iters; ++n) {
    const Subsets subs = draw_subsets(data.num_samples(), plan, n);
    const Batch batch_a = gather(data, subs.a);
    Eigen::VectorXd grad(state.theta.size());
    const double f_a = objective_and_gradient(spec, state.theta, batch_a,
                                              config.l2_coeff, grad);
    const IterationRecord rec{n, detail::seconds_since(start), f_a};
    res.history.push_back(rec);
    if (monitor && !monitor(rec, state.theta)) break;
    if (grad.isZero(0.0)) break;  // stationary point of the sampled objective

    try {
      const Preconditioner precond = Preconditioner::from_fisher(
          fisher_diagonal(spec, state.theta, batch_a), config.eps_floor);
      const Batch batch_b = gather(data, subs.b);
      const KrylovBasis basis =
          build_basis(spec, state.theta, grad, precond, batch_b, config.k,
                      config.curvature, state.d_prev, config.l2_coeff);
      const SymMatrix hhat = floor_eigenvalues(basis.Hbar, config.eps_floor);
      const RotatedBasis rotated = rotate_basis(basis.V, hhat);
      const Batch batch_c = gather(data, subs.c);
      const BfgsResult inner = bfgs_minimize(
          [&](const Eigen::VectorXd &a, Eigen::VectorXd &grad_out) {
            return subspace_objective(spec, state.theta, rotated.Vbar, a,
                                      batch_c, config.l2_coeff, &grad_out);
          },
          Eigen::VectorXd::Zero(basis.cols()), config.bfgs_iters);
      Eigen::VectorXd step = rotated.Vbar * inner.a;
      if (diagnostics != nullptr) {
        diagnostics->bases.push_back(basis.V);
        diagnostics->steps.push_back(step);
        diagnostics->subspace_values.push_back(inner.value);
      }
      state.theta = state.theta + step;
      state.d_prev = step;
      state.iteration = n + 1;
    } catch (const ZeroGradient &) {
      break;
    }
  }
  res.theta = state.theta;
  return res;
}

// ---------------------------------------------------------------------------
// SGD baseline
// ---------------------------------------------------------------------------

using LearningRateSchedule = std::function<double(int epoch)>;

struct SgdResult {
  Eigen::VectorXd theta;
  ConvergenceRecords history;
};

/// Minibatch SGD.  Each epoch shuffles the sample order with a draw keyed
/// by (seed, epoch) and sweeps it in consecutive minibatches (the last
/// one may be short).  The recorded objective is the full training
/// objective at the start of the epoch.
inline SgdResult sgd_run(const NetworkSpec &spec, const Dataset &data,
                         const LearningRateSchedule &learning_rate,
                         int minibatch_size, int epochs, double l2_coeff,
                         std::uint64_t seed, const Monitor &monitor = {},
                         const Eigen::VectorXd *theta0 = nullptr) {
  if (!learning_rate) throw InvalidInput("sgd_run: empty schedule");
  if (minibatch_size < 1) throw InvalidInput("sgd_run: minibatch_size < 1");
  if (epochs < 0) throw InvalidInput("sgd_run: negative epochs");
  if (l2_coeff < 0.0) throw InvalidInput("sgd_run: negative l2_coeff");
  data.validate();
  const int n = data.num_samples();
  if (n < 1) throw InvalidInput("sgd_run: empty dataset");

  SgdResult res;
  res.theta = theta0 != nullptr ? *theta0 : init_params(spec, seed);
  ParamLayout(spec).check(res.theta);

  std::vector<int> all(n);
  for (int i = 0; i < n; ++i) all[i] = i;
  const Batch full = gather(data, all);

  const auto start = detail::Clock::now();
  for (int epoch = 0; epoch < epochs; ++epoch) {
    const double f = objective(spec, res.theta, full, l2_coeff);
    const IterationRecord rec{epoch, detail::seconds_since(start), f};
    res.history.push_back(rec);
    if (monitor && !monitor(rec, res.theta)) break;

    const double eta = learning_rate(epoch);
    if (!std::isfinite(eta)) throw InvalidInput("sgd_run: non-finite learning rate");

    std::vector<int> order = all;
    Rng rng(mix_seed(seed, 0x59d, static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order);
    for (int at = 0; at < n; at += minibatch_size) {
      const int stop = std::min(n, at + minibatch_size);
      const std::vector<int> slice(order.begin() + at, order.begin() + stop);
      const Eigen::VectorXd grad =
          gradient(spec, res.theta, gather(data, slice), l2_coeff);
      res.theta -= eta * grad;
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// L-BFGS baseline
// ---------------------------------------------------------------------------

struct LbfgsResult {
  Eigen::VectorXd theta;
  ConvergenceRecords history;
};

/// Full-batch L-BFGS with two-loop recursion over a moving window of
/// curvature pairs and a strong Wolfe line search.  On a line-search
/// failure the memory is dropped and the iteration retries from steepest
/// descent; a failure with empty memory ends the run.
inline LbfgsResult lbfgs_run(const NetworkSpec &spec, const Dataset &data,
                             int window, int max_iters, double l2_coeff,
                             std::uint64_t seed, const Monitor &monitor = {},
                             const Eigen::VectorXd *theta0 = nullptr) {
  if (window < 1) throw InvalidInput("lbfgs_run: window < 1");
  if (max_iters < 0) throw InvalidInput("lbfgs_run: negative max_iters");
  if (l2_coeff < 0.0) throw InvalidInput("lbfgs_run: negative l2_coeff");
  data.validate();
  const int n = data.num_samples();
  if (n < 1) throw InvalidInput("lbfgs_run: empty dataset");

  LbfgsResult res;
  res.theta = theta0 != nullptr ? *theta0 : init_params(spec, seed);
  ParamLayout(spec).check(res.theta);

  std::vector<int> all(n);
  for (int i = 0; i < n; ++i) all[i] = i;
  const Batch full = gather(data, all);

  const auto f_and_grad = [&](const Eigen::VectorXd &x,
                              Eigen::VectorXd &grad_out) {
    return objective_and_gradient(spec, x, full, l2_coeff, grad_out);
  };

  std::deque<Eigen::VectorXd> s_hist, y_hist;
  std::deque<double> rho_hist;
  const auto two_loop = [&](const Eigen::VectorXd &grad) {
    Eigen::VectorXd q = grad;
    const int m = static_cast<int>(s_hist.size());
    std::vector<double> alpha(m);
    for (int i = m - 1; i >= 0; --i) {
      alpha[i] = rho_hist[i] * s_hist[i].dot(q);
      q -= alpha[i] * y_hist[i];
    }
    if (m > 0)
      q *= s_hist[m - 1].dot(y_hist[m - 1]) / y_hist[m - 1].squaredNorm();
    for (int i = 0; i < m; ++i) {
      const double beta = rho_hist[i] * y_hist[i].dot(q);
      q += (alpha[i] - beta) * s_hist[i];
    }
    return Eigen::VectorXd(-q);
  };

  LineSearchParams ls_params;
  ls_params.c2 = 0.1;  // tight curvature constant: near-exact on quadratics

  Eigen::VectorXd grad(res.theta.size());
  double f = objective_and_gradient(spec, res.theta, full, l2_coeff, grad);
  const auto start = detail::Clock::now();
  for (int iter = 0; iter < max_iters; ++iter) {
    const IterationRecord rec{iter, detail::seconds_since(start), f};
    res.history.push_back(rec);
    if (monitor && !monitor(rec, res.theta)) break;
    if (grad.norm() <= 1e-10 * (1.0 + std::abs(f))) break;

    Eigen::VectorXd dir = two_loop(grad);
    if (!dir.allFinite() || dir.dot(grad) >= 0.0) {
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      dir = -grad;
    }
    LineSearchResult ls =
        wolfe_line_search(f_and_grad, res.theta, f, grad, dir, ls_params);
    if (!ls.success) {
      if (s_hist.empty()) break;
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      dir = -grad;
      ls = wolfe_line_search(f_and_grad, res.theta, f, grad, dir, ls_params);
      if (!ls.success) break;
    }

    const Eigen::VectorXd s = ls.x - res.theta;
    const Eigen::VectorXd y = ls.grad - grad;
    res.theta = ls.x;
    f = ls.value;
    grad = ls.grad;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      s_hist.push_back(s);
      y_hist.push_back(y);
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > window) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Truncated-Newton (HF-style) baseline
// ---------------------------------------------------------------------------

struct HfConfig {
  double initial_lambda = 1.0;
  double lambda_increase = 1.5;   // multiplier when the step fits poorly
  double lambda_decrease = 1.5;   // divisor when the step fits well
  int max_cg_iters = 250;
  double cg_tol = 1e-4;           // relative-residual stopping threshold
  double l2_coeff = 0.0;
  double eps_floor = 1e-4;        // preconditioner floor, as in KSD
  CurvatureKind curvature = CurvatureKind::gauss_newton;
  int max_outer_iters = 100;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(initial_lambda > 0.0)) throw InvalidInput("HfConfig: lambda must be positive");
    if (!(lambda_increase > 1.0))
      throw InvalidInput("HfConfig: lambda_increase must exceed 1");
    if (!(lambda_decrease >= 1.0))
      throw InvalidInput("HfConfig: lambda_decrease must be at least 1");
    if (max_cg_iters < 1) throw InvalidInput("HfConfig: max_cg_iters < 1");
    if (!(cg_tol > 0.0)) throw InvalidInput("HfConfig: cg_tol must be positive");
    if (l2_coeff < 0.0) throw InvalidInput("HfConfig: negative l2_coeff");
    if (!(eps_floor > 0.0) || !(eps_floor < 1.0))
      throw InvalidInput("HfConfig: eps_floor must lie in (0, 1)");
    if (max_outer_iters < 1) throw InvalidInput("HfConfig: max_outer_iters < 1");
  }
};

struct HfCgResult {
  Eigen::VectorXd d;
  int iterations = 0;
  bool truncated = false;  // hit a non-positive curvature direction
};

/// Preconditioned conjugate gradients on (B + lambda I) d = rhs, warm
/// started from d0.  Stops on relative residual <= tol, the iteration
/// cap, or a search direction of non-positive curvature — in that case
/// the previous iterate is returned with `truncated` set.
template <typename ApplyB>
HfCgResult hf_pcg(ApplyB &&apply_b, const Eigen::VectorXd &rhs,
                  const Eigen::VectorXd &d0, const Preconditioner &precond,
                  double lambda, int max_iters, double tol) {
  if (rhs.size() != d0.size() || precond.dim() != rhs.size())
    throw InvalidInput("hf_pcg: dimension mismatch");
  if (lambda < 0.0) throw InvalidInput("hf_pcg: negative lambda");
  HfCgResult res;
  res.d = d0;
  const double rhs_norm = rhs.norm();
  if (rhs_norm == 0.0) {
    res.d.setZero();
    return res;
  }
  Eigen::VectorXd r =
      d0.isZero(0.0) ? rhs : Eigen::VectorXd(rhs - apply_b(d0) - lambda * d0);
  if (r.norm() <= tol * rhs_norm) return res;
  Eigen::VectorXd z = precond.apply_inverse(r);
  Eigen::VectorXd p = z;
  double rz = r.dot(z);
  for (int i = 1; i <= max_iters; ++i) {
    const Eigen::VectorXd ap = apply_b(p) + lambda * p;
    const double pap = p.dot(ap);
    if (!(pap > 0.0)) {
      res.truncated = true;
      break;
    }
    const double step = rz / pap;
    res.d += step * p;
    r -= step * ap;
    res.iterations = i;
    if (r.norm() <= tol * rhs_norm) break;
    z = precond.apply_inverse(r);
    const double rz_next = r.dot(z);
    p = z + (rz_next / rz) * p;
    rz = rz_next;
  }
  return res;
}

struct HfIterationStats {
  double lambda = 0.0;   // damping used for this iteration's CG solve
  double rho = 0.0;      // actual / predicted reduction of the full step
  double alpha = 0.0;    // accepted backtracking step size (0 on failure)
  int cg_iterations = 0;
  bool truncated = false;
};

struct HfResult {
  Eigen::VectorXd theta;
  ConvergenceRecords history;
  std::vector<HfIterationStats> stats;
};

/// Per-iteration internals for the warm-start and damping tests.
struct HfDiagnostics {
  std::vector<Eigen::VectorXd> thetas;       // at iteration start
  std::vector<Eigen::VectorXd> grads;        // on A
  std::vector<Eigen::VectorXd> warm_starts;  // d0 fed to CG
  std::vector<Eigen::VectorXd> solutions;    // CG output d
};

/// Truncated-Newton driver: CG on the damped curvature of B with the
/// floored Fisher preconditioner from A, warm started from the previous
/// solution; the reduction ratio of the undamped quadratic model drives
/// the Levenberg-Marquardt damping; a backtracking line search on C picks
/// the step size, accepting on simple decrease.
inline HfResult hf_run(const NetworkSpec &spec, const Dataset &data,
                       const HfConfig &config, const SubsetPlan &plan,
                       const Monitor &monitor = {},
                       const Eigen::VectorXd *theta0 = nullptr,
                       HfDiagnostics *diagnostics = nullptr) {
  config.validate();
  plan.validate();
  data.validate();
  HfResult res;
  res.theta = theta0 != nullptr ? *theta0 : init_params(spec, config.seed);
  ParamLayout(spec).check(res.theta);
  Eigen::VectorXd d_warm = Eigen::VectorXd::Zero(res.theta.size());
  double lambda = config.initial_lambda;

  const auto start = detail::Clock::now();
  for (int n = 0; n < config.max_outer_iters; ++n) {
    const Subsets subs = draw_subsets(data.num_samples(), plan, n);
    const Batch batch_a = gather(data, subs.a);
    Eigen::VectorXd grad(res.theta.size());
    const double f_a = objective_and_gradient(spec, res.theta, batch_a,
                                              config.l2_coeff, grad);
    const IterationRecord rec{n, detail::seconds_since(start), f_a};
    res.history.push_back(rec);
    if (monitor && !monitor(rec, res.theta)) break;
    if (grad.isZero(0.0)) break;

    const Preconditioner precond = Preconditioner::from_fisher(
        fisher_diagonal(spec, res.theta, batch_a), config.eps_floor);
    const Batch batch_b = gather(data, subs.b);
    const auto apply_b = [&](const Eigen::VectorXd &v) {
      return batch_curvature_product(spec, res.theta, v, batch_b,
                                     config.curvature, config.l2_coeff);
    };
    const HfCgResult cg =
        hf_pcg(apply_b, Eigen::VectorXd(-grad), d_warm, precond, lambda,
               config.max_cg_iters, config.cg_tol);
    const Eigen::VectorXd &d = cg.d;
    if (diagnostics != nullptr) {
      diagnostics->thetas.push_back(res.theta);
      diagnostics->grads.push_back(grad);
      diagnostics->warm_starts.push_back(d_warm);
      diagnostics->solutions.push_back(d);
    }

    HfIterationStats st;
    st.lambda = lambda;
    st.cg_iterations = cg.iterations;
    st.truncated = cg.truncated;

    const double model_change = grad.dot(d) + 0.5 * d.dot(apply_b(d));
    const double f_step = objective(spec, res.theta + d, batch_a, config.l2_coeff);
    st.rho = (model_change < 0.0 && std::isfinite(f_step))
                 ? (f_step - f_a) / model_change
                 : -1.0;
    if (st.rho > 0.75)
      lambda /= config.lambda_decrease;
    else if (st.rho < 0.25)
      lambda *= config.lambda_increase;
    lambda = std::clamp(lambda, 1e-15, 1e15);

    const Batch batch_c = gather(data, subs.c);
    const double f_c = objective(spec, res.theta, batch_c, config.l2_coeff);
    double alpha = 1.0;
    bool accepted = false;
    for (int h = 0; h < 30; ++h) {
      const double trial =
          objective(spec, res.theta + alpha * d, batch_c, config.l2_coeff);
      if (trial < f_c) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (accepted)
      res.theta = res.theta + alpha * d;
    else
      alpha = 0.0;
    st.alpha = alpha;
    res.stats.push_back(st);
    d_warm = d;
  }
  return res;
}

}  // namespace ksd

#endif  // KSD_OPTIMIZERS_HPP_

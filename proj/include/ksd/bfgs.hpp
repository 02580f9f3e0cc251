// ksd/bfgs.hpp

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

#ifndef KSD_BFGS_HPP_
#define KSD_BFGS_HPP_

#include <Eigen/Dense>
#include <cmath>

#include "ksd/errors.hpp"
#include "ksd/line_search.hpp"

// Full-memory BFGS for the low-dimensional subspace problem.  The working
// dimension is the subspace width (K+1), so dense inverse-Hessian updates
// are cheap; all the cost is in the objective callback.

namespace ksd {

struct BfgsResult {
  Eigen::VectorXd a;       // best iterate found
  double value = 0.0;      // objective there
  int iterations = 0;      // accepted steps
  bool converged = false;  // gradient tolerance reached
};

/// Minimizes `f_and_grad(a, grad_out) -> value` starting from `a0` with at
/// most `max_iters` accepted steps.  The inverse-Hessian approximation
/// starts at identity; steps must satisfy the strong Wolfe conditions
/// (c1 = 1e-4, c2 = 0.9), so the iterate values decrease monotonically and
/// the returned value never exceeds f(a0).  A failed line search ends the
/// run at the best iterate so far.
template <typename F>
BfgsResult bfgs_minimize(F &&f_and_grad, const Eigen::VectorXd &a0,
                         int max_iters) {
  if (max_iters < 0) throw InvalidInput("bfgs_minimize: negative max_iters");
  const int dim = static_cast<int>(a0.size());
  BfgsResult res;
  res.a = a0;

  Eigen::VectorXd grad(dim);
  double value = f_and_grad(res.a, grad);
  if (!std::isfinite(value) || !grad.allFinite())
    throw InvalidStart("bfgs_minimize: non-finite objective at start point");
  res.value = value;

  LineSearchParams ls_params;  // c1 = 1e-4, c2 = 0.9
  Eigen::MatrixXd inv_h = Eigen::MatrixXd::Identity(dim, dim);
  Eigen::VectorXd a = a0;
  for (int iter = 0; iter < max_iters; ++iter) {
    if (grad.norm() <= 1e-10 * (1.0 + std::abs(value))) {
      res.converged = true;
      break;
    }
    Eigen::VectorXd dir = -(inv_h * grad);
    if (!(dir.dot(grad) < 0.0)) {
      // The approximation lost positive definiteness; restart it.
      inv_h.setIdentity();
      dir = -grad;
    }
    LineSearchResult ls =
        wolfe_line_search(f_and_grad, a, value, grad, dir, ls_params);
    if (!ls.success) break;

    Eigen::VectorXd s = ls.x - a;
    Eigen::VectorXd y = ls.grad - grad;
    a = ls.x;
    value = ls.value;
    grad = ls.grad;
    ++res.iterations;
    // Wolfe guarantees a strict decrease, so the newest iterate is best.
    res.a = a;
    res.value = value;

    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      const double rho = 1.0 / sy;
      Eigen::VectorXd hy = inv_h * y;
      inv_h.noalias() -= rho * (s * hy.transpose() + hy * s.transpose());
      inv_h.noalias() +=
          (rho * rho * y.dot(hy) + rho) * (s * s.transpose());
    }
  }
  return res;
}

}  // namespace ksd

#endif  // KSD_BFGS_HPP_

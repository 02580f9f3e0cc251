// ksd/line_search.hpp

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

#ifndef KSD_LINE_SEARCH_HPP_
#define KSD_LINE_SEARCH_HPP_

#include <Eigen/Dense>
#include <cmath>

// Strong-Wolfe line search (bracket + zoom with cubic Hermite
// interpolation).  The interpolation step is exact on quadratic slices,
// which the quasi-Newton convergence tests rely on.

namespace ksd {

struct LineSearchParams {
  double c1 = 1e-4;          // sufficient-decrease constant
  double c2 = 0.9;           // curvature constant, c1 < c2 < 1
  double initial_step = 1.0;
  double max_step = 1e20;
  int max_evals = 25;
};

struct LineSearchResult {
  bool success = false;
  double alpha = 0.0;
  double value = 0.0;
  Eigen::VectorXd x;     // accepted point (valid when success)
  Eigen::VectorXd grad;  // gradient at the accepted point
  int evals = 0;
};

namespace detail {

// Minimizer of the cubic Hermite interpolant through (a, fa, da) and
// (b, fb, db).  NaN signals the caller to fall back to bisection.
inline double cubic_interpolate(double a, double fa, double da, double b,
                                double fb, double db) {
  const double d1 = da + db - 3.0 * (fa - fb) / (a - b);
  const double disc = d1 * d1 - da * db;
  if (!(disc >= 0.0)) return std::numeric_limits<double>::quiet_NaN();
  const double d2 = (b >= a ? 1.0 : -1.0) * std::sqrt(disc);
  return b - (b - a) * (db + d2 - d1) / (db - da + 2.0 * d2);
}

}  // namespace detail

/// Searches along `dir` from `x0` for a step satisfying the strong Wolfe
/// conditions.  `f_and_grad(x, grad_out) -> value` is the objective;
/// `f0`/`g0` are its value and gradient at `x0`.  A non-descent direction
/// or an exhausted evaluation budget yields success == false and the
/// caller keeps its current point.
template <typename F>
LineSearchResult wolfe_line_search(F &&f_and_grad, const Eigen::VectorXd &x0,
                                   double f0, const Eigen::VectorXd &g0,
                                   const Eigen::VectorXd &dir,
                                   const LineSearchParams &params = {}) {
  LineSearchResult res;
  const double d0 = g0.dot(dir);
  if (!(d0 < 0.0) || !std::isfinite(f0)) return res;

  Eigen::VectorXd x, grad;
  double value = 0.0, dphi = 0.0;
  const auto eval = [&](double alpha) {
    x = x0 + alpha * dir;
    value = f_and_grad(x, grad);
    dphi = grad.dot(dir);
    ++res.evals;
  };
  const auto accept = [&](double alpha) {
    res.success = true;
    res.alpha = alpha;
    res.value = value;
    res.x = std::move(x);
    res.grad = std::move(grad);
  };
  const auto armijo = [&](double alpha, double f) {
    return f <= f0 + params.c1 * alpha * d0;
  };

  // Zoom phase: maintains a bracket [lo, hi] (lo has the lower value)
  // and shrinks it around a Wolfe point.
  const auto zoom = [&](double lo, double f_lo, double d_lo, double hi,
                        double f_hi, double d_hi) {
    while (res.evals < params.max_evals) {
      const double width = std::abs(hi - lo);
      if (!(width > 1e-16 * std::max(1.0, std::abs(lo)))) return;
      double alpha =
          detail::cubic_interpolate(lo, f_lo, d_lo, hi, f_hi, d_hi);
      const double inner_lo = std::min(lo, hi) + 0.05 * width;
      const double inner_hi = std::max(lo, hi) - 0.05 * width;
      if (!std::isfinite(alpha) || alpha < inner_lo || alpha > inner_hi)
        alpha = 0.5 * (lo + hi);
      eval(alpha);
      if (!std::isfinite(value) || !armijo(alpha, value) || value >= f_lo) {
        hi = alpha;
        f_hi = value;
        d_hi = dphi;
      } else {
        if (std::abs(dphi) <= -params.c2 * d0) return accept(alpha);
        if (dphi * (hi - lo) >= 0.0) {
          hi = lo;
          f_hi = f_lo;
          d_hi = d_lo;
        }
        lo = alpha;
        f_lo = value;
        d_lo = dphi;
      }
    }
  };

  // Bracketing phase: step out until the minimum is straddled.
  double alpha_prev = 0.0, f_prev = f0, d_prev = d0;
  double alpha = std::min(params.initial_step, params.max_step);
  for (int iter = 0; res.evals < params.max_evals; ++iter) {
    eval(alpha);
    if (!std::isfinite(value) || !armijo(alpha, value) ||
        (iter > 0 && value >= f_prev)) {
      zoom(alpha_prev, f_prev, d_prev, alpha, value, dphi);
      return res;
    }
    if (std::abs(dphi) <= -params.c2 * d0) {
      accept(alpha);
      return res;
    }
    if (dphi >= 0.0) {
      zoom(alpha, value, dphi, alpha_prev, f_prev, d_prev);
      return res;
    }
    if (alpha >= params.max_step) return res;
    alpha_prev = alpha;
    f_prev = value;
    d_prev = dphi;
    alpha = std::min(2.0 * alpha, params.max_step);
  }
  return res;
}

}  // namespace ksd

#endif  // KSD_LINE_SEARCH_HPP_

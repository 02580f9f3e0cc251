// ksd/subspace.hpp

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

#ifndef KSD_SUBSPACE_HPP_
#define KSD_SUBSPACE_HPP_

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "ksd/curvature.hpp"
#include "ksd/errors.hpp"
#include "ksd/linalg.hpp"
#include "ksd/network.hpp"
#include "ksd/rng.hpp"

// Construction of the preconditioned Krylov subspace: an orthonormal basis
// V whose columns span { (D^-1 B)^k D^-1 g, 0 <= k < K } plus the previous
// search direction, together with the reduced curvature Hbar = V^T B V,
// its eigenvalue-floored version, and the Cholesky-based change of basis
// that whitens the subspace for the inner optimizer.

namespace ksd {

/// Diagonal preconditioner with strictly positive entries.
class Preconditioner {
 public:
  explicit Preconditioner(Eigen::VectorXd d) : d_(std::move(d)) {
    if (d_.size() == 0) throw InvalidInput("Preconditioner: empty diagonal");
    if (!d_.allFinite() || d_.minCoeff() <= 0.0)
      throw InvalidInput("Preconditioner: entries must be positive and finite");
  }

  /// Fisher-diagonal preconditioner: entries floored to eps times the
  /// largest entry, which keeps the inverse bounded.
  static Preconditioner from_fisher(const Eigen::VectorXd &fisher_diag,
                                    double eps) {
    if (!(eps > 0.0) || !(eps < 1.0))
      throw InvalidInput("Preconditioner: eps must lie in (0, 1)");
    if (!fisher_diag.allFinite())
      throw InvalidInput("Preconditioner: non-finite Fisher diagonal");
    const double top = fisher_diag.maxCoeff();
    if (top <= 0.0)
      throw DegenerateCurvature(
          "Preconditioner: Fisher diagonal has no positive entry");
    return Preconditioner(fisher_diag.cwiseMax(eps * top));
  }

  static Preconditioner identity(int dim) {
    return Preconditioner(Eigen::VectorXd::Ones(dim));
  }

  int dim() const { return static_cast<int>(d_.size()); }
  const Eigen::VectorXd &diagonal() const { return d_; }

  Eigen::VectorXd apply_inverse(const Eigen::VectorXd &v) const {
    if (v.size() != d_.size())
      throw InvalidInput("Preconditioner: size mismatch");
    return v.cwiseQuotient(d_);
  }

 private:
  Eigen::VectorXd d_;
};

/// Orthonormal subspace basis and the reduced curvature within it.  The
/// basis normally has K+1 columns; it is narrower only when the Krylov
/// recursion exhausted the reachable space.
struct KrylovBasis {
  Eigen::MatrixXd V;  // param_dim x m, orthonormal columns
  SymMatrix Hbar;     // m x m, V^T B V

  int cols() const { return static_cast<int>(V.cols()); }
};

namespace detail {

// Modified Gram-Schmidt against the first `count` columns, run twice;
// one re-orthogonalization pass is enough at working precision.
inline void orthogonalize(const std::vector<Eigen::VectorXd> &cols,
                          Eigen::VectorXd &u) {
  for (int pass = 0; pass < 2; ++pass)
    for (const Eigen::VectorXd &v : cols) u -= u.dot(v) * v;
}

}  // namespace detail

/// Builds the basis with an arbitrary symmetric curvature operator
/// `apply_b` (vector -> vector).  One operator application is spent per
/// basis column: the first K come from the preconditioned Krylov
/// recursion, the last from orthogonalizing `d_prev`, and the final
/// application fills the last row of Hbar.
template <typename CurvOp>
KrylovBasis build_basis_with_operator(const Eigen::VectorXd &grad,
                                      const Preconditioner &precond, int num_k,
                                      CurvOp &&apply_b,
                                      const Eigen::VectorXd &d_prev) {
  const int dim = static_cast<int>(grad.size());
  if (num_k < 1) throw InvalidInput("build_basis: K must be >= 1");
  if (precond.dim() != dim || d_prev.size() != dim)
    throw InvalidInput("build_basis: dimension mismatch");
  if (!grad.allFinite()) throw NumericalOverflow("build_basis: non-finite gradient");
  if (grad.isZero(0.0)) throw ZeroGradient("build_basis: gradient is zero");

  // Degenerate-column replacements are drawn from a stream seeded by the
  // column index only, so reruns are bitwise identical.
  const auto replacement = [dim](int column) {
    Rng rng(mix_seed(0x5b5b, static_cast<std::uint64_t>(column)));
    Eigen::VectorXd r(dim);
    for (int i = 0; i < dim; ++i) r[i] = rng.gaussian();
    return r;
  };

  std::vector<Eigen::VectorXd> cols;
  Eigen::VectorXd v1 = precond.apply_inverse(grad);
  cols.push_back(v1 / v1.norm());

  int target = num_k + 1;
  Eigen::MatrixXd hbar = Eigen::MatrixXd::Zero(target, target);
  for (int k = 0; k < static_cast<int>(cols.size()); ++k) {
    Eigen::VectorXd w = apply_b(cols[k]);
    if (w.size() != dim || !w.allFinite())
      throw NumericalOverflow("build_basis: bad curvature product");
    for (int j = 0; j <= k; ++j) hbar(k, j) = w.dot(cols[j]);

    if (static_cast<int>(cols.size()) == target) continue;  // rows remain
    Eigen::VectorXd u = static_cast<int>(cols.size()) == target - 1
                            ? d_prev
                            : precond.apply_inverse(w);
    const double pre_norm = u.norm();
    detail::orthogonalize(cols, u);
    if (!(u.norm() > 1e-12 * pre_norm)) {
      u = replacement(static_cast<int>(cols.size()));
      const double r_norm = u.norm();
      detail::orthogonalize(cols, u);
      if (!(u.norm() > 1e-12 * r_norm)) {
        // The whole space is spanned; keep the shorter basis.
        target = static_cast<int>(cols.size());
        continue;
      }
    }
    cols.push_back(u / u.norm());
  }

  KrylovBasis basis{Eigen::MatrixXd(dim, static_cast<int>(cols.size())),
                    SymMatrix(hbar.topLeftCorner(cols.size(), cols.size()))};
  for (int j = 0; j < basis.cols(); ++j) basis.V.col(j) = cols[j];
  return basis;
}

/// Network-facing wrapper: the curvature operator is the batch mean of
/// `kind` products plus the regularizer's l2 term.
inline KrylovBasis build_basis(const NetworkSpec &spec,
                               const Eigen::VectorXd &theta,
                               const Eigen::VectorXd &grad,
                               const Preconditioner &precond,
                               const Batch &batch_b, int num_k,
                               CurvatureKind kind,
                               const Eigen::VectorXd &d_prev,
                               double l2_coeff = 0.0) {
  return build_basis_with_operator(
      grad, precond, num_k,
      [&](const Eigen::VectorXd &v) {
        return batch_curvature_product(spec, theta, v, batch_b, kind,
                                       l2_coeff);
      },
      d_prev);
}

/// Floors the eigenvalues of a reduced curvature matrix to eps times the
/// largest one, which makes it positive definite.  When no eigenvalue is
/// positive the spectrum carries no usable scale, so every eigenvalue is
/// set to eps times the largest magnitude.
inline SymMatrix floor_eigenvalues(const SymMatrix &hbar, double eps) {
  if (!(eps > 0.0) || !(eps < 1.0))
    throw InvalidInput("floor_eigenvalues: eps must lie in (0, 1)");
  EigDecomposition eig = sym_eig(hbar);
  const double top = eig.values.maxCoeff();
  Eigen::VectorXd floored;
  if (top > 0.0) {
    floored = eig.values.cwiseMax(eps * top);
  } else {
    const double scale = eig.values.cwiseAbs().maxCoeff();
    if (scale == 0.0)
      throw DegenerateCurvature("floor_eigenvalues: zero curvature matrix");
    floored = Eigen::VectorXd::Constant(eig.values.size(), eps * scale);
  }
  Eigen::MatrixXd rebuilt =
      eig.vectors * floored.asDiagonal() * eig.vectors.transpose();
  return SymMatrix(rebuilt);
}

struct RotatedBasis {
  LowerTriangular chol;  // C with Hhat = C C^T
  Eigen::MatrixXd Vbar;  // V C^{-T}; spans the same subspace as V
};

/// Change of basis that whitens the floored reduced curvature: with
/// Hhat = C C^T, the returned Vbar = V C^{-T} satisfies
/// Vbar^T B Vbar ~= I wherever flooring was inactive.
inline RotatedBasis rotate_basis(const Eigen::MatrixXd &v_basis,
                                 const SymMatrix &hhat) {
  if (hhat.dim() != v_basis.cols())
    throw InvalidInput("rotate_basis: dimension mismatch");
  LowerTriangular chol = cholesky(hhat);
  Eigen::MatrixXd vbar = right_solve_transposed(v_basis, chol);
  return RotatedBasis{std::move(chol), std::move(vbar)};
}

}  // namespace ksd

#endif  // KSD_SUBSPACE_HPP_

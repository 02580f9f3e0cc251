// ksd/linalg.hpp

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

#ifndef KSD_LINALG_HPP_
#define KSD_LINALG_HPP_

#include <Eigen/Dense>
#include <string>

#include "ksd/errors.hpp"

// Small dense kernels for the reduced (K+1)-dimensional problems.  All of
// this runs at dimension of a few tens, so everything is plain O(d^3)
// double-precision math regardless of what precision the network uses.

namespace ksd {

/// Symmetric matrix; the lower triangle is authoritative and the upper
/// triangle is kept mirrored at construction time.
class SymMatrix {
 public:
  explicit SymMatrix(int dim) {
    check_dim(dim);
    m_ = Eigen::MatrixXd::Zero(dim, dim);
  }

  /// Builds from a square matrix, mirroring the lower triangle upward.
  explicit SymMatrix(const Eigen::MatrixXd &m) {
    if (m.rows() != m.cols())
      throw InvalidInput("SymMatrix: matrix is not square");
    check_dim(static_cast<int>(m.rows()));
    m_ = m;
    mirror_lower();
  }

  int dim() const { return static_cast<int>(m_.rows()); }
  const Eigen::MatrixXd &mat() const { return m_; }
  double operator()(int i, int j) const { return m_(i, j); }

  /// Sets both (i, j) and (j, i).
  void set(int i, int j, double value) {
    m_(i, j) = value;
    m_(j, i) = value;
  }

 private:
  static void check_dim(int dim) {
    if (dim < 1) throw InvalidInput("SymMatrix: dim must be >= 1");
  }
  void mirror_lower() {
    const int n = dim();
    for (int j = 1; j < n; ++j)
      for (int i = 0; i < j; ++i) m_(i, j) = m_(j, i);
  }
  Eigen::MatrixXd m_;
};

/// Lower-triangular matrix; entries strictly above the diagonal are zero.
class LowerTriangular {
 public:
  explicit LowerTriangular(const Eigen::MatrixXd &m) {
    if (m.rows() != m.cols() || m.rows() < 1)
      throw InvalidInput("LowerTriangular: matrix must be square, dim >= 1");
    m_ = m;
    m_.triangularView<Eigen::StrictlyUpper>().setZero();
  }

  int dim() const { return static_cast<int>(m_.rows()); }
  const Eigen::MatrixXd &mat() const { return m_; }
  double operator()(int i, int j) const { return m_(i, j); }

 private:
  Eigen::MatrixXd m_;
};

struct EigDecomposition {
  Eigen::VectorXd values;   // ascending
  Eigen::MatrixXd vectors;  // orthonormal columns, m == vectors * values.asDiagonal() * vectors^T
};

/// Symmetric eigendecomposition.  Dimension is capped at 1024; the library
/// only ever needs a few tens.
inline EigDecomposition sym_eig(const SymMatrix &m) {
  if (!m.mat().allFinite())
    throw InvalidInput("sym_eig: matrix has non-finite entries");
  if (m.dim() > 1024) throw InvalidInput("sym_eig: dim > 1024");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m.mat());
  if (solver.info() != Eigen::Success)
    throw InvalidInput("sym_eig: eigensolver failed to converge");
  return {solver.eigenvalues(), solver.eigenvectors()};
}

/// Cholesky factor C with C C^T == m.  The caller is expected to have made
/// m positive definite (eigenvalue flooring upstream); a non-positive pivot
/// here means that step was skipped or its epsilon was too small.
inline LowerTriangular cholesky(const SymMatrix &m) {
  if (!m.mat().allFinite())
    throw InvalidInput("cholesky: matrix has non-finite entries");
  Eigen::LLT<Eigen::MatrixXd> llt(m.mat());
  if (llt.info() != Eigen::Success)
    throw NotPositiveDefinite("cholesky: non-positive pivot at dim " +
                              std::to_string(m.dim()));
  return LowerTriangular(llt.matrixL());
}

/// Solves X C^T == V for X without forming C^{-T}, by column-wise
/// back-substitution:  X_j = (V_j - sum_{i<j} C(j,i) X_i) / C(j,j).
/// Overwrites V's columns left to right, which is safe because column j
/// only needs already-solved columns.
inline void right_solve_transposed_in_place(Eigen::MatrixXd &v,
                                            const LowerTriangular &c) {
  const int d = c.dim();
  if (v.cols() != d)
    throw InvalidInput("right_solve_transposed: V has " +
                       std::to_string(v.cols()) + " columns, C has dim " +
                       std::to_string(d));
  for (int j = 0; j < d; ++j) {
    for (int i = 0; i < j; ++i) v.col(j).noalias() -= c(j, i) * v.col(i);
    v.col(j) /= c(j, j);
  }
}

inline Eigen::MatrixXd right_solve_transposed(const Eigen::MatrixXd &v,
                                              const LowerTriangular &c) {
  Eigen::MatrixXd out = v;
  right_solve_transposed_in_place(out, c);
  return out;
}

}  // namespace ksd

#endif  // KSD_LINALG_HPP_

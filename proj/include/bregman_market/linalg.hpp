#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <vector>

#include "errors.hpp"

namespace bregman_market {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

namespace linalg {

/// Numerical rank of `a` using singular values above `rel_tol * sigma_max`.
inline Index rank(const Matrix& a, double rel_tol = 1e-10) {
  if (a.size() == 0) return 0;
  Eigen::JacobiSVD<Matrix> svd(a);
  const Vector& s = svd.singularValues();
  if (s.size() == 0 || s(0) <= 1e-300) return 0;
  Index r = 0;
  while (r < s.size() && s(r) > rel_tol * s(0)) ++r;
  return r;
}

/// Orthonormal basis (as columns) of the column space of `a`.
inline Matrix column_space(const Matrix& a, double rel_tol = 1e-10) {
  if (a.cols() == 0 || a.rows() == 0) return Matrix(a.rows(), 0);
  Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeFullU);
  const Vector& s = svd.singularValues();
  if (s.size() == 0 || s(0) <= 1e-14) return Matrix(a.rows(), 0);
  Index r = 0;
  while (r < s.size() && s(r) > rel_tol * s(0)) ++r;
  return svd.matrixU().leftCols(r);
}

/// Orthonormal basis of the orthogonal complement of the column space of `a` in R^n.
inline Matrix orthogonal_complement(const Matrix& a, Index n, double rel_tol = 1e-10) {
  if (a.cols() == 0) return Matrix::Identity(n, n);
  Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeFullU);
  const Vector& s = svd.singularValues();
  Index r = 0;
  if (s.size() > 0 && s(0) > 1e-14) {
    while (r < s.size() && s(r) > rel_tol * s(0)) ++r;
  }
  return svd.matrixU().rightCols(n - r);
}

/// Columns `p_i - p_0` for the given point columns.
inline Matrix differences(const Matrix& points) {
  if (points.cols() <= 1) return Matrix(points.rows(), 0);
  return points.rightCols(points.cols() - 1).colwise() - points.col(0);
}

/// Solves `h x = b` for symmetric positive semidefinite `h`, returning the
/// minimum-norm least-squares solution when `h` is singular.
inline Vector solve_psd(const Matrix& h, const Vector& b) {
  Eigen::LDLT<Matrix> ldlt(h);
  if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
    const Vector d = ldlt.vectorD();
    const double dmax = d.cwiseAbs().maxCoeff();
    if (d.minCoeff() > 1e-13 * std::max(dmax, 1e-300)) return ldlt.solve(b);
  }
  return h.completeOrthogonalDecomposition().solve(b);
}

inline double max_abs(const Vector& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

inline void require_dim(const Vector& v, Index n, const char* what) {
  if (v.size() != n) {
    throw InputError(std::string(what) + ": expected dimension " + std::to_string(n) + ", got " +
                     std::to_string(v.size()));
  }
}

inline void require_finite(const Vector& v, const char* what) {
  if (!v.allFinite()) throw InputError(std::string(what) + ": non-finite entry");
}

}  // namespace linalg
}  // namespace bregman_market

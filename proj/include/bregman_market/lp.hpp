#pragma once

// Dense two-phase primal simplex for the small linear programs used by the
// face-geometry routines (tens of rows, at most a few hundred columns).

#include <cmath>
#include <limits>
#include <vector>

#include "linalg.hpp"

namespace bregman_market::lp {

enum class Status { optimal, infeasible, unbounded, iteration_limit };

/// minimize cost·x  s.t.  eq·x = eq_rhs,  le·x <= le_rhs,
/// x_j >= 0 unless free_vars[j] is set.
struct Problem {
  Vector cost;
  Matrix eq;
  Vector eq_rhs;
  Matrix le;
  Vector le_rhs;
  std::vector<bool> free_vars;

  explicit Problem(Index num_vars)
      : cost(Vector::Zero(num_vars)), eq(0, num_vars), eq_rhs(0), le(0, num_vars), le_rhs(0) {}

  Index num_vars() const { return cost.size(); }

  void add_eq(const Vector& row, double rhs) { append(eq, eq_rhs, row, rhs); }
  void add_le(const Vector& row, double rhs) { append(le, le_rhs, row, rhs); }
  void set_free(Index j) {
    if (free_vars.empty()) free_vars.assign(static_cast<std::size_t>(num_vars()), false);
    free_vars[static_cast<std::size_t>(j)] = true;
  }

 private:
  static void append(Matrix& a, Vector& b, const Vector& row, double rhs) {
    a.conservativeResize(a.rows() + 1, Eigen::NoChange);
    a.row(a.rows() - 1) = row.transpose();
    b.conservativeResize(b.size() + 1);
    b(b.size() - 1) = rhs;
  }
};

struct Options {
  double pivot_tol = 1e-11;
  double cost_tol = 1e-11;
  /// Phase-one objective above this (times 1 + |rhs|_inf) means infeasible.
  double feasibility_tol = 1e-9;
  int max_iterations = 20000;
};

struct Result {
  Status status = Status::infeasible;
  Vector x;
  double objective = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

class Tableau {
 public:
  Tableau(Index rows, Index cols) : t_(Matrix::Zero(rows + 1, cols + 1)), basis_(rows, -1) {}

  Matrix& data() { return t_; }
  Index rows() const { return t_.rows() - 1; }
  Index cols() const { return t_.cols() - 1; }
  double& rhs(Index i) { return t_(i, cols()); }
  double& reduced(Index j) { return t_(rows(), j); }
  std::vector<Index>& basis() { return basis_; }

  void pivot(Index r, Index c) {
    t_.row(r) /= t_(r, c);
    for (Index i = 0; i < t_.rows(); ++i) {
      if (i == r) continue;
      const double f = t_(i, c);
      if (f != 0.0) t_.row(i) -= f * t_.row(r);
    }
    basis_[static_cast<std::size_t>(r)] = c;
  }

  /// Runs simplex iterations over columns [0, allowed_cols). Dantzig pricing,
  /// switching to Bland's rule after a run of degenerate pivots.
  Status run(Index allowed_cols, const Options& opt, int& iterations) {
    int degenerate_run = 0;
    while (true) {
      if (++iterations > opt.max_iterations) return Status::iteration_limit;
      const bool bland = degenerate_run > 50;
      Index enter = -1;
      double best = -opt.cost_tol;
      for (Index j = 0; j < allowed_cols; ++j) {
        const double d = reduced(j);
        if (d < best) {
          enter = j;
          if (bland) break;
          best = d;
        }
      }
      if (enter < 0) return Status::optimal;
      Index leave = -1;
      double best_ratio = std::numeric_limits<double>::infinity();
      for (Index i = 0; i < rows(); ++i) {
        const double a = t_(i, enter);
        if (a > opt.pivot_tol) {
          const double ratio = rhs(i) / a;
          if (ratio < best_ratio - 1e-14 ||
              (ratio <= best_ratio + 1e-14 && leave >= 0 &&
               basis_[static_cast<std::size_t>(i)] < basis_[static_cast<std::size_t>(leave)])) {
            best_ratio = ratio;
            leave = i;
          }
        }
      }
      if (leave < 0) return Status::unbounded;
      degenerate_run = best_ratio <= 1e-14 ? degenerate_run + 1 : 0;
      pivot(leave, enter);
    }
  }

 private:
  Matrix t_;
  std::vector<Index> basis_;
};

}  // namespace detail

inline Result solve(const Problem& problem, const Options& opt = {}) {
  const Index n = problem.num_vars();
  const Index n_eq = problem.eq.rows();
  const Index n_le = problem.le.rows();
  const Index rows = n_eq + n_le;

  std::vector<Index> pos_col(static_cast<std::size_t>(n)), neg_col(static_cast<std::size_t>(n), -1);
  Index n_struct = 0;
  for (Index j = 0; j < n; ++j) {
    pos_col[static_cast<std::size_t>(j)] = n_struct++;
    if (!problem.free_vars.empty() && problem.free_vars[static_cast<std::size_t>(j)]) {
      neg_col[static_cast<std::size_t>(j)] = n_struct++;
    }
  }
  const Index n_real = n_struct + n_le;  // structural + slack columns
  const Index n_cols = n_real + rows;    // + artificials

  detail::Tableau tab(rows, n_cols);
  Matrix& t = tab.data();
  double rhs_scale = 1.0;
  for (Index i = 0; i < rows; ++i) {
    const bool is_eq = i < n_eq;
    const auto row = is_eq ? problem.eq.row(i) : problem.le.row(i - n_eq);
    const double b = is_eq ? problem.eq_rhs(i) : problem.le_rhs(i - n_eq);
    for (Index j = 0; j < n; ++j) {
      t(i, pos_col[static_cast<std::size_t>(j)]) = row(j);
      if (neg_col[static_cast<std::size_t>(j)] >= 0) t(i, neg_col[static_cast<std::size_t>(j)]) = -row(j);
    }
    if (!is_eq) t(i, n_struct + (i - n_eq)) = 1.0;
    t(i, n_cols) = b;
    if (b < 0) t.row(i) *= -1.0;
    t(i, n_real + i) = 1.0;
    tab.basis()[static_cast<std::size_t>(i)] = n_real + i;
    rhs_scale = std::max(rhs_scale, std::abs(b));
  }

  // Phase one: minimize the sum of artificials.
  for (Index j = 0; j < n_real; ++j) t(rows, j) = -t.col(j).head(rows).sum();
  t(rows, n_cols) = -t.col(n_cols).head(rows).sum();

  Result result;
  int iterations = 0;
  Status st = tab.run(n_cols, opt, iterations);
  if (st == Status::iteration_limit) {
    result.status = st;
    return result;
  }
  if (-t(rows, n_cols) > opt.feasibility_tol * rhs_scale) {
    result.status = Status::infeasible;
    return result;
  }
  // Drive remaining artificials out of the basis where possible.
  for (Index i = 0; i < rows; ++i) {
    if (tab.basis()[static_cast<std::size_t>(i)] < n_real) continue;
    Index best = -1;
    double best_abs = 1e-9;
    for (Index j = 0; j < n_real; ++j) {
      if (std::abs(t(i, j)) > best_abs) {
        best_abs = std::abs(t(i, j));
        best = j;
      }
    }
    if (best >= 0) {
      tab.pivot(i, best);
    } else {
      t.row(i).setZero();  // redundant constraint
    }
  }

  // Phase two.
  Vector c = Vector::Zero(n_cols);
  for (Index j = 0; j < n; ++j) {
    c(pos_col[static_cast<std::size_t>(j)]) = problem.cost(j);
    if (neg_col[static_cast<std::size_t>(j)] >= 0) c(neg_col[static_cast<std::size_t>(j)]) = -problem.cost(j);
  }
  t.row(rows).setZero();
  for (Index j = 0; j < n_cols; ++j) t(rows, j) = c(j);
  for (Index i = 0; i < rows; ++i) {
    const Index b = tab.basis()[static_cast<std::size_t>(i)];
    if (c(b) != 0.0) t.row(rows) -= c(b) * t.row(i);
  }
  st = tab.run(n_real, opt, iterations);
  result.status = st;
  if (st != Status::optimal) return result;

  Vector values = Vector::Zero(n_cols);
  for (Index i = 0; i < rows; ++i) values(tab.basis()[static_cast<std::size_t>(i)]) = t(i, n_cols);
  result.x.resize(n);
  for (Index j = 0; j < n; ++j) {
    double v = values(pos_col[static_cast<std::size_t>(j)]);
    if (neg_col[static_cast<std::size_t>(j)] >= 0) v -= values(neg_col[static_cast<std::size_t>(j)]);
    result.x(j) = v;
  }
  result.objective = problem.cost.dot(result.x);
  return result;
}

}  // namespace bregman_market::lp

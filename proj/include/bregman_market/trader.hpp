#pragma once

// The budget-constrained trade: maximize U(q, mu; q0) subject to
// U(q, w; q0) >= -B for every outcome w.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "costs.hpp"
#include "errors.hpp"
#include "geometry.hpp"
#include "linalg.hpp"
#include "newton.hpp"

namespace bregman_market {

struct TradeProblem {
  CostModel model;
  OutcomeSpace space;
  Vector q0;
  Vector mu;
  double budget = 0.0;
};

struct KktResiduals {
  double stationarity = 0.0;
  double feasibility = 0.0;
  double complementarity = 0.0;
};

struct TradeSolution {
  Vector q_hat;
  PriceVector nu_hat;
  Face tight;
  /// Lagrange multiplier per outcome.
  Vector multipliers;
  KktResiduals residuals;
  /// max over outcomes of the worst-case loss -U(q_hat, w; q0), at least 0.
  double budget_used = 0.0;
  /// Expected utility U(q_hat, mu; q0) under the trader's belief.
  double utility = 0.0;
  int iterations = 0;
  std::vector<std::string> warnings;
};

struct SolverOptions {
  /// Target for the scaled feasibility, complementarity and stationarity residuals.
  double tol = 1e-11;
  /// Tight-set threshold; defaults to 1e-7 (1 + B).
  std::optional<double> tight_tol;
  /// Initial market state for the iterations (projected onto the canonical slice).
  std::optional<Vector> warm_start;
  int max_outer_iterations = 80;
  CostTolerances cost;
};

inline double default_tight_tol(double budget) { return 1e-7 * (1.0 + budget); }

/// g_w = -U(q, w; q0) - B for every outcome; the program requires g <= 0.
inline Vector constraint_values(const TradeProblem& p, const Vector& q) {
  const double dc = p.model.cost(q) - p.model.cost(p.q0);
  const Vector shift = p.space.points().transpose() * (q - p.q0);
  return (dc - p.budget) - shift.array();
}

/// Checks dimensions, budget, belief admissibility and arbitrage-freeness of
/// q0 (structurally). Throws InputError or DomainError.
inline ArbitrageVerdict validate_problem(const TradeProblem& p, const CostTolerances& tol = {}) {
  const Index n = p.space.dim();
  if (p.model.dim() != n) throw InputError("cost model dimension does not match the outcome space");
  linalg::require_dim(p.q0, n, "initial state");
  linalg::require_dim(p.mu, n, "belief");
  linalg::require_finite(p.q0, "initial state");
  linalg::require_finite(p.mu, "belief");
  if (!std::isfinite(p.budget) || p.budget < 0) throw InputError("budget must be finite and non-negative");
  for (Index j = 0; j < p.space.size(); ++j) {
    if (!p.model.in_domain(p.space.outcome(j), tol)) {
      throw InputError("outcome " + p.space.label(j) + " lies outside the domain of the conjugate cost");
    }
  }
  if (!in_admissible_beliefs(p.model, p.space, p.mu, tol)) {
    throw DomainError("belief lies outside the admissible set (M, or ri M when M touches the domain boundary)");
  }
  if (!p.model.in_ri_domain(p.mu, tol)) throw DomainError("belief lies outside ri dom C*");
  const ArbitrageVerdict v = is_arbitrage_free(p.model, p.space, p.q0, tol);
  if (v == ArbitrageVerdict::certified_no) throw DomainError("initial state is not arbitrage-free: p(q0) is outside M");
  return v;
}

/// Outcomes whose budget constraint is active: |U(q, w; q0) + B| <= tol.
inline Face tight_set(const TradeProblem& p, const Vector& q, std::optional<double> tol = std::nullopt,
                      std::vector<std::string>* warnings = nullptr) {
  const double t = tol.value_or(default_tight_tol(p.budget));
  const Vector g = constraint_values(p, q);
  std::vector<int> members;
  for (Index j = 0; j < g.size(); ++j)
    if (std::abs(g(j)) <= t) members.push_back(static_cast<int>(j));
  Face f(std::move(members));
  if (!f.empty() && warnings && !is_face(f, p.space)) {
    warnings->push_back("tight set is not a face of M; numerical boundary case");
  }
  return f;
}

/// Multipliers lambda_x = alpha_x / alpha_mu from p(q) = alpha_mu mu + sum alpha_x x.
inline Vector recover_multipliers(const TradeProblem& p, const Vector& q, const Face& face) {
  Vector lam = Vector::Zero(p.space.size());
  if (face.empty()) return lam;
  const auto k = static_cast<Index>(face.size());
  Matrix gen(p.space.dim(), k + 1);
  gen.leftCols(k) = p.space.members(face);
  gen.col(k) = p.mu;
  const auto cert = hull_membership(p.model.price(q), gen, 1e-9 * p.space.scale());
  if (!cert.inside || cert.weights(k) <= 1e-14) return lam;
  Index i = 0;
  for (int j : face.members()) lam(j) = cert.weights(i++) / cert.weights(k);
  return lam;
}

struct KktReport {
  bool holds = false;
  /// (a) max |(q - q0)·(x' - x)| over x, x' in X.
  double orthogonality = 0.0;
  /// (b) max violation of (q - q0)·(w - x) >= 0.
  double witness = 0.0;
  /// (c) L1 residual of p(q) in conv(X ∪ {mu}).
  double hull = 0.0;
  /// (d) max |B + U(q, x; q0)| over X; for X empty, max(0, max_w -U - B).
  double budget = 0.0;
  std::vector<std::string> failed;
};

/// Checks the four optimality conditions for q with face X.
inline KktReport verify_kkt(const TradeProblem& p, const Vector& q, const Face& face, double tol = 1e-6) {
  linalg::require_dim(q, p.space.dim(), "verify_kkt");
  p.space.validate(face);
  KktReport r;
  if (!is_face(face, p.space)) throw InputError("verify_kkt: X is not a face of M");
  const Vector d = q - p.q0;
  const Vector proj = p.space.points().transpose() * d;
  const Vector g = constraint_values(p, q);
  if (!face.empty()) {
    const double base = proj(face.front());
    double face_max = -std::numeric_limits<double>::infinity();
    for (int x : face.members()) {
      r.orthogonality = std::max(r.orthogonality, std::abs(proj(x) - base));
      face_max = std::max(face_max, proj(x));
      r.budget = std::max(r.budget, std::abs(g(x)));
    }
    r.witness = std::max(0.0, face_max - proj.minCoeff());
    const auto k = static_cast<Index>(face.size());
    Matrix gen(p.space.dim(), k + 1);
    gen.leftCols(k) = p.space.members(face);
    gen.col(k) = p.mu;
    r.hull = hull_membership(p.model.price(q), gen, tol).residual;
  } else {
    r.budget = std::max(0.0, g.maxCoeff());
    r.hull = (p.model.price(q) - p.mu).cwiseAbs().sum();
  }
  if (r.orthogonality > tol) r.failed.push_back("a");
  if (r.witness > tol) r.failed.push_back("b");
  if (r.hull > tol) r.failed.push_back("c");
  if (r.budget > tol) r.failed.push_back("d");
  r.holds = r.failed.empty();
  return r;
}

namespace detail {

/// Variables y with q = q0 + Z y; Z spans the complement of the cost nullspace.
struct Reduced {
  const TradeProblem& p;
  Matrix z;
  double c0;

  explicit Reduced(const TradeProblem& prob) : p(prob), z(prob.model.range_basis()), c0(prob.model.cost(prob.q0)) {}

  Vector state(const Vector& y) const { return p.q0 + z * y; }
};

inline TradeSolution finish(const TradeProblem& p, const Vector& q, const Vector& lambda, int iterations,
                            const SolverOptions& opt) {
  TradeSolution s;
  s.q_hat = q;
  s.nu_hat = price(p.model, p.space, q, opt.cost);
  const Vector g = constraint_values(p, q);
  s.tight = tight_set(p, q, opt.tight_tol, &s.warnings);
  s.multipliers = lambda;
  const Vector pr = p.model.price(q);
  Vector grad = pr - p.mu;
  for (Index j = 0; j < lambda.size(); ++j) grad += lambda(j) * (pr - p.space.outcome(j));
  const Matrix z = p.model.range_basis();
  s.residuals.stationarity = linalg::max_abs(z.transpose() * grad);
  s.residuals.feasibility = std::max(0.0, g.maxCoeff());
  double comp = 0.0;
  for (Index j = 0; j < g.size(); ++j) comp = std::max(comp, lambda(j) * std::abs(g(j)));
  s.residuals.complementarity = comp;
  s.budget_used = std::max(0.0, (g.array() + p.budget).maxCoeff());
  s.utility = utility(p.model, q, p.mu, p.q0);
  s.iterations = iterations;
  return s;
}

/// Newton on the equality-constrained optimality system for an estimated
/// active set; returns nullopt when it does not produce a valid KKT point.
inline std::optional<std::pair<Vector, Vector>> polish_active_set(const Reduced& r, const Vector& y0,
                                                                  const Vector& lambda0,
                                                                  const std::vector<int>& active, double tol) {
  const TradeProblem& p = r.p;
  const Index k = static_cast<Index>(active.size());
  const Index d = r.z.cols();
  Vector y = y0;
  Vector lam(k);
  for (Index i = 0; i < k; ++i) lam(i) = lambda0(active[static_cast<std::size_t>(i)]);
  auto residual = [&](const Vector& yy, const Vector& ll) {
    const Vector q = r.state(yy);
    const Vector pr = p.model.price(q);
    Vector grad = pr - p.mu;
    for (Index i = 0; i < k; ++i) grad += ll(i) * (pr - p.space.outcome(active[static_cast<std::size_t>(i)]));
    const Vector g = constraint_values(p, q);
    Vector f(d + k);
    f.head(d) = r.z.transpose() * grad;
    for (Index i = 0; i < k; ++i) f(d + i) = g(active[static_cast<std::size_t>(i)]);
    return f;
  };
  Vector f = residual(y, lam);
  for (int it = 0; it < 30 && f.cwiseAbs().maxCoeff() > 1e-15; ++it) {
    const Vector q = r.state(y);
    const Vector pr = p.model.price(q);
    const Matrix h = r.z.transpose() * p.model.hessian(q) * r.z;
    Matrix jac = Matrix::Zero(d + k, d + k);
    jac.topLeftCorner(d, d) = (1.0 + lam.sum()) * h;
    for (Index i = 0; i < k; ++i) {
      const Vector gi = r.z.transpose() * (pr - p.space.outcome(active[static_cast<std::size_t>(i)]));
      jac.block(0, d + i, d, 1) = gi;
      jac.block(d + i, 0, 1, d) = gi.transpose();
    }
    const Vector step = jac.completeOrthogonalDecomposition().solve(-f);
    double t = 1.0;
    bool improved = false;
    for (int ls = 0; ls < 30; ++ls) {
      const Vector fy = residual(y + t * step.head(d), lam + t * step.tail(k));
      if (fy.norm() < f.norm() || fy.norm() <= 1e-15) {
        y += t * step.head(d);
        lam += t * step.tail(k);
        f = fy;
        improved = true;
        break;
      }
      t *= 0.5;
    }
    if (!improved) break;
  }
  if (f.cwiseAbs().maxCoeff() > tol) return std::nullopt;
  if (k > 0 && lam.minCoeff() < -tol) return std::nullopt;
  const Vector g = constraint_values(p, r.state(y));
  if (g.maxCoeff() > tol) return std::nullopt;
  Vector full = Vector::Zero(p.space.size());
  for (Index i = 0; i < k; ++i) full(active[static_cast<std::size_t>(i)]) = std::max(0.0, lam(i));
  return std::make_pair(y, full);
}

/// Augmented Lagrangian (Powell-Hestenes-Rockafellar) with Newton inner solves.
inline TradeSolution solve_augmented_lagrangian(const TradeProblem& p, const SolverOptions& opt) {
  const Reduced r(p);
  const Index m = p.space.size();
  const Index d = r.z.cols();
  Vector y = Vector::Zero(d);
  if (opt.warm_start) {
    linalg::require_dim(*opt.warm_start, p.space.dim(), "warm start");
    y = r.z.transpose() * (*opt.warm_start - p.q0);
  }
  if (d == 0) return finish(p, p.q0, Vector::Zero(m), 0, opt);

  const Matrix w = p.space.points();
  const Matrix wz = r.z.transpose() * w;
  const Vector muz = r.z.transpose() * p.mu;
  const double scale = std::max({1.0, p.budget, w.cwiseAbs().maxCoeff(), p.mu.cwiseAbs().maxCoeff()});
  Vector lambda = Vector::Zero(m);
  double rho = 10.0;
  double prev_violation = std::numeric_limits<double>::infinity();
  int total = 0;

  for (int outer = 0; outer < opt.max_outer_iterations; ++outer) {
    auto lagrangian = [&](const Vector& yy, bool derivs) {
      const Vector q = r.state(yy);
      const double dc = p.model.cost(q) - r.c0;
      const Vector zy = yy;
      const Vector proj = wz.transpose() * zy;
      const Vector g = (dc - p.budget) - proj.array();
      Evaluation ev;
      const double f = dc - zy.dot(muz);
      const Vector shifted = (lambda + rho * g).cwiseMax(0.0);
      ev.value = f + (shifted.squaredNorm() - lambda.squaredNorm()) / (2.0 * rho);
      if (derivs) {
        const Vector pz = r.z.transpose() * p.model.price(q);
        const Matrix h = r.z.transpose() * p.model.hessian(q) * r.z;
        ev.gradient = pz - muz;
        ev.hessian = (1.0 + shifted.sum()) * h;
        for (Index j = 0; j < m; ++j) {
          if (shifted(j) <= 0.0) continue;
          const Vector gj = pz - wz.col(j);
          ev.gradient += shifted(j) * gj;
          ev.hessian += rho * gj * gj.transpose();
        }
      }
      return ev;
    };
    NewtonOptions nopt;
    nopt.gradient_tol = 1e-13 * scale;
    nopt.max_iterations = 200;
    const NewtonResult inner = minimize_newton(lagrangian, y, nopt);
    total += inner.iterations;
    y = inner.x;
    const Vector q = r.state(y);
    const Vector g = constraint_values(p, q);
    lambda = (lambda + rho * g).cwiseMax(0.0);
    double violation = std::max(0.0, g.maxCoeff());
    for (Index j = 0; j < m; ++j) violation = std::max(violation, std::min(lambda(j), std::abs(g(j))));
    if (violation <= opt.tol * scale && inner.gradient_norm <= 1e-9 * scale) {
      return finish(p, q, lambda, total, opt);
    }
    // Try to finish exactly on the estimated active set.
    if (violation <= 1e-6 * scale) {
      std::vector<int> active;
      for (Index j = 0; j < m; ++j)
        if (lambda(j) > 0.0 || std::abs(g(j)) <= 1e-7 * scale) active.push_back(static_cast<int>(j));
      if (auto pol = polish_active_set(r, y, lambda, active, opt.tol * scale)) {
        return finish(p, r.state(pol->first), pol->second, total, opt);
      }
    }
    if (violation > 0.25 * prev_violation) rho = std::min(rho * 10.0, 1e8);
    prev_violation = violation;
  }
  const Vector q = r.state(y);
  const Vector g = constraint_values(p, q);
  throw NumericalError("solve_generic: augmented Lagrangian did not converge", std::max(0.0, g.maxCoeff()));
}

}  // namespace detail

/// Optimal trade for the problem. Returns the canonical optimum, whose
/// displacement q_hat - q0 has no component along the cost nullspace.
inline TradeSolution solve_generic(const TradeProblem& p, const SolverOptions& opt = {}) {
  const ArbitrageVerdict verdict = validate_problem(p, opt.cost);
  if (verdict == ArbitrageVerdict::unknown) {
    TradeProblem zero = p;
    zero.budget = 0.0;
    SolverOptions zopt = opt;
    zopt.warm_start.reset();
    const TradeSolution s0 = detail::solve_augmented_lagrangian(zero, zopt);
    if (s0.utility > 1e-9 * (1.0 + std::abs(p.model.cost(p.q0)))) {
      throw DomainError("initial state is not arbitrage-free: a zero-budget trade gains " + std::to_string(s0.utility));
    }
  }
  if (p.budget == 0.0 && verdict == ArbitrageVerdict::certified_yes) {
    return detail::finish(p, p.q0, Vector::Zero(p.space.size()), 0, opt);
  }
  // Unconstrained maximizer p(q) = mu, when it is affordable.
  const Matrix z = p.model.range_basis();
  const Vector target = p.model.inverse_price(p.mu, opt.cost);
  const Vector q_star = p.q0 + z * (z.transpose() * (target - p.q0));
  const Vector g = constraint_values(p, q_star);
  if (g.maxCoeff() <= 0.0) return detail::finish(p, q_star, Vector::Zero(p.space.size()), 0, opt);
  return detail::solve_augmented_lagrangian(p, opt);
}

/// Exhaustive grid search over the canonical slice q = q0 + Z y (at most 3
/// free coordinates), then a finer local grid around the best point.
inline TradeSolution brute_force_solve(const TradeProblem& p, double grid_step, std::size_t max_points = 20000000) {
  validate_problem(p);
  if (!(grid_step > 0)) throw InputError("brute_force_solve: grid step must be positive");
  const Matrix z = p.model.range_basis();
  const Index d = z.cols();
  if (d > 3) throw InputError("brute_force_solve: at most three free coordinates are supported");
  const Vector d0 = [&] {
    Vector out(p.space.size());
    for (Index j = 0; j < p.space.size(); ++j) out(j) = divergence(p.model, p.q0, p.space.outcome(j));
    return out;
  }();

  // Bounding box of the feasible set in y, from D(q, w) <= D(q0, w) + B.
  Vector lo = Vector::Constant(d, -std::numeric_limits<double>::infinity());
  Vector hi = Vector::Constant(d, std::numeric_limits<double>::infinity());
  auto tighten_block = [&](const CostModel& blk, Index offset, Index col0, Index ncols) {
    if (ncols == 0) return;
    const Matrix zb = z.block(offset, col0, blk.dim(), ncols);
    const double b = blk.liquidity();
    const Vector q0b = p.q0.segment(offset, blk.dim());
    if (blk.kind() == CostKind::quadratic) {
      // Ball |q - b w| <= sqrt(2 b R) with Z the identity on this block.
      for (Index j = 0; j < p.space.size(); ++j) {
        const Vector wb = p.space.outcome(j).segment(offset, blk.dim());
        const double rad = std::sqrt(2.0 * b * (d0(j) + p.budget));
        for (Index i = 0; i < ncols; ++i) {
          const Vector ei = zb.col(i);
          const double center = ei.dot(b * wb - q0b);
          lo(col0 + i) = std::max(lo(col0 + i), center - rad);
          hi(col0 + i) = std::min(hi(col0 + i), center + rad);
        }
      }
      return;
    }
    // Exponential-family blocks: (q/b)·(g - w) <= R/b - C*_1(w) for all
    // generators g, giving a polytope in y.
    Matrix gens;
    if (blk.kind() == CostKind::lmsr) {
      gens = Matrix::Identity(blk.dim(), blk.dim());
    } else if (blk.kind() == CostKind::log_partition) {
      gens = blk.log_partition_space().points();
    } else {
      throw InputError("brute_force_solve: nested direct sums are not supported");
    }
    lp::Problem base(ncols);
    for (Index i = 0; i < ncols; ++i) base.set_free(i);
    for (Index j = 0; j < p.space.size(); ++j) {
      const Vector wb = p.space.outcome(j).segment(offset, blk.dim());
      const double cs1 = blk.conjugate(wb) / b;
      const double bound = (d0(j) + p.budget) / b - cs1;
      for (Index k = 0; k < gens.cols(); ++k) {
        const Vector diff = gens.col(k) - wb;
        const Vector row = zb.transpose() * diff / b;
        base.add_le(row, bound - q0b.dot(diff) / b);
      }
    }
    for (Index i = 0; i < ncols; ++i) {
      for (double sgn : {1.0, -1.0}) {
        lp::Problem prob = base;
        prob.cost.setZero();
        prob.cost(i) = -sgn;
        const auto res = lp::solve(prob);
        if (res.status != lp::Status::optimal) throw OracleError("brute_force_solve: unbounded search box");
        if (sgn > 0) hi(col0 + i) = std::min(hi(col0 + i), res.x(i));
        else lo(col0 + i) = std::max(lo(col0 + i), res.x(i));
      }
    }
  };
  if (p.model.kind() == CostKind::direct_sum) {
    Index col = 0;
    p.model.for_blocks([&](const CostModel& blk, Index off) {
      const Index nc = blk.range_basis().cols();
      tighten_block(blk, off, col, nc);
      col += nc;
    });
  } else {
    tighten_block(p.model, 0, 0, d);
  }

  const double c0 = p.model.cost(p.q0);
  const double slack = 1e-12 * (1.0 + p.budget);
  const Matrix wz = z.transpose() * p.space.points();
  const Vector muz = z.transpose() * p.mu;
  auto evaluate = [&](const Vector& y, double& objective) {
    const double dc = p.model.cost(p.q0 + z * y) - c0;
    const Vector proj = wz.transpose() * y;
    if (((dc - p.budget) - proj.array()).maxCoeff() > slack) return false;
    objective = y.dot(muz) - dc;
    return true;
  };

  auto scan = [&](const Vector& from, const Vector& to, double h, Vector& best_y, double& best_val) {
    std::vector<Index> counts(static_cast<std::size_t>(d));
    std::vector<double> starts(static_cast<std::size_t>(d));
    double total = 1.0;
    for (Index i = 0; i < d; ++i) {
      const double s = std::floor(from(i) / h) * h;
      const auto c = static_cast<Index>(std::ceil((to(i) - s) / h + 1e-9)) + 1;
      starts[static_cast<std::size_t>(i)] = s;
      counts[static_cast<std::size_t>(i)] = c;
      total *= static_cast<double>(c);
    }
    if (total > static_cast<double>(max_points)) throw OracleError("brute_force_solve: grid too large");
    std::vector<Index> idx(static_cast<std::size_t>(d), 0);
    Vector y(d);
    bool found = false;
    while (true) {
      for (Index i = 0; i < d; ++i)
        y(i) = starts[static_cast<std::size_t>(i)] + h * static_cast<double>(idx[static_cast<std::size_t>(i)]);
      double val = 0.0;
      if (evaluate(y, val) && val > best_val) {
        best_val = val;
        best_y = y;
        found = true;
      }
      Index k = 0;
      while (k < d && ++idx[static_cast<std::size_t>(k)] >= counts[static_cast<std::size_t>(k)]) {
        idx[static_cast<std::size_t>(k)] = 0;
        ++k;
      }
      if (k == d) break;
    }
    return found;
  };

  Vector best_y = Vector::Zero(d);
  double best_val = -std::numeric_limits<double>::infinity();
  if (d > 0) {
    scan(lo, hi, grid_step, best_y, best_val);
    if (!std::isfinite(best_val)) throw OracleError("brute_force_solve: no feasible grid point");
    const Vector center = best_y;
    scan(center.array() - grid_step, center.array() + grid_step, grid_step / 10.0, best_y, best_val);
  }
  SolverOptions opt;
  return detail::finish(p, p.q0 + z * best_y, Vector::Zero(p.space.size()), 0, opt);
}

}  // namespace bregman_market

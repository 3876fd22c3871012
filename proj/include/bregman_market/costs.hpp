#pragma once

// Cost functions C with price p = grad C, convex conjugate C*, Bregman
// divergence D and trader utility U.

#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "errors.hpp"
#include "geometry.hpp"
#include "linalg.hpp"
#include "newton.hpp"

namespace bregman_market {

enum class CostKind { quadratic, lmsr, log_partition, direct_sum };

inline std::string to_string(CostKind k) {
  switch (k) {
    case CostKind::quadratic: return "quadratic";
    case CostKind::lmsr: return "lmsr";
    case CostKind::log_partition: return "log_partition";
    case CostKind::direct_sum: return "direct_sum";
  }
  return "unknown";
}

/// Thresholds shared by the conjugate, inverse-price and domain predicates.
struct CostTolerances {
  /// Hull / simplex membership slack for dom C*.
  double domain = 1e-9;
  /// Minimum convex weight (or coordinate, for LMSR) for ri dom C*.
  double ri_weight = 1e-7;
  /// Newton stops when |grad| <= newton_gradient * (1 + |nu|).
  double newton_gradient = 1e-11;
  int newton_iterations = 200;
};

namespace detail {

inline double log_sum_exp(const Vector& z) {
  const double zmax = z.maxCoeff();
  return zmax + std::log((z.array() - zmax).exp().sum());
}

inline Vector softmax(const Vector& z) {
  const Vector e = (z.array() - z.maxCoeff()).exp().matrix();
  return e / e.sum();
}

struct LogPartitionData {
  OutcomeSpace space;
  /// Orthonormal basis of span{w - w' : w, w' in Omega}.
  Matrix relevant;
  /// Orthonormal basis of its orthogonal complement.
  Matrix irrelevant;
};

}  // namespace detail

/// Immutable description of a cost function. All four kinds carry a
/// liquidity b > 0 and evaluate C_b(q) = b C(q / b).
class CostModel {
 public:
  static CostModel quadratic(Index n, double liquidity = 1.0) {
    CostModel m(CostKind::quadratic, n, liquidity);
    return m;
  }

  static CostModel lmsr(Index n, double liquidity = 1.0) {
    if (n < 2) throw InputError("lmsr needs at least two securities");
    return CostModel(CostKind::lmsr, n, liquidity);
  }

  static CostModel log_partition(const OutcomeSpace& space, double liquidity = 1.0) {
    CostModel m(CostKind::log_partition, space.dim(), liquidity);
    const Matrix diffs = linalg::differences(space.points());
    m.lp_ = std::make_shared<detail::LogPartitionData>(detail::LogPartitionData{
        space, linalg::column_space(diffs), linalg::orthogonal_complement(diffs, space.dim())});
    return m;
  }

  static CostModel direct_sum(std::vector<CostModel> blocks) {
    if (blocks.empty()) throw InputError("direct sum of zero blocks");
    Index n = 0;
    std::vector<Index> offsets;
    for (const auto& b : blocks) {
      offsets.push_back(n);
      n += b.dim();
    }
    CostModel m(CostKind::direct_sum, n, 1.0);
    m.blocks_ = std::make_shared<std::vector<CostModel>>(std::move(blocks));
    m.offsets_ = std::move(offsets);
    return m;
  }

  CostKind kind() const { return kind_; }
  Index dim() const { return dim_; }
  double liquidity() const { return b_; }
  const std::vector<CostModel>& blocks() const {
    static const std::vector<CostModel> none;
    return blocks_ ? *blocks_ : none;
  }
  Index block_offset(std::size_t i) const { return offsets_.at(i); }
  const OutcomeSpace& log_partition_space() const {
    if (!lp_) throw InputError("not a log-partition cost");
    return lp_->space;
  }

  double cost(const Vector& q) const {
    linalg::require_dim(q, dim_, "cost");
    switch (kind_) {
      case CostKind::quadratic: return 0.5 * q.squaredNorm() / b_;
      case CostKind::lmsr: return b_ * detail::log_sum_exp(q / b_);
      case CostKind::log_partition: return b_ * detail::log_sum_exp(lp_->space.points().transpose() * q / b_);
      case CostKind::direct_sum: {
        double total = 0.0;
        for_blocks([&](const CostModel& blk, Index off) { total += blk.cost(q.segment(off, blk.dim())); });
        return total;
      }
    }
    return 0.0;
  }

  Vector price(const Vector& q) const {
    linalg::require_dim(q, dim_, "price");
    switch (kind_) {
      case CostKind::quadratic: return q / b_;
      case CostKind::lmsr: return detail::softmax(q / b_);
      case CostKind::log_partition: {
        const Matrix& w = lp_->space.points();
        return w * detail::softmax(w.transpose() * q / b_);
      }
      case CostKind::direct_sum: {
        Vector p(dim_);
        for_blocks([&](const CostModel& blk, Index off) {
          p.segment(off, blk.dim()) = blk.price(q.segment(off, blk.dim()));
        });
        return p;
      }
    }
    return {};
  }

  Matrix hessian(const Vector& q) const {
    linalg::require_dim(q, dim_, "hessian");
    switch (kind_) {
      case CostKind::quadratic: return Matrix::Identity(dim_, dim_) / b_;
      case CostKind::lmsr: {
        const Vector p = detail::softmax(q / b_);
        return (Matrix(p.asDiagonal()) - p * p.transpose()) / b_;
      }
      case CostKind::log_partition: {
        const Matrix& w = lp_->space.points();
        const Vector p = detail::softmax(w.transpose() * q / b_);
        const Vector mean = w * p;
        const Matrix centered = w.colwise() - mean;
        return centered * p.asDiagonal() * centered.transpose() / b_;
      }
      case CostKind::direct_sum: {
        Matrix h = Matrix::Zero(dim_, dim_);
        for_blocks([&](const CostModel& blk, Index off) {
          h.block(off, off, blk.dim(), blk.dim()) = blk.hessian(q.segment(off, blk.dim()));
        });
        return h;
      }
    }
    return {};
  }

  /// Orthonormal basis of directions u with p(q + u) = p(q) for all q.
  Matrix nullspace() const {
    switch (kind_) {
      case CostKind::quadratic: return Matrix(dim_, 0);
      case CostKind::lmsr: return Vector::Constant(dim_, 1.0 / std::sqrt(static_cast<double>(dim_)));
      case CostKind::log_partition: return lp_->irrelevant;
      case CostKind::direct_sum: {
        std::vector<Matrix> parts;
        Index cols = 0;
        for (const auto& blk : blocks()) {
          parts.push_back(blk.nullspace());
          cols += parts.back().cols();
        }
        Matrix out = Matrix::Zero(dim_, cols);
        Index c = 0;
        for (std::size_t i = 0; i < parts.size(); ++i) {
          out.block(offsets_[i], c, parts[i].rows(), parts[i].cols()) = parts[i];
          c += parts[i].cols();
        }
        return out;
      }
    }
    return {};
  }

  /// Orthonormal basis of the orthogonal complement of nullspace(); block
  /// diagonal for direct sums.
  Matrix range_basis() const {
    if (kind_ != CostKind::direct_sum) return linalg::orthogonal_complement(nullspace(), dim_);
    std::vector<Matrix> parts;
    Index cols = 0;
    for (const auto& blk : blocks()) {
      parts.push_back(blk.range_basis());
      cols += parts.back().cols();
    }
    Matrix out = Matrix::Zero(dim_, cols);
    Index c = 0;
    for (std::size_t i = 0; i < parts.size(); ++i) {
      out.block(offsets_[i], c, parts[i].rows(), parts[i].cols()) = parts[i];
      c += parts[i].cols();
    }
    return out;
  }

  bool strictly_convex() const { return nullspace().cols() == 0; }

  /// nu in dom C* (finite conjugate).
  bool in_domain(const Vector& nu, const CostTolerances& tol = {}) const {
    linalg::require_dim(nu, dim_, "in_domain");
    switch (kind_) {
      case CostKind::quadratic: return nu.allFinite();
      case CostKind::lmsr: return nu.minCoeff() >= -tol.domain && std::abs(nu.sum() - 1.0) <= tol.domain;
      case CostKind::log_partition:
        return hull_membership(nu, lp_->space.points(), tol.domain * lp_->space.scale()).inside;
      case CostKind::direct_sum: return all_blocks([&](const CostModel& blk, Index off) {
          return blk.in_domain(nu.segment(off, blk.dim()), tol);
        });
    }
    return false;
  }

  /// nu in ri dom C*.
  bool in_ri_domain(const Vector& nu, const CostTolerances& tol = {}) const {
    linalg::require_dim(nu, dim_, "in_ri_domain");
    switch (kind_) {
      case CostKind::quadratic: return nu.allFinite();
      case CostKind::lmsr: return nu.minCoeff() >= tol.ri_weight && std::abs(nu.sum() - 1.0) <= tol.domain;
      case CostKind::log_partition: {
        if (!hull_membership(nu, lp_->space.points(), tol.domain * lp_->space.scale()).inside) return false;
        return max_min_weight(nu, lp_->space.points()) >= tol.ri_weight;
      }
      case CostKind::direct_sum: return all_blocks([&](const CostModel& blk, Index off) {
          return blk.in_ri_domain(nu.segment(off, blk.dim()), tol);
        });
    }
    return false;
  }

  /// C*(nu); +infinity outside dom C*.
  double conjugate(const Vector& nu, const CostTolerances& tol = {}) const {
    linalg::require_dim(nu, dim_, "conjugate");
    constexpr double inf = std::numeric_limits<double>::infinity();
    switch (kind_) {
      case CostKind::quadratic: return 0.5 * b_ * nu.squaredNorm();
      case CostKind::lmsr: {
        if (!in_domain(nu, tol)) return inf;
        double s = 0.0;
        for (Index i = 0; i < nu.size(); ++i)
          if (nu(i) > 0) s += nu(i) * std::log(nu(i));
        return b_ * s;
      }
      case CostKind::log_partition: return b_ * log_partition_conjugate(lp_->space, nu, tol);
      case CostKind::direct_sum: {
        double total = 0.0;
        for_blocks([&](const CostModel& blk, Index off) { total += blk.conjugate(nu.segment(off, blk.dim()), tol); });
        return total;
      }
    }
    return inf;
  }

  /// Canonical member of p^{-1}(nu): quadratic b nu; LMSR b ln nu (so C = 0);
  /// log-partition the member orthogonal to the nullspace.
  Vector inverse_price(const Vector& nu, const CostTolerances& tol = {}) const {
    linalg::require_dim(nu, dim_, "inverse_price");
    linalg::require_finite(nu, "inverse_price");
    switch (kind_) {
      case CostKind::quadratic: return b_ * nu;
      case CostKind::lmsr: {
        if (!in_ri_domain(nu, tol)) throw DomainError("inverse_price: price outside ri dom C* (open simplex)");
        return b_ * (nu / nu.sum()).array().log().matrix();
      }
      case CostKind::log_partition: {
        if (!in_ri_domain(nu, tol)) throw DomainError("inverse_price: price outside ri M");
        const auto sol = dual_newton(lp_->space, lp_->relevant, nu, tol);
        return b_ * (lp_->relevant * sol.x);
      }
      case CostKind::direct_sum: {
        Vector q(dim_);
        for_blocks([&](const CostModel& blk, Index off) {
          q.segment(off, blk.dim()) = blk.inverse_price(nu.segment(off, blk.dim()), tol);
        });
        return q;
      }
    }
    return {};
  }

  /// Outcome space implied by the kind, when there is one: the simplex for
  /// LMSR, Omega for log-partition, the product of block spaces for direct sums.
  std::optional<OutcomeSpace> natural_space() const {
    switch (kind_) {
      case CostKind::quadratic: return std::nullopt;
      case CostKind::lmsr: return OutcomeSpace::simplex(dim_);
      case CostKind::log_partition: return lp_->space;
      case CostKind::direct_sum: {
        std::vector<OutcomeSpace> parts;
        for (const auto& blk : blocks()) {
          auto s = blk.natural_space();
          if (!s) return std::nullopt;
          parts.push_back(*s);
        }
        return OutcomeSpace::product(parts);
      }
    }
    return std::nullopt;
  }

  template <typename F>
  void for_blocks(F&& f) const {
    const auto& bs = blocks();
    for (std::size_t i = 0; i < bs.size(); ++i) f(bs[i], offsets_[i]);
  }

 private:
  CostModel(CostKind kind, Index n, double liquidity) : kind_(kind), dim_(n), b_(liquidity) {
    if (n < 1) throw InputError("cost model dimension must be positive");
    if (!(liquidity > 0) || !std::isfinite(liquidity)) throw InputError("liquidity must be positive and finite");
  }

  template <typename F>
  bool all_blocks(F&& f) const {
    const auto& bs = blocks();
    for (std::size_t i = 0; i < bs.size(); ++i)
      if (!f(bs[i], offsets_[i])) return false;
    return true;
  }

  /// Minimizes C(Ly) - (Ly)·nu over y (unit liquidity).
  static NewtonResult dual_newton(const OutcomeSpace& space, const Matrix& basis, const Vector& nu,
                                  const CostTolerances& tol) {
    const Matrix& w = space.points();
    const Matrix wl = basis.transpose() * w;  // outcomes in basis coordinates
    const Vector nul = basis.transpose() * nu;
    auto objective = [&](const Vector& y, bool derivs) {
      const Vector z = wl.transpose() * y;
      Evaluation ev;
      ev.value = detail::log_sum_exp(z) - y.dot(nul);
      if (derivs) {
        const Vector p = detail::softmax(z);
        const Vector mean = wl * p;
        ev.gradient = mean - nul;
        const Matrix centered = wl.colwise() - mean;
        ev.hessian = centered * p.asDiagonal() * centered.transpose();
      }
      return ev;
    };
    NewtonOptions opt;
    opt.max_iterations = tol.newton_iterations;
    opt.gradient_tol = tol.newton_gradient * (1.0 + nu.norm());
    auto res = minimize_newton(objective, Vector::Zero(basis.cols()), opt);
    if (!res.converged) throw NumericalError("log-partition dual Newton did not converge", res.gradient_norm);
    return res;
  }

  static double log_partition_conjugate(const OutcomeSpace& space, const Vector& nu, const CostTolerances& tol) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    if (!hull_membership(nu, space.points(), tol.domain * space.scale()).inside) return inf;
    GeometryTolerances gt;
    gt.support_weight = tol.ri_weight;
    const Face face = face_of_point(nu, space, gt);
    if (face.size() <= 1) return 0.0;
    if (face.size() < static_cast<std::size_t>(space.size())) {
      // Boundary point: every distribution with mean nu lives on the face.
      return log_partition_conjugate(OutcomeSpace(space.members(face)), nu, tol);
    }
    const Matrix basis = linalg::column_space(linalg::differences(space.points()));
    const auto res = dual_newton(space, basis, nu, tol);
    return -res.value;
  }

  CostKind kind_;
  Index dim_;
  double b_;
  std::shared_ptr<const detail::LogPartitionData> lp_;
  std::shared_ptr<const std::vector<CostModel>> blocks_;
  std::vector<Index> offsets_;
};

/// A price vector together with its membership in M and in ri dom C*.
struct PriceVector {
  Vector nu;
  bool in_M = false;
  bool in_ri_domain = false;
};

inline PriceVector classify_price(const CostModel& model, const OutcomeSpace& space, const Vector& nu,
                                  const CostTolerances& tol = {}) {
  linalg::require_dim(nu, space.dim(), "classify_price");
  PriceVector pv;
  pv.nu = nu;
  pv.in_M = hull_membership(nu, space.points(), tol.domain * space.scale()).inside;
  pv.in_ri_domain = model.in_ri_domain(nu, tol);
  return pv;
}

inline double cost(const CostModel& model, const Vector& q) { return model.cost(q); }

inline PriceVector price(const CostModel& model, const OutcomeSpace& space, const Vector& q,
                         const CostTolerances& tol = {}) {
  return classify_price(model, space, model.price(q), tol);
}

/// U(q_new, theta; q_old) = (q_new - q_old)·theta - C(q_new) + C(q_old).
inline double utility(const CostModel& model, const Vector& q_new, const Vector& theta, const Vector& q_old) {
  linalg::require_dim(theta, model.dim(), "utility: theta");
  return (q_new - q_old).dot(theta) - model.cost(q_new) + model.cost(q_old);
}

inline double conjugate(const CostModel& model, const Vector& nu, const CostTolerances& tol = {}) {
  return model.conjugate(nu, tol);
}

/// D(q, nu) = C(q) + C*(nu) - q·nu; +infinity when nu is outside dom C*.
inline double divergence(const CostModel& model, const Vector& q, const Vector& nu, const CostTolerances& tol = {}) {
  linalg::require_dim(nu, model.dim(), "divergence: nu");
  const double cs = model.conjugate(nu, tol);
  if (!std::isfinite(cs)) return cs;
  return std::max(0.0, model.cost(q) + cs - q.dot(nu));
}

inline Vector inverse_price(const CostModel& model, const Vector& nu, const CostTolerances& tol = {}) {
  return model.inverse_price(nu, tol);
}

/// True when M ⊆ ri dom C*, so that the admissible belief set is M itself;
/// otherwise beliefs are restricted to ri M.
inline bool M_within_ri_domain(const CostModel& model, const OutcomeSpace& space, const CostTolerances& tol = {}) {
  for (Index j = 0; j < space.size(); ++j)
    if (!model.in_ri_domain(space.outcome(j), tol)) return false;
  return true;
}

/// Membership in the admissible belief set: M, or ri M when M reaches the
/// boundary of dom C*.
inline bool in_admissible_beliefs(const CostModel& model, const OutcomeSpace& space, const Vector& mu,
                                  const CostTolerances& tol = {}) {
  linalg::require_dim(mu, space.dim(), "belief");
  if (!hull_membership(mu, space.points(), tol.domain * space.scale()).inside) return false;
  if (M_within_ri_domain(model, space, tol)) return true;
  return max_min_weight(mu, space.points()) >= tol.ri_weight;
}

enum class ArbitrageVerdict { certified_yes, certified_no, unknown };

inline std::string to_string(ArbitrageVerdict v) {
  switch (v) {
    case ArbitrageVerdict::certified_yes: return "certified_yes";
    case ArbitrageVerdict::certified_no: return "certified_no";
    case ArbitrageVerdict::unknown: return "unknown";
  }
  return "unknown";
}

/// Structural arbitrage-freeness test for an initial state: p(q0) outside M
/// rules it out; p(q0) in ri M, or in M with C strictly convex, certifies it.
inline ArbitrageVerdict is_arbitrage_free(const CostModel& model, const OutcomeSpace& space, const Vector& q0,
                                          const CostTolerances& tol = {}) {
  linalg::require_dim(q0, space.dim(), "is_arbitrage_free");
  if (model.dim() != space.dim()) throw InputError("cost model and outcome space dimensions differ");
  const Vector nu = model.price(q0);
  if (!hull_membership(nu, space.points(), tol.domain * space.scale()).inside) return ArbitrageVerdict::certified_no;
  if (max_min_weight(nu, space.points()) >= tol.ri_weight) return ArbitrageVerdict::certified_yes;
  if (model.strictly_convex()) return ArbitrageVerdict::certified_yes;
  return ArbitrageVerdict::unknown;
}

}  // namespace bregman_market

#pragma once

// Outcome spaces, the payoff polytope M = conv(Omega) and its faces.

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <limits>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "errors.hpp"
#include "linalg.hpp"
#include "lp.hpp"

namespace bregman_market {

/// Tolerances for face decisions. Every geometric predicate exposes its
/// threshold through this struct.
struct GeometryTolerances {
  /// L1 residual accepted by hull membership.
  double hull = 1e-9;
  /// Strictness margin for face identification, scaled by outcome norms.
  double face_margin = 1e-9;
  /// Minimum convex weight for an outcome to count in a point's support.
  double support_weight = 1e-7;
  /// Minimum convex weight required for relative-interior membership.
  double ri_weight = 1e-7;
};

/// A subset of outcome indices. Sorted, duplicate free; may be empty.
class Face {
 public:
  Face() = default;
  explicit Face(std::vector<int> members) : members_(std::move(members)) { normalize(); }
  Face(std::initializer_list<int> members) : members_(members) { normalize(); }

  const std::vector<int>& members() const { return members_; }
  bool empty() const { return members_.empty(); }
  std::size_t size() const { return members_.size(); }
  int front() const { return members_.front(); }
  bool contains(int i) const { return std::binary_search(members_.begin(), members_.end(), i); }

  bool is_subset_of(const Face& other) const {
    return std::includes(other.members_.begin(), other.members_.end(), members_.begin(), members_.end());
  }
  bool is_strict_subset_of(const Face& other) const { return size() < other.size() && is_subset_of(other); }

  friend bool operator==(const Face&, const Face&) = default;
  friend auto operator<=>(const Face& a, const Face& b) { return a.members_ <=> b.members_; }

  friend std::ostream& operator<<(std::ostream& os, const Face& f) {
    os << '{';
    for (std::size_t i = 0; i < f.members_.size(); ++i) os << (i ? "," : "") << f.members_[i];
    return os << '}';
  }

 private:
  void normalize() {
    std::sort(members_.begin(), members_.end());
    members_.erase(std::unique(members_.begin(), members_.end()), members_.end());
  }

  std::vector<int> members_;
};

/// A finite set of payoff vectors Omega in R^n, one outcome per column.
class OutcomeSpace {
 public:
  OutcomeSpace(Matrix points, std::vector<std::string> labels = {})
      : points_(std::move(points)), labels_(std::move(labels)) {
    if (points_.rows() < 1) throw InputError("outcome space: dimension must be positive");
    if (points_.cols() < 2) throw InputError("outcome space: at least two outcomes are required");
    if (!points_.allFinite()) throw InputError("outcome space: non-finite coordinate");
    if (!labels_.empty() && static_cast<Index>(labels_.size()) != points_.cols()) {
      throw InputError("outcome space: label count does not match outcome count");
    }
    for (Index i = 0; i < points_.cols(); ++i) {
      for (Index j = i + 1; j < points_.cols(); ++j) {
        if ((points_.col(i) - points_.col(j)).cwiseAbs().maxCoeff() <= 1e-12) {
          throw InputError("outcome space: duplicate outcomes " + std::to_string(i) + " and " + std::to_string(j));
        }
      }
    }
  }

  static OutcomeSpace from_rows(const std::vector<std::vector<double>>& rows, std::vector<std::string> labels = {}) {
    if (rows.empty()) throw InputError("outcome space: no outcomes");
    const auto n = static_cast<Index>(rows.front().size());
    Matrix pts(n, static_cast<Index>(rows.size()));
    for (std::size_t j = 0; j < rows.size(); ++j) {
      if (static_cast<Index>(rows[j].size()) != n) throw InputError("outcome space: ragged outcome vectors");
      for (Index i = 0; i < n; ++i) pts(i, static_cast<Index>(j)) = rows[j][static_cast<std::size_t>(i)];
    }
    return OutcomeSpace(std::move(pts), std::move(labels));
  }

  /// Standard basis {e_1, ..., e_n}.
  static OutcomeSpace simplex(Index n) {
    if (n < 2) throw InputError("simplex outcome space needs n >= 2");
    return OutcomeSpace(Matrix::Identity(n, n));
  }

  /// Vertices of {0,1}^n in binary counting order.
  static OutcomeSpace hypercube(Index n) {
    if (n < 1 || n > 20) throw InputError("hypercube dimension out of range");
    const Index m = Index{1} << n;
    Matrix pts(n, m);
    for (Index j = 0; j < m; ++j) {
      for (Index i = 0; i < n; ++i) pts(i, j) = static_cast<double>((j >> (n - 1 - i)) & 1);
    }
    return OutcomeSpace(std::move(pts));
  }

  /// Cartesian product of outcome spaces; the first factor varies slowest.
  static OutcomeSpace product(const std::vector<OutcomeSpace>& factors) {
    if (factors.empty()) throw InputError("product of zero outcome spaces");
    Index n = 0;
    Index m = 1;
    for (const auto& f : factors) {
      n += f.dim();
      m *= f.size();
    }
    if (m > 100000) throw InputError("product outcome space too large");
    Matrix pts(n, m);
    std::vector<std::string> labels(static_cast<std::size_t>(m));
    for (Index j = 0; j < m; ++j) {
      Index rem = j;
      Index stride = m;
      Index offset = 0;
      std::string label;
      for (const auto& f : factors) {
        stride /= f.size();
        const Index k = rem / stride;
        rem %= stride;
        pts.block(offset, j, f.dim(), 1) = f.outcome(k);
        label += (label.empty() ? "" : "|") + f.label(k);
        offset += f.dim();
      }
      labels[static_cast<std::size_t>(j)] = label;
    }
    return OutcomeSpace(std::move(pts), std::move(labels));
  }

  Index dim() const { return points_.rows(); }
  Index size() const { return points_.cols(); }
  const Matrix& points() const { return points_; }
  Vector outcome(Index i) const { return points_.col(i); }
  bool has_labels() const { return !labels_.empty(); }
  const std::vector<std::string>& labels() const { return labels_; }
  std::string label(Index i) const {
    return labels_.empty() ? "w" + std::to_string(i + 1) : labels_[static_cast<std::size_t>(i)];
  }

  /// Largest coordinate magnitude, at least 1; used to scale tolerances.
  double scale() const { return std::max(1.0, points_.cwiseAbs().maxCoeff()); }

  Matrix members(const Face& face) const {
    Matrix out(dim(), static_cast<Index>(face.size()));
    Index k = 0;
    for (int i : face.members()) out.col(k++) = points_.col(check_index(i));
    return out;
  }

  Face all() const {
    std::vector<int> idx(static_cast<std::size_t>(size()));
    for (Index i = 0; i < size(); ++i) idx[static_cast<std::size_t>(i)] = static_cast<int>(i);
    return Face(std::move(idx));
  }

  void validate(const Face& face) const {
    for (int i : face.members()) check_index(i);
  }

  friend bool operator==(const OutcomeSpace& a, const OutcomeSpace& b) {
    return a.points_.rows() == b.points_.rows() && a.points_.cols() == b.points_.cols() && a.points_ == b.points_;
  }

 private:
  Index check_index(int i) const {
    if (i < 0 || i >= size()) throw InputError("face member index " + std::to_string(i) + " out of range");
    return i;
  }

  Matrix points_;
  std::vector<std::string> labels_;
};

/// Result of a convex-hull membership query.
struct HullCertificate {
  bool inside = false;
  /// Convex weights over the generators (when inside).
  Vector weights;
  /// Unit direction u with u·point > max_j u·g_j (when outside).
  Vector separating_direction;
  /// L1 residual of the best convex combination.
  double residual = 0.0;
};

namespace detail {

/// Weights of the minimum-norm point of conv(columns of y) (Wolfe's algorithm).
inline Vector min_norm_point(const Matrix& y) {
  const Index m = y.cols();
  Index j0 = 0;
  y.colwise().squaredNorm().minCoeff(&j0);
  std::vector<Index> active{j0};
  std::vector<double> lam{1.0};
  Vector x = y.col(j0);
  const double scale2 = std::max(1.0, y.colwise().squaredNorm().maxCoeff());
  for (int major = 0; major < 10 * static_cast<int>(m) + 100; ++major) {
    const Vector dots = y.transpose() * x;
    Index j = 0;
    dots.minCoeff(&j);
    if (x.squaredNorm() - dots(j) <= 1e-13 * scale2) break;
    if (std::find(active.begin(), active.end(), j) != active.end()) break;
    active.push_back(j);
    lam.push_back(0.0);
    for (int minor = 0; minor < static_cast<int>(m) + 5; ++minor) {
      const auto k = static_cast<Index>(active.size());
      Matrix ys(y.rows(), k);
      for (Index i = 0; i < k; ++i) ys.col(i) = y.col(active[static_cast<std::size_t>(i)]);
      Matrix kkt = Matrix::Zero(k + 1, k + 1);
      kkt.topLeftCorner(k, k) = ys.transpose() * ys;
      kkt.col(k).head(k).setOnes();
      kkt.row(k).head(k).setOnes();
      Vector rhs = Vector::Zero(k + 1);
      rhs(k) = 1.0;
      const Vector a = kkt.completeOrthogonalDecomposition().solve(rhs).head(k);
      if (a.minCoeff() > 1e-14) {
        for (Index i = 0; i < k; ++i) lam[static_cast<std::size_t>(i)] = a(i);
        break;
      }
      double theta = 1.0;
      for (Index i = 0; i < k; ++i) {
        const double li = lam[static_cast<std::size_t>(i)];
        if (a(i) <= 1e-14 && li - a(i) > 0) theta = std::min(theta, li / (li - a(i)));
      }
      std::vector<Index> next_active;
      std::vector<double> next_lam;
      for (Index i = 0; i < k; ++i) {
        const double li = lam[static_cast<std::size_t>(i)] + theta * (a(i) - lam[static_cast<std::size_t>(i)]);
        if (li > 1e-14) {
          next_active.push_back(active[static_cast<std::size_t>(i)]);
          next_lam.push_back(li);
        }
      }
      if (next_active.empty()) {
        next_active.push_back(active.back());
        next_lam.push_back(1.0);
      }
      double total = 0;
      for (double v : next_lam) total += v;
      for (double& v : next_lam) v /= total;
      active = std::move(next_active);
      lam = std::move(next_lam);
    }
    x.setZero();
    for (std::size_t i = 0; i < active.size(); ++i) x += lam[i] * y.col(active[i]);
  }
  Vector w = Vector::Zero(m);
  for (std::size_t i = 0; i < active.size(); ++i) w(active[i]) = lam[i];
  return w;
}

/// LP over convex weights w of `generators` reproducing `point` exactly.
inline lp::Problem convex_weight_problem(const Matrix& generators, const Vector& point, Index extra_vars = 0) {
  const Index m = generators.cols();
  lp::Problem prob(m + extra_vars);
  for (Index i = 0; i < generators.rows(); ++i) {
    Vector row = Vector::Zero(m + extra_vars);
    row.head(m) = generators.row(i).transpose();
    prob.add_eq(row, point(i));
  }
  Vector ones = Vector::Zero(m + extra_vars);
  ones.head(m).setOnes();
  prob.add_eq(ones, 1.0);
  return prob;
}

}  // namespace detail

/// Decides whether `point` lies in conv(generators) (columns), with a
/// certificate either way.
inline HullCertificate hull_membership(const Vector& point, const Matrix& generators, double tol = 1e-9) {
  if (generators.cols() == 0) throw InputError("hull_membership: no generators");
  if (generators.rows() != point.size()) throw InputError("hull_membership: dimension mismatch");
  if (!(tol > 0)) throw InputError("hull_membership: tolerance must be positive");
  const Index m = generators.cols();
  const Index n = generators.rows();
  // min sum(r+ + r-)  s.t.  G w + r+ - r- = p,  sum w = 1.
  lp::Problem prob(m + 2 * n);
  for (Index i = 0; i < n; ++i) {
    Vector row = Vector::Zero(m + 2 * n);
    row.head(m) = generators.row(i).transpose();
    row(m + i) = 1.0;
    row(m + n + i) = -1.0;
    prob.add_eq(row, point(i));
  }
  Vector ones = Vector::Zero(m + 2 * n);
  ones.head(m).setOnes();
  prob.add_eq(ones, 1.0);
  prob.cost.tail(2 * n).setOnes();
  const lp::Result res = lp::solve(prob);
  if (res.status != lp::Status::optimal) throw NumericalError("hull_membership: LP failed", 0.0);

  HullCertificate cert;
  cert.residual = std::max(0.0, res.objective);
  if (cert.residual <= tol) {
    cert.inside = true;
    Vector w = res.x.head(m).cwiseMax(0.0);
    cert.weights = w / w.sum();
    return cert;
  }
  const Matrix shifted = generators.colwise() - point;
  const Vector w = detail::min_norm_point(shifted);
  const Vector nearest = generators * w;
  Vector dir = point - nearest;
  if (dir.norm() <= 1e-300) dir = Vector::Unit(n, 0);
  cert.separating_direction = dir.normalized();
  cert.weights = w;
  return cert;
}

inline HullCertificate hull_membership(const Vector& point, const std::vector<Vector>& generators, double tol = 1e-9) {
  if (generators.empty()) throw InputError("hull_membership: no generators");
  Matrix g(point.size(), static_cast<Index>(generators.size()));
  for (std::size_t j = 0; j < generators.size(); ++j) {
    if (generators[j].size() != point.size()) throw InputError("hull_membership: dimension mismatch");
    g.col(static_cast<Index>(j)) = generators[j];
  }
  return hull_membership(point, g, tol);
}

/// True iff `face` is the empty set or exactly the minimizers over Omega of
/// some linear functional, with the non-members strictly above by the
/// scaled margin.
inline bool is_face(const Face& face, const OutcomeSpace& space, double margin = 1e-9) {
  space.validate(face);
  if (face.empty()) return true;
  if (face.size() == static_cast<std::size_t>(space.size())) return true;
  const Index n = space.dim();
  // Variables: u (n, free), c (free), s.  maximize s.
  lp::Problem prob(n + 2);
  for (Index j = 0; j < n + 1; ++j) prob.set_free(j);
  prob.cost(n + 1) = -1.0;
  for (Index k = 0; k < space.size(); ++k) {
    Vector row = Vector::Zero(n + 2);
    if (face.contains(static_cast<int>(k))) {
      // u·w = c
      row.head(n) = space.outcome(k);
      row(n) = -1.0;
      prob.add_eq(row, 0.0);
    } else {
      // u·w >= c + s
      row.head(n) = -space.outcome(k);
      row(n) = 1.0;
      row(n + 1) = 1.0;
      prob.add_le(row, 0.0);
    }
  }
  for (Index i = 0; i < n; ++i) {
    Vector row = Vector::Zero(n + 2);
    row(i) = 1.0;
    prob.add_le(row, 1.0);
    prob.add_le(-row, 1.0);
  }
  Vector cap = Vector::Zero(n + 2);
  cap(n + 1) = 1.0;
  prob.add_le(cap, 1.0);
  const lp::Result res = lp::solve(prob);
  if (res.status != lp::Status::optimal) return false;
  return res.x(n + 1) > margin * space.scale();
}

/// Largest achievable minimum weight over convex decompositions of `point`;
/// negative infinity when point is outside conv(generators).
inline double max_min_weight(const Vector& point, const Matrix& generators) {
  const Index m = generators.cols();
  lp::Problem prob = detail::convex_weight_problem(generators, point, 1);
  prob.set_free(m);
  prob.cost(m) = -1.0;
  for (Index j = 0; j < m; ++j) {
    Vector row = Vector::Zero(m + 1);
    row(m) = 1.0;
    row(j) = -1.0;
    prob.add_le(row, 0.0);
  }
  const lp::Result res = lp::solve(prob);
  if (res.status != lp::Status::optimal) return -std::numeric_limits<double>::infinity();
  return res.x(m);
}

/// True iff point lies in the relative interior of conv(generators), decided by
/// requiring a decomposition with every weight >= ri_weight.
inline bool in_relative_interior(const Vector& point, const Matrix& generators, double ri_weight = 1e-7) {
  return max_min_weight(point, generators) >= ri_weight;
}

/// Indices of generators carrying weight above `weight_tol` in some convex
/// decomposition of `point`: the vertex set of the smallest face containing it.
inline std::vector<int> support_of_point(const Vector& point, const Matrix& generators, double weight_tol = 1e-7) {
  const Index m = generators.cols();
  std::vector<bool> included(static_cast<std::size_t>(m), false);
  std::vector<bool> probed(static_cast<std::size_t>(m), false);
  lp::Problem prob = detail::convex_weight_problem(generators, point);
  for (Index j = 0; j < m; ++j) {
    if (included[static_cast<std::size_t>(j)] || probed[static_cast<std::size_t>(j)]) continue;
    prob.cost.setZero();
    prob.cost(j) = -1.0;
    const lp::Result res = lp::solve(prob);
    if (res.status == lp::Status::infeasible) throw DomainError("point is outside the convex hull");
    if (res.status != lp::Status::optimal) throw NumericalError("support LP failed", 0.0);
    probed[static_cast<std::size_t>(j)] = true;
    for (Index k = 0; k < m; ++k) {
      if (res.x(k) > weight_tol) included[static_cast<std::size_t>(k)] = true;
    }
  }
  std::vector<int> out;
  for (Index k = 0; k < m; ++k) {
    if (included[static_cast<std::size_t>(k)]) out.push_back(static_cast<int>(k));
  }
  return out;
}

/// Smallest face of M containing `point` in its convex hull.
inline Face face_of_point(const Vector& point, const OutcomeSpace& space, const GeometryTolerances& tol = {}) {
  linalg::require_dim(point, space.dim(), "face_of_point");
  return Face(support_of_point(point, space.points(), tol.support_weight));
}

/// Minimal face X (under inclusion) with nu in conv(X ∪ {mu}). Found by
/// casting the ray from mu through nu to its last point in M.
inline Face minimal_face(const Vector& mu, const Vector& nu, const OutcomeSpace& space,
                         const GeometryTolerances& tol = {}) {
  linalg::require_dim(mu, space.dim(), "minimal_face: mu");
  linalg::require_dim(nu, space.dim(), "minimal_face: nu");
  const double htol = tol.hull * space.scale();
  if (!hull_membership(mu, space.points(), htol).inside) throw DomainError("minimal_face: mu is outside M");
  if (!hull_membership(nu, space.points(), htol).inside) throw DomainError("minimal_face: nu is outside M");
  if ((nu - mu).norm() <= htol) return Face{};
  const Index m = space.size();
  const Vector d = nu - mu;
  // max t  s.t.  G w - t d = mu,  sum w = 1,  w, t >= 0.
  lp::Problem prob(m + 1);
  for (Index i = 0; i < space.dim(); ++i) {
    Vector row(m + 1);
    row.head(m) = space.points().row(i).transpose();
    row(m) = -d(i);
    prob.add_eq(row, mu(i));
  }
  Vector ones = Vector::Ones(m + 1);
  ones(m) = 0.0;
  prob.add_eq(ones, 1.0);
  prob.cost(m) = -1.0;
  const lp::Result res = lp::solve(prob);
  if (res.status != lp::Status::optimal) throw NumericalError("minimal_face: ray LP failed", 0.0);
  const Vector exit_point = space.points() * res.x.head(m).cwiseMax(0.0) / res.x.head(m).cwiseMax(0.0).sum();
  return face_of_point(exit_point, space, tol);
}

/// Membership of u in the witness cone K(X) = {u : u·(w - x) >= 0 for all x in X, w in Omega}.
inline bool witness_cone_contains(const Vector& u, const Face& face, const OutcomeSpace& space, double tol = 1e-9) {
  linalg::require_dim(u, space.dim(), "witness_cone_contains");
  space.validate(face);
  if (face.empty()) return true;
  const Vector values = space.points().transpose() * u;
  double max_on_face = -std::numeric_limits<double>::infinity();
  for (int i : face.members()) max_on_face = std::max(max_on_face, values(i));
  return values.minCoeff() - max_on_face >= -tol;
}

/// Orthonormal basis of span{x' - x : x, x' in X}.
inline Matrix face_span_basis(const Face& face, const OutcomeSpace& space) {
  space.validate(face);
  if (face.size() <= 1) return Matrix(space.dim(), 0);
  return linalg::column_space(linalg::differences(space.members(face)));
}

/// Orthogonal projector onto X^perp; identity for empty or singleton X.
inline Matrix face_orthogonal_projector(const Face& face, const OutcomeSpace& space) {
  const Matrix v = face_span_basis(face, space);
  return Matrix::Identity(space.dim(), space.dim()) - v * v.transpose();
}

/// Dimension of aff(Omega).
inline Index affine_dimension(const OutcomeSpace& space, double tol = 1e-10) {
  return linalg::rank(linalg::differences(space.points()), tol);
}

inline bool affinely_independent(const OutcomeSpace& space, double tol = 1e-10) {
  if (space.size() - 1 > space.dim()) return false;
  return affine_dimension(space, tol) == space.size() - 1;
}

/// Smallest face containing every member of `subset`.
inline Face face_closure(const Face& subset, const OutcomeSpace& space, const GeometryTolerances& tol = {}) {
  if (subset.empty()) return Face{};
  const Vector barycenter = space.members(subset).rowwise().mean();
  return face_of_point(barycenter, space, tol);
}

/// All non-empty faces of M (including Omega itself), built by joining
/// faces with single outcomes.
inline std::vector<Face> enumerate_faces(const OutcomeSpace& space, const GeometryTolerances& tol = {}) {
  std::set<Face> seen;
  std::vector<Face> frontier;
  for (Index i = 0; i < space.size(); ++i) {
    Face f = face_closure(Face{static_cast<int>(i)}, space, tol);
    if (seen.insert(f).second) frontier.push_back(f);
  }
  while (!frontier.empty()) {
    std::vector<Face> next;
    for (const Face& f : frontier) {
      for (Index i = 0; i < space.size(); ++i) {
        if (f.contains(static_cast<int>(i))) continue;
        std::vector<int> joined = f.members();
        joined.push_back(static_cast<int>(i));
        Face g = face_closure(Face(std::move(joined)), space, tol);
        if (seen.insert(g).second) next.push_back(g);
      }
    }
    frontier = std::move(next);
  }
  return {seen.begin(), seen.end()};
}

}  // namespace bregman_market

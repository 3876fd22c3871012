#pragma once

// Bregman perpendiculars and the piecewise solution path from p(q0) to the
// belief mu.

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "costs.hpp"
#include "errors.hpp"
#include "geometry.hpp"
#include "linalg.hpp"
#include "newton.hpp"
#include "trader.hpp"

namespace bregman_market {

/// The apex-perpendicular to aff(base_face) at the anchor state. Slices are
/// A_lambda = aff(X) + lambda (apex - a0), with a0 the orthogonal projection
/// of the apex onto aff(X); lambda = 1 is the slice through the apex.
struct Perpendicular {
  Face base_face;
  Vector apex;
  Vector anchor;
  Vector a0;
  Vector direction;  // apex - a0, orthogonal to the face
  Matrix face_basis;  // orthonormal span of X differences
  Matrix free_basis;  // orthonormal basis of X^perp within the cost range
};

struct PerpendicularPoint {
  double lambda = 0.0;
  Vector nu;
  /// Market state in p^{-1}(nu) ∩ (anchor + X^perp).
  Vector q;
  Vector eta;
};

inline Perpendicular make_perpendicular(const CostModel& model, const OutcomeSpace& space, const Face& face,
                                        const Vector& apex, const Vector& anchor, double tol = 1e-10) {
  if (face.empty()) throw InputError("perpendicular: base face must be non-empty");
  space.validate(face);
  linalg::require_dim(apex, space.dim(), "perpendicular apex");
  linalg::require_dim(anchor, space.dim(), "perpendicular anchor");
  Perpendicular perp;
  perp.base_face = face;
  perp.apex = apex;
  perp.anchor = anchor;
  perp.face_basis = face_span_basis(face, space);
  const Vector x0 = space.outcome(face.front());
  perp.a0 = x0 + perp.face_basis * (perp.face_basis.transpose() * (apex - x0));
  perp.direction = apex - perp.a0;
  if (perp.direction.norm() <= tol * space.scale()) {
    throw InputError("perpendicular: apex lies in the affine hull of the base face");
  }
  const Matrix ns = model.nullspace();
  Matrix blocked(space.dim(), perp.face_basis.cols() + ns.cols());
  blocked << perp.face_basis, ns;
  perp.free_basis = linalg::orthogonal_complement(blocked, space.dim());
  return perp;
}

/// Slice coordinate of a point of aff(X ∪ {apex}).
inline double perpendicular_lambda(const Perpendicular& perp, const Vector& nu) {
  return (nu - perp.a0).dot(perp.direction) / perp.direction.squaredNorm();
}

namespace detail {

/// Closed forms for the quadratic cost and for the log-partition cost on an
/// affinely independent outcome set; nullopt when neither applies.
inline std::optional<PerpendicularPoint> perpendicular_closed_form(const CostModel& model, const OutcomeSpace& space,
                                                                   const Perpendicular& perp, double lambda) {
  const Vector target = perp.a0 + lambda * perp.direction;
  if (model.kind() == CostKind::quadratic) {
    // Euclidean projection of q/b onto the slice.
    const double b = model.liquidity();
    const Matrix& v = perp.face_basis;
    const Vector shift = perp.anchor / b - target;
    const Vector nu = target + v * (v.transpose() * shift);
    PerpendicularPoint pt{lambda, nu, b * nu, Vector()};
    return pt;
  }
  if (model.kind() != CostKind::log_partition || !(model.log_partition_space() == space) ||
      !affinely_independent(space) || perp.base_face.size() == static_cast<std::size_t>(space.size())) {
    return std::nullopt;
  }
  // nu moves on the segment (1 - a) nu_X + a nu_Xc, keeping the probability
  // ratios inside X and inside its complement fixed.
  const double b = model.liquidity();
  const Matrix& w = space.points();
  const Vector logits = w.transpose() * perp.anchor / b;
  const Vector prob = detail::softmax(logits);
  double px = 0.0;
  for (int x : perp.base_face.members()) px += prob(x);
  Vector nu_x = Vector::Zero(space.dim());
  Vector nu_c = Vector::Zero(space.dim());
  for (Index j = 0; j < space.size(); ++j) {
    if (perp.base_face.contains(static_cast<int>(j))) nu_x += prob(j) / px * w.col(j);
    else nu_c += prob(j) / (1.0 - px) * w.col(j);
  }
  // The segment form needs p(anchor) in aff(X ∪ {apex}).
  const Vector nu0 = w * prob;
  const Vector off = nu0 - perp.a0 - perpendicular_lambda(perp, nu0) * perp.direction;
  if ((off - perp.face_basis * (perp.face_basis.transpose() * off)).norm() > 1e-9 * space.scale()) {
    return std::nullopt;
  }
  const double lambda_c = perpendicular_lambda(perp, nu_c);
  const double alpha = lambda / lambda_c;
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("perpendicular: slice lies outside ri M");
  Vector target_log(space.size());
  for (Index j = 0; j < space.size(); ++j) {
    const bool in_face = perp.base_face.contains(static_cast<int>(j));
    target_log(j) = std::log(in_face ? (1.0 - alpha) * prob(j) / px : alpha * prob(j) / (1.0 - px));
  }
  // Solve (dq/b)·(w_j - w_0) = shift of log-ratio, minimum norm.
  const Matrix diffs = linalg::differences(w);
  Vector rhs(space.size() - 1);
  for (Index j = 1; j < space.size(); ++j) rhs(j - 1) = (target_log(j) - target_log(0)) - (logits(j) - logits(0));
  const Vector dq = b * diffs.transpose().completeOrthogonalDecomposition().solve(rhs);
  const Vector q = perp.anchor + dq;
  PerpendicularPoint pt{lambda, model.price(q), q, Vector()};
  return pt;
}

}  // namespace detail

/// Point of the perpendicular on slice lambda together with its state.
/// Throws DomainError when the Bregman projection leaves ri dom C*.
inline PerpendicularPoint evaluate_perpendicular(const CostModel& model, const OutcomeSpace& space,
                                                 const Perpendicular& perp, double lambda,
                                                 const std::optional<Vector>& eta_guess = std::nullopt,
                                                 bool allow_closed_form = true) {
  if (allow_closed_form) {
    if (auto pt = detail::perpendicular_closed_form(model, space, perp, lambda)) return *pt;
  }
  // Minimize C(q + W eta) - (W eta)·a_lambda over eta.
  const Vector target = perp.a0 + lambda * perp.direction;
  const Matrix& wb = perp.free_basis;
  const Vector tw = wb.transpose() * target;
  const double c_anchor = model.cost(perp.anchor);
  auto objective = [&](const Vector& eta, bool derivs) {
    const Vector q = perp.anchor + wb * eta;
    Evaluation ev;
    ev.value = model.cost(q) - c_anchor - eta.dot(tw);
    if (derivs) {
      ev.gradient = wb.transpose() * model.price(q) - tw;
      ev.hessian = wb.transpose() * model.hessian(q) * wb;
    }
    return ev;
  };
  NewtonOptions opt;
  opt.gradient_tol = 1e-12 * (1.0 + target.norm());
  opt.max_norm = 1e6;
  const Vector start = eta_guess && eta_guess->size() == wb.cols() ? *eta_guess : Vector::Zero(wb.cols());
  const NewtonResult res = minimize_newton(objective, start, opt);
  if (!res.converged) {
    throw DomainError("perpendicular: slice " + std::to_string(lambda) + " has no minimizer in ri dom C*");
  }
  PerpendicularPoint pt;
  pt.lambda = lambda;
  pt.eta = res.x;
  pt.q = perp.anchor + wb * res.x;
  pt.nu = model.price(pt.q);
  return pt;
}

inline PriceVector perpendicular_point(const CostModel& model, const OutcomeSpace& space, const Perpendicular& perp,
                                       double lambda) {
  const PerpendicularPoint pt = evaluate_perpendicular(model, space, perp, lambda);
  PriceVector pv = classify_price(model, space, pt.nu);
  if (!pv.in_ri_domain) throw DomainError("perpendicular: point outside ri dom C*");
  return pv;
}

struct PathSample {
  double lambda = 0.0;
  Vector nu;
  Vector q;
  double budget = 0.0;
};

struct PathSegment {
  Face face;
  Vector start;
  Vector end;
  Vector start_state;
  Vector end_state;
  Perpendicular perpendicular;
  double lambda_start = 0.0;
  double lambda_end = 0.0;
  std::vector<PathSample> samples;
};

struct AcuteViolation {
  std::size_t segment = 0;
  double lambda = 0.0;
  std::string message;
};

struct SolutionPath {
  Vector q0;
  Vector mu;
  std::vector<PathSegment> segments;
  Vector terminal;
  Vector terminal_state;
  std::vector<AcuteViolation> acute_violations;

  bool authoritative() const { return acute_violations.empty(); }
  double total_budget() const { return segments.empty() ? 0.0 : segments.back().samples.back().budget; }
};

struct PathOptions {
  int samples_per_segment = 64;
  /// Bisection tolerance on the exit parameter.
  double exit_tol = 1e-10;
  /// Hull membership tolerance (scaled by outcome magnitudes).
  double hull_tol = 1e-9;
  /// The slice through the belief counts as reached within this distance.
  double belief_tol = 1e-7;
  /// Witness-cone tolerance for acute-angle checks.
  double cone_tol = 1e-9;
  /// Distance below which p(q0) is treated as the belief.
  double degenerate_tol = 1e-10;
  CostTolerances cost;
};

/// Budget -U(q, x; q0) maximized over x in the face (all members agree on the path).
inline double face_budget(const CostModel& model, const OutcomeSpace& space, const Face& face, const Vector& q,
                          const Vector& q0) {
  double out = -std::numeric_limits<double>::infinity();
  for (int x : face.members()) out = std::max(out, -utility(model, q, space.outcome(x), q0));
  return out;
}

/// State in p^{-1}(p(q)) whose displacement from q0 has no nullspace component.
inline Vector anchored_state(const CostModel& model, const Vector& q, const Vector& q0) {
  const Matrix ns = model.nullspace();
  if (ns.cols() == 0) return q;
  return q - ns * (ns.transpose() * (q - q0));
}

namespace detail {

inline Matrix segment_generators(const OutcomeSpace& space, const Face& face, const Vector& mu) {
  const auto k = static_cast<Index>(face.size());
  Matrix gen(space.dim(), k + 1);
  gen.leftCols(k) = space.members(face);
  gen.col(k) = mu;
  return gen;
}

/// Orthogonal projection of nu onto aff(X ∪ {mu}).
inline Vector project_to_segment_hull(const OutcomeSpace& space, const Face& face, const Vector& mu,
                                      const Vector& nu) {
  const Matrix gen = segment_generators(space, face, mu);
  const Vector x0 = gen.col(0);
  const Matrix basis = linalg::column_space(linalg::differences(gen));
  return x0 + basis * (basis.transpose() * (nu - x0));
}

/// Membership in conv(X ∪ {mu}) after projecting onto its affine hull, so
/// round-off normal to the hull does not register as an exit.
inline bool inside_segment_hull(const OutcomeSpace& space, const Face& face, const Vector& mu, const Vector& nu,
                                double tol) {
  const Vector projected = project_to_segment_hull(space, face, mu, nu);
  return hull_membership(projected, segment_generators(space, face, mu), tol * space.scale()).inside;
}

}  // namespace detail

/// Builds the solution path: on each stage follow the belief-perpendicular to
/// the minimal face until it leaves conv(X ∪ {mu}), then shrink the face.
/// Acute-angle failures are recorded, not raised.
inline SolutionPath trace_path(const CostModel& model, const OutcomeSpace& space, const Vector& q0, const Vector& mu,
                               const PathOptions& opt = {}) {
  validate_problem(TradeProblem{model, space, q0, mu, 0.0}, opt.cost);
  if (opt.samples_per_segment < 1) throw InputError("trace_path: samples_per_segment must be positive");
  SolutionPath path;
  path.q0 = q0;
  path.mu = mu;
  Vector q_i = q0;
  Vector nu_i = model.price(q0);
  if ((nu_i - mu).norm() <= opt.degenerate_tol * space.scale()) {
    path.terminal = mu;
    path.terminal_state = q0;
    return path;
  }
  GeometryTolerances gt;
  gt.hull = opt.hull_tol;
  std::optional<Face> previous;
  for (Index stage = 0; stage <= space.size(); ++stage) {
    const Vector nu_face = previous ? detail::project_to_segment_hull(space, *previous, mu, nu_i) : nu_i;
    Face face = minimal_face(mu, nu_face, space, gt);
    if (face.empty()) break;
    if (previous && !face.is_strict_subset_of(*previous)) {
      // Fall back to the barycentric support of the exit point inside
      // conv(X ∪ {mu}); the leaving members carry (near) zero weight there.
      const auto k = static_cast<int>(previous->size());
      const Matrix gen = detail::segment_generators(space, *previous, mu);
      const HullCertificate cert = hull_membership(nu_face, gen, opt.hull_tol * space.scale());
      std::vector<int> kept;
      if (cert.inside) {
        for (int j = 0; j < k; ++j) {
          if (cert.weights(j) > gt.support_weight) kept.push_back(previous->members()[static_cast<std::size_t>(j)]);
        }
      }
      face = face_closure(Face(kept), space, gt);
      if (face.empty() || !face.is_strict_subset_of(*previous)) {
        throw NumericalError("trace_path: active face did not shrink at a segment exit", 0.0);
      }
    }
    PathSegment seg;
    seg.face = face;
    seg.perpendicular = make_perpendicular(model, space, face, mu, q_i);
    const Perpendicular& perp = seg.perpendicular;
    seg.lambda_start = perpendicular_lambda(perp, nu_i);
    seg.start = nu_i;
    seg.start_state = q_i;

    std::optional<Vector> eta;
    auto eval = [&](double lam) -> std::optional<PerpendicularPoint> {
      try {
        auto pt = evaluate_perpendicular(model, space, perp, lam, eta);
        if (!model.in_ri_domain(pt.nu, opt.cost)) return std::nullopt;
        return pt;
      } catch (const DomainError&) {
        return std::nullopt;
      }
    };
    auto inside = [&](const std::optional<PerpendicularPoint>& pt) {
      return pt && detail::inside_segment_hull(space, face, mu, pt->nu, opt.hull_tol);
    };

    double lam_end = 1.0;
    std::optional<PerpendicularPoint> end_pt = eval(1.0);
    bool reaches_belief = end_pt && (end_pt->nu - mu).norm() <= opt.belief_tol * space.scale();
    if (!reaches_belief) {
      double lo = seg.lambda_start;
      double hi = 1.0;
      std::optional<PerpendicularPoint> lo_pt;
      while (hi - lo > opt.exit_tol) {
        const double mid = 0.5 * (lo + hi);
        auto pt = eval(mid);
        if (inside(pt)) {
          lo = mid;
          lo_pt = pt;
          eta = pt->eta;
        } else {
          hi = mid;
        }
      }
      lam_end = lo;
      end_pt = lo_pt ? lo_pt : eval(lo);
      if (!end_pt) throw NumericalError("trace_path: perpendicular left the domain at the segment start", 0.0);
    }
    seg.lambda_end = lam_end;
    eta.reset();

    const int s = opt.samples_per_segment;
    for (int k = (path.segments.empty() ? 0 : 1); k <= s; ++k) {
      const double lam = seg.lambda_start + (lam_end - seg.lambda_start) * static_cast<double>(k) / s;
      std::optional<PerpendicularPoint> pt = k == s ? end_pt : eval(lam);
      if (!pt) throw NumericalError("trace_path: perpendicular sample left the domain", 0.0);
      if (pt->eta.size()) eta = pt->eta;
      PathSample sample;
      sample.lambda = lam;
      sample.nu = k == s && reaches_belief ? mu : pt->nu;
      sample.q = anchored_state(model, pt->q, q0);
      sample.budget = face_budget(model, space, face, sample.q, q0);
      if (!witness_cone_contains(sample.q - q_i, face, space, opt.cone_tol * space.scale())) {
        if (path.acute_violations.empty() || path.acute_violations.back().segment != path.segments.size()) {
          path.acute_violations.push_back(
              {path.segments.size(), lam,
               "state displacement leaves the witness cone of face " + [&] {
                 std::string out = "{";
                 for (int x : face.members()) out += (out.size() > 1 ? "," : "") + space.label(x);
                 return out + "}";
               }()});
        }
      }
      seg.samples.push_back(std::move(sample));
    }
    seg.end = seg.samples.back().nu;
    seg.end_state = seg.samples.back().q;
    q_i = seg.end_state;
    nu_i = seg.end;
    previous = face;
    path.segments.push_back(std::move(seg));
    if (reaches_belief) break;
  }
  path.terminal = nu_i;
  path.terminal_state = q_i;
  if ((path.terminal - mu).norm() > 1e-6 * space.scale()) {
    throw NumericalError("trace_path: path did not reach the belief", (path.terminal - mu).norm());
  }
  return path;
}

/// Budget needed to move the price to nu along the path.
inline double budget_along_path(const CostModel& model, const OutcomeSpace& space, const SolutionPath& path,
                                const Vector& nu, double tol = 1e-7) {
  linalg::require_dim(nu, space.dim(), "budget_along_path");
  if (path.segments.empty()) {
    if ((nu - path.mu).norm() <= tol) return 0.0;
    throw DomainError("budget_along_path: price is not on the path");
  }
  for (const auto& seg : path.segments) {
    const double lam = perpendicular_lambda(seg.perpendicular, nu);
    const double lo = std::min(seg.lambda_start, seg.lambda_end);
    const double hi = std::max(seg.lambda_start, seg.lambda_end);
    if (lam < lo - tol || lam > hi + tol) continue;
    PerpendicularPoint pt;
    try {
      pt = evaluate_perpendicular(model, space, seg.perpendicular, std::clamp(lam, lo, hi));
    } catch (const DomainError&) {
      continue;
    }
    if ((pt.nu - nu).norm() > tol) continue;
    return face_budget(model, space, seg.face, anchored_state(model, pt.q, path.q0), path.q0);
  }
  throw DomainError("budget_along_path: price is not on the path");
}

/// Solves the trade by locating budget B on the path (bisection on the slice
/// parameter). Refuses paths with acute-angle violations.
inline TradeSolution solve_by_path(const CostModel& model, const OutcomeSpace& space, const Vector& q0,
                                   const Vector& mu, double budget, const PathOptions& opt = {},
                                   const SolutionPath* precomputed = nullptr) {
  const TradeProblem problem{model, space, q0, mu, budget};
  validate_problem(problem, opt.cost);
  SolutionPath local;
  if (!precomputed) local = trace_path(model, space, q0, mu, opt);
  const SolutionPath& path = precomputed ? *precomputed : local;
  if (!path.authoritative()) {
    throw UnsupportedError("solve_by_path: the path violates the acute-angle condition; use solve_generic");
  }
  SolverOptions sopt;
  sopt.cost = opt.cost;
  auto finish_at = [&](const Vector& q, const Face& face) {
    return detail::finish(problem, q, recover_multipliers(problem, q, face), 0, sopt);
  };
  if (path.segments.empty()) return finish_at(q0, Face{});
  if (budget >= path.total_budget()) return finish_at(path.terminal_state, Face{});

  for (const auto& seg : path.segments) {
    if (seg.samples.back().budget < budget) continue;
    // First sample at or above the budget brackets the crossing.
    std::size_t k = 0;
    while (seg.samples[k].budget < budget) ++k;
    double lo = k == 0 ? seg.lambda_start : seg.samples[k - 1].lambda;
    double hi = seg.samples[k].lambda;
    Vector q_hi = seg.samples[k].q;
    std::optional<Vector> eta;
    for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
      const double mid = 0.5 * (lo + hi);
      const auto pt = evaluate_perpendicular(model, space, seg.perpendicular, mid, eta);
      eta = pt.eta;
      const Vector q = anchored_state(model, pt.q, q0);
      const double bm = face_budget(model, space, seg.face, q, q0);
      if (bm < budget) {
        lo = mid;
      } else {
        hi = mid;
        q_hi = q;
      }
      if (std::abs(bm - budget) <= 1e-15 * (1.0 + budget)) {
        q_hi = q;
        break;
      }
    }
    return finish_at(q_hi, seg.face);
  }
  return finish_at(path.terminal_state, Face{});
}

/// CSV with columns segment_index, lambda, nu_0..nu_{n-1}, budget.
inline void write_path_csv(std::ostream& os, const SolutionPath& path) {
  const Index n = path.mu.size();
  os << "segment_index,lambda";
  for (Index i = 0; i < n; ++i) os << ",nu_" << i;
  os << ",budget\n";
  const auto flags = os.flags();
  const auto prec = os.precision();
  os << std::setprecision(12);
  for (std::size_t s = 0; s < path.segments.size(); ++s) {
    for (const auto& smp : path.segments[s].samples) {
      os << s << ',' << smp.lambda;
      for (Index i = 0; i < n; ++i) os << ',' << smp.nu(i);
      os << ',' << smp.budget << '\n';
    }
  }
  os.flags(flags);
  os.precision(prec);
}

}  // namespace bregman_market

#pragma once

// Budget additivity: empirical checks, acute-angle certificates, and a seeded
// search for counterexamples.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "costs.hpp"
#include "errors.hpp"
#include "geometry.hpp"
#include "linalg.hpp"
#include "trader.hpp"

namespace bregman_market {

inline constexpr double kDefaultAdditivityTol = 1e-5;

struct AdditivityReport {
  bool additive = false;
  PriceVector price_sequential;
  PriceVector price_combined;
  double gap = 0.0;
  double tol = kDefaultAdditivityTol;
  std::vector<double> budgets;
  Vector q0;
  Vector mu;
  /// One solution per budget, each trade starting where the previous ended.
  std::vector<TradeSolution> sequential;
  TradeSolution combined;
};

/// Sequential trades with each budget in turn (left fold) against one trade
/// with their sum, all under the same belief.
inline AdditivityReport check_budget_additivity(const CostModel& model, const OutcomeSpace& space, const Vector& q0,
                                                const Vector& mu, const std::vector<double>& budgets,
                                                double tol = kDefaultAdditivityTol, const SolverOptions& opt = {}) {
  if (budgets.empty()) throw InputError("check_budget_additivity: at least one budget is required");
  AdditivityReport report;
  report.tol = tol;
  report.budgets = budgets;
  report.q0 = q0;
  report.mu = mu;
  Vector q = q0;
  double total = 0.0;
  for (double b : budgets) {
    report.sequential.push_back(solve_generic(TradeProblem{model, space, q, mu, b}, opt));
    q = report.sequential.back().q_hat;
    total += b;
  }
  report.combined = solve_generic(TradeProblem{model, space, q0, mu, total}, opt);
  report.price_sequential = report.sequential.back().nu_hat;
  report.price_combined = report.combined.nu_hat;
  report.gap = (report.price_sequential.nu - report.price_combined.nu).norm();
  report.additive = report.gap <= tol;
  return report;
}

inline AdditivityReport check_budget_additivity(const CostModel& model, const OutcomeSpace& space, const Vector& q0,
                                                const Vector& mu, double budget, double budget_prime,
                                                double tol = kDefaultAdditivityTol, const SolverOptions& opt = {}) {
  return check_budget_additivity(model, space, q0, mu, std::vector<double>{budget, budget_prime}, tol, opt);
}

enum class AcuteStatus { certified, refuted_face, not_applicable };

inline std::string to_string(AcuteStatus s) {
  switch (s) {
    case AcuteStatus::certified: return "certified";
    case AcuteStatus::refuted_face: return "refuted_face";
    case AcuteStatus::not_applicable: return "not_applicable";
  }
  return "unknown";
}

/// Outcomes projected onto a0 + X^perp, stored relative to a0, with the
/// smallest pairwise dot product among those outside X (infinite when fewer
/// than two lie outside).
struct AcuteEvidence {
  Face face;
  Vector anchor;
  Matrix projected;
  int first = -1;
  int second = -1;
  double dot = std::numeric_limits<double>::infinity();
};

struct AcuteVerdict {
  AcuteStatus status = AcuteStatus::not_applicable;
  /// Which sufficient condition produced the verdict.
  std::string rule;
  std::string reason;
  /// Evidence of the refuting face, or of the tightest face when certified by enumeration.
  std::optional<AcuteEvidence> evidence;
  std::vector<AcuteVerdict> blocks;
  std::vector<std::string> warnings;

  bool certified() const { return status == AcuteStatus::certified; }
};

/// Acute-angle test for the quadratic cost at face X: all outcomes projected
/// onto a0 + X^perp must have pairwise non-negative dot products about a0.
inline AcuteVerdict euclidean_acute_check(const OutcomeSpace& space, const Face& face, double tol = 1e-9) {
  if (face.empty()) throw InputError("euclidean_acute_check: face must be non-empty");
  space.validate(face);
  AcuteEvidence ev;
  ev.face = face;
  ev.anchor = space.outcome(face.front());
  const Matrix v = face_span_basis(face, space);
  const Matrix perp = Matrix::Identity(space.dim(), space.dim()) - v * v.transpose();
  ev.projected = perp * (space.points().colwise() - ev.anchor);
  for (Index i = 0; i < space.size(); ++i) {
    if (face.contains(static_cast<int>(i))) continue;
    for (Index j = i + 1; j < space.size(); ++j) {
      if (face.contains(static_cast<int>(j))) continue;
      const double d = ev.projected.col(i).dot(ev.projected.col(j));
      if (d < ev.dot) {
        ev.dot = d;
        ev.first = static_cast<int>(i);
        ev.second = static_cast<int>(j);
      }
    }
  }
  AcuteVerdict out;
  out.rule = "euclidean_acute";
  if (ev.dot >= -tol * space.scale() * space.scale()) {
    out.status = AcuteStatus::certified;
    out.reason = "projected outcomes have non-negative pairwise dot products";
  } else {
    out.status = AcuteStatus::refuted_face;
    out.reason = "projected outcomes " + space.label(ev.first) + " and " + space.label(ev.second) +
                 " form an obtuse angle";
  }
  out.evidence = std::move(ev);
  return out;
}

namespace detail {

inline bool is_unit_hypercube(const OutcomeSpace& space) {
  const Index n = space.dim();
  if (n >= 62 || space.size() != (Index{1} << n)) return false;
  return (space.points().array() == 0.0 || space.points().array() == 1.0).all();
}

inline bool is_standard_simplex(const OutcomeSpace& space) {
  if (space.size() != space.dim()) return false;
  std::vector<bool> seen(static_cast<std::size_t>(space.dim()), false);
  for (Index j = 0; j < space.size(); ++j) {
    const auto col = space.points().col(j);
    Index hot = -1;
    for (Index i = 0; i < space.dim(); ++i) {
      if (col(i) == 1.0 && hot < 0) hot = i;
      else if (col(i) != 0.0) return false;
    }
    if (hot < 0 || seen[static_cast<std::size_t>(hot)]) return false;
    seen[static_cast<std::size_t>(hot)] = true;
  }
  return true;
}

/// Distinct projections of the outcomes onto coordinates [offset, offset + dim).
inline OutcomeSpace block_factor(const OutcomeSpace& space, Index offset, Index dim) {
  std::vector<Vector> pts;
  for (Index j = 0; j < space.size(); ++j) {
    const Vector p = space.outcome(j).segment(offset, dim);
    const bool dup = std::any_of(pts.begin(), pts.end(), [&](const Vector& o) { return (o - p).norm() <= 1e-12; });
    if (!dup) pts.push_back(p);
  }
  Matrix m(dim, static_cast<Index>(pts.size()));
  for (Index j = 0; j < m.cols(); ++j) m.col(j) = pts[static_cast<std::size_t>(j)];
  return OutcomeSpace(m);
}

}  // namespace detail

/// Checks the sufficient conditions for budget additivity that apply to the
/// model: acute angles for the quadratic cost (structurally for hypercubes and
/// simplices, otherwise by face enumeration up to `max_enumerated` outcomes),
/// affine independence for the log-partition cost and LMSR, one-dimensional M
/// for any cost, and blockwise certification for direct sums.
inline AcuteVerdict certify_sufficient_conditions(const CostModel& model, const OutcomeSpace& space,
                                                  Index max_enumerated = 16) {
  AcuteVerdict out;
  if (model.dim() != space.dim()) {
    out.rule = "none";
    out.reason = "cost dimension does not match the outcome space";
    return out;
  }
  if (affine_dimension(space) == 1) {
    out.status = AcuteStatus::certified;
    out.rule = "segment";
    out.reason = "M is a line segment";
    return out;
  }
  switch (model.kind()) {
    case CostKind::quadratic: {
      if (detail::is_unit_hypercube(space)) {
        out.status = AcuteStatus::certified;
        out.rule = "hypercube";
        out.reason = "quadratic cost on the unit hypercube";
        return out;
      }
      if (detail::is_standard_simplex(space)) {
        out.status = AcuteStatus::certified;
        out.rule = "simplex";
        out.reason = "quadratic cost on the probability simplex";
        return out;
      }
      if (space.size() > max_enumerated) {
        out.rule = "euclidean_acute";
        out.reason = "too many outcomes to enumerate faces";
        out.warnings.push_back("face enumeration skipped for " + std::to_string(space.size()) +
                               " outcomes; use randomized_counterexample_search");
        return out;
      }
      std::optional<AcuteEvidence> tightest;
      for (const Face& f : enumerate_faces(space)) {
        if (f.size() == static_cast<std::size_t>(space.size())) continue;
        AcuteVerdict v = euclidean_acute_check(space, f);
        if (!v.certified()) return v;
        if (!tightest || v.evidence->dot < tightest->dot) tightest = v.evidence;
      }
      out.status = AcuteStatus::certified;
      out.rule = "euclidean_acute";
      out.reason = "every proper face satisfies the acute-angle condition";
      out.evidence = tightest;
      return out;
    }
    case CostKind::log_partition:
      out.rule = "affinely_independent";
      if (!(model.log_partition_space() == space)) {
        out.reason = "log-partition cost is defined over a different outcome set";
      } else if (affinely_independent(space)) {
        out.status = AcuteStatus::certified;
        out.reason = "log-partition cost over affinely independent outcomes";
      } else {
        out.reason = "outcomes are affinely dependent";
      }
      return out;
    case CostKind::lmsr:
      out.rule = "affinely_independent";
      if (detail::is_standard_simplex(space)) {
        out.status = AcuteStatus::certified;
        out.reason = "LMSR over the probability simplex";
      } else {
        out.reason = "LMSR outcomes are not the probability simplex";
      }
      return out;
    case CostKind::direct_sum: {
      out.rule = "direct_sum";
      Index expected = 1;
      std::vector<OutcomeSpace> factors;
      for (std::size_t k = 0; k < model.blocks().size(); ++k) {
        factors.push_back(detail::block_factor(space, model.block_offset(k), model.blocks()[k].dim()));
        expected *= factors.back().size();
      }
      if (expected != space.size()) {
        out.reason = "outcome space is not the product of the block outcome spaces";
        return out;
      }
      bool all = true;
      for (std::size_t k = 0; k < model.blocks().size(); ++k) {
        out.blocks.push_back(certify_sufficient_conditions(model.blocks()[k], factors[k], max_enumerated));
        all = all && out.blocks.back().certified();
      }
      out.status = all ? AcuteStatus::certified : AcuteStatus::not_applicable;
      out.reason = all ? "every block is certified" : "some block is not certified";
      return out;
    }
  }
  return out;
}

struct SearchOptions {
  double tol = kDefaultAdditivityTol;
  /// Worker threads; the result does not depend on this.
  unsigned workers = 1;
  /// Lower bound on the convex weights used to sample interior prices.
  double interior_floor = 0.02;
  SolverOptions solver;
};

namespace detail {

struct SearchTrial {
  Vector q0;
  Vector mu;
  double budget = 0.0;
  double budget_prime = 0.0;
};

/// Trial t depends only on (seed, t).
inline SearchTrial sample_trial(const CostModel& model, const OutcomeSpace& space, std::uint64_t seed,
                                std::uint64_t t, double floor) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(t), static_cast<std::uint32_t>(t >> 32)};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto interior = [&] {
    Vector w(space.size());
    for (Index j = 0; j < space.size(); ++j) w(j) = floor + u(rng);
    return Vector(space.points() * (w / w.sum()));
  };
  SearchTrial trial;
  trial.q0 = model.inverse_price(interior());
  trial.mu = interior();
  // Scale budgets by the loss bound of jumping straight to the belief.
  const Vector q_mu = model.inverse_price(trial.mu);
  double reach = 0.0;
  for (Index j = 0; j < space.size(); ++j) reach = std::max(reach, -utility(model, q_mu, space.outcome(j), trial.q0));
  const double total = (0.1 + 1.1 * u(rng)) * reach;
  const double split = 0.1 + 0.8 * u(rng);
  trial.budget = split * total;
  trial.budget_prime = (1.0 - split) * total;
  return trial;
}

}  // namespace detail

/// Seeded search for a non-additive (q0, mu, B, B') instance. Returns the
/// first violating trial in trial order, or nullopt. Trials whose solves fail
/// are skipped.
inline std::optional<AdditivityReport> randomized_counterexample_search(const CostModel& model,
                                                                        const OutcomeSpace& space, int trials,
                                                                        std::uint64_t seed,
                                                                        const SearchOptions& opt = {}) {
  if (trials < 1) throw InputError("randomized_counterexample_search: trials must be at least 1");
  if (model.dim() != space.dim()) throw InputError("randomized_counterexample_search: dimension mismatch");
  const unsigned workers = std::max(1u, std::min(opt.workers, static_cast<unsigned>(trials)));
  std::vector<std::optional<std::pair<int, AdditivityReport>>> found(workers);
  auto run = [&](unsigned w) {
    for (int t = static_cast<int>(w); t < trials; t += static_cast<int>(workers)) {
      if (found[w]) return;
      try {
        const auto trial = detail::sample_trial(model, space, seed, static_cast<std::uint64_t>(t), opt.interior_floor);
        auto report = check_budget_additivity(model, space, trial.q0, trial.mu, trial.budget, trial.budget_prime,
                                              opt.tol, opt.solver);
        if (!report.additive) found[w] = std::make_pair(t, std::move(report));
      } catch (const Error&) {
        continue;
      }
    }
  };
  if (workers == 1) {
    run(0);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(run, w);
    for (auto& th : pool) th.join();
  }
  std::optional<std::pair<int, AdditivityReport>> best;
  for (auto& f : found) {
    if (f && (!best || f->first < best->first)) best = std::move(f);
  }
  if (!best) return std::nullopt;
  return std::move(best->second);
}

}  // namespace bregman_market

#pragma once

// Subcommand bodies shared by the command-line tool and its tests. Each
// returns a process exit code: 0 success, 2 invalid input, 3 solver failure.

#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "additivity.hpp"
#include "paths.hpp"
#include "scenario.hpp"
#include "trader.hpp"

namespace bregman_market {

enum ExitCode : int { exit_ok = 0, exit_invalid = 2, exit_solver = 3 };

struct CommandOptions {
  std::optional<std::vector<double>> budgets;
  int samples = 64;
  std::optional<std::string> csv_out;
  bool json = false;
  std::optional<std::uint64_t> seed;
  std::optional<double> tol;
  int trials = 200;
  unsigned workers = 1;
};

struct CommandIo {
  std::ostream& out;
  std::function<void(const std::string&)> warn = [](const std::string&) {};
  std::function<void(const std::string&)> error = [](const std::string&) {};
};

namespace detail {

/// 12 significant digits; non-finite values become null.
inline Json number(double x) {
  if (!std::isfinite(x)) return nullptr;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", x);
  const double rounded = std::stod(buf);
  return rounded == 0.0 ? 0.0 : rounded;
}

inline Json numbers(const Vector& v) {
  Json a = Json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(number(v(i)));
  return a;
}

inline Json face_json(const Face& f) {
  Json a = Json::array();
  for (int x : f.members()) a.push_back(x);
  return a;
}

inline Json face_labels(const Face& f, const OutcomeSpace& space) {
  Json a = Json::array();
  for (int x : f.members()) a.push_back(space.label(x));
  return a;
}

inline std::string format_number(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", x == 0.0 ? 0.0 : x);
  return buf;
}

// The junction sample is stored once, at the end of the earlier segment.
inline double segment_start_budget(const SolutionPath& path, std::size_t k) {
  return k == 0 ? path.segments[0].samples.front().budget : path.segments[k - 1].samples.back().budget;
}

inline std::string format_vector(const Vector& v) {
  std::string s = "(";
  for (Index i = 0; i < v.size(); ++i) s += (i ? ", " : "") + format_number(v(i));
  return s + ")";
}

inline std::string format_face(const Face& f, const OutcomeSpace& space) {
  std::string s = "{";
  for (std::size_t k = 0; k < f.size(); ++k) s += (k ? "," : "") + space.label(f.members()[k]);
  return s + "}";
}

inline SolverOptions solver_options(const Scenario& s) {
  SolverOptions opt;
  if (s.tolerances.solver) opt.tol = *s.tolerances.solver;
  if (s.tolerances.tight) opt.tight_tol = *s.tolerances.tight;
  return opt;
}

inline Json solution_json(const TradeSolution& s, const ResolvedScenario& r, const Vector& q_start, double budget) {
  Json j = Json::object();
  j["budget"] = number(budget);
  j["q_hat"] = numbers(s.q_hat);
  j["nu_hat"] = numbers(s.nu_hat.nu);
  j["tight"] = face_json(s.tight);
  j["tight_labels"] = face_labels(s.tight, r.space);
  j["budget_used"] = number(s.budget_used);
  j["utility"] = number(s.utility);
  Json u = Json::array();
  for (Index k = 0; k < r.space.size(); ++k) u.push_back(number(utility(r.model, s.q_hat, r.space.outcome(k), q_start)));
  j["outcome_utilities"] = u;
  j["residuals"] = {{"stationarity", number(s.residuals.stationarity)},
                    {"feasibility", number(s.residuals.feasibility)},
                    {"complementarity", number(s.residuals.complementarity)}};
  j["warnings"] = s.warnings;
  return j;
}

inline Json report_json(const AdditivityReport& rep, const ResolvedScenario& r) {
  Json j = Json::object();
  j["additive"] = rep.additive;
  j["gap"] = number(rep.gap);
  j["tol"] = number(rep.tol);
  Json b = Json::array();
  for (double x : rep.budgets) b.push_back(number(x));
  j["budgets"] = b;
  j["q0"] = numbers(rep.q0);
  j["belief"] = numbers(rep.mu);
  j["price_sequential"] = numbers(rep.price_sequential.nu);
  j["price_combined"] = numbers(rep.price_combined.nu);
  Json seq = Json::array();
  Vector q = rep.q0;
  for (std::size_t k = 0; k < rep.sequential.size(); ++k) {
    seq.push_back(solution_json(rep.sequential[k], r, q, rep.budgets[k]));
    q = rep.sequential[k].q_hat;
  }
  j["sequential"] = seq;
  double total = 0.0;
  for (double x : rep.budgets) total += x;
  j["combined"] = solution_json(rep.combined, r, rep.q0, total);
  return j;
}

inline Json verdict_json(const AcuteVerdict& v, const OutcomeSpace* space) {
  Json j = Json::object();
  j["status"] = to_string(v.status);
  j["rule"] = v.rule;
  j["reason"] = v.reason;
  if (v.evidence) {
    const auto& e = *v.evidence;
    Json ev = Json::object();
    ev["face"] = face_json(e.face);
    if (space) ev["face_labels"] = face_labels(e.face, *space);
    ev["anchor"] = numbers(e.anchor);
    Json pts = Json::array();
    for (Index c = 0; c < e.projected.cols(); ++c) pts.push_back(numbers(e.projected.col(c)));
    ev["projected"] = pts;
    if (e.first >= 0) ev["pair"] = {e.first, e.second};
    if (space && e.first >= 0) ev["pair_labels"] = {space->label(e.first), space->label(e.second)};
    ev["dot"] = number(e.dot);
    j["evidence"] = ev;
  }
  if (!v.blocks.empty()) {
    Json bs = Json::array();
    for (const auto& b : v.blocks) bs.push_back(verdict_json(b, nullptr));
    j["blocks"] = bs;
  }
  j["warnings"] = v.warnings;
  return j;
}

/// Runs `body`, mapping library errors onto exit codes.
template <typename Body>
int guarded(CommandIo& io, Body&& body) {
  try {
    return body();
  } catch (const InputError& e) {
    io.error(e.what());
    return exit_invalid;
  } catch (const DomainError& e) {
    io.error(e.what());
    return exit_invalid;
  } catch (const Error& e) {
    io.error(e.what());
    return exit_solver;
  }
}

inline std::vector<double> budgets_of(const Scenario& s, const CommandOptions& opt) {
  return opt.budgets ? *opt.budgets : s.budgets;
}

}  // namespace detail

/// One JSON line per budget.
inline int run_solve(const Scenario& scenario, const CommandOptions& opt, CommandIo& io) {
  return detail::guarded(io, [&] {
    const ResolvedScenario r = resolve_scenario(scenario);
    const SolverOptions sopt = detail::solver_options(scenario);
    validate_problem(TradeProblem{r.model, r.space, r.q0, r.mu, 0.0}, sopt.cost);
    const auto budgets = detail::budgets_of(scenario, opt);
    for (double b : budgets) {
      if (!(b >= 0.0)) throw InputError("solve: budgets must be non-negative");
    }
    for (double b : budgets) {
      const TradeSolution s = solve_generic(TradeProblem{r.model, r.space, r.q0, r.mu, b}, sopt);
      for (const auto& w : s.warnings) io.warn(w);
      io.out << detail::solution_json(s, r, r.q0, b).dump() << '\n';
    }
    return int{exit_ok};
  });
}

inline int run_path(const Scenario& scenario, const CommandOptions& opt, CommandIo& io) {
  return detail::guarded(io, [&] {
    const ResolvedScenario r = resolve_scenario(scenario);
    PathOptions popt;
    popt.samples_per_segment = opt.samples;
    const SolutionPath path = trace_path(r.model, r.space, r.q0, r.mu, popt);
    for (const auto& v : path.acute_violations) {
      io.warn("acute-angle violation on segment " + std::to_string(v.segment) + " (lambda " +
              detail::format_number(v.lambda) + "): " + v.message);
    }
    if (opt.csv_out) {
      std::ofstream csv(*opt.csv_out);
      if (!csv) throw InputError("path: cannot write " + *opt.csv_out);
      write_path_csv(csv, path);
    }
    if (opt.json) {
      Json j = Json::object();
      Json segs = Json::array();
      for (std::size_t k = 0; k < path.segments.size(); ++k) {
        const auto& seg = path.segments[k];
        segs.push_back({{"face", detail::face_json(seg.face)},
                        {"face_labels", detail::face_labels(seg.face, r.space)},
                        {"start", detail::numbers(seg.start)},
                        {"end", detail::numbers(seg.end)},
                        {"lambda_start", detail::number(seg.lambda_start)},
                        {"lambda_end", detail::number(seg.lambda_end)},
                        {"budget_start", detail::number(detail::segment_start_budget(path, k))},
                        {"budget_end", detail::number(seg.samples.back().budget)}});
      }
      j["segments"] = segs;
      j["terminal"] = detail::numbers(path.terminal);
      j["total_budget"] = detail::number(path.total_budget());
      Json viol = Json::array();
      for (const auto& v : path.acute_violations)
        viol.push_back({{"segment", v.segment}, {"lambda", detail::number(v.lambda)}, {"message", v.message}});
      j["acute_violations"] = viol;
      j["authoritative"] = path.authoritative();
      io.out << j.dump(2) << '\n';
    } else {
      io.out << "segments: " << path.segments.size() << '\n';
      for (std::size_t k = 0; k < path.segments.size(); ++k) {
        const auto& seg = path.segments[k];
        io.out << "  " << k << ": face " << detail::format_face(seg.face, r.space) << "  "
               << detail::format_vector(seg.start) << " -> " << detail::format_vector(seg.end) << "  budget "
               << detail::format_number(detail::segment_start_budget(path, k)) << " -> "
               << detail::format_number(seg.samples.back().budget) << '\n';
      }
      io.out << "total budget: " << detail::format_number(path.total_budget()) << '\n';
      io.out << "acute violations: " << path.acute_violations.size() << '\n';
    }
    return int{exit_ok};
  });
}

inline int run_additivity(const Scenario& scenario, const CommandOptions& opt, CommandIo& io) {
  return detail::guarded(io, [&] {
    const auto budgets = detail::budgets_of(scenario, opt);
    if (budgets.size() < 2) throw InputError("additivity: at least two budgets are required");
    const ResolvedScenario r = resolve_scenario(scenario);
    const double tol = opt.tol.value_or(scenario.tolerances.additivity.value_or(kDefaultAdditivityTol));
    const auto rep =
        check_budget_additivity(r.model, r.space, r.q0, r.mu, budgets, tol, detail::solver_options(scenario));
    if (opt.json) {
      io.out << detail::report_json(rep, r).dump(2) << '\n';
    } else {
      io.out << (rep.additive ? "additive" : "not additive") << '\n';
      for (std::size_t k = 0; k < rep.sequential.size(); ++k) {
        io.out << "  after budget " << detail::format_number(rep.budgets[k]) << ": "
               << detail::format_vector(rep.sequential[k].nu_hat.nu) << '\n';
      }
      io.out << "sequential price: " << detail::format_vector(rep.price_sequential.nu) << '\n';
      io.out << "combined price:   " << detail::format_vector(rep.price_combined.nu) << '\n';
      io.out << "gap: " << detail::format_number(rep.gap) << " (tolerance " << detail::format_number(rep.tol) << ")\n";
    }
    return int{exit_ok};
  });
}

inline int run_certify(const Scenario& scenario, const CommandOptions& opt, CommandIo& io) {
  return detail::guarded(io, [&] {
    const OutcomeSpace space = scenario.outcomes.build();
    const CostModel model = scenario.cost.build(&space);
    const AcuteVerdict v = certify_sufficient_conditions(model, space);
    for (const auto& w : v.warnings) io.warn(w);
    if (opt.json) {
      io.out << detail::verdict_json(v, &space).dump(2) << '\n';
    } else {
      io.out << to_string(v.status) << " (" << v.rule << "): " << v.reason << '\n';
      if (v.evidence && v.status == AcuteStatus::refuted_face) {
        const auto& e = *v.evidence;
        io.out << "  face " << detail::format_face(e.face, space) << ", outcomes " << space.label(e.first) << " and "
               << space.label(e.second) << ", dot product " << detail::format_number(e.dot) << '\n';
      }
      for (std::size_t k = 0; k < v.blocks.size(); ++k)
        io.out << "  block " << k << ": " << to_string(v.blocks[k].status) << " (" << v.blocks[k].rule << ")\n";
    }
    return int{exit_ok};
  });
}

inline int run_search(const Scenario& scenario, const CommandOptions& opt, CommandIo& io) {
  return detail::guarded(io, [&] {
    if (opt.trials < 1) throw InputError("search: trials must be at least 1");
    const OutcomeSpace space = scenario.outcomes.build();
    const CostModel model = scenario.cost.build(&space);
    SearchOptions sopt;
    sopt.tol = opt.tol.value_or(scenario.tolerances.additivity.value_or(kDefaultAdditivityTol));
    sopt.workers = opt.workers;
    sopt.solver = detail::solver_options(scenario);
    const std::uint64_t seed = opt.seed.value_or(scenario.seed.value_or(0));
    const auto found = randomized_counterexample_search(model, space, opt.trials, seed, sopt);
    if (opt.json) {
      Json j = Json::object();
      j["trials"] = opt.trials;
      j["seed"] = seed;
      j["found"] = found.has_value();
      if (found) {
        const ResolvedScenario r{space, model, found->q0, found->mu};
        j["report"] = detail::report_json(*found, r);
      }
      io.out << j.dump(2) << '\n';
    } else if (found) {
      io.out << "counterexample found: gap " << detail::format_number(found->gap) << '\n';
      io.out << "  q0 " << detail::format_vector(found->q0) << ", belief " << detail::format_vector(found->mu)
             << ", budgets " << detail::format_number(found->budgets[0]) << " + "
             << detail::format_number(found->budgets[1]) << '\n';
    } else {
      io.out << "no counterexample in " << opt.trials << " trials (seed " << seed << ")\n";
    }
    return int{exit_ok};
  });
}

}  // namespace bregman_market

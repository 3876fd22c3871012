#pragma once

// JSON scenario files: outcome space, cost, initial state, belief, budgets.
// Requires nlohmann/json.

#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "costs.hpp"
#include "errors.hpp"
#include "geometry.hpp"

namespace bregman_market {

using Json = nlohmann::ordered_json;

/// Outcome space as written in a scenario: explicit points, or a generator.
struct OutcomeSpec {
  enum class Form { points, simplex, hypercube, product };
  Form form = Form::points;
  Index dim = 0;
  std::vector<std::vector<double>> points;
  std::vector<std::string> labels;
  std::vector<OutcomeSpec> factors;

  OutcomeSpace build() const {
    switch (form) {
      case Form::simplex: return OutcomeSpace::simplex(dim);
      case Form::hypercube: return OutcomeSpace::hypercube(dim);
      case Form::product: {
        std::vector<OutcomeSpace> built;
        for (const auto& f : factors) built.push_back(f.build());
        return OutcomeSpace::product(built);
      }
      case Form::points: {
        for (const auto& p : points) {
          if (static_cast<Index>(p.size()) != dim) {
            throw InputError("scenario: outcome has " + std::to_string(p.size()) + " coordinates, expected " +
                             std::to_string(dim));
          }
        }
        return OutcomeSpace::from_rows(points, labels);
      }
    }
    throw InputError("scenario: unknown outcome form");
  }
};

struct CostSpec {
  CostKind kind = CostKind::quadratic;
  std::optional<double> liquidity;
  std::optional<Index> dim;
  std::optional<OutcomeSpec> outcomes;
  std::vector<CostSpec> blocks;

  /// `space` supplies the default dimension and log-partition outcomes at top level.
  CostModel build(const OutcomeSpace* space) const {
    const double b = liquidity.value_or(1.0);
    auto resolved_dim = [&]() -> Index {
      if (dim) {
        if (space && *dim != space->dim()) throw InputError("scenario: cost dim does not match the outcome space");
        return *dim;
      }
      if (!space) throw InputError("scenario: cost block needs \"dim\"");
      return space->dim();
    };
    switch (kind) {
      case CostKind::quadratic: return CostModel::quadratic(resolved_dim(), b);
      case CostKind::lmsr: return CostModel::lmsr(resolved_dim(), b);
      case CostKind::log_partition: {
        if (outcomes) return CostModel::log_partition(outcomes->build(), b);
        if (!space) throw InputError("scenario: log_partition block needs \"outcomes\"");
        return CostModel::log_partition(*space, b);
      }
      case CostKind::direct_sum: {
        if (blocks.empty()) throw InputError("scenario: direct_sum needs blocks");
        std::vector<CostModel> built;
        for (const auto& blk : blocks) built.push_back(blk.build(nullptr));
        return CostModel::direct_sum(std::move(built));
      }
    }
    throw InputError("scenario: unknown cost kind");
  }
};

struct ScenarioTolerances {
  std::optional<double> additivity;
  std::optional<double> kkt;
  std::optional<double> solver;
  std::optional<double> tight;
};

struct Scenario {
  std::string name;
  std::optional<std::string> description;
  OutcomeSpec outcomes;
  CostSpec cost;
  std::optional<std::vector<double>> initial_state;
  std::optional<std::vector<double>> initial_price;
  std::vector<double> belief;
  std::vector<double> budgets;
  ScenarioTolerances tolerances;
  std::optional<std::uint64_t> seed;
};

/// Built objects for a validated scenario; q0 is resolved from the initial
/// price when only that is given.
struct ResolvedScenario {
  OutcomeSpace space;
  CostModel model;
  Vector q0;
  Vector mu;
};

namespace detail {

inline const Json& require_field(const Json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw InputError("scenario: missing \"" + std::string(key) + "\" in " + where);
  return j.at(key);
}

inline double as_number(const Json& j, const std::string& where) {
  if (!j.is_number()) throw InputError("scenario: expected a number at " + where);
  return j.get<double>();
}

inline Index as_count(const Json& j, const std::string& where) {
  if (!j.is_number_integer() || j.get<long long>() < 1) throw InputError("scenario: expected a positive integer at " + where);
  return static_cast<Index>(j.get<long long>());
}

inline std::vector<double> as_numbers(const Json& j, const std::string& where) {
  if (!j.is_array()) throw InputError("scenario: expected an array at " + where);
  std::vector<double> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(as_number(j[i], where + "[" + std::to_string(i) + "]"));
  return out;
}

inline CostKind parse_kind(const std::string& s) {
  if (s == "quadratic") return CostKind::quadratic;
  if (s == "lmsr") return CostKind::lmsr;
  if (s == "log_partition") return CostKind::log_partition;
  if (s == "direct_sum") return CostKind::direct_sum;
  throw InputError("scenario: unknown cost kind \"" + s + "\"");
}

inline OutcomeSpec parse_outcomes(const Json& j, const std::string& where) {
  if (!j.is_object()) throw InputError("scenario: expected an object at " + where);
  OutcomeSpec spec;
  if (j.contains("simplex")) {
    spec.form = OutcomeSpec::Form::simplex;
    spec.dim = as_count(j.at("simplex"), where + ".simplex");
  } else if (j.contains("hypercube")) {
    spec.form = OutcomeSpec::Form::hypercube;
    spec.dim = as_count(j.at("hypercube"), where + ".hypercube");
  } else if (j.contains("product")) {
    spec.form = OutcomeSpec::Form::product;
    const Json& fs = j.at("product");
    if (!fs.is_array() || fs.empty()) throw InputError("scenario: product needs a non-empty array at " + where);
    for (std::size_t i = 0; i < fs.size(); ++i)
      spec.factors.push_back(parse_outcomes(fs[i], where + ".product[" + std::to_string(i) + "]"));
  } else {
    spec.form = OutcomeSpec::Form::points;
    spec.dim = as_count(require_field(j, "dim", where), where + ".dim");
    const Json& pts = require_field(j, "points", where);
    if (!pts.is_array()) throw InputError("scenario: points must be an array at " + where);
    for (std::size_t i = 0; i < pts.size(); ++i)
      spec.points.push_back(as_numbers(pts[i], where + ".points[" + std::to_string(i) + "]"));
    if (j.contains("labels")) {
      for (const auto& l : j.at("labels")) {
        if (!l.is_string()) throw InputError("scenario: labels must be strings at " + where);
        spec.labels.push_back(l.get<std::string>());
      }
    }
  }
  return spec;
}

inline CostSpec parse_cost(const Json& j, const std::string& where) {
  CostSpec spec;
  const Json& kind = require_field(j, "kind", where);
  if (!kind.is_string()) throw InputError("scenario: cost kind must be a string at " + where);
  spec.kind = parse_kind(kind.get<std::string>());
  if (j.contains("liquidity")) spec.liquidity = as_number(j.at("liquidity"), where + ".liquidity");
  if (j.contains("dim")) spec.dim = as_count(j.at("dim"), where + ".dim");
  if (j.contains("outcomes")) spec.outcomes = parse_outcomes(j.at("outcomes"), where + ".outcomes");
  if (spec.kind == CostKind::direct_sum) {
    const Json& bs = require_field(j, "blocks", where);
    if (!bs.is_array()) throw InputError("scenario: blocks must be an array at " + where);
    for (std::size_t i = 0; i < bs.size(); ++i)
      spec.blocks.push_back(parse_cost(bs[i], where + ".blocks[" + std::to_string(i) + "]"));
  }
  return spec;
}

inline Json outcomes_to_json(const OutcomeSpec& spec) {
  Json j = Json::object();
  switch (spec.form) {
    case OutcomeSpec::Form::simplex: j["simplex"] = spec.dim; break;
    case OutcomeSpec::Form::hypercube: j["hypercube"] = spec.dim; break;
    case OutcomeSpec::Form::product: {
      j["product"] = Json::array();
      for (const auto& f : spec.factors) j["product"].push_back(outcomes_to_json(f));
      break;
    }
    case OutcomeSpec::Form::points:
      j["dim"] = spec.dim;
      j["points"] = spec.points;
      if (!spec.labels.empty()) j["labels"] = spec.labels;
      break;
  }
  return j;
}

inline Json cost_to_json(const CostSpec& spec) {
  Json j = Json::object();
  j["kind"] = to_string(spec.kind);
  if (spec.dim) j["dim"] = *spec.dim;
  if (spec.liquidity) j["liquidity"] = *spec.liquidity;
  if (spec.outcomes) j["outcomes"] = outcomes_to_json(*spec.outcomes);
  if (spec.kind == CostKind::direct_sum) {
    j["blocks"] = Json::array();
    for (const auto& b : spec.blocks) j["blocks"].push_back(cost_to_json(b));
  }
  return j;
}

}  // namespace detail

inline Scenario parse_scenario(const Json& j) {
  if (!j.is_object()) throw InputError("scenario: top level must be an object");
  Scenario s;
  if (j.contains("name")) s.name = j.at("name").get<std::string>();
  if (j.contains("description")) s.description = j.at("description").get<std::string>();
  s.outcomes = detail::parse_outcomes(detail::require_field(j, "outcomes", "scenario"), "outcomes");
  s.cost = detail::parse_cost(detail::require_field(j, "cost", "scenario"), "cost");
  if (j.contains("initial_state")) s.initial_state = detail::as_numbers(j.at("initial_state"), "initial_state");
  if (j.contains("initial_price")) s.initial_price = detail::as_numbers(j.at("initial_price"), "initial_price");
  s.belief = detail::as_numbers(detail::require_field(j, "belief", "scenario"), "belief");
  if (j.contains("budgets")) s.budgets = detail::as_numbers(j.at("budgets"), "budgets");
  if (j.contains("tolerances")) {
    const Json& t = j.at("tolerances");
    auto opt = [&](const char* key, std::optional<double>& dst) {
      if (t.contains(key)) dst = detail::as_number(t.at(key), std::string("tolerances.") + key);
    };
    opt("additivity", s.tolerances.additivity);
    opt("kkt", s.tolerances.kkt);
    opt("solver", s.tolerances.solver);
    opt("tight", s.tolerances.tight);
  }
  if (j.contains("seed")) {
    if (!j.at("seed").is_number_unsigned()) throw InputError("scenario: seed must be a non-negative integer");
    s.seed = j.at("seed").get<std::uint64_t>();
  }
  return s;
}

inline Scenario parse_scenario(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw InputError(std::string("scenario: invalid JSON: ") + e.what());
  }
  try {
    return parse_scenario(j);
  } catch (const Json::exception& e) {
    throw InputError(std::string("scenario: ") + e.what());
  }
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("scenario: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str());
}

inline Json scenario_to_json(const Scenario& s) {
  Json j = Json::object();
  if (!s.name.empty()) j["name"] = s.name;
  if (s.description) j["description"] = *s.description;
  j["outcomes"] = detail::outcomes_to_json(s.outcomes);
  j["cost"] = detail::cost_to_json(s.cost);
  if (s.initial_state) j["initial_state"] = *s.initial_state;
  if (s.initial_price) j["initial_price"] = *s.initial_price;
  j["belief"] = s.belief;
  j["budgets"] = s.budgets;
  Json t = Json::object();
  if (s.tolerances.additivity) t["additivity"] = *s.tolerances.additivity;
  if (s.tolerances.kkt) t["kkt"] = *s.tolerances.kkt;
  if (s.tolerances.solver) t["solver"] = *s.tolerances.solver;
  if (s.tolerances.tight) t["tight"] = *s.tolerances.tight;
  if (!t.empty()) j["tolerances"] = t;
  if (s.seed) j["seed"] = *s.seed;
  return j;
}

/// Canonical text: fields in schema order, two-space indent, trailing newline.
inline std::string serialize_scenario(const Scenario& s) { return scenario_to_json(s).dump(2) + "\n"; }

inline Vector to_vector(const std::vector<double>& xs) {
  Vector v(static_cast<Index>(xs.size()));
  for (Index i = 0; i < v.size(); ++i) v(i) = xs[static_cast<std::size_t>(i)];
  return v;
}

/// Builds the space and cost, checks dimensions and budgets, and resolves q0.
inline ResolvedScenario resolve_scenario(const Scenario& s) {
  OutcomeSpace space = s.outcomes.build();
  CostModel model = s.cost.build(&space);
  if (model.dim() != space.dim()) throw InputError("scenario: cost dimension does not match the outcome space");
  if (s.initial_state.has_value() == s.initial_price.has_value()) {
    throw InputError("scenario: give exactly one of initial_state and initial_price");
  }
  for (double b : s.budgets) {
    if (!(b >= 0.0) || !std::isfinite(b)) throw InputError("scenario: budgets must be finite and non-negative");
  }
  const Vector mu = to_vector(s.belief);
  linalg::require_dim(mu, space.dim(), "scenario belief");
  Vector q0;
  if (s.initial_state) {
    q0 = to_vector(*s.initial_state);
    linalg::require_dim(q0, space.dim(), "scenario initial_state");
  } else {
    const Vector nu0 = to_vector(*s.initial_price);
    linalg::require_dim(nu0, space.dim(), "scenario initial_price");
    q0 = model.inverse_price(nu0);
  }
  return ResolvedScenario{std::move(space), std::move(model), std::move(q0), mu};
}

}  // namespace bregman_market

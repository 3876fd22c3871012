#pragma once

// Shared fixtures for the test suite.

#include <cmath>
#include <random>
#include <vector>

#include "bregman_market/geometry.hpp"

namespace test_support {

using bregman_market::Index;
using bregman_market::Matrix;
using bregman_market::OutcomeSpace;
using bregman_market::Vector;

inline Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Index>(xs.size()));
  Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

/// {0,1}^2 ordered w00, w10, w01, w11.
inline OutcomeSpace unit_square() {
  return OutcomeSpace::from_rows({{0, 0}, {1, 0}, {0, 1}, {1, 1}}, {"w00", "w10", "w01", "w11"});
}

/// The obtuse triangle w1 = (0,0), w2 = (1.8,0), w3 = (6,4.2).
inline OutcomeSpace obtuse_triangle() {
  return OutcomeSpace::from_rows({{0, 0}, {1.8, 0}, {6, 4.2}}, {"w1", "w2", "w3"});
}

/// Random outcome space with m distinct points in R^n (Gaussian coordinates).
inline OutcomeSpace random_space(std::mt19937_64& rng, Index n, Index m) {
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix pts(n, m);
  for (Index j = 0; j < m; ++j)
    for (Index i = 0; i < n; ++i) pts(i, j) = g(rng);
  return OutcomeSpace(pts);
}

/// Random point of conv(Omega) with Dirichlet(1) weights.
inline Vector random_hull_point(std::mt19937_64& rng, const OutcomeSpace& space) {
  std::exponential_distribution<double> e(1.0);
  Vector w(space.size());
  for (Index j = 0; j < space.size(); ++j) w(j) = e(rng);
  return space.points() * (w / w.sum());
}

/// Every subset of {0..m-1} as a Face (m small).
inline std::vector<bregman_market::Face> all_subsets(Index m) {
  std::vector<bregman_market::Face> out;
  for (Index mask = 0; mask < (Index{1} << m); ++mask) {
    std::vector<int> members;
    for (Index i = 0; i < m; ++i)
      if (mask & (Index{1} << i)) members.push_back(static_cast<int>(i));
    out.emplace_back(std::move(members));
  }
  return out;
}

}  // namespace test_support

#include "bregman_market/trader.hpp"

namespace test_support {

using bregman_market::CostModel;
using bregman_market::TradeProblem;

inline Vector dirichlet_point(std::mt19937_64& rng, const OutcomeSpace& space, double floor = 0.05) {
  std::uniform_real_distribution<double> u(floor, 1.0);
  Vector w(space.size());
  for (Index j = 0; j < space.size(); ++j) w(j) = u(rng);
  return space.points() * (w / w.sum());
}

/// Random two-dimensional trade problem of the given kind with a budget
/// strictly below the unconstrained requirement D(q0, mu).
inline TradeProblem random_planar_problem(std::mt19937_64& rng, bregman_market::CostKind kind) {
  using bregman_market::CostKind;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> count(3, 5);
  auto planar = [&](int m) { return random_space(rng, 2, m); };
  std::optional<CostModel> model;
  std::optional<OutcomeSpace> space;
  switch (kind) {
    case CostKind::quadratic:
      space = planar(count(rng));
      model = CostModel::quadratic(2, 0.5 + unit(rng));
      break;
    case CostKind::lmsr:
      space = OutcomeSpace::simplex(2);
      model = CostModel::lmsr(2, 0.5 + unit(rng));
      break;
    case CostKind::log_partition:
      space = planar(count(rng));
      model = CostModel::log_partition(*space, 0.5 + unit(rng));
      break;
    case CostKind::direct_sum: {
      const auto a = OutcomeSpace::from_rows({{0}, {1}});
      const auto b = OutcomeSpace::from_rows({{-0.5}, {1.0}});
      space = OutcomeSpace::product({a, b});
      model = CostModel::direct_sum({CostModel::quadratic(1), CostModel::log_partition(b)});
      break;
    }
  }
  TradeProblem p{*model, *space, Vector(), Vector(), 0.0};
  const Vector nu0 = dirichlet_point(rng, *space);
  p.q0 = model->inverse_price(nu0);
  p.mu = dirichlet_point(rng, *space);
  const double full = bregman_market::divergence(*model, p.q0, p.mu);
  p.budget = (0.05 + 0.85 * unit(rng)) * full;
  return p;
}

}  // namespace test_support

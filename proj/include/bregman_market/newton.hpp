#pragma once

#include <cmath>
#include <limits>

#include "linalg.hpp"

namespace bregman_market {

struct NewtonOptions {
  int max_iterations = 200;
  /// Converged when the gradient norm drops to this value.
  double gradient_tol = 1e-11;
  double armijo = 1e-4;
  /// Iterates leaving this ball are treated as divergence (objective unbounded
  /// below or infimum not attained).
  double max_norm = 1e8;
};

struct NewtonResult {
  Vector x;
  double value = 0.0;
  double gradient_norm = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
};

/// Evaluation of a smooth convex objective at one point.
struct Evaluation {
  double value = 0.0;
  Vector gradient;
  Matrix hessian;
};

/// Damped Newton with Armijo backtracking. `objective(x, with_derivatives)`
/// returns an Evaluation; gradient and hessian may be left empty when
/// `with_derivatives` is false.
template <typename Objective>
NewtonResult minimize_newton(Objective&& objective, Vector x, const NewtonOptions& options = {}) {
  NewtonResult result;
  Evaluation current = objective(x, true);
  for (int it = 0; it < options.max_iterations; ++it) {
    result.iterations = it;
    const double gnorm = current.gradient.norm();
    if (!std::isfinite(gnorm) || !std::isfinite(current.value)) break;
    if (gnorm <= options.gradient_tol) {
      result.converged = true;
      break;
    }
    Vector step = -linalg::solve_psd(current.hessian, current.gradient);
    double slope = current.gradient.dot(step);
    if (!step.allFinite() || slope >= 0.0) {
      step = -current.gradient;
      slope = -gnorm * gnorm;
    }
    double t = 1.0;
    Evaluation trial;
    bool accepted = false;
    // Predicted decrease below rounding of the objective value: the
    // function values can no longer arbitrate, so take the full step.
    if (-slope <= 1e-13 * (1.0 + std::abs(current.value))) accepted = true;
    for (int ls = 0; ls < 60 && !accepted; ++ls) {
      trial = objective(x + t * step, false);
      if (std::isfinite(trial.value) && trial.value <= current.value + options.armijo * t * slope) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      // No decrease representable in floating point: accept if the gradient
      // is already at rounding level, otherwise report failure.
      break;
    }
    x += t * step;
    if (x.norm() > options.max_norm) break;
    current = objective(x, true);
  }
  result.x = x;
  result.value = current.value;
  result.gradient_norm = current.gradient.norm();
  if (result.gradient_norm <= options.gradient_tol) result.converged = true;
  return result;
}

}  // namespace bregman_market

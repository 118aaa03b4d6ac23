#pragma once

#include <functional>
#include <optional>

#include "heavyrl/linalg.hpp"

namespace heavyrl {

/// Objective callback: returns the value at `x` and writes the gradient into
/// `grad` (already sized to the problem dimension).
using ObjectiveFn = std::function<double(const Vector& x, Vector& grad)>;

/// A strongly convex, smooth objective restricted to the ball ||x|| <= ball_radius.
///
/// When `metric` is set the method runs in the geometry of that SPD matrix P:
/// steps are x+ = argmin_{||x||<=R} <g, x> + (smoothness/2) ||x - y||_P^2 and
/// `smoothness` must bound the Hessian relative to P (Hessian <= smoothness * P).
/// Without a metric, `smoothness` is the Euclidean gradient-Lipschitz constant.
struct SolveProblem {
  int dim = 1;
  double ball_radius = 1.0;
  double lambda = 1.0;
  ObjectiveFn objective;
  double smoothness = 1.0;
  double tol = 1e-8;
  int max_iters = 10000;
  std::optional<Vector> warm_start;
  std::optional<Matrix> metric;

  void validate() const;
};

struct SolveResult {
  Vector solution;
  int iterations = 0;
  /// Norm of the gradient mapping x - Proj(x - grad / smoothness) at the
  /// solution, measured in the working metric.
  double final_grad_gap = 0.0;
  double objective = 0.0;
  bool converged = false;
};

/// Projected accelerated gradient with function-value restarts. Iterates are
/// monotone in objective value; non-finite gradients raise std::runtime_error.
SolveResult solve(const SolveProblem& problem);

/// Euclidean projection onto the ball of the given radius.
Vector project_ball(const Vector& x, double radius);

/// argmin_{||x|| <= radius} ||x - v||_P for P = Q diag(evals) Q^T.
Vector project_ball_in_metric(const Vector& v, double radius, const Matrix& eigvecs,
                              const Vector& eigvals);

}  // namespace heavyrl

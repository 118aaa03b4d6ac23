#include "heavyrl/solver.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace heavyrl {

void SolveProblem::validate() const {
  if (dim < 1) throw std::invalid_argument("SolveProblem.dim must be >= 1");
  if (!(ball_radius > 0.0)) throw std::invalid_argument("SolveProblem.ball_radius must be positive");
  if (!(lambda > 0.0)) throw std::invalid_argument("SolveProblem.lambda must be positive");
  if (!objective) throw std::invalid_argument("SolveProblem.objective is empty");
  if (!(tol > 0.0)) throw std::invalid_argument("SolveProblem.tol must be positive");
  if (max_iters < 1) throw std::invalid_argument("SolveProblem.max_iters must be >= 1");
  if (!metric && !(smoothness >= lambda)) {
    throw std::invalid_argument("SolveProblem.smoothness must be >= lambda");
  }
  if (!(smoothness > 0.0)) throw std::invalid_argument("SolveProblem.smoothness must be positive");
  if (warm_start) {
    if (warm_start->size() != dim) throw std::invalid_argument("warm start has wrong dimension");
    if (warm_start->norm() > ball_radius + 1e-12) {
      throw std::invalid_argument("warm start lies outside the feasible ball");
    }
  }
  if (metric && (metric->rows() != dim || metric->cols() != dim)) {
    throw std::invalid_argument("metric has wrong shape");
  }
}

Vector project_ball(const Vector& x, double radius) {
  const double n = x.norm();
  if (n <= radius) return x;
  return x * (radius / n);
}

Vector project_ball_in_metric(const Vector& v, double radius, const Matrix& eigvecs,
                              const Vector& eigvals) {
  if (v.norm() <= radius) return v;
  const Vector c = eigvecs.transpose() * v;
  auto norm_at = [&](double mu) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < c.size(); ++i) {
      const double xi = eigvals[i] * c[i] / (eigvals[i] + mu);
      s += xi * xi;
    }
    return std::sqrt(s);
  };
  // ||x(mu)|| decreases monotonically in mu; bracket the root of ||x(mu)|| = radius.
  double lo = 0.0;
  double hi = eigvals.maxCoeff() * v.norm() / radius;
  for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, hi); ++it) {
    const double mid = 0.5 * (lo + hi);
    if (norm_at(mid) > radius) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  Vector scaled(c.size());
  for (Eigen::Index i = 0; i < c.size(); ++i) scaled[i] = eigvals[i] * c[i] / (eigvals[i] + hi);
  return project_ball(eigvecs * scaled, radius);
}

namespace {

class Geometry {
 public:
  Geometry(const SolveProblem& p) : radius_(p.ball_radius), step_(1.0 / p.smoothness) {
    if (p.metric) {
      Eigen::SelfAdjointEigenSolver<Matrix> es(*p.metric);
      if (es.info() != Eigen::Success || es.eigenvalues().minCoeff() <= 0.0) {
        throw std::invalid_argument("solver metric must be symmetric positive definite");
      }
      eigvecs_ = es.eigenvectors();
      eigvals_ = es.eigenvalues();
      metric_ = *p.metric;
      has_metric_ = true;
    }
  }

  // Proximal-gradient step from y along gradient g.
  Vector step(const Vector& y, const Vector& g) const {
    if (!has_metric_) return project_ball(y - step_ * g, radius_);
    const Vector pg = eigvecs_ * ((eigvecs_.transpose() * g).array() / eigvals_.array()).matrix();
    return project_ball_in_metric(y - step_ * pg, radius_, eigvecs_, eigvals_);
  }

  double norm(const Vector& x) const {
    if (!has_metric_) return x.norm();
    return std::sqrt(std::max(0.0, x.dot(metric_ * x)));
  }

  // Strong convexity relative to the working metric.
  double relative_modulus(double lambda) const {
    if (!has_metric_) return lambda;
    return lambda / eigvals_.maxCoeff();
  }

 private:
  double radius_;
  double step_;
  bool has_metric_ = false;
  Matrix eigvecs_;
  Vector eigvals_;
  Matrix metric_;
};

double evaluate(const SolveProblem& p, const Vector& x, Vector& grad, int iteration) {
  const double value = p.objective(x, grad);
  if (!std::isfinite(value) || !grad.allFinite()) {
    throw std::runtime_error("solver: non-finite objective or gradient at iteration " +
                             std::to_string(iteration));
  }
  return value;
}

}  // namespace

SolveResult solve(const SolveProblem& problem) {
  problem.validate();
  const Geometry geo(problem);
  const int d = problem.dim;

  Vector x = problem.warm_start ? project_ball(*problem.warm_start, problem.ball_radius)
                                : Vector::Zero(d);
  Vector gx(d);
  double fx = evaluate(problem, x, gx, 0);

  const double mu = std::min(geo.relative_modulus(problem.lambda), problem.smoothness);
  const double momentum = (std::sqrt(problem.smoothness) - std::sqrt(mu)) /
                          (std::sqrt(problem.smoothness) + std::sqrt(mu));

  SolveResult result;
  auto gap_at = [&](const Vector& point, const Vector& grad) {
    return geo.norm(point - geo.step(point, grad));
  };

  // Objective differences near the optimum are of order gap^2 and fall below
  // rounding; steps within this slack still count as descent.
  auto slack = [](double f) { return 1e-13 * (1.0 + std::abs(f)); };
  const Vector start = x;
  const double f_start = fx;

  double gap = gap_at(x, gx);
  Vector y = x;
  Vector gy = gx;
  Vector x_next(d);
  Vector g_next(d);
  int iter = 0;
  while (gap > problem.tol && iter < problem.max_iters) {
    ++iter;
    x_next = geo.step(y, gy);
    double f_next = evaluate(problem, x_next, g_next, iter);
    if (f_next > fx + slack(fx)) {
      // Restart: drop momentum and take a plain projected step from x.
      x_next = geo.step(x, gx);
      f_next = evaluate(problem, x_next, g_next, iter);
      if (f_next > fx + slack(fx)) break;
      y = x_next;
      gy = g_next;
    } else {
      y = x_next + momentum * (x_next - x);
      if (y.norm() > problem.ball_radius) y = project_ball(y, problem.ball_radius);
      evaluate(problem, y, gy, iter);
    }
    x = x_next;
    gx = g_next;
    fx = f_next;
    gap = gap_at(x, gx);
  }
  if (fx > f_start) {
    x = start;
    fx = f_start;
    evaluate(problem, x, gx, iter);
    gap = gap_at(x, gx);
  }

  result.solution = x;
  result.iterations = iter;
  result.final_grad_gap = gap;
  result.objective = fx;
  result.converged = gap <= problem.tol;
  return result;
}

}  // namespace heavyrl

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "heavyrl/ellipsoid.hpp"
#include "heavyrl/huber.hpp"
#include "heavyrl/linalg.hpp"
#include "heavyrl/solver.hpp"

namespace heavyrl {

struct HuberFitOptions {
  double tol = 1e-8;
  int max_iters = 10000;
  /// Run the solver in the geometry of the precision matrix. The Huber
  /// Hessian is dominated by the Gram matrix, so smoothness is exactly 1 there.
  /// When false the solver uses the Euclidean bound lambda + sum |phi|^2/sigma^2.
  bool precondition = true;
};

/// Terms of the weighted Huber objective
///   lambda/2 |theta|^2 + sum_s l_{tau_s}((target_s - <phi_s, theta>) / sigma_s).
struct HuberTerms {
  std::span<const Vector> phis;
  std::span<const double> targets;
  std::span<const double> sigmas;
  std::span<const double> taus;
};

/// Minimizes the weighted Huber objective over the ball of `radius`.
/// `precision` must hold lambda I + sum_s phi_s phi_s^T / sigma_s^2 for the same terms.
SolveResult huber_argmin(const HuberTerms& terms, const PrecisionState& precision,
                         double radius, const Vector& warm_start,
                         const HuberFitOptions& options = {});

/// Direct evaluation of the objective (no aggregation), for diagnostics and tests.
double huber_objective(const HuberTerms& terms, double lambda, const Vector& theta);

/// beta_t = 3 sqrt(lambda) B
///        + 24 t^e sqrt(2 kappa) b (log 3T)^e (log 2T^2/delta)^{eps/(1+eps)},
/// e = (1 - eps) / (2 (1 + eps)); the second term vanishes at t = 0.
double huber_confidence_radius(const HuberScheduleConfig& schedule, double lambda,
                               std::int64_t t);

struct HuberObservation {
  Vector phi;
  double y = 0.0;
  double sigma = 1.0;
  double tau = 1.0;
};

struct ObserveResult {
  double sigma = 0.0;
  double tau = 0.0;
  double w = 0.0;
};

struct RecordResult {
  ObserveResult weights;
  int iterations = 0;
  double grad_gap = 0.0;
  bool converged = true;
};

struct ConfidenceSet {
  Vector center;
  double radius = 0.0;
  PrecisionState shape;

  bool contains(const Vector& theta) const;
};

/// Online adaptive Huber regression with a coefficient constraint |theta| <= B.
class HuberRegressor {
 public:
  HuberRegressor(int dim, double lambda, const HuberScheduleConfig& schedule,
                 const HuberFitOptions& options = {});

  int dim() const { return precision_.dim(); }
  double lambda() const { return precision_.lambda(); }
  const HuberScheduleConfig& schedule() const { return schedule_; }
  const HuberFitOptions& options() const { return options_; }
  const PrecisionState& precision() const { return precision_; }
  const Vector& theta() const { return theta_; }
  std::int64_t t() const { return static_cast<std::int64_t>(ys_.size()); }

  HuberObservation observation(std::size_t i) const;
  std::span<const double> targets() const { return ys_; }
  std::span<const double> sigmas() const { return sigmas_; }
  std::span<const double> taus() const { return taus_; }

  /// sigma_t, tau_t and w_t for the next round; does not change state.
  ObserveResult observe(const Vector& phi, double nu_hat) const;

  /// Appends the observation, updates the precision and re-solves theta.
  RecordResult record(const Vector& phi, double y, double nu_hat);

  double confidence_radius() const;
  ConfidenceSet confidence_set() const;

  /// Re-solves with substituted targets and the stored sigma/tau.
  Vector solve_perturbed(std::span<const double> y_hat) const;

  std::int64_t boundary_rounds() const { return boundary_rounds_; }
  std::int64_t nonconverged_solves() const { return nonconverged_solves_; }
  /// True once more than half of the recorded rounds ended on the ball boundary.
  bool boundary_warning() const;

  std::string serialize() const;
  static HuberRegressor deserialize(const std::string& text);

 private:
  HuberTerms terms(std::span<const double> targets) const;

  HuberScheduleConfig schedule_;
  HuberFitOptions options_;
  PrecisionState precision_;
  Vector theta_;
  std::vector<Vector> phis_;
  std::vector<double> ys_;
  std::vector<double> sigmas_;
  std::vector<double> taus_;
  std::int64_t boundary_rounds_ = 0;
  std::int64_t nonconverged_solves_ = 0;
};

/// Weighted ridge regression w = Sigma^{-1} sum phi f / sigma^2.
class RidgeRegressor {
 public:
  RidgeRegressor(int dim, double lambda);

  void update(const Vector& phi, double target, double sigma);

  const PrecisionState& precision() const { return precision_; }
  const Vector& moment() const { return moment_; }
  const Vector& w() const { return w_; }

 private:
  PrecisionState precision_;
  Vector moment_;
  Vector w_;
};

}  // namespace heavyrl

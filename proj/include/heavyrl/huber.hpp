#pragma once

#include <cstdint>

namespace heavyrl {

/// Huber loss: x^2/2 inside [-tau, tau], tau*|x| - tau^2/2 outside.
double huber_loss(double x, double tau);

/// Derivative of the Huber loss, i.e. x clipped to [-tau, tau].
double huber_grad(double x, double tau);

/// Constants shared by every adaptive Huber regression.
///
/// `horizon` is the number of rounds (or episodes) fixed in advance; the
/// closed-form constants c0, c1, tau0 depend on it through log(2T^2/delta)
/// and log(3T).
struct HuberScheduleConfig {
  double epsilon = 1.0;       // moment order, in (0, 1]
  std::int64_t horizon = 1;   // T (or K)
  double delta = 0.1;         // confidence level, in (0, 1)
  double b = 1.0;             // moment ratio bound nu_t / nu_hat_t <= b
  double kappa = 1.0;
  double c0 = 1.0;
  double c1 = 1.0;
  double tau0 = 1.0;
  double B = 1.0;             // radius of the coefficient ball
  double L = 1.0;             // feature-norm bound
  double sigma_min = 1.0;

  /// Throws std::invalid_argument naming the first violated field.
  void validate() const;

  /// Exponent (1 - eps) / (2 (1 + eps)) used by the threshold and radius.
  double growth_exponent() const;
};

/// kappa = d log(1 + T L^2 / (d lambda sigma_min^2)).
double huber_kappa(int dim, std::int64_t horizon, double L, double lambda, double sigma_min);

/// Closed-form c0, c1, tau0 for a horizon-T online regression:
///   c0   = 1 / sqrt(23 log(2T^2/delta))
///   c1   = (log 3T)^{(1-eps)/(1+eps)} / (48 (log 2T^2/delta)^{2/(1+eps)})
///   tau0 = sqrt(2 kappa) b (log 3T)^{(1-eps)/(2(1+eps))} / (log 2T^2/delta)^{1/(1+eps)}
HuberScheduleConfig default_schedule(double epsilon, std::int64_t horizon, double delta,
                                     double b, double kappa, double B, double L,
                                     double sigma_min);

/// sigma_t = max{nu_hat, sigma_min, |phi|/c0, sqrt(L B) |phi|^{1/2} / (c1 (2 kappa b^2))^{1/4}}
/// where |phi| is the feature norm under the inverse precision.
double weight_sigma(const HuberScheduleConfig& cfg, double nu_hat, double phi_norm);

/// tau_t = tau0 sqrt(1 + w^2) / w * t^{(1-eps)/(2(1+eps))}. Requires w > 0.
double robustness_tau(const HuberScheduleConfig& cfg, std::int64_t t, double w);

/// Floor substituted for w_t = 0 before computing the threshold.
inline constexpr double kLeverageFloor = 1e-12;

}  // namespace heavyrl

#include "heavyrl/huber.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace heavyrl {

namespace {

void check_tau(double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("Huber threshold tau must be positive");
}

void require(bool ok, const char* field, const char* what) {
  if (!ok) {
    throw std::invalid_argument(std::string("HuberScheduleConfig.") + field + ": " + what);
  }
}

}  // namespace

double huber_loss(double x, double tau) {
  check_tau(tau);
  const double ax = std::abs(x);
  if (ax <= tau) return 0.5 * x * x;
  return tau * ax - 0.5 * tau * tau;
}

double huber_grad(double x, double tau) {
  check_tau(tau);
  return std::clamp(x, -tau, tau);
}

void HuberScheduleConfig::validate() const {
  require(epsilon > 0.0 && epsilon <= 1.0, "epsilon", "must lie in (0, 1]");
  require(horizon >= 1, "horizon", "must be >= 1");
  require(delta > 0.0 && delta < 1.0, "delta", "must lie in (0, 1)");
  require(b > 0.0 && std::isfinite(b), "b", "must be positive");
  require(kappa > 0.0 && std::isfinite(kappa), "kappa", "must be positive");
  require(c0 > 0.0 && c0 <= 1.0, "c0", "must lie in (0, 1]");
  require(c1 > 0.0 && std::isfinite(c1), "c1", "must be positive");
  require(tau0 > 0.0 && std::isfinite(tau0), "tau0", "must be positive");
  require(B > 0.0 && std::isfinite(B), "B", "must be positive");
  require(L > 0.0 && std::isfinite(L), "L", "must be positive");
  require(sigma_min > 0.0 && std::isfinite(sigma_min), "sigma_min", "must be positive");
}

double HuberScheduleConfig::growth_exponent() const {
  return (1.0 - epsilon) / (2.0 * (1.0 + epsilon));
}

double huber_kappa(int dim, std::int64_t horizon, double L, double lambda, double sigma_min) {
  if (dim < 1 || horizon < 1 || !(L > 0.0) || !(lambda > 0.0) || !(sigma_min > 0.0)) {
    throw std::invalid_argument("huber_kappa: all arguments must be positive");
  }
  const double d = dim;
  const double T = static_cast<double>(horizon);
  return d * std::log1p(T * L * L / (d * lambda * sigma_min * sigma_min));
}

HuberScheduleConfig default_schedule(double epsilon, std::int64_t horizon, double delta,
                                     double b, double kappa, double B, double L,
                                     double sigma_min) {
  HuberScheduleConfig cfg;
  cfg.epsilon = epsilon;
  cfg.horizon = horizon;
  cfg.delta = delta;
  cfg.b = b;
  cfg.kappa = kappa;
  cfg.B = B;
  cfg.L = L;
  cfg.sigma_min = sigma_min;
  // Range-check the inputs before the logs below can produce NaN.
  cfg.c0 = cfg.c1 = cfg.tau0 = 1.0;
  cfg.validate();

  const double T = static_cast<double>(horizon);
  const double log_conf = std::log(2.0 * T * T / delta);
  const double log_3t = std::log(3.0 * T);
  const double ope = 1.0 + epsilon;
  cfg.c0 = 1.0 / std::sqrt(23.0 * log_conf);
  cfg.c1 = std::pow(log_3t, (1.0 - epsilon) / ope) / (48.0 * std::pow(log_conf, 2.0 / ope));
  cfg.tau0 = std::sqrt(2.0 * kappa) * b * std::pow(log_3t, (1.0 - epsilon) / (2.0 * ope)) /
             std::pow(log_conf, 1.0 / ope);
  cfg.validate();
  return cfg;
}

double weight_sigma(const HuberScheduleConfig& cfg, double nu_hat, double phi_norm) {
  const double leverage = phi_norm / cfg.c0;
  const double curvature = std::sqrt(cfg.L * cfg.B) * std::sqrt(phi_norm) /
                           std::pow(cfg.c1 * 2.0 * cfg.kappa * cfg.b * cfg.b, 0.25);
  return std::max({nu_hat, cfg.sigma_min, leverage, curvature});
}

double robustness_tau(const HuberScheduleConfig& cfg, std::int64_t t, double w) {
  if (!(w > 0.0)) throw std::invalid_argument("robustness_tau requires w > 0");
  if (t < 1) throw std::invalid_argument("robustness_tau requires t >= 1");
  return cfg.tau0 * std::sqrt(1.0 + w * w) / w *
         std::pow(static_cast<double>(t), cfg.growth_exponent());
}

}  // namespace heavyrl

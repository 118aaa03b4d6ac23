#include "heavyrl/suites.hpp"

#include <cmath>
#include <stdexcept>

#include "heavyrl/bandit.hpp"
#include "heavyrl/random.hpp"
#include "heavyrl/regression.hpp"

namespace heavyrl {
namespace {

Vector random_unit(Rng& rng, int dim) {
  Vector v(dim);
  for (int i = 0; i < dim; ++i) v[i] = rng.gaussian();
  return v / v.norm();
}

HuberScheduleConfig suite_schedule(int dim, double epsilon, std::int64_t horizon, double delta,
                                   double lambda) {
  const double sigma_min = 1.0 / std::sqrt(static_cast<double>(horizon));
  const double kappa = huber_kappa(dim, horizon, 1.0, lambda, sigma_min);
  return default_schedule(epsilon, horizon, delta, 1.0, kappa, 1.0, 1.0, sigma_min);
}

}  // namespace

void ConcentrationSuiteConfig::validate() const {
  if (runs < 1) throw std::invalid_argument("runs must be >= 1");
  if (dim < 1) throw std::invalid_argument("dim must be >= 1");
  if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
  if (!(epsilon > 0.0 && epsilon <= 1.0)) throw std::invalid_argument("epsilon must be in (0, 1]");
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("delta must be in (0, 1)");
  if (!(df > 1.0 + epsilon)) throw std::invalid_argument("df must exceed 1 + epsilon");
  if (!(lambda > 0.0)) throw std::invalid_argument("lambda must be > 0");
  if (!(theta_norm >= 0.0 && theta_norm <= 1.0)) {
    throw std::invalid_argument("theta_norm must be in [0, 1]");
  }
}

void PerturbationSuiteConfig::validate() const {
  if (trials < 1) throw std::invalid_argument("trials must be >= 1");
  if (dim < 1) throw std::invalid_argument("dim must be >= 1");
  if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
  if (!(noise_scale > 0.0)) throw std::invalid_argument("noise_scale must be > 0");
}

int SuiteResult::held() const {
  int n = 0;
  for (bool b : outcomes) n += b;
  return n;
}

double SuiteResult::frequency() const {
  return outcomes.empty() ? 0.0 : static_cast<double>(held()) / trials();
}

SuiteResult concentration_suite(const ConcentrationSuiteConfig& config, std::uint64_t seed) {
  config.validate();
  const auto schedule =
      suite_schedule(config.dim, config.epsilon, config.horizon, config.delta, config.lambda);
  const double nu = student_t_abs_moment(config.df, 1.0 + config.epsilon);
  SuiteResult result;
  for (int run = 0; run < config.runs; ++run) {
    Rng rng(seed, static_cast<std::uint64_t>(run));
    const Vector truth = random_unit(rng, config.dim) * config.theta_norm;
    HuberRegressor reg(config.dim, config.lambda, schedule);
    std::int64_t miss = 0;
    for (std::int64_t t = 1; t <= config.horizon && miss == 0; ++t) {
      const Vector phi = random_unit(rng, config.dim);
      reg.record(phi, phi.dot(truth) + rng.student_t(config.df), nu);
      if (!reg.confidence_set().contains(truth)) miss = t;
    }
    result.outcomes.push_back(miss == 0);
    result.detail.push_back(static_cast<double>(miss));
  }
  return result;
}

SuiteResult perturbation_suite(const PerturbationSuiteConfig& config, std::uint64_t seed) {
  config.validate();
  const auto schedule = suite_schedule(config.dim, 1.0, config.horizon, 0.1, 1.0);
  SuiteResult result;
  for (int trial = 0; trial < config.trials; ++trial) {
    Rng rng(seed, static_cast<std::uint64_t>(trial));
    const Vector truth = random_unit(rng, config.dim) * 0.5;
    HuberRegressor reg(config.dim, 1.0, schedule);
    std::vector<double> leverage;
    for (std::int64_t t = 0; t < config.horizon; ++t) {
      const Vector phi = random_unit(rng, config.dim);
      reg.record(phi, phi.dot(truth) + config.noise_scale * rng.gaussian(), config.noise_scale);
      leverage.push_back(reg.precision().mahalanobis_inv(phi));
    }
    // beta_hat log-uniform on [1e-2, 1e1]
    const double beta_hat = std::pow(10.0, rng.uniform(-2.0, 1.0));
    std::vector<double> y_hat(reg.targets().begin(), reg.targets().end());
    for (std::size_t s = 0; s < y_hat.size(); ++s) {
      y_hat[s] += rng.uniform(-1.0, 1.0) * beta_hat * leverage[s];
    }
    const Vector moved = reg.solve_perturbed(y_hat);
    const double ratio = reg.precision().norm(moved - reg.theta()) / (6.0 * schedule.kappa * beta_hat);
    result.outcomes.push_back(ratio <= 1.0);
    result.detail.push_back(ratio);
  }
  return result;
}

}  // namespace heavyrl

#pragma once

#include <cstdint>
#include <vector>

namespace heavyrl {

/// Online Huber regression on random unit features with Student-t noise;
/// each run checks theta* in the confidence set after every round.
struct ConcentrationSuiteConfig {
  int runs = 50;
  int dim = 4;
  std::int64_t horizon = 2000;
  double epsilon = 0.5;
  double delta = 0.1;
  double df = 2.0;
  double lambda = 1.0;
  double theta_norm = 0.8;

  void validate() const;
};

/// Perturbed re-solves with |y_hat_s - y_s| <= beta_hat |phi_s|_{H_s^-1}; each
/// trial checks |theta_hat - theta|_{H_t} <= 6 kappa beta_hat.
struct PerturbationSuiteConfig {
  int trials = 50;
  int dim = 3;
  std::int64_t horizon = 300;
  double noise_scale = 0.5;

  void validate() const;
};

struct SuiteResult {
  std::vector<bool> outcomes;
  /// Per trial: first round the set missed theta* (0 if never), or the bound ratio.
  std::vector<double> detail;

  int trials() const { return static_cast<int>(outcomes.size()); }
  int held() const;
  double frequency() const;
};

SuiteResult concentration_suite(const ConcentrationSuiteConfig& config, std::uint64_t seed);
SuiteResult perturbation_suite(const PerturbationSuiteConfig& config, std::uint64_t seed);

}  // namespace heavyrl

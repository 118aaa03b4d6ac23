#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "heavyrl/bandit.hpp"
#include "heavyrl/ellipsoid.hpp"
#include "heavyrl/linalg.hpp"
#include "heavyrl/random.hpp"
#include "heavyrl/record.hpp"
#include "heavyrl/regression.hpp"

namespace heavyrl {

/// Time-inhomogeneous finite-horizon linear MDP over finite state and action
/// sets. Transitions are P_h(s'|s,a) = <phi(s,a), mu_h[:, s']>, mean rewards
/// r_h(s,a) = <phi(s,a), theta*_h>, and the reward noise at (h,s,a) is
/// scale * eta with eta standard normal or Student-t(df).
struct LinearMDPSpec {
  int states = 1;
  int actions = 1;
  int horizon = 1;
  int dim = 1;
  std::vector<Vector> phi;         // index s * actions + a
  std::vector<Matrix> mu;          // per step, dim x states
  std::vector<Vector> theta_star;  // per step
  std::vector<Vector> psi_star;    // per step, (1+eps)-central moments
  NoiseKind noise = NoiseKind::gaussian;
  double df = 5.0;
  std::vector<double> noise_scale;  // index (h * states + s) * actions + a
  double cap = 1.0;
  double B = 1.0;
  double W = 0.0;
  double epsilon = 1.0;
  double epsilon_prime = 1.0;
  /// Bounds on (E|noise|^{1+eps})^{1/(1+eps)} and on the (1+eps')-central
  /// moment of |noise|^{1+eps}, to the power 1/(1+eps').
  double nu_R = 0.0;
  double nu_R_eps = 0.0;
  int initial_state = 0;

  void validate() const;
  const Vector& features(int s, int a) const { return phi[s * actions + a]; }
  double reward_mean(int h, int s, int a) const;
  Vector transition(int h, int s, int a) const;
  double scale(int h, int s, int a) const { return noise_scale[(h * states + s) * actions + a]; }
  /// E|noise|^{1+eps} at (h,s,a), from the noise shape.
  double central_moment(int h, int s, int a) const;
  double sample_reward(int h, int s, int a, Rng& rng) const;
  int sample_next(int h, int s, int a, Rng& rng) const;
};

struct MdpRewardSpec {
  /// Mean rewards are uniform on [lo, hi] * cap / H.
  double lo = 0.0;
  double hi = 1.0;
  double cap = 0.0;  // 0 selects cap = H
  /// Dirichlet concentration of the transition rows.
  double concentration = 1.0;
  double epsilon = 1.0;
  double epsilon_prime = 1.0;
};

struct MdpNoiseSpec {
  NoiseKind kind = NoiseKind::student_t;
  double df = 5.0;
  double scale_lo = 0.0;
  double scale_hi = 0.0;
};

/// One-hot features, d = S * A; rows of mu are the transition rows.
LinearMDPSpec make_tabular_linear_mdp(int states, int actions, int horizon,
                                      const MdpRewardSpec& rewards, const MdpNoiseSpec& noise,
                                      std::uint64_t seed);

/// (E| |eta|^p - E|eta|^p |^q)^{1/q} for the standardized noise shape, by quadrature.
double abs_power_central_moment(NoiseKind kind, double df, double p, double q);

using Policy = std::vector<std::vector<int>>;  // [h][s] -> action

struct DpSolution {
  std::vector<std::vector<double>> V;  // [h][s], h = 0..H, V[H] = 0
  std::vector<std::vector<double>> Q;  // [h][s * A + a]
  Policy policy;                       // greedy, lowest index on ties
};

DpSolution exact_dp_oracle(const LinearMDPSpec& spec);
std::vector<std::vector<double>> evaluate_policy(const LinearMDPSpec& spec, const Policy& policy);

struct MdpLearnerParams {
  int dim = 1;
  int horizon = 1;
  int actions = 1;
  std::int64_t episodes = 1;
  double delta = 0.05;
  double epsilon = 1.0;
  double epsilon_prime = 1.0;
  double B = 1.0;
  double W = 0.0;
  double cap = 1.0;
  double nu_R_eps = 0.0;
  double lambda_R = 1.0;
  double lambda_V = 1.0;
  double nu_min = 1.0;
  double sigma_min = 1.0;
  double bonus_scale = 1.0;
  HuberFitOptions fit;

  void validate() const;

  /// lambda_R = d / max{B^2, W^2}, lambda_V = 1 / cap^2, nu_min and sigma_min
  /// from the closed forms (Otilde constants 1) unless overridden.
  static MdpLearnerParams for_spec(const LinearMDPSpec& spec, std::int64_t episodes,
                                   double delta, double bonus_scale,
                                   std::optional<double> nu_min = std::nullopt,
                                   std::optional<double> sigma_min = std::nullopt);
};

/// nu_R_eps^{1/(1+e)} d^{1/(1+e)} H^{(1-e)/(2(1+e))} K^{-((1+e)(1+e')-2)/(2(1+e)(1+e'))},
/// or 1/sqrt(K) when that is zero.
double default_nu_min(double nu_R_eps, int dim, int horizon, std::int64_t episodes,
                      double epsilon, double epsilon_prime);
/// sqrt(d^5 H^1.5 cap^2) K^{-1/4}.
double default_sigma_min(int dim, int horizon, double cap, std::int64_t episodes);

struct MdpConstants {
  double kappa = 0.0;
  double c0 = 0.0;
  double c1 = 0.0;
  double tau0 = 0.0;
  double tau0_tilde = 0.0;
  double iota = 0.0;
  double iota0 = 0.0;
  double iota1 = 0.0;
  double beta_0 = 0.0;
  double beta_V = 0.0;
  double beta_R = 0.0;      // beta_{R,K}
  double beta_R_eps = 0.0;  // beta_{R^eps,K}

  double beta_R_at(const MdpLearnerParams& p, std::int64_t k) const;
  double beta_R_eps_at(const MdpLearnerParams& p, std::int64_t k) const;
};

/// Radii and regression constants; iota0, iota1 and beta_V are solved jointly
/// by fixed-point iteration since iota0 and iota1 depend on beta_V.
MdpConstants mdp_constants(const MdpLearnerParams& params);

/// dH log2((1 + K/(lambda_R nu_min^2)) (1 + K/(lambda_V sigma_min^2))).
double rare_update_bound(const MdpLearnerParams& params);

/// Inputs of the reward weight at one (k, h).
struct NuInputs {
  double psi_dot = 0.0;    // <phi, psi_hat_{k-1,h}>
  double phi_norm = 0.0;   // |phi|_{H_{k-1,h}^{-1}}
  double beta_R_eps = 0.0; // beta_{R^eps,k-1}
  double beta_R = 0.0;     // beta_{R,k-1}
};

/// nu = max{nu_hat, nu_min, |phi|/c0, sqrt(max{B,W}) |phi|^{1/2} / (c1^{1/4} (2 kappa)^{1/4})},
/// nu_hat^{1+eps} = max{<phi, psi_hat>, 0} + (beta_R_eps + 6 cap^eps beta_R kappa) |phi|.
double reward_weight_nu(const MdpLearnerParams& p, const MdpConstants& c, const NuInputs& in);

struct SigmaInputs {
  double w_hat_dot = 0.0;    // <phi, w_hat_{k-1,h}>
  double w_check_dot = 0.0;  // <phi, w_check_{k-1,h}>
  double w_tilde_dot = 0.0;  // <phi, w_tilde_{k-1,h}>
  double phi_norm = 0.0;     // |phi|_{Sigma_{k-1,h}^{-1}}
};

struct SigmaParts {
  double variance_hat = 0.0;  // clipped second moment minus squared clipped mean
  double E = 0.0;
  double D = 0.0;
  double sigma = 0.0;
};

/// sigma = max{sigma_hat, sqrt(d^3 H D), sigma_min, |phi|, sqrt(d^{5/2} H cap) |phi|^{1/2}}.
SigmaParts value_weight_sigma(const MdpLearnerParams& p, const MdpConstants& c,
                              const SigmaInputs& in);

/// True iff either log-determinant grew by at least log 2.
bool rare_switch_check(double log_det_H, double log_det_H_last, double log_det_Sigma,
                       double log_det_Sigma_last);

struct ValueSnapshot {
  std::int64_t episode = 0;
  Vector theta_plus_w;
  Vector theta_plus_w_check;
  double radius_R = 0.0;
  Matrix H_inv;
  double radius_V = 0.0;
  Matrix Sigma_inv;
};

struct EpisodeResult {
  std::vector<int> states;  // s_1..s_{H+1}
  std::vector<int> actions;
  std::vector<double> rewards;
  Policy policy;
  bool updated = false;
  double v_opt = 0.0;  // V^k_1(s_1)
  double v_pes = 0.0;  // V_check^k_1(s_1)
};

/// Heavy-tailed LSVI-UCB with central-moment estimation and rare switching.
class HeavyLsviUcb {
 public:
  HeavyLsviUcb(const LinearMDPSpec& spec, const MdpLearnerParams& params);

  const MdpLearnerParams& params() const { return params_; }
  const MdpConstants& constants() const { return constants_; }
  std::int64_t episode() const { return k_; }
  std::int64_t updates() const { return updates_; }
  bool update_pending() const { return update_flag_; }

  /// Plays episode k = episode() + 1 with transitions drawn from `rng`.
  EpisodeResult run_episode(Rng& rng);

  double q_opt(int h, int s, int a) const { return q_[h][s * spec_.actions + a]; }
  double q_pes(int h, int s, int a) const { return q_check_[h][s * spec_.actions + a]; }
  double v_opt(int h, int s) const { return v_[h][s]; }
  double v_pes(int h, int s) const { return v_check_[h][s]; }
  /// Optimistic value recomputed from the stored snapshots (min over snapshots, cap).
  double q_opt_from_snapshots(int h, int s, int a) const;
  double q_pes_from_snapshots(int h, int s, int a) const;
  const std::vector<ValueSnapshot>& snapshots(int h) const { return steps_[h].snapshots; }

  const Vector& theta(int h) const { return steps_[h].theta; }
  const Vector& psi_hat(int h) const { return steps_[h].psi; }
  Vector w_hat(int h) const;
  Vector w_check(int h) const;
  Vector w_tilde(int h) const;
  const PrecisionState& reward_precision(int h) const { return steps_[h].H; }
  const PrecisionState& value_precision(int h) const { return steps_[h].Sigma; }
  std::int64_t nonconverged_solves() const { return nonconverged_; }
  const std::vector<double>& reward_weights(int h) const { return steps_[h].nus; }
  const std::vector<double>& reward_thresholds(int h) const { return steps_[h].taus; }
  const std::vector<double>& moment_thresholds(int h) const { return steps_[h].taus_tilde; }
  const std::vector<double>& value_weights(int h) const { return steps_[h].sigmas; }
  const std::vector<double>& observed_rewards(int h) const { return steps_[h].rewards; }
  const std::vector<double>& moment_targets(int h) const { return steps_[h].eps_pow; }
  const std::vector<Vector>& features_seen(int h) const { return steps_[h].phis; }
  const std::vector<int>& next_states(int h) const { return steps_[h].next_states; }

  /// Ridge estimate Sigma^{-1} sum phi f(s') / sigma^2 for an arbitrary next-state function.
  Vector ridge_estimate(int h, const std::vector<double>& f) const;

 private:
  struct Step {
    PrecisionState H;
    PrecisionState Sigma;
    Vector theta;
    Vector psi;
    std::vector<Vector> phis;
    std::vector<double> rewards;
    std::vector<double> eps_pow;
    std::vector<double> nus;
    std::vector<double> taus;
    std::vector<double> taus_tilde;
    std::vector<double> sigmas;
    std::vector<int> next_states;
    Vector m_hat;
    Vector m_check;
    Vector m_tilde;
    double log_det_H_last = 0.0;
    double log_det_Sigma_last = 0.0;
    std::vector<ValueSnapshot> snapshots;
  };

  void value_iterate();
  void retarget(int h);
  void record(int h, int s, int a, double reward, int next);

  LinearMDPSpec spec_;
  MdpLearnerParams params_;
  MdpConstants constants_;
  std::vector<Step> steps_;
  std::vector<std::vector<double>> q_, q_check_;  // [h][s*A+a]
  std::vector<std::vector<double>> v_, v_check_;  // [h][s], h = 0..H
  Policy policy_;
  std::int64_t k_ = 0;
  std::int64_t updates_ = 0;
  std::int64_t nonconverged_ = 0;
  bool update_flag_ = true;
};

struct MdpRun {
  RunRecord record;
  std::int64_t updates = 0;
  double update_bound = 0.0;
  double v_star = 0.0;
  std::vector<double> v_opt;
  std::vector<double> v_pes;
  std::vector<double> returns;
};

/// K episodes from the MDP's initial state; regret per episode is
/// V*_1(s_1) - V^{pi_k}_1(s_1) by exact policy evaluation. Environment draws
/// come from stream (seed, 0).
MdpRun run_mdp(const LinearMDPSpec& spec, const MdpLearnerParams& params, std::uint64_t seed);

}  // namespace heavyrl

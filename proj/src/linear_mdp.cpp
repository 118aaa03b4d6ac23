#include "heavyrl/linear_mdp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include "json.hpp"

namespace heavyrl {

namespace {

double noise_pdf(NoiseKind kind, double df, double x) {
  if (kind == NoiseKind::gaussian) return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  const double log_norm = std::lgamma((df + 1) / 2) - std::lgamma(df / 2) -
                          0.5 * std::log(df * std::numbers::pi);
  return std::exp(log_norm - (df + 1) / 2 * std::log1p(x * x / df));
}

double abs_moment(NoiseKind kind, double df, double p) {
  switch (kind) {
    case NoiseKind::student_t:
      return std::pow(student_t_abs_moment(df, p), p);
    case NoiseKind::gaussian:
      return std::pow(gaussian_abs_moment(p), p);
    case NoiseKind::deterministic:
      return 0.0;
  }
  return 0.0;
}

double clip(double x, double lo, double hi) { return std::min(std::max(x, lo), hi); }

double growth(double eps) { return (1.0 - eps) / (2.0 * (1.0 + eps)); }

}  // namespace

double abs_power_central_moment(NoiseKind kind, double df, double p, double q) {
  if (kind == NoiseKind::deterministic) return 0.0;
  if (kind == NoiseKind::student_t && !(p * q < df)) {
    throw std::invalid_argument("Student-t moment of |eta|^p of order q needs p q < df");
  }
  const double m = abs_moment(kind, df, p);
  const double knot = std::pow(m, 1.0 / p);
  auto f = [&](double x) {
    const double density = noise_pdf(kind, df, x);
    if (density == 0.0 || !std::isfinite(x)) return 0.0;
    const double gap = std::abs(std::pow(x, p) - m);
    const double v = std::exp(q * std::log(gap) + std::log(density));
    return std::isfinite(v) ? v : 0.0;
  };
  boost::math::quadrature::tanh_sinh<double> inner;
  boost::math::quadrature::exp_sinh<double> outer;
  const double below = inner.integrate(f, 0.0, knot);
  const double above = outer.integrate([&](double u) { return f(knot + u); });
  return std::pow(2.0 * (below + above), 1.0 / q);
}

void LinearMDPSpec::validate() const {
  if (states < 1 || actions < 1 || horizon < 1 || dim < 1) {
    throw std::invalid_argument("mdp states, actions, horizon and dim must be >= 1");
  }
  const std::size_t pairs = static_cast<std::size_t>(states) * actions;
  if (phi.size() != pairs) throw std::invalid_argument("mdp phi needs one vector per (s,a)");
  if (mu.size() != static_cast<std::size_t>(horizon) ||
      theta_star.size() != static_cast<std::size_t>(horizon) ||
      psi_star.size() != static_cast<std::size_t>(horizon)) {
    throw std::invalid_argument("mdp mu, theta_star and psi_star need one entry per step");
  }
  if (noise_scale.size() != pairs * horizon) throw std::invalid_argument("mdp noise_scale has the wrong size");
  if (!(epsilon > 0.0 && epsilon <= 1.0) || !(epsilon_prime > 0.0 && epsilon_prime <= 1.0)) {
    throw std::invalid_argument("mdp epsilon and epsilon_prime must lie in (0, 1]");
  }
  if (noise == NoiseKind::student_t && !((1.0 + epsilon) * (1.0 + epsilon_prime) < df)) {
    throw std::invalid_argument("mdp df must exceed (1+epsilon)(1+epsilon_prime)");
  }
  if (!(cap > 0.0) || !(B > 0.0) || !(W >= 0.0)) throw std::invalid_argument("mdp cap and B must be positive, W >= 0");
  if (initial_state < 0 || initial_state >= states) throw std::invalid_argument("mdp initial_state out of range");
  for (const Vector& v : phi) {
    if (v.size() != dim) throw std::invalid_argument("mdp phi has the wrong dimension");
    if (v.norm() > 1.0 + 1e-12) throw std::invalid_argument("mdp features must satisfy |phi| <= 1");
  }
  for (int h = 0; h < horizon; ++h) {
    if (mu[h].rows() != dim || mu[h].cols() != states) throw std::invalid_argument("mdp mu has the wrong shape");
    if (theta_star[h].size() != dim || psi_star[h].size() != dim) {
      throw std::invalid_argument("mdp theta_star/psi_star have the wrong dimension");
    }
    if (theta_star[h].norm() > B * (1 + 1e-12)) throw std::invalid_argument("mdp |theta_star| exceeds B");
    if (psi_star[h].norm() > W * (1 + 1e-12) + 1e-300) throw std::invalid_argument("mdp |psi_star| exceeds W");
    for (int s = 0; s < states; ++s) {
      for (int a = 0; a < actions; ++a) {
        const Vector p = transition(h, s, a);
        if (p.minCoeff() < -1e-10 || p.maxCoeff() > 1 + 1e-10 || std::abs(p.sum() - 1.0) > 1e-10) {
          throw std::invalid_argument("mdp transition row at step " + std::to_string(h) +
                                      " is not a probability vector");
        }
        const double r = reward_mean(h, s, a);
        if (r < -1e-12 || r > cap / horizon + 1e-12) {
          throw std::invalid_argument("mdp mean reward outside [0, cap/H]");
        }
        if (!(scale(h, s, a) >= 0.0)) throw std::invalid_argument("mdp noise scale must be >= 0");
        const double m = central_moment(h, s, a);
        if (std::abs(features(s, a).dot(psi_star[h]) - m) > 1e-9 * (1 + m)) {
          throw std::invalid_argument("mdp psi_star does not realize the noise moment");
        }
      }
    }
  }
}

double LinearMDPSpec::reward_mean(int h, int s, int a) const { return features(s, a).dot(theta_star[h]); }

Vector LinearMDPSpec::transition(int h, int s, int a) const { return mu[h].transpose() * features(s, a); }

double LinearMDPSpec::central_moment(int h, int s, int a) const {
  return std::pow(scale(h, s, a), 1.0 + epsilon) * abs_moment(noise, df, 1.0 + epsilon);
}

double LinearMDPSpec::sample_reward(int h, int s, int a, Rng& rng) const {
  const double r = reward_mean(h, s, a);
  const double c = scale(h, s, a);
  switch (noise) {
    case NoiseKind::student_t:
      return r + c * rng.student_t(df);
    case NoiseKind::gaussian:
      return r + c * rng.gaussian();
    case NoiseKind::deterministic:
      return r;
  }
  return r;
}

int LinearMDPSpec::sample_next(int h, int s, int a, Rng& rng) const {
  const Vector p = transition(h, s, a);
  const double u = rng.uniform();
  double acc = 0.0;
  for (int n = 0; n < states; ++n) {
    acc += p[n];
    if (u < acc) return n;
  }
  for (int n = states - 1; n >= 0; --n) {
    if (p[n] > 0.0) return n;
  }
  return states - 1;
}

LinearMDPSpec make_tabular_linear_mdp(int states, int actions, int horizon,
                                      const MdpRewardSpec& rewards, const MdpNoiseSpec& noise,
                                      std::uint64_t seed) {
  if (states < 1 || actions < 1 || horizon < 1) throw std::invalid_argument("mdp sizes must be >= 1");
  if (!(rewards.lo >= 0.0 && rewards.lo <= rewards.hi && rewards.hi <= 1.0)) {
    throw std::invalid_argument("reward range must satisfy 0 <= lo <= hi <= 1");
  }
  if (!(rewards.concentration > 0.0)) throw std::invalid_argument("transition concentration must be positive");
  if (!(noise.scale_lo >= 0.0 && noise.scale_lo <= noise.scale_hi)) {
    throw std::invalid_argument("noise scale range must satisfy 0 <= lo <= hi");
  }
  LinearMDPSpec spec;
  spec.states = states;
  spec.actions = actions;
  spec.horizon = horizon;
  spec.dim = states * actions;
  spec.cap = rewards.cap > 0.0 ? rewards.cap : horizon;
  spec.epsilon = rewards.epsilon;
  spec.epsilon_prime = rewards.epsilon_prime;
  spec.noise = noise.kind;
  spec.df = noise.df;
  const int d = spec.dim;
  for (int i = 0; i < d; ++i) spec.phi.push_back(Vector::Unit(d, i));

  Rng rng(seed, 7);
  const double top = spec.cap / horizon;
  for (int h = 0; h < horizon; ++h) {
    Matrix mu = Matrix::Zero(d, states);
    Vector theta(d);
    for (int i = 0; i < d; ++i) {
      double total = 0.0;
      for (int n = 0; n < states; ++n) {
        mu(i, n) = rng.gamma(rewards.concentration);
        total += mu(i, n);
      }
      mu.row(i) /= total;
      theta[i] = top * rng.uniform(rewards.lo, rewards.hi);
    }
    spec.mu.push_back(mu);
    spec.theta_star.push_back(theta);
  }
  spec.noise_scale.resize(static_cast<std::size_t>(d) * horizon);
  for (double& c : spec.noise_scale) {
    c = noise.scale_lo == noise.scale_hi ? noise.scale_lo : rng.uniform(noise.scale_lo, noise.scale_hi);
  }
  if (noise.kind == NoiseKind::deterministic) std::fill(spec.noise_scale.begin(), spec.noise_scale.end(), 0.0);

  double max_scale = 0.0;
  for (double c : spec.noise_scale) max_scale = std::max(max_scale, c);
  spec.W = 0.0;
  for (int h = 0; h < horizon; ++h) {
    Vector psi(d);
    for (int s = 0; s < states; ++s) {
      for (int a = 0; a < actions; ++a) psi[s * actions + a] = spec.central_moment(h, s, a);
    }
    spec.psi_star.push_back(psi);
    spec.W = std::max(spec.W, psi.norm());
  }
  spec.B = std::sqrt(static_cast<double>(d)) * top;
  if (max_scale > 0.0 && noise.kind != NoiseKind::deterministic) {
    spec.nu_R = max_scale * std::pow(abs_moment(noise.kind, noise.df, 1.0 + spec.epsilon), 1.0 / (1.0 + spec.epsilon));
    spec.nu_R_eps = std::pow(max_scale, 1.0 + spec.epsilon) *
                    abs_power_central_moment(noise.kind, noise.df, 1.0 + spec.epsilon,
                                             1.0 + spec.epsilon_prime);
  }
  spec.validate();
  return spec;
}

DpSolution exact_dp_oracle(const LinearMDPSpec& spec) {
  const int H = spec.horizon;
  const int S = spec.states;
  const int A = spec.actions;
  DpSolution out;
  out.V.assign(H + 1, std::vector<double>(S, 0.0));
  out.Q.assign(H, std::vector<double>(static_cast<std::size_t>(S) * A, 0.0));
  out.policy.assign(H, std::vector<int>(S, 0));
  for (int h = H - 1; h >= 0; --h) {
    const Vector next = Eigen::Map<const Vector>(out.V[h + 1].data(), S);
    for (int s = 0; s < S; ++s) {
      for (int a = 0; a < A; ++a) {
        const double q = spec.reward_mean(h, s, a) + spec.transition(h, s, a).dot(next);
        out.Q[h][s * A + a] = q;
        if (a == 0 || q > out.V[h][s]) {
          out.V[h][s] = q;
          out.policy[h][s] = a;
        }
      }
    }
  }
  return out;
}

std::vector<std::vector<double>> evaluate_policy(const LinearMDPSpec& spec, const Policy& policy) {
  const int H = spec.horizon;
  const int S = spec.states;
  if (policy.size() != static_cast<std::size_t>(H)) throw std::invalid_argument("policy needs one row per step");
  std::vector<std::vector<double>> V(H + 1, std::vector<double>(S, 0.0));
  for (int h = H - 1; h >= 0; --h) {
    const Vector next = Eigen::Map<const Vector>(V[h + 1].data(), S);
    for (int s = 0; s < S; ++s) {
      const int a = policy[h].at(s);
      if (a < 0 || a >= spec.actions) throw std::invalid_argument("policy action out of range");
      V[h][s] = spec.reward_mean(h, s, a) + spec.transition(h, s, a).dot(next);
    }
  }
  return V;
}

void MdpLearnerParams::validate() const {
  if (dim < 1 || horizon < 1 || actions < 1) throw std::invalid_argument("mdp learner sizes must be >= 1");
  if (episodes < 1) throw std::invalid_argument("episodes must be >= 1");
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("delta must lie in (0, 1)");
  if (!(epsilon > 0.0 && epsilon <= 1.0) || !(epsilon_prime > 0.0 && epsilon_prime <= 1.0)) {
    throw std::invalid_argument("epsilon and epsilon_prime must lie in (0, 1]");
  }
  if (!(B > 0.0) || !(W >= 0.0) || !(cap > 0.0)) throw std::invalid_argument("B, cap must be positive, W >= 0");
  if (!(nu_R_eps >= 0.0)) throw std::invalid_argument("nu_R_eps must be >= 0");
  if (!(lambda_R > 0.0) || !(lambda_V > 0.0)) throw std::invalid_argument("lambda_R and lambda_V must be positive");
  if (!(nu_min > 0.0) || !std::isfinite(nu_min)) throw std::invalid_argument("nu_min must be positive");
  if (!(sigma_min > 0.0) || !std::isfinite(sigma_min)) throw std::invalid_argument("sigma_min must be positive");
  if (!(bonus_scale >= 0.0) || !std::isfinite(bonus_scale)) throw std::invalid_argument("bonus_scale must be >= 0");
}

double default_nu_min(double nu_R_eps, int dim, int horizon, std::int64_t episodes, double epsilon,
                      double epsilon_prime) {
  const double e = epsilon;
  const double ep = epsilon_prime;
  const double v = std::pow(nu_R_eps, 1 / (1 + e)) * std::pow(dim, 1 / (1 + e)) *
                   std::pow(horizon, growth(e)) *
                   std::pow(static_cast<double>(episodes), -((1 + e) * (1 + ep) - 2) / (2 * (1 + e) * (1 + ep)));
  return v > 0.0 ? v : 1.0 / std::sqrt(static_cast<double>(episodes));
}

double default_sigma_min(int dim, int horizon, double cap, std::int64_t episodes) {
  return std::sqrt(std::pow(dim, 5) * std::pow(horizon, 1.5) * cap * cap) *
         std::pow(static_cast<double>(episodes), -0.25);
}

MdpLearnerParams MdpLearnerParams::for_spec(const LinearMDPSpec& spec, std::int64_t episodes,
                                            double delta, double bonus_scale,
                                            std::optional<double> nu_min,
                                            std::optional<double> sigma_min) {
  MdpLearnerParams p;
  p.dim = spec.dim;
  p.horizon = spec.horizon;
  p.actions = spec.actions;
  p.episodes = episodes;
  p.delta = delta;
  p.epsilon = spec.epsilon;
  p.epsilon_prime = spec.epsilon_prime;
  p.B = spec.B;
  p.W = spec.W;
  p.cap = spec.cap;
  p.nu_R_eps = spec.nu_R_eps;
  p.lambda_R = spec.dim / std::max(spec.B * spec.B, spec.W * spec.W);
  p.lambda_V = 1.0 / (spec.cap * spec.cap);
  p.nu_min = nu_min ? *nu_min
                    : default_nu_min(spec.nu_R_eps, spec.dim, spec.horizon, episodes, spec.epsilon,
                                     spec.epsilon_prime);
  p.sigma_min = sigma_min ? *sigma_min : default_sigma_min(spec.dim, spec.horizon, spec.cap, episodes);
  p.bonus_scale = bonus_scale;
  p.validate();
  return p;
}

double MdpConstants::beta_R_at(const MdpLearnerParams& p, std::int64_t k) const {
  double v = std::sqrt(p.lambda_R) * p.B;
  if (k > 0) v += std::sqrt(static_cast<double>(p.dim)) * std::pow(static_cast<double>(k), growth(p.epsilon)) * iota;
  return p.bonus_scale * v;
}

double MdpConstants::beta_R_eps_at(const MdpLearnerParams& p, std::int64_t k) const {
  double v = 3.0 * std::sqrt(p.lambda_R) * p.W;
  if (k > 0) {
    const double K = static_cast<double>(p.episodes);
    const double e = growth(p.epsilon_prime);
    v += 24.0 * std::pow(static_cast<double>(k), e) * std::sqrt(2.0 * kappa) * p.nu_R_eps / p.nu_min *
         std::pow(std::log(3.0 * K), e) *
         std::pow(std::log(2.0 * p.horizon * K * K / p.delta), p.epsilon_prime / (1 + p.epsilon_prime));
  }
  return v;
}

MdpConstants mdp_constants(const MdpLearnerParams& p) {
  p.validate();
  MdpConstants c;
  const double d = p.dim;
  const double H = p.horizon;
  const double K = static_cast<double>(p.episodes);
  const double cap = p.cap;
  const double log_conf = std::log(2.0 * H * K * K / p.delta);
  const double log3K = std::log(3.0 * K);
  const double e = p.epsilon;
  const double ep = p.epsilon_prime;

  c.kappa = d * std::log1p(K / (d * p.lambda_R * p.nu_min * p.nu_min));
  c.c0 = 1.0 / std::sqrt(23.0 * log_conf);
  auto c1_for = [&](double x) {
    return std::pow(log3K, (1 - x) / (1 + x)) / (48.0 * std::pow(log_conf, 2.0 / (1 + x)));
  };
  c.c1 = std::min(c1_for(e), c1_for(ep));
  c.tau0 = std::sqrt(2.0 * c.kappa) * std::pow(log3K, growth(e)) / std::pow(log_conf, 1.0 / (1 + e));
  const double b = p.nu_R_eps > 0.0 ? p.nu_R_eps / p.nu_min : 1.0;
  c.tau0_tilde = std::sqrt(2.0 * c.kappa) * b * std::pow(log3K, growth(ep)) / std::pow(log_conf, 1.0 / (1 + ep));
  c.iota = std::max({std::log1p(K / (d * p.lambda_R * p.nu_min * p.nu_min)), log3K, log_conf});
  c.beta_R = c.beta_R_at(p, p.episodes);
  c.beta_R_eps = c.beta_R_eps_at(p, p.episodes);

  const double smin2 = p.sigma_min * p.sigma_min;
  const double Lw = cap * std::sqrt(d * K / p.lambda_V);
  const double sqrt_d = std::sqrt(d);
  const double bR2 = c.beta_R * c.beta_R;
  auto iota0_for = [&](double beta_V) {
    return std::max({std::log2(1.0 + K / (p.lambda_R * p.nu_min * p.nu_min)),
                     std::log2(1.0 + K / (p.lambda_V * smin2)),
                     std::log1p(8.0 * (p.B + Lw) * K / (p.lambda_V * cap * sqrt_d * smin2)),
                     std::log1p(32.0 * bR2 * K * K /
                                (sqrt_d * p.lambda_R * p.lambda_V * p.lambda_V * cap * cap * smin2 * smin2)),
                     std::log1p(32.0 * beta_V * beta_V * K * K /
                                (sqrt_d * std::pow(p.lambda_V, 3) * cap * cap * smin2 * smin2))});
  };
  auto iota1_for = [&](double beta_V, double iota0) {
    return std::max({iota0, std::log1p(K / (smin2 * d * p.lambda_V)),
                     std::log(4.0 * H * K * K / p.delta),
                     std::log1p(4.0 * (p.B + Lw) * std::sqrt(d * d * d * H) / p.sigma_min),
                     std::log1p(8.0 * std::pow(d, 3.5) * H * bR2 / (p.lambda_R * smin2)),
                     std::log1p(8.0 * std::pow(d, 3.5) * H * beta_V * beta_V / (p.lambda_V * smin2))});
  };
  double beta_V = p.bonus_scale * std::sqrt(d * p.lambda_V) * cap;
  for (int it = 0; it < 200; ++it) {
    const double i0 = iota0_for(beta_V);
    const double i1 = iota1_for(beta_V, i0);
    const double next = p.bonus_scale * (std::sqrt(d * p.lambda_V) * cap + sqrt_d * i1 * i1);
    c.iota0 = i0;
    c.iota1 = i1;
    const bool done = std::abs(next - beta_V) <= 1e-13 * std::max(1.0, next);
    beta_V = next;
    if (done) break;
  }
  c.iota0 = iota0_for(beta_V);
  c.iota1 = iota1_for(beta_V, c.iota0);
  c.beta_V = beta_V;
  c.beta_0 = 2.0 * std::sqrt(d * p.lambda_V) * cap +
             3.0 * cap / p.sigma_min * std::sqrt(d * d * d * H * c.iota0 * c.iota0 + std::log(H / p.delta));
  return c;
}

double rare_update_bound(const MdpLearnerParams& p) {
  const double K = static_cast<double>(p.episodes);
  return p.dim * p.horizon *
         std::log2((1.0 + K / (p.lambda_R * p.nu_min * p.nu_min)) * (1.0 + K / (p.lambda_V * p.sigma_min * p.sigma_min)));
}

double reward_weight_nu(const MdpLearnerParams& p, const MdpConstants& c, const NuInputs& in) {
  const double W_kh = (in.beta_R_eps + 6.0 * std::pow(p.cap, p.epsilon) * in.beta_R * c.kappa) * in.phi_norm;
  const double nu_hat = std::pow(std::max(in.psi_dot, 0.0) + W_kh, 1.0 / (1.0 + p.epsilon));
  const double leverage = in.phi_norm / c.c0;
  const double curvature = std::sqrt(std::max(p.B, p.W)) * std::sqrt(in.phi_norm) /
                           std::pow(c.c1 * 2.0 * c.kappa, 0.25);
  return std::max({nu_hat, p.nu_min, leverage, curvature});
}

SigmaParts value_weight_sigma(const MdpLearnerParams& p, const MdpConstants& c, const SigmaInputs& in) {
  const double cap = p.cap;
  const double d = p.dim;
  const double H = p.horizon;
  SigmaParts out;
  const double mean = clip(in.w_hat_dot, 0.0, cap);
  out.variance_hat = clip(in.w_tilde_dot, 0.0, cap * cap) - mean * mean;
  const double gap = in.w_hat_dot - in.w_check_dot;
  out.E = clip(4.0 * cap * gap + 11.0 * cap * c.beta_0 * in.phi_norm, 0.0, cap * cap);
  out.D = clip(2.0 * cap * gap + 4.0 * cap * c.beta_0 * in.phi_norm, 0.0, cap * cap);
  const double sigma_hat = std::sqrt(std::max(out.variance_hat + out.E, 0.0));
  out.sigma = std::max({sigma_hat, std::sqrt(d * d * d * H * out.D), p.sigma_min, in.phi_norm,
                        std::sqrt(std::pow(d, 2.5) * H * cap) * std::sqrt(in.phi_norm)});
  return out;
}

bool rare_switch_check(double log_det_H, double log_det_H_last, double log_det_Sigma,
                       double log_det_Sigma_last) {
  const double ln2 = std::numbers::ln2;
  return log_det_H - log_det_H_last >= ln2 || log_det_Sigma - log_det_Sigma_last >= ln2;
}

HeavyLsviUcb::HeavyLsviUcb(const LinearMDPSpec& spec, const MdpLearnerParams& params)
    : spec_(spec), params_(params), constants_(mdp_constants(params)) {
  spec_.validate();
  if (params_.dim != spec_.dim || params_.horizon != spec_.horizon || params_.actions != spec_.actions) {
    throw std::invalid_argument("learner parameters do not match the mdp sizes");
  }
  const int d = spec_.dim;
  for (int h = 0; h < spec_.horizon; ++h) {
    Step step{PrecisionState(d, params_.lambda_R), PrecisionState(d, params_.lambda_V),
              Vector::Zero(d), Vector::Zero(d), {}, {}, {}, {}, {}, {}, {}, {},
              Vector::Zero(d), Vector::Zero(d), Vector::Zero(d), 0.0, 0.0, {}};
    step.log_det_H_last = step.H.log_det();
    step.log_det_Sigma_last = step.Sigma.log_det();
    steps_.push_back(std::move(step));
  }
  const std::size_t pairs = static_cast<std::size_t>(spec_.states) * spec_.actions;
  q_.assign(spec_.horizon, std::vector<double>(pairs, std::numeric_limits<double>::infinity()));
  q_check_.assign(spec_.horizon, std::vector<double>(pairs, -std::numeric_limits<double>::infinity()));
  v_.assign(spec_.horizon + 1, std::vector<double>(spec_.states, 0.0));
  v_check_.assign(spec_.horizon + 1, std::vector<double>(spec_.states, 0.0));
  policy_.assign(spec_.horizon, std::vector<int>(spec_.states, 0));
}

Vector HeavyLsviUcb::w_hat(int h) const { return steps_[h].Sigma.gram_inv() * steps_[h].m_hat; }
Vector HeavyLsviUcb::w_check(int h) const { return steps_[h].Sigma.gram_inv() * steps_[h].m_check; }
Vector HeavyLsviUcb::w_tilde(int h) const { return steps_[h].Sigma.gram_inv() * steps_[h].m_tilde; }

Vector HeavyLsviUcb::ridge_estimate(int h, const std::vector<double>& f) const {
  const Step& st = steps_[h];
  Vector m = Vector::Zero(spec_.dim);
  for (std::size_t i = 0; i < st.phis.size(); ++i) {
    m += st.phis[i] * (f.at(st.next_states[i]) / (st.sigmas[i] * st.sigmas[i]));
  }
  return st.Sigma.gram_inv() * m;
}

void HeavyLsviUcb::retarget(int h) {
  Step& st = steps_[h];
  const std::vector<double>& v = v_[h + 1];
  const std::vector<double>& vc = v_check_[h + 1];
  st.m_hat.setZero();
  st.m_check.setZero();
  st.m_tilde.setZero();
  for (std::size_t i = 0; i < st.phis.size(); ++i) {
    const double inv = 1.0 / (st.sigmas[i] * st.sigmas[i]);
    const int n = st.next_states[i];
    st.m_hat += st.phis[i] * (v[n] * inv);
    st.m_check += st.phis[i] * (vc[n] * inv);
    st.m_tilde += st.phis[i] * (v[n] * v[n] * inv);
  }
}

void HeavyLsviUcb::value_iterate() {
  const int S = spec_.states;
  const int A = spec_.actions;
  const double cap = params_.cap;
  const std::int64_t k = k_ + 1;
  const double beta_R = constants_.beta_R_at(params_, k - 1);
  const double beta_V = constants_.beta_V;
  for (int h = spec_.horizon - 1; h >= 0; --h) {
    retarget(h);
    Step& st = steps_[h];
    ValueSnapshot snap;
    snap.episode = k;
    snap.theta_plus_w = st.theta + w_hat(h);
    snap.theta_plus_w_check = st.theta + w_check(h);
    snap.radius_R = beta_R;
    snap.H_inv = st.H.gram_inv();
    snap.radius_V = beta_V;
    snap.Sigma_inv = st.Sigma.gram_inv();
    for (int s = 0; s < S; ++s) {
      for (int a = 0; a < A; ++a) {
        const Vector& phi = spec_.features(s, a);
        const double bonus = beta_R * st.H.mahalanobis_inv(phi) + beta_V * st.Sigma.mahalanobis_inv(phi);
        const double q = phi.dot(snap.theta_plus_w) + bonus;
        const double qc = phi.dot(snap.theta_plus_w_check) - bonus;
        double& cur = q_[h][s * A + a];
        double& cur_c = q_check_[h][s * A + a];
        cur = std::min({q, cur, cap});
        cur_c = std::max({qc, cur_c, 0.0});
      }
    }
    st.snapshots.push_back(std::move(snap));
    for (int s = 0; s < S; ++s) {
      int best = 0;
      double vc = q_check_[h][s * A];
      for (int a = 1; a < A; ++a) {
        if (q_[h][s * A + a] > q_[h][s * A + best]) best = a;
        vc = std::max(vc, q_check_[h][s * A + a]);
      }
      policy_[h][s] = best;
      v_[h][s] = q_[h][s * A + best];
      v_check_[h][s] = vc;
    }
  }
  ++updates_;
}

double HeavyLsviUcb::q_opt_from_snapshots(int h, int s, int a) const {
  const Vector& phi = spec_.features(s, a);
  double q = params_.cap;
  for (const ValueSnapshot& sn : steps_[h].snapshots) {
    const double bonus = sn.radius_R * std::sqrt(phi.dot(sn.H_inv * phi)) +
                         sn.radius_V * std::sqrt(phi.dot(sn.Sigma_inv * phi));
    q = std::min(q, phi.dot(sn.theta_plus_w) + bonus);
  }
  return q;
}

double HeavyLsviUcb::q_pes_from_snapshots(int h, int s, int a) const {
  const Vector& phi = spec_.features(s, a);
  double q = 0.0;
  for (const ValueSnapshot& sn : steps_[h].snapshots) {
    const double bonus = sn.radius_R * std::sqrt(phi.dot(sn.H_inv * phi)) +
                         sn.radius_V * std::sqrt(phi.dot(sn.Sigma_inv * phi));
    q = std::max(q, phi.dot(sn.theta_plus_w_check) - bonus);
  }
  return q;
}

void HeavyLsviUcb::record(int h, int s, int a, double reward, int next) {
  Step& st = steps_[h];
  const std::int64_t k = k_ + 1;
  const Vector& phi = spec_.features(s, a);

  NuInputs nu_in;
  nu_in.psi_dot = phi.dot(st.psi);
  nu_in.phi_norm = st.H.mahalanobis_inv(phi);
  nu_in.beta_R_eps = constants_.beta_R_eps_at(params_, k - 1);
  nu_in.beta_R = constants_.beta_R_at(params_, k - 1);
  const double nu = reward_weight_nu(params_, constants_, nu_in);

  SigmaInputs sg_in;
  sg_in.w_hat_dot = phi.dot(w_hat(h));
  sg_in.w_check_dot = phi.dot(w_check(h));
  sg_in.w_tilde_dot = phi.dot(w_tilde(h));
  sg_in.phi_norm = st.Sigma.mahalanobis_inv(phi);
  const double sigma = value_weight_sigma(params_, constants_, sg_in).sigma;

  const double w = std::max(nu_in.phi_norm / nu, kLeverageFloor);
  const double shape = std::sqrt(1.0 + w * w) / w;
  const double kd = static_cast<double>(k);
  const double tau = constants_.tau0 * shape * std::pow(kd, growth(params_.epsilon));
  const double tau_tilde = constants_.tau0_tilde * shape * std::pow(kd, growth(params_.epsilon_prime));

  st.H.rank_one_update(phi, nu);
  st.Sigma.rank_one_update(phi, sigma);
  st.phis.push_back(phi);
  st.rewards.push_back(reward);
  st.nus.push_back(nu);
  st.taus.push_back(tau);
  st.taus_tilde.push_back(tau_tilde);
  st.sigmas.push_back(sigma);
  st.next_states.push_back(next);
  const double inv = 1.0 / (sigma * sigma);
  const double v = v_[h + 1][next];
  st.m_hat += phi * (v * inv);
  st.m_check += phi * (v_check_[h + 1][next] * inv);
  st.m_tilde += phi * (v * v * inv);

  const HuberTerms reward_terms{st.phis, st.rewards, st.nus, st.taus};
  const SolveResult fit = huber_argmin(reward_terms, st.H, params_.B, st.theta, params_.fit);
  if (!fit.converged) ++nonconverged_;
  st.theta = fit.solution;
  st.eps_pow.push_back(std::pow(std::abs(reward - phi.dot(st.theta)), 1.0 + params_.epsilon));
  if (params_.W > 0.0) {
    const HuberTerms moment_terms{st.phis, st.eps_pow, st.nus, st.taus_tilde};
    const SolveResult mfit = huber_argmin(moment_terms, st.H, params_.W, st.psi, params_.fit);
    if (!mfit.converged) ++nonconverged_;
    st.psi = mfit.solution;
  }
}

EpisodeResult HeavyLsviUcb::run_episode(Rng& rng) {
  EpisodeResult out;
  out.updated = update_flag_;
  if (update_flag_) value_iterate();
  out.policy = policy_;
  int s = spec_.initial_state;
  out.v_opt = v_[0][s];
  out.v_pes = v_check_[0][s];
  out.states.push_back(s);
  for (int h = 0; h < spec_.horizon; ++h) {
    const int a = policy_[h][s];
    const double r = spec_.sample_reward(h, s, a, rng);
    const int next = spec_.sample_next(h, s, a, rng);
    record(h, s, a, r, next);
    out.actions.push_back(a);
    out.rewards.push_back(r);
    out.states.push_back(next);
    s = next;
  }
  ++k_;
  if (out.updated) {
    for (Step& st : steps_) {
      st.log_det_H_last = st.H.log_det();
      st.log_det_Sigma_last = st.Sigma.log_det();
    }
  }
  update_flag_ = false;
  for (const Step& st : steps_) {
    if (rare_switch_check(st.H.log_det(), st.log_det_H_last, st.Sigma.log_det(), st.log_det_Sigma_last)) {
      update_flag_ = true;
      break;
    }
  }
  return out;
}

MdpRun run_mdp(const LinearMDPSpec& spec, const MdpLearnerParams& params, std::uint64_t seed) {
  MdpRun run;
  run.record.algorithm = "heavy_lsvi_ucb";
  run.record.seed = seed;
  run.update_bound = rare_update_bound(params);
  const DpSolution dp = exact_dp_oracle(spec);
  run.v_star = dp.V[0][spec.initial_state];
  double cum = 0.0;
  try {
    HeavyLsviUcb learner(spec, params);
    Rng rng(seed, 0);
    for (std::int64_t k = 1; k <= params.episodes; ++k) {
      const EpisodeResult ep = learner.run_episode(rng);
      const double value = evaluate_policy(spec, ep.policy)[0][spec.initial_state];
      const double regret = run.v_star - value;
      cum += regret;
      double ret = 0.0;
      for (double r : ep.rewards) ret += r;
      run.v_opt.push_back(ep.v_opt);
      run.v_pes.push_back(ep.v_pes);
      run.returns.push_back(ret);
      const nlohmann::json diag = {{"return", ret},
                                   {"update", ep.updated ? 1 : 0},
                                   {"updates", learner.updates()},
                                   {"v_opt", ep.v_opt},
                                   {"v_pes", ep.v_pes}};
      run.record.rows.push_back({k, regret, cum, diag.dump()});
    }
    run.updates = learner.updates();
  } catch (const std::exception& e) {
    run.record.complete = false;
    run.record.error = e.what();
  }
  return run;
}

}  // namespace heavyrl

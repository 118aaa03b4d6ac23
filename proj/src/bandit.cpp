#include "heavyrl/bandit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "json.hpp"

namespace heavyrl {

double student_t_abs_moment(double df, double p) {
  if (!(p < df)) throw std::invalid_argument("Student-t moment of order p needs p < df");
  const double m = std::pow(df, p / 2) * std::tgamma((p + 1) / 2) * std::tgamma((df - p) / 2) /
                   (std::sqrt(std::numbers::pi) * std::tgamma(df / 2));
  return std::pow(m, 1.0 / p);
}

double gaussian_abs_moment(double p) {
  const double m = std::pow(2.0, p / 2) * std::tgamma((p + 1) / 2) / std::sqrt(std::numbers::pi);
  return std::pow(m, 1.0 / p);
}

void NoiseModel::validate() const {
  if (!(epsilon > 0.0 && epsilon <= 1.0)) throw std::invalid_argument("noise.epsilon must lie in (0, 1]");
  if (!(scale >= 0.0) || !std::isfinite(scale)) throw std::invalid_argument("noise.scale must be >= 0");
  if (!(log10_hi >= log10_lo)) throw std::invalid_argument("noise.log10_hi must be >= log10_lo");
  if (kind == NoiseKind::student_t && !(1.0 + epsilon < df)) {
    throw std::invalid_argument("noise.df must exceed 1 + epsilon for a finite central moment");
  }
}

double NoiseModel::draw_multiplier(Rng& rng) const {
  if (log10_hi == log10_lo) return scale * std::pow(10.0, log10_lo);
  return scale * std::pow(10.0, rng.uniform(log10_lo, log10_hi));
}

double NoiseModel::sample(Rng& rng, double multiplier) const {
  switch (kind) {
    case NoiseKind::student_t:
      return multiplier * rng.student_t(df);
    case NoiseKind::gaussian:
      return multiplier * rng.gaussian();
    case NoiseKind::deterministic:
      return 0.0;
  }
  return 0.0;
}

double NoiseModel::central_moment(double multiplier) const {
  switch (kind) {
    case NoiseKind::student_t:
      return multiplier * student_t_abs_moment(df, 1.0 + epsilon);
    case NoiseKind::gaussian:
      return multiplier * gaussian_abs_moment(1.0 + epsilon);
    case NoiseKind::deterministic:
      return 0.0;
  }
  return 0.0;
}

double NoiseModel::moment_bound() const {
  return central_moment(scale * std::pow(10.0, log10_hi));
}

void BanditInstance::validate() const {
  if (dim < 1) throw std::invalid_argument("bandit dim must be >= 1");
  if (theta_star.size() != dim) throw std::invalid_argument("theta_star has the wrong dimension");
  if (!(B > 0.0) || !(L > 0.0)) throw std::invalid_argument("B and L must be positive");
  if (theta_star.norm() > B + 1e-12) throw std::invalid_argument("|theta_star| exceeds B");
  noise.validate();
  switch (decision_set.kind) {
    case ArmKind::unit_sphere:
      if (decision_set.arms < 1) throw std::invalid_argument("decision set needs >= 1 arm");
      if (L < 1.0 - 1e-12) throw std::invalid_argument("unit-sphere arms need L >= 1");
      break;
    case ArmKind::standard_basis:
      if (L < 1.0 - 1e-12) throw std::invalid_argument("basis arms need L >= 1");
      break;
    case ArmKind::fixed:
      if (decision_set.fixed.empty()) throw std::invalid_argument("fixed decision set is empty");
      for (const Vector& a : decision_set.fixed) {
        if (a.size() != dim) throw std::invalid_argument("fixed arm has the wrong dimension");
        if (a.norm() > L + 1e-12) throw std::invalid_argument("fixed arm norm exceeds L");
      }
      break;
  }
}

std::vector<Vector> BanditInstance::arms(Rng& rng) const {
  std::vector<Vector> out;
  switch (decision_set.kind) {
    case ArmKind::unit_sphere:
      out.reserve(decision_set.arms);
      for (int i = 0; i < decision_set.arms; ++i) {
        Vector v(dim);
        double n = 0.0;
        do {
          for (int j = 0; j < dim; ++j) v[j] = rng.gaussian();
          n = v.norm();
        } while (n == 0.0);
        out.push_back(v / n);
      }
      break;
    case ArmKind::standard_basis:
      for (int i = 0; i < dim; ++i) out.push_back(Vector::Unit(dim, i));
      break;
    case ArmKind::fixed:
      out = decision_set.fixed;
      break;
  }
  return out;
}

LearnerParams LearnerParams::for_instance(const BanditInstance& instance, std::int64_t horizon,
                                          double epsilon, double delta, double bonus_scale) {
  LearnerParams p;
  p.dim = instance.dim;
  p.horizon = horizon;
  p.epsilon = epsilon;
  p.delta = delta;
  p.B = instance.B;
  p.L = instance.L;
  p.lambda = instance.dim / (instance.B * instance.B);
  p.sigma_min = 1.0 / std::sqrt(static_cast<double>(horizon));
  p.bonus_scale = bonus_scale;
  p.nu_bound = instance.noise.moment_bound();
  return p;
}

std::size_t ucb_argmax(const std::vector<Vector>& arms, const Vector& center, double radius,
                       const Matrix& gram_inv) {
  if (arms.empty()) throw std::invalid_argument("empty decision set");
  std::size_t best = 0;
  double best_value = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < arms.size(); ++i) {
    const Vector& a = arms[i];
    const double width = std::sqrt(std::max(0.0, a.dot(gram_inv * a)));
    const double value = a.dot(center) + radius * width;
    if (value > best_value) {
      best_value = value;
      best = i;
    }
  }
  return best;
}

double ridge_confidence_radius(int dim, std::int64_t t, double L, double lambda, double delta,
                               double R, double B) {
  const double d = dim;
  const double inner = (1.0 + static_cast<double>(t) * L * L / (lambda * d)) / delta;
  return R * std::sqrt(d * std::log(inner)) + std::sqrt(lambda) * B;
}

namespace {

HuberScheduleConfig heavy_oful_schedule(const LearnerParams& p) {
  if (p.schedule) return *p.schedule;
  const double kappa = huber_kappa(p.dim, p.horizon, p.L, p.lambda, p.sigma_min);
  return default_schedule(p.epsilon, p.horizon, p.delta, 1.0, kappa, p.B, p.L, p.sigma_min);
}

}  // namespace

HeavyOful::HeavyOful(const LearnerParams& params)
    : params_(params), regressor_(params.dim, params.lambda, heavy_oful_schedule(params)) {
  if (!(params.bonus_scale >= 0.0)) throw std::invalid_argument("bonus_scale must be >= 0");
}

std::size_t HeavyOful::choose(const std::vector<Vector>& arms) const {
  return ucb_argmax(arms, regressor_.theta(), radius(), regressor_.precision().gram_inv());
}

void HeavyOful::update(const Vector& phi, double reward, double nu) {
  last_ = regressor_.record(phi, reward, nu);
}

Diagnostics HeavyOful::diagnostics() const {
  return {{"radius", radius()},
          {"sigma", last_.weights.sigma},
          {"tau", last_.weights.tau},
          {"solver_iters", static_cast<double>(last_.iterations)},
          {"solver_converged", last_.converged ? 1.0 : 0.0}};
}

RidgeUcb::RidgeUcb(const LearnerParams& params, bool truncate)
    : params_(params), truncate_(truncate), ridge_(params.dim, params.lambda) {}

double RidgeUcb::radius() const {
  return params_.bonus_scale * ridge_confidence_radius(params_.dim, t_, params_.L, params_.lambda,
                                                       params_.delta, params_.nu_bound, params_.B);
}

double RidgeUcb::truncation_level(std::int64_t t) const {
  const double T = static_cast<double>(params_.horizon);
  const double base = static_cast<double>(t) / std::log(2.0 * T * T / params_.delta);
  return params_.truncation_scale * std::pow(base, 1.0 / (1.0 + params_.epsilon)) *
         params_.nu_bound;
}

std::size_t RidgeUcb::choose(const std::vector<Vector>& arms) const {
  return ucb_argmax(arms, ridge_.w(), radius(), ridge_.precision().gram_inv());
}

void RidgeUcb::update(const Vector& phi, double reward, double) {
  ++t_;
  double target = reward;
  if (truncate_) {
    const double u = truncation_level(t_);
    if (!std::isinf(u)) target = std::clamp(reward, -u, u);
  }
  ridge_.update(phi, target, 1.0);
}

Diagnostics RidgeUcb::diagnostics() const {
  Diagnostics d{{"radius", radius()}};
  if (truncate_) d.emplace_back("threshold", truncation_level(std::max<std::int64_t>(t_, 1)));
  return d;
}

int MedianOfMeans::default_folds(std::int64_t horizon, double delta) {
  const double T = static_cast<double>(horizon);
  return static_cast<int>(std::ceil(8.0 * std::log(2.0 * T * T / delta)));
}

MedianOfMeans::MedianOfMeans(const LearnerParams& params) : params_(params) {
  const int k = params.folds > 0 ? params.folds : default_folds(params.horizon, params.delta);
  folds_.assign(k, RidgeRegressor(params.dim, params.lambda));
  counts_.assign(k, 0);
}

std::size_t MedianOfMeans::choose(const std::vector<Vector>& arms) const {
  if (arms.empty()) throw std::invalid_argument("empty decision set");
  const std::size_t k = folds_.size();
  std::vector<double> radii(k);
  for (std::size_t j = 0; j < k; ++j) {
    radii[j] = params_.bonus_scale *
               ridge_confidence_radius(params_.dim, counts_[j], params_.L, params_.lambda,
                                       params_.delta, params_.nu_bound, params_.B);
  }
  std::vector<double> values(k);
  std::size_t best = 0;
  double best_value = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < arms.size(); ++i) {
    const Vector& a = arms[i];
    for (std::size_t j = 0; j < k; ++j) {
      const auto& f = folds_[j];
      const double width = std::sqrt(std::max(0.0, a.dot(f.precision().gram_inv() * a)));
      values[j] = a.dot(f.w()) + radii[j] * width;
    }
    std::sort(values.begin(), values.end());
    const double median =
        k % 2 == 1 ? values[k / 2] : 0.5 * (values[k / 2 - 1] + values[k / 2]);
    if (median > best_value) {
      best_value = median;
      best = i;
    }
  }
  return best;
}

void MedianOfMeans::update(const Vector& phi, double reward, double) {
  const std::size_t j = static_cast<std::size_t>(t_ % static_cast<std::int64_t>(folds_.size()));
  folds_[j].update(phi, reward, 1.0);
  ++counts_[j];
  ++t_;
}

Diagnostics MedianOfMeans::diagnostics() const {
  return {{"folds", static_cast<double>(folds_.size())}};
}

std::unique_ptr<BanditLearner> make_bandit_learner(const std::string& algorithm,
                                                   const LearnerParams& params) {
  if (algorithm == "heavy_oful") return std::make_unique<HeavyOful>(params);
  if (algorithm == "oful") return std::make_unique<RidgeUcb>(params, false);
  if (algorithm == "truncation") return std::make_unique<RidgeUcb>(params, true);
  if (algorithm == "median_of_means") return std::make_unique<MedianOfMeans>(params);
  throw std::invalid_argument("unknown bandit algorithm '" + algorithm + "'");
}

RunRecord run_bandit(const BanditInstance& instance, BanditLearner& learner,
                     std::int64_t horizon, std::uint64_t seed) {
  instance.validate();
  if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
  RunRecord record;
  record.algorithm = learner.name();
  record.seed = seed;
  record.rows.reserve(static_cast<std::size_t>(horizon));
  Rng arm_rng(seed, 0);
  Rng noise_rng(seed, 1);
  const double nu_bound = instance.noise.moment_bound();
  double cum = 0.0;
  try {
    for (std::int64_t t = 1; t <= horizon; ++t) {
      const std::vector<Vector> arms = instance.arms(arm_rng);
      const double multiplier = instance.noise.draw_multiplier(noise_rng);
      const double noise = instance.noise.sample(noise_rng, multiplier);
      const double nu = instance.reveal_nu ? instance.noise.central_moment(multiplier) : nu_bound;

      const std::size_t pick = learner.choose(arms);
      double best = -std::numeric_limits<double>::infinity();
      for (const Vector& a : arms) best = std::max(best, a.dot(instance.theta_star));
      const double mean = arms[pick].dot(instance.theta_star);
      const double regret = best - mean;
      learner.update(arms[pick], mean + noise, nu);
      cum += regret;

      nlohmann::json diag = {{"arm", pick}, {"nu", nu}};
      for (const auto& [key, value] : learner.diagnostics()) diag[key] = value;
      record.rows.push_back({t, regret, cum, diag.dump()});
    }
  } catch (const std::exception& e) {
    record.complete = false;
    record.error = e.what();
  }
  return record;
}

}  // namespace heavyrl

#include "heavyrl/regression.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "json.hpp"

namespace heavyrl {

namespace {

using nlohmann::json;

// Exact Huber objective evaluated through the aggregated quadratic form
//   1/2 |theta - center|_H^2 + const,  center = H^{-1} m,
// plus corrections for the terms whose residual leaves [-tau, tau]. Centering
// keeps value differences accurate when the summands are large.
// Only terms that can leave the quadratic regime within `radius_` of the
// screening center are inspected; moving further triggers a new screen.
class ScreenedObjective {
 public:
  ScreenedObjective(const HuberTerms& terms, const Matrix& gram, double screen_radius)
      : terms_(terms), gram_(gram), radius_(screen_radius) {}

  void screen(const Vector& center, bool with_moments) {
    center_ = center;
    candidates_.clear();
    if (with_moments) {
      moment_ = Vector::Zero(center.size());
      constant_ = 0.0;
    }
    for (std::size_t s = 0; s < terms_.phis.size(); ++s) {
      const Vector& phi = terms_.phis[s];
      const double inv_sigma = 1.0 / terms_.sigmas[s];
      const double target = terms_.targets[s];
      if (with_moments) {
        moment_.noalias() += (target * inv_sigma * inv_sigma) * phi;
        constant_ += target * target * inv_sigma * inv_sigma;
      }
      const double z = (target - phi.dot(center)) * inv_sigma;
      const double reach = phi.norm() * inv_sigma * radius_;
      if (std::abs(z) + reach >= terms_.taus[s]) candidates_.push_back(s);
    }
    if (with_moments) {
      ridge_center_ = gram_.llt().solve(moment_);
      constant_ -= moment_.dot(ridge_center_);
    }
  }

  double operator()(const Vector& theta, Vector& grad) {
    if ((theta - center_).norm() > radius_) screen(theta, false);
    const Vector offset = theta - ridge_center_;
    grad.noalias() = gram_ * offset;
    double value = 0.5 * offset.dot(grad) + 0.5 * constant_;
    for (std::size_t s : candidates_) {
      const Vector& phi = terms_.phis[s];
      const double inv_sigma = 1.0 / terms_.sigmas[s];
      const double tau = terms_.taus[s];
      const double z = (terms_.targets[s] - phi.dot(theta)) * inv_sigma;
      const double excess = std::abs(z) - tau;
      if (excess > 0.0) {
        value -= 0.5 * excess * excess;
        grad.noalias() += (inv_sigma * (z - std::clamp(z, -tau, tau))) * phi;
      }
    }
    return value;
  }

 private:
  HuberTerms terms_;
  const Matrix& gram_;
  double radius_;
  Vector center_;
  Vector moment_;
  Vector ridge_center_;
  double constant_ = 0.0;
  std::vector<std::size_t> candidates_;
};

void check_terms(const HuberTerms& terms, int dim) {
  const std::size_t n = terms.phis.size();
  if (terms.targets.size() != n || terms.sigmas.size() != n || terms.taus.size() != n) {
    throw std::invalid_argument("Huber terms have mismatched lengths");
  }
  for (std::size_t s = 0; s < n; ++s) {
    if (terms.phis[s].size() != dim) throw std::invalid_argument("feature dimension mismatch");
  }
}

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

json vector_to_json(const Vector& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Matrix matrix_from_json(const json& j, int dim) {
  Matrix m(dim, dim);
  if (!j.is_array() || static_cast<int>(j.size()) != dim) {
    throw std::invalid_argument("checkpoint matrix has wrong shape");
  }
  for (int i = 0; i < dim; ++i) {
    if (static_cast<int>(j[i].size()) != dim) {
      throw std::invalid_argument("checkpoint matrix has wrong shape");
    }
    for (int k = 0; k < dim; ++k) m(i, k) = j[i][k].get<double>();
  }
  return m;
}

Vector vector_from_json(const json& j, int dim) {
  if (!j.is_array() || static_cast<int>(j.size()) != dim) {
    throw std::invalid_argument("checkpoint vector has wrong length");
  }
  Vector v(dim);
  for (int i = 0; i < dim; ++i) v[i] = j[i].get<double>();
  return v;
}

constexpr int kCheckpointVersion = 1;

}  // namespace

SolveResult huber_argmin(const HuberTerms& terms, const PrecisionState& precision,
                         double radius, const Vector& warm_start,
                         const HuberFitOptions& options) {
  const int d = precision.dim();
  check_terms(terms, d);
  if (warm_start.size() != d) throw std::invalid_argument("warm start dimension mismatch");

  SolveProblem problem;
  problem.dim = d;
  problem.ball_radius = radius;
  problem.lambda = precision.lambda();
  problem.tol = options.tol;
  problem.max_iters = options.max_iters;
  problem.warm_start = project_ball(warm_start, radius);
  if (terms.phis.empty()) {
    // Only the regularizer remains.
    SolveResult r;
    r.solution = Vector::Zero(d);
    r.converged = true;
    return r;
  }

  ScreenedObjective objective(terms, precision.gram(), 0.25 * radius);
  objective.screen(*problem.warm_start, true);
  problem.objective = [&objective](const Vector& x, Vector& g) { return objective(x, g); };
  if (options.precondition) {
    problem.metric = precision.gram();
    problem.smoothness = 1.0;
  } else {
    double smooth = precision.lambda();
    for (std::size_t s = 0; s < terms.phis.size(); ++s) {
      smooth += terms.phis[s].squaredNorm() / (terms.sigmas[s] * terms.sigmas[s]);
    }
    problem.smoothness = smooth;
  }
  return solve(problem);
}

double huber_objective(const HuberTerms& terms, double lambda, const Vector& theta) {
  check_terms(terms, static_cast<int>(theta.size()));
  double value = 0.5 * lambda * theta.squaredNorm();
  for (std::size_t s = 0; s < terms.phis.size(); ++s) {
    const double z = (terms.targets[s] - terms.phis[s].dot(theta)) / terms.sigmas[s];
    value += huber_loss(z, terms.taus[s]);
  }
  return value;
}

double huber_confidence_radius(const HuberScheduleConfig& schedule, double lambda,
                               std::int64_t t) {
  if (t < 0) throw std::invalid_argument("confidence radius needs t >= 0");
  const double base = 3.0 * std::sqrt(lambda) * schedule.B;
  if (t == 0) return base;
  const double T = static_cast<double>(schedule.horizon);
  const double e = schedule.growth_exponent();
  const double eps = schedule.epsilon;
  return base + 24.0 * std::pow(static_cast<double>(t), e) * std::sqrt(2.0 * schedule.kappa) *
                    schedule.b * std::pow(std::log(3.0 * T), e) *
                    std::pow(std::log(2.0 * T * T / schedule.delta), eps / (1.0 + eps));
}

bool ConfidenceSet::contains(const Vector& theta) const {
  return shape.norm(theta - center) <= radius;
}

HuberRegressor::HuberRegressor(int dim, double lambda, const HuberScheduleConfig& schedule,
                               const HuberFitOptions& options)
    : schedule_(schedule),
      options_(options),
      precision_(dim, lambda),
      theta_(Vector::Zero(dim)) {
  schedule_.validate();
}

HuberObservation HuberRegressor::observation(std::size_t i) const {
  if (i >= ys_.size()) throw std::out_of_range("observation index out of range");
  return {phis_[i], ys_[i], sigmas_[i], taus_[i]};
}

ObserveResult HuberRegressor::observe(const Vector& phi, double nu_hat) const {
  if (phi.size() != dim()) throw std::invalid_argument("feature dimension mismatch");
  if (!(phi.norm() <= schedule_.L * (1.0 + 1e-9))) {
    throw std::invalid_argument("feature norm exceeds the bound L");
  }
  if (!(nu_hat >= 0.0) || !std::isfinite(nu_hat)) {
    throw std::invalid_argument("nu_hat must be finite and non-negative");
  }
  ObserveResult out;
  const double phi_norm = precision_.mahalanobis_inv(phi);
  out.sigma = weight_sigma(schedule_, nu_hat, phi_norm);
  out.w = phi_norm / out.sigma;
  out.tau = robustness_tau(schedule_, t() + 1, std::max(out.w, kLeverageFloor));
  return out;
}

RecordResult HuberRegressor::record(const Vector& phi, double y, double nu_hat) {
  if (!std::isfinite(y)) throw std::invalid_argument("observation y must be finite");
  RecordResult out;
  out.weights = observe(phi, nu_hat);
  phis_.push_back(phi);
  ys_.push_back(y);
  sigmas_.push_back(out.weights.sigma);
  taus_.push_back(out.weights.tau);
  precision_.rank_one_update(phi, out.weights.sigma);

  const SolveResult fit = huber_argmin(terms(ys_), precision_, schedule_.B, theta_, options_);
  theta_ = fit.solution;
  out.iterations = fit.iterations;
  out.grad_gap = fit.final_grad_gap;
  out.converged = fit.converged;
  if (!fit.converged) ++nonconverged_solves_;
  if (theta_.norm() >= schedule_.B * (1.0 - 1e-6)) ++boundary_rounds_;
  return out;
}

double HuberRegressor::confidence_radius() const {
  return huber_confidence_radius(schedule_, lambda(), t());
}

ConfidenceSet HuberRegressor::confidence_set() const {
  return {theta_, confidence_radius(), precision_};
}

Vector HuberRegressor::solve_perturbed(std::span<const double> y_hat) const {
  if (y_hat.size() != ys_.size()) throw std::invalid_argument("perturbed targets length mismatch");
  if (ys_.empty()) return Vector::Zero(dim());
  const SolveResult fit = huber_argmin(terms(y_hat), precision_, schedule_.B, theta_, options_);
  return fit.solution;
}

bool HuberRegressor::boundary_warning() const {
  return t() > 0 && 2 * boundary_rounds_ > t();
}

HuberTerms HuberRegressor::terms(std::span<const double> targets) const {
  return {phis_, targets, sigmas_, taus_};
}

std::string HuberRegressor::serialize() const {
  json j;
  j["version"] = kCheckpointVersion;
  j["dim"] = dim();
  j["lambda"] = lambda();
  j["schedule"] = {{"epsilon", schedule_.epsilon}, {"horizon", schedule_.horizon},
                   {"delta", schedule_.delta},     {"b", schedule_.b},
                   {"kappa", schedule_.kappa},     {"c0", schedule_.c0},
                   {"c1", schedule_.c1},           {"tau0", schedule_.tau0},
                   {"B", schedule_.B},             {"L", schedule_.L},
                   {"sigma_min", schedule_.sigma_min}};
  j["options"] = {{"tol", options_.tol},
                  {"max_iters", options_.max_iters},
                  {"precondition", options_.precondition}};
  j["gram"] = matrix_to_json(precision_.gram());
  j["gram_inv"] = matrix_to_json(precision_.gram_inv());
  j["log_det"] = precision_.log_det();
  j["update_count"] = precision_.update_count();
  j["theta"] = vector_to_json(theta_);
  json obs = json::array();
  for (std::size_t s = 0; s < ys_.size(); ++s) {
    obs.push_back({{"phi", vector_to_json(phis_[s])},
                   {"y", ys_[s]},
                   {"sigma", sigmas_[s]},
                   {"tau", taus_[s]}});
  }
  j["buffer"] = std::move(obs);
  j["boundary_rounds"] = boundary_rounds_;
  j["nonconverged_solves"] = nonconverged_solves_;
  return j.dump();
}

HuberRegressor HuberRegressor::deserialize(const std::string& text) {
  const json j = json::parse(text);
  if (j.at("version").get<int>() != kCheckpointVersion) {
    throw std::invalid_argument("unsupported regressor checkpoint version");
  }
  const int dim = j.at("dim").get<int>();
  const double lambda = j.at("lambda").get<double>();
  const json& s = j.at("schedule");
  HuberScheduleConfig schedule;
  schedule.epsilon = s.at("epsilon").get<double>();
  schedule.horizon = s.at("horizon").get<std::int64_t>();
  schedule.delta = s.at("delta").get<double>();
  schedule.b = s.at("b").get<double>();
  schedule.kappa = s.at("kappa").get<double>();
  schedule.c0 = s.at("c0").get<double>();
  schedule.c1 = s.at("c1").get<double>();
  schedule.tau0 = s.at("tau0").get<double>();
  schedule.B = s.at("B").get<double>();
  schedule.L = s.at("L").get<double>();
  schedule.sigma_min = s.at("sigma_min").get<double>();
  const json& o = j.at("options");
  HuberFitOptions options;
  options.tol = o.at("tol").get<double>();
  options.max_iters = o.at("max_iters").get<int>();
  options.precondition = o.at("precondition").get<bool>();

  HuberRegressor reg(dim, lambda, schedule, options);
  reg.precision_ = PrecisionState::restore(
      lambda, matrix_from_json(j.at("gram"), dim), matrix_from_json(j.at("gram_inv"), dim),
      j.at("log_det").get<double>(), j.at("update_count").get<std::uint64_t>());
  reg.theta_ = vector_from_json(j.at("theta"), dim);
  for (const json& ob : j.at("buffer")) {
    reg.phis_.push_back(vector_from_json(ob.at("phi"), dim));
    reg.ys_.push_back(ob.at("y").get<double>());
    reg.sigmas_.push_back(ob.at("sigma").get<double>());
    reg.taus_.push_back(ob.at("tau").get<double>());
  }
  reg.boundary_rounds_ = j.at("boundary_rounds").get<std::int64_t>();
  reg.nonconverged_solves_ = j.at("nonconverged_solves").get<std::int64_t>();
  return reg;
}

RidgeRegressor::RidgeRegressor(int dim, double lambda)
    : precision_(dim, lambda), moment_(Vector::Zero(dim)), w_(Vector::Zero(dim)) {}

void RidgeRegressor::update(const Vector& phi, double target, double sigma) {
  if (phi.size() != precision_.dim()) throw std::invalid_argument("feature dimension mismatch");
  if (!std::isfinite(target)) throw std::invalid_argument("ridge target must be finite");
  precision_.rank_one_update(phi, sigma);
  moment_.noalias() += (target / (sigma * sigma)) * phi;
  w_.noalias() = precision_.gram_inv() * moment_;
}

}  // namespace heavyrl

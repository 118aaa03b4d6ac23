#include <cmath>
#include <limits>
#include <random>

#include "doctest.h"
#include "heavyrl/bandit.hpp"
#include "support.hpp"

using heavyrl::ArmKind;
using heavyrl::BanditInstance;
using heavyrl::LearnerParams;
using heavyrl::Matrix;
using heavyrl::NoiseKind;
using heavyrl::Vector;

namespace {

BanditInstance sphere_instance(int d, NoiseKind kind) {
  BanditInstance inst;
  inst.dim = d;
  inst.theta_star = Vector::Constant(d, 1.0 / std::sqrt(d));
  inst.noise.kind = kind;
  inst.noise.epsilon = 1.0;
  inst.decision_set.kind = ArmKind::unit_sphere;
  inst.decision_set.arms = 8;
  return inst;
}

class OracleLearner : public heavyrl::BanditLearner {
 public:
  explicit OracleLearner(Vector theta) : theta_(std::move(theta)) {}
  std::string name() const override { return "oracle"; }
  std::size_t choose(const std::vector<Vector>& arms) const override {
    return heavyrl::ucb_argmax(arms, theta_, 0.0, Matrix::Identity(theta_.size(), theta_.size()));
  }
  void update(const Vector&, double, double) override {}

 private:
  Vector theta_;
};

std::vector<std::size_t> picks(const heavyrl::RunRecord& r) {
  std::vector<std::size_t> out;
  for (const auto& row : r.rows) {
    const auto pos = row.diag_json.find("\"arm\":");
    out.push_back(std::stoul(row.diag_json.substr(pos + 6)));
  }
  return out;
}

}  // namespace

TEST_CASE("optimistic argmax") {
  const std::vector<Vector> basis{Vector::Unit(2, 0), Vector::Unit(2, 1)};
  const Matrix eye = Matrix::Identity(2, 2);
  CHECK(heavyrl::ucb_argmax(basis, Vector::Unit(2, 0), 0.0, eye) == 0);
  CHECK(heavyrl::ucb_argmax(basis, Vector::Unit(2, 0), 0.5, eye) == 0);
  const std::vector<Vector> twins{Vector::Unit(2, 0), Vector::Unit(2, 0)};
  CHECK(heavyrl::ucb_argmax(twins, Vector::Zero(2), 1.0, eye) == 0);
  // The bonus can overturn the greedy choice.
  CHECK(heavyrl::ucb_argmax(basis, Vector::Unit(2, 0) * 0.1, 1.0, Matrix(Vector(Vector::Ones(2) * 0.01 + Vector::Unit(2, 1)).asDiagonal())) == 1);
  CHECK_THROWS_AS(heavyrl::ucb_argmax({}, Vector::Zero(2), 1.0, eye), std::invalid_argument);
}

TEST_CASE("central moments of the noise models") {
  heavyrl::NoiseModel t2;
  t2.kind = NoiseKind::student_t;
  t2.df = 2.0;
  t2.epsilon = 0.99;
  // E|t_2|^p = 2^{p/2} Gamma((p+1)/2) Gamma(1 - p/2) / sqrt(pi).
  const double p = 1.99;
  const double m = std::pow(2.0, p / 2) * std::tgamma((p + 1) / 2) * std::tgamma(1 - p / 2) /
                   std::sqrt(M_PI);
  CHECK(t2.central_moment(3.0) == doctest::Approx(3.0 * std::pow(m, 1 / p)));
  t2.log10_hi = 2.0;
  CHECK(t2.moment_bound() == doctest::Approx(100.0 * std::pow(m, 1 / p)));

  heavyrl::NoiseModel g;
  g.kind = NoiseKind::gaussian;
  g.epsilon = 1.0;
  CHECK(g.central_moment(1.0) == doctest::Approx(1.0));

  heavyrl::NoiseModel bad;
  bad.kind = NoiseKind::student_t;
  bad.df = 1.4;
  bad.epsilon = 0.5;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("sampled noise matches its stated moment") {
  heavyrl::NoiseModel t3;
  t3.kind = NoiseKind::student_t;
  t3.df = 3.0;
  t3.epsilon = 0.5;
  heavyrl::Rng rng(3, 0);
  double s = 0.0;
  const int n = 400000;
  for (int i = 0; i < n; ++i) s += std::pow(std::abs(t3.sample(rng, 2.0)), 1.5);
  CHECK(std::pow(s / n, 1 / 1.5) == doctest::Approx(t3.central_moment(2.0)).epsilon(0.03));
}

TEST_CASE("arms respect the norm bound") {
  BanditInstance inst = sphere_instance(6, NoiseKind::gaussian);
  heavyrl::Rng rng(1, 0);
  for (int t = 0; t < 100; ++t) {
    for (const Vector& a : inst.arms(rng)) CHECK(a.norm() <= inst.L + 1e-12);
  }
  inst.theta_star = Vector::Constant(6, 1.0);
  CHECK_THROWS_AS(inst.validate(), std::invalid_argument);
}

TEST_CASE("regret bookkeeping") {
  const BanditInstance inst = sphere_instance(4, NoiseKind::gaussian);
  OracleLearner oracle(inst.theta_star);
  const auto r = heavyrl::run_bandit(inst, oracle, 200, 5);
  CHECK(r.complete);
  CHECK(r.rows.size() == 200);
  CHECK(r.final_regret() == 0.0);

  BanditInstance single = inst;
  single.decision_set.arms = 1;
  auto learner = heavyrl::make_bandit_learner(
      "heavy_oful", LearnerParams::for_instance(single, 100, 1.0, 0.1, 1.0));
  CHECK(heavyrl::run_bandit(single, *learner, 100, 5).final_regret() == 0.0);

  auto oful = heavyrl::make_bandit_learner(
      "oful", LearnerParams::for_instance(inst, 300, 1.0, 0.1, 1.0));
  const auto run = heavyrl::run_bandit(inst, *oful, 300, 9);
  double prev = 0.0;
  for (const auto& row : run.rows) {
    CHECK(row.instant_regret >= 0.0);
    CHECK(row.cum_regret >= prev);
    prev = row.cum_regret;
  }
}

TEST_CASE("deterministic rewards recover the coefficient") {
  BanditInstance inst;
  inst.dim = 3;
  inst.theta_star = Vector(3);
  inst.theta_star << 0.2, -0.4, 0.6;
  inst.noise.kind = NoiseKind::deterministic;
  inst.decision_set.kind = ArmKind::standard_basis;
  const std::int64_t T = 500;
  LearnerParams p = LearnerParams::for_instance(inst, T, 1.0, 0.1, 1.0);
  // Admissible loosest weights so 500 rounds leave the prior behind.
  const double kappa = heavyrl::huber_kappa(3, T, 1.0, p.lambda, p.sigma_min);
  auto schedule = heavyrl::default_schedule(1.0, T, 0.1, 1.0, kappa, 1.0, 1.0, p.sigma_min);
  schedule.c0 = 1.0;
  schedule.c1 = 1.0;
  p.schedule = schedule;
  heavyrl::HeavyOful learner(p);

  CHECK(learner.radius() == doctest::Approx(3.0 * std::sqrt(p.lambda)));
  heavyrl::run_bandit(inst, learner, T, 1);
  const auto& reg = learner.regressor();
  for (int i = 0; i < 3; ++i) CHECK(std::abs(reg.theta()[i] - inst.theta_star[i]) < 1e-2);

  Matrix a = p.lambda * Matrix::Identity(3, 3);
  Vector rhs = Vector::Zero(3);
  for (std::size_t s = 0; s < static_cast<std::size_t>(reg.t()); ++s) {
    const auto ob = reg.observation(s);
    a += ob.phi * ob.phi.transpose() / (ob.sigma * ob.sigma);
    rhs += ob.y * ob.phi / (ob.sigma * ob.sigma);
  }
  CHECK((reg.theta() - a.ldlt().solve(rhs)).norm() < 1e-7);
  CHECK(learner.radius() == doctest::Approx(heavyrl::huber_confidence_radius(
                                reg.schedule(), p.lambda, T)));
}

TEST_CASE("ridge baseline on orthonormal deterministic arms") {
  BanditInstance inst;
  inst.dim = 3;
  inst.theta_star = Vector(3);
  inst.theta_star << 0.2, 0.5, 0.8;
  inst.noise.kind = NoiseKind::deterministic;
  inst.decision_set.kind = ArmKind::standard_basis;
  LearnerParams p = LearnerParams::for_instance(inst, 200, 1.0, 0.1, 1.0);
  p.lambda = 0.01;
  heavyrl::RidgeUcb oful(p, false);
  const auto r = heavyrl::run_bandit(inst, oful, 200, 2);
  const auto chosen = picks(r);
  // Unpulled arms score B, pulled arms theta_i n/(n+lambda) + sqrt(lambda/(n+lambda)) < B.
  CHECK(chosen[0] == 0);
  CHECK(chosen[1] == 1);
  CHECK(chosen[2] == 2);
  for (std::size_t t = 3; t < chosen.size(); ++t) CHECK(chosen[t] == 2);
}

TEST_CASE("degenerate baselines coincide with ridge UCB") {
  BanditInstance inst = sphere_instance(4, NoiseKind::student_t);
  inst.noise.df = 3.0;
  inst.noise.epsilon = 0.5;
  LearnerParams p = LearnerParams::for_instance(inst, 300, 0.5, 0.1, 0.3);
  heavyrl::RidgeUcb oful(p, false);
  const auto base = heavyrl::run_bandit(inst, oful, 300, 4);

  LearnerParams inf = p;
  inf.truncation_scale = std::numeric_limits<double>::infinity();
  heavyrl::RidgeUcb trunc(inf, true);
  const auto truncated = heavyrl::run_bandit(inst, trunc, 300, 4);
  CHECK(picks(base) == picks(truncated));
  CHECK(base.final_regret() == truncated.final_regret());

  LearnerParams one = p;
  one.folds = 1;
  heavyrl::MedianOfMeans mom(one);
  const auto median = heavyrl::run_bandit(inst, mom, 300, 4);
  CHECK(picks(base) == picks(median));

  LearnerParams clip = p;
  clip.truncation_scale = 1e-3;
  heavyrl::RidgeUcb tight(clip, true);
  CHECK(picks(heavyrl::run_bandit(inst, tight, 300, 4)) != picks(base));
  CHECK(heavyrl::MedianOfMeans::default_folds(10000, 0.1) ==
        static_cast<int>(std::ceil(8 * std::log(2e8 / 0.1))));
}

TEST_CASE("greedy choices are invariant under positive scaling") {
  std::mt19937_64 gen(19);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Vector> arms;
    std::vector<Vector> scaled;
    for (int i = 0; i < 10; ++i) {
      arms.push_back(testing::random_unit(gen, 5));
      scaled.push_back(arms.back() * 0.3);
    }
    const Vector theta = testing::random_unit(gen, 5);
    const Matrix eye = Matrix::Identity(5, 5);
    CHECK(heavyrl::ucb_argmax(arms, theta, 0.0, eye) ==
          heavyrl::ucb_argmax(scaled, theta * 2.5, 0.0, eye));
  }
}

TEST_CASE("optimism while the confidence set holds") {
  BanditInstance inst = sphere_instance(3, NoiseKind::student_t);
  inst.noise.df = 3.0;
  inst.noise.epsilon = 0.5;
  const std::int64_t T = 400;
  heavyrl::HeavyOful learner(LearnerParams::for_instance(inst, T, 0.5, 0.1, 1.0));
  heavyrl::Rng arm_rng(8, 0);
  heavyrl::Rng noise_rng(8, 1);
  int checked = 0;
  for (std::int64_t t = 0; t < T; ++t) {
    const auto arms = inst.arms(arm_rng);
    const double alpha = inst.noise.draw_multiplier(noise_rng);
    const double noise = inst.noise.sample(noise_rng, alpha);
    const std::size_t pick = learner.choose(arms);
    const auto& reg = learner.regressor();
    if (reg.confidence_set().contains(inst.theta_star)) {
      double best = -1e9;
      for (const Vector& a : arms) best = std::max(best, a.dot(inst.theta_star));
      const Vector& a = arms[pick];
      const double ucb =
          a.dot(reg.theta()) + learner.radius() * reg.precision().mahalanobis_inv(a);
      CHECK(ucb >= best - 1e-9);
      ++checked;
    }
    learner.update(arms[pick], arms[pick].dot(inst.theta_star) + noise,
                   inst.noise.central_moment(alpha));
  }
  CHECK(checked == T);
}

TEST_CASE("seeded runs are reproducible") {
  const BanditInstance inst = sphere_instance(3, NoiseKind::gaussian);
  const auto p = LearnerParams::for_instance(inst, 200, 1.0, 0.1, 1.0);
  for (const char* alg : {"heavy_oful", "oful", "truncation", "median_of_means"}) {
    auto a = heavyrl::make_bandit_learner(alg, p);
    auto b = heavyrl::make_bandit_learner(alg, p);
    const auto ra = heavyrl::run_bandit(inst, *a, 200, 77);
    const auto rb = heavyrl::run_bandit(inst, *b, 200, 77);
    CHECK(ra.rows.back().diag_json == rb.rows.back().diag_json);
    CHECK(ra.final_regret() == rb.final_regret());
  }
  CHECK_THROWS_AS(heavyrl::make_bandit_learner("nope", p), std::invalid_argument);
}

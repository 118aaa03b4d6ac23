#include <boost/multiprecision/cpp_bin_float.hpp>
#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "heavyrl/regression.hpp"
#include "support.hpp"

using heavyrl::HuberRegressor;
using heavyrl::HuberScheduleConfig;
using heavyrl::Matrix;
using heavyrl::RidgeRegressor;
using heavyrl::Vector;
using hp = boost::multiprecision::cpp_bin_float_50;

namespace {

HuberScheduleConfig schedule_for(int d, double eps, std::int64_t T, double lambda, double B = 1.0) {
  const double sigma_min = 1.0 / std::sqrt(static_cast<double>(T));
  const double kappa = heavyrl::huber_kappa(d, T, 1.0, lambda, sigma_min);
  return heavyrl::default_schedule(eps, T, 0.1, 1.0, kappa, B, 1.0, sigma_min);
}

// E|X|^p for a Student-t with df degrees of freedom (p < df).
double student_abs_moment(double df, double p) {
  return std::pow(df, p / 2) * std::tgamma((p + 1) / 2) * std::tgamma((df - p) / 2) /
         (std::sqrt(M_PI) * std::tgamma(df / 2));
}

}  // namespace

TEST_CASE("observe weights") {
  HuberScheduleConfig cfg;
  cfg.sigma_min = 1.0;
  cfg.c0 = 0.5;
  cfg.c1 = 1e6;  // pushes the curvature term out of the way
  HuberRegressor reg(2, 1.0, cfg);

  const auto zero = reg.observe(Vector::Zero(2), 0.3);
  CHECK(zero.sigma == doctest::Approx(1.0));
  CHECK(zero.w == 0.0);
  CHECK(zero.tau == doctest::Approx(heavyrl::robustness_tau(cfg, 1, heavyrl::kLeverageFloor)));

  const auto unit = reg.observe(Vector::Unit(2, 0), 0.0);
  CHECK(unit.sigma == doctest::Approx(2.0));
  CHECK(unit.w == doctest::Approx(0.5));

  const auto heavy = reg.observe(Vector::Unit(2, 0), 1e6);
  CHECK(heavy.sigma == doctest::Approx(1e6));
  CHECK(heavy.w < 1e-5);
  CHECK(reg.t() == 0);

  CHECK_THROWS_AS(reg.observe(Vector::Constant(2, 1.0), 0.0), std::invalid_argument);
}

TEST_CASE("record validates and matches the solver example") {
  HuberScheduleConfig cfg;
  cfg.sigma_min = 1.0;
  cfg.tau0 = 10.0;
  cfg.L = 1.0;
  cfg.B = 1.0;
  cfg.c1 = 1e6;
  HuberRegressor reg(1, 1.0, cfg);
  CHECK_THROWS_AS(reg.record(Vector::Ones(1), std::nan(""), 0.0), std::invalid_argument);
  CHECK(reg.t() == 0);
  const auto r = reg.record(Vector::Ones(1), 2.0, 0.0);
  CHECK(r.weights.sigma == doctest::Approx(1.0));
  CHECK(r.converged);
  CHECK(reg.theta()[0] == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(reg.t() == 1);
  CHECK(reg.boundary_rounds() == 1);
}

TEST_CASE("noiseless stream recovers the coefficient") {
  std::mt19937_64 gen(41);
  const int d = 3;
  // The default c0, c1 keep sigma_t ~ |phi|/c0 large, which makes 200 rounds
  // too few to leave the prior; use the loosest admissible constants instead.
  auto cfg = schedule_for(d, 1.0, 200, 1e-3);
  cfg.c0 = 1.0;
  cfg.c1 = 1.0;
  HuberRegressor reg(d, 1e-3, cfg);
  Vector truth(d);
  truth << 0.5, -0.3, 0.2;
  for (int t = 0; t < 200; ++t) {
    const Vector phi = testing::random_unit(gen, d);
    reg.record(phi, phi.dot(truth), 0.0);
    CHECK(reg.theta().norm() <= cfg.B + 1e-10);
  }
  CHECK((reg.theta() - truth).norm() <= 1e-3);
  CHECK(reg.nonconverged_solves() == 0);

  Matrix a = 1e-3 * Matrix::Identity(d, d);
  Vector rhs = Vector::Zero(d);
  for (std::size_t s = 0; s < 200; ++s) {
    const auto ob = reg.observation(s);
    CHECK(std::abs(ob.y - ob.phi.dot(reg.theta())) / ob.sigma <= ob.tau);
    a += ob.phi * ob.phi.transpose() / (ob.sigma * ob.sigma);
    rhs += ob.y * ob.phi / (ob.sigma * ob.sigma);
  }
  CHECK((reg.theta() - a.ldlt().solve(rhs)).norm() < 1e-8);
}

TEST_CASE("precision is the weighted gram of the buffer") {
  std::mt19937_64 gen(43);
  const int d = 4;
  HuberRegressor reg(d, 0.5, schedule_for(d, 0.5, 100, 0.5));
  std::student_t_distribution<double> noise(2.0);
  for (int t = 0; t < 100; ++t) {
    const Vector phi = testing::random_unit(gen, d);
    reg.record(phi, 0.3 * phi.sum() + noise(gen), 1.0);
  }
  Matrix gram = 0.5 * Matrix::Identity(d, d);
  for (std::size_t s = 0; s < 100; ++s) {
    const auto ob = reg.observation(s);
    gram += ob.phi * ob.phi.transpose() / (ob.sigma * ob.sigma);
  }
  CHECK(testing::max_abs(gram - reg.precision().gram()) < 1e-10);
  CHECK(reg.sigmas().size() == static_cast<std::size_t>(reg.t()));
}

TEST_CASE("confidence radius closed form") {
  HuberScheduleConfig cfg;
  cfg.B = 2.0;
  CHECK(heavyrl::huber_confidence_radius(cfg, 1.0, 0) == doctest::Approx(6.0));

  cfg = schedule_for(4, 1.0, 500, 1.0);
  const double lc = std::log(2.0 * 500 * 500 / 0.1);
  const double eps1 = 3.0 + 24.0 * std::sqrt(2.0 * cfg.kappa) * std::sqrt(lc);
  for (std::int64_t t : {1, 17, 500}) {
    CHECK(heavyrl::huber_confidence_radius(cfg, 1.0, t) == doctest::Approx(eps1));
  }

  cfg = schedule_for(4, 0.5, 2000, 0.7);
  const hp e = 0.5;
  const hp T = 2000;
  const hp x = (1 - e) / (2 * (1 + e));
  const hp want = 3 * sqrt(hp(0.7)) * hp(cfg.B) +
                  24 * pow(hp(100), x) * sqrt(2 * hp(cfg.kappa)) * hp(cfg.b) *
                      pow(log(3 * T), x) * pow(log(2 * T * T / hp(0.1)), e / (1 + e));
  const double got = heavyrl::huber_confidence_radius(cfg, 0.7, 100);
  CHECK(static_cast<double>(abs((hp(got) - want) / want)) < 1e-13);

  double prev = 0.0;
  for (std::int64_t t = 0; t < 300; ++t) {
    const double r = heavyrl::huber_confidence_radius(cfg, 0.7, t);
    CHECK(r >= prev);
    prev = r;
  }
}

TEST_CASE("perturbed solves") {
  std::mt19937_64 gen(47);
  const int d = 3;
  auto cfg = schedule_for(d, 1.0, 50, 1.0, 10.0);
  HuberRegressor empty(d, 1.0, cfg);
  CHECK(empty.solve_perturbed({}).norm() == 0.0);

  HuberRegressor reg(d, 1.0, cfg);
  for (int t = 0; t < 50; ++t) {
    const Vector phi = testing::random_unit(gen, d);
    reg.record(phi, phi.dot(Vector::Constant(d, 0.2)) + 0.01 * testing::random_vector(gen, 1)[0],
               0.01);
  }
  std::vector<double> same(reg.targets().begin(), reg.targets().end());
  CHECK((reg.solve_perturbed(same) - reg.theta()).norm() == 0.0);
  CHECK_THROWS_AS(reg.solve_perturbed(std::span<const double>(same).first(3)),
                  std::invalid_argument);

  // Quadratic regime: theta is the weighted ridge solution, so a constant
  // shift c moves it by c * H^{-1} sum phi / sigma^2.
  const double c = 0.05;
  std::vector<double> shifted = same;
  for (double& y : shifted) y += c;
  Vector direction = Vector::Zero(d);
  for (std::size_t s = 0; s < same.size(); ++s) {
    const auto ob = reg.observation(s);
    direction += ob.phi / (ob.sigma * ob.sigma);
  }
  const Vector expected = reg.theta() + c * reg.precision().gram_inv() * direction;
  CHECK((reg.solve_perturbed(shifted) - expected).norm() < 1e-7);
}

TEST_CASE("concentration event holds in most runs") {
  const int d = 4;
  const std::int64_t T = 2000;
  const double eps = 0.5;
  const double lambda = 1.0;
  const double nu = std::pow(student_abs_moment(2.0, 1.0 + eps), 1.0 / (1.0 + eps));
  const auto cfg = schedule_for(d, eps, T, lambda);
  int held = 0;
  const int runs = 10;
  for (int run = 0; run < runs; ++run) {
    std::mt19937_64 gen(1000 + run);
    std::student_t_distribution<double> noise(2.0);
    const Vector truth = testing::random_unit(gen, d) * 0.8;
    HuberRegressor reg(d, lambda, cfg);
    bool inside = true;
    for (std::int64_t t = 0; t < T && inside; ++t) {
      const Vector phi = testing::random_unit(gen, d);
      reg.record(phi, phi.dot(truth) + noise(gen), nu);
      inside = reg.confidence_set().contains(truth);
    }
    held += inside;
  }
  CHECK(held >= 9);
}

TEST_CASE("perturbation stays within 6 kappa beta_hat") {
  std::mt19937_64 gen(53);
  const int d = 3;
  const std::int64_t T = 300;
  const auto cfg = schedule_for(d, 1.0, T, 1.0);
  std::normal_distribution<double> noise(0.0, 0.5);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  HuberRegressor reg(d, 1.0, cfg);
  const Vector truth = testing::random_unit(gen, d) * 0.5;
  std::vector<double> leverage;  // |phi_s| in the inverse of the post-update precision
  for (std::int64_t t = 0; t < T; ++t) {
    const Vector phi = testing::random_unit(gen, d);
    reg.record(phi, phi.dot(truth) + noise(gen), 0.5);
    leverage.push_back(reg.precision().mahalanobis_inv(phi));
  }
  for (double beta_hat : {0.01, 0.3, 5.0}) {
    std::vector<double> y_hat(reg.targets().begin(), reg.targets().end());
    for (std::size_t s = 0; s < y_hat.size(); ++s) y_hat[s] += unit(gen) * beta_hat * leverage[s];
    const Vector moved = reg.solve_perturbed(y_hat);
    CHECK(reg.precision().norm(moved - reg.theta()) <= 6.0 * cfg.kappa * beta_hat);
  }
}

TEST_CASE("checkpoint round trip") {
  std::mt19937_64 gen(59);
  const int d = 3;
  HuberRegressor reg(d, 0.4, schedule_for(d, 0.7, 80, 0.4));
  std::student_t_distribution<double> noise(1.5);
  for (int t = 0; t < 80; ++t) {
    const Vector phi = testing::random_unit(gen, d);
    reg.record(phi, phi.sum() * 0.1 + noise(gen), 2.0);
  }
  const auto copy = HuberRegressor::deserialize(reg.serialize());
  CHECK(copy.t() == reg.t());
  CHECK((copy.theta() - reg.theta()).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(testing::max_abs(copy.precision().gram_inv() - reg.precision().gram_inv()) <= 1e-12);
  CHECK(copy.precision().log_det() == reg.precision().log_det());
  CHECK(copy.confidence_radius() == reg.confidence_radius());
  for (std::size_t s = 0; s < 80; ++s) {
    CHECK(copy.observation(s).tau == reg.observation(s).tau);
    CHECK(copy.observation(s).sigma == reg.observation(s).sigma);
  }
  CHECK(copy.serialize() == reg.serialize());
  CHECK_THROWS(HuberRegressor::deserialize("{\"version\": 99}"));
}

TEST_CASE("boundary warning when the ball is too small") {
  std::mt19937_64 gen(61);
  const int d = 2;
  HuberRegressor reg(d, 1.0, schedule_for(d, 1.0, 100, 1.0, 0.05));
  for (int t = 0; t < 100; ++t) {
    const Vector phi = testing::random_unit(gen, d);
    reg.record(phi, phi.dot(Vector::Constant(d, 0.7)), 0.0);
  }
  CHECK(reg.boundary_warning());
  CHECK(reg.theta().norm() <= 0.05 + 1e-10);
}

TEST_CASE("deterministic trajectories") {
  auto run = [] {
    std::mt19937_64 gen(67);
    std::student_t_distribution<double> noise(2.0);
    HuberRegressor reg(3, 1.0, schedule_for(3, 0.5, 100, 1.0));
    for (int t = 0; t < 100; ++t) {
      const Vector phi = testing::random_unit(gen, 3);
      reg.record(phi, phi[0] * 0.4 + noise(gen), 1.0);
    }
    return reg.serialize();
  };
  CHECK(run() == run());
}

TEST_CASE("ridge regression") {
  RidgeRegressor empty(2, 1.0);
  CHECK(empty.w().norm() == 0.0);

  RidgeRegressor one(2, 1.0);
  one.update(Vector::Unit(2, 0), 2.0, 1.0);
  CHECK(one.precision().gram()(0, 0) == doctest::Approx(2.0));
  CHECK(one.w()[0] == doctest::Approx(1.0));
  CHECK(one.w()[1] == doctest::Approx(0.0));
  CHECK_THROWS_AS(one.update(Vector::Zero(3), 1.0, 1.0), std::invalid_argument);

  std::mt19937_64 gen(71);
  const int d = 4;
  RidgeRegressor f(d, 0.8), g(d, 0.8), fg(d, 0.8);
  Matrix a = 0.8 * Matrix::Identity(d, d);
  Vector rhs = Vector::Zero(d);
  for (int s = 0; s < 30; ++s) {
    const Vector phi = testing::random_vector(gen, d);
    const double sigma = 0.5 + 0.05 * s;
    const double yf = testing::random_vector(gen, 1)[0];
    const double yg = 3.0 * testing::random_vector(gen, 1)[0];
    f.update(phi, yf, sigma);
    g.update(phi, yg, sigma);
    fg.update(phi, yf + yg, sigma);
    a += phi * phi.transpose() / (sigma * sigma);
    rhs += yf * phi / (sigma * sigma);
  }
  CHECK((f.w() - a.ldlt().solve(rhs)).norm() < 1e-8);
  CHECK((f.w() - f.precision().gram_inv() * f.moment()).norm() < 1e-8);
  CHECK((fg.w() - f.w() - g.w()).cwiseAbs().maxCoeff() < 1e-8);
}

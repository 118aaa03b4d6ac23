#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "heavyrl/ellipsoid.hpp"
#include "heavyrl/regression.hpp"
#include "heavyrl/solver.hpp"
#include "support.hpp"

using heavyrl::Matrix;
using heavyrl::SolveProblem;
using heavyrl::Vector;

namespace {

struct Instance {
  std::vector<Vector> phis;
  std::vector<double> ys;
  std::vector<double> sigmas;
  std::vector<double> taus;
  double lambda = 1.0;
};

// Plain Euclidean problem with an explicit Huber sum, no aggregation.
SolveProblem euclidean_problem(const Instance& in, int d, double radius) {
  SolveProblem p;
  p.dim = d;
  p.ball_radius = radius;
  p.lambda = in.lambda;
  p.smoothness = in.lambda;
  for (std::size_t s = 0; s < in.phis.size(); ++s) {
    p.smoothness += in.phis[s].squaredNorm() / (in.sigmas[s] * in.sigmas[s]);
  }
  p.objective = [&in](const Vector& x, Vector& g) {
    double v = 0.5 * in.lambda * x.squaredNorm();
    g = in.lambda * x;
    for (std::size_t s = 0; s < in.phis.size(); ++s) {
      const double z = (in.ys[s] - in.phis[s].dot(x)) / in.sigmas[s];
      v += heavyrl::huber_loss(z, in.taus[s]);
      g -= heavyrl::huber_grad(z, in.taus[s]) / in.sigmas[s] * in.phis[s];
    }
    return v;
  };
  return p;
}

Vector weighted_ridge(const Instance& in, int d) {
  Matrix a = in.lambda * Matrix::Identity(d, d);
  Vector rhs = Vector::Zero(d);
  for (std::size_t s = 0; s < in.phis.size(); ++s) {
    const double w = 1.0 / (in.sigmas[s] * in.sigmas[s]);
    a += w * in.phis[s] * in.phis[s].transpose();
    rhs += w * in.ys[s] * in.phis[s];
  }
  return a.ldlt().solve(rhs);
}

Instance random_quadratic_instance(std::mt19937_64& gen, int d, int n) {
  std::uniform_real_distribution<double> u(0.5, 2.0);
  Instance in;
  in.lambda = u(gen);
  const Vector truth = testing::random_vector(gen, d, 0.3);
  for (int s = 0; s < n; ++s) {
    in.phis.push_back(testing::random_vector(gen, d, 0.5));
    in.ys.push_back(in.phis.back().dot(truth) + 0.1 * testing::random_vector(gen, 1)[0]);
    in.sigmas.push_back(u(gen));
    in.taus.push_back(1e3);
  }
  return in;
}

}  // namespace

TEST_CASE("project ball") {
  Vector x(2);
  x << 3.0, 4.0;
  CHECK((heavyrl::project_ball(x, 10.0) - x).norm() == 0.0);
  CHECK((heavyrl::project_ball(x, 5.0) - x).norm() == 0.0);
  const Vector p = heavyrl::project_ball(x, 1.0);
  CHECK(p[0] == doctest::Approx(0.6));
  CHECK(p[1] == doctest::Approx(0.8));
}

TEST_CASE("one-dimensional boundary solution") {
  Instance in;
  in.phis = {Vector::Ones(1)};
  in.ys = {2.0};
  in.sigmas = {1.0};
  in.taus = {10.0};
  const auto r = heavyrl::solve(euclidean_problem(in, 1, 1.0));
  CHECK(r.converged);
  CHECK(r.solution[0] == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("zero data gives the regularizer minimizer") {
  Instance in;
  SolveProblem p = euclidean_problem(in, 3, 1.0);
  p.warm_start = Vector::Constant(3, 0.4);
  const auto r = heavyrl::solve(p);
  CHECK(r.converged);
  CHECK(r.solution.norm() < 1e-8);
}

TEST_CASE("quadratic regime matches weighted ridge") {
  std::mt19937_64 gen(17);
  std::uniform_int_distribution<int> dims(1, 8);
  std::uniform_int_distribution<int> sizes(1, 50);
  int checked = 0;
  for (int trial = 0; trial < 40 && checked < 25; ++trial) {
    const int d = dims(gen);
    const Instance in = random_quadratic_instance(gen, d, sizes(gen));
    const Vector ridge = weighted_ridge(in, d);
    const auto r = heavyrl::solve(euclidean_problem(in, d, 100.0));
    // The oracle is only valid if every residual stays inside its threshold.
    bool quadratic = true;
    for (std::size_t s = 0; s < in.phis.size(); ++s) {
      quadratic &= std::abs(in.ys[s] - in.phis[s].dot(ridge)) / in.sigmas[s] <= in.taus[s];
    }
    if (!quadratic) continue;
    ++checked;
    CHECK(r.converged);
    CHECK((r.solution - ridge).norm() < 1e-6);
  }
  CHECK(checked >= 20);
}

TEST_CASE("preconditioned run agrees with the plain method") {
  std::mt19937_64 gen(23);
  for (int trial = 0; trial < 20; ++trial) {
    const int d = 2 + trial % 6;
    Instance in = random_quadratic_instance(gen, d, 40);
    for (std::size_t s = 0; s < in.taus.size(); ++s) in.taus[s] = 0.05 + 0.02 * (s % 5);
    heavyrl::PrecisionState h(d, in.lambda);
    for (std::size_t s = 0; s < in.phis.size(); ++s) h.rank_one_update(in.phis[s], in.sigmas[s]);
    const double radius = 0.2;

    SolveProblem plain = euclidean_problem(in, d, radius);
    plain.tol = 1e-12;
    plain.max_iters = 200000;
    const auto ref = heavyrl::solve(plain);

    const heavyrl::HuberTerms terms{in.phis, in.ys, in.sigmas, in.taus};
    const auto fast = heavyrl::huber_argmin(terms, h, radius, Vector::Zero(d));
    CHECK(fast.converged);
    CHECK(fast.solution.norm() <= radius + 1e-10);
    CHECK((fast.solution - ref.solution).norm() < 1e-6);
    CHECK(heavyrl::huber_objective(terms, in.lambda, fast.solution) <=
          heavyrl::huber_objective(terms, in.lambda, ref.solution) + 1e-9);
  }
}

TEST_CASE("monotone, feasible and deterministic") {
  std::mt19937_64 gen(29);
  for (int trial = 0; trial < 20; ++trial) {
    const int d = 1 + trial % 5;
    Instance in = random_quadratic_instance(gen, d, 30);
    for (double& tau : in.taus) tau = 0.1;
    SolveProblem p = euclidean_problem(in, d, 0.5);
    p.warm_start = heavyrl::project_ball(testing::random_vector(gen, d), 0.5);
    Vector g(d);
    const double start = p.objective(*p.warm_start, g);
    const auto a = heavyrl::solve(p);
    const auto b = heavyrl::solve(p);
    CHECK(a.objective <= start);
    CHECK(a.solution.norm() <= 0.5 + 1e-10);
    CHECK((a.solution - b.solution).norm() == 0.0);
    CHECK(a.iterations == b.iterations);
  }
}

TEST_CASE("invalid problems and non-finite gradients") {
  SolveProblem p;
  p.dim = 2;
  p.lambda = 2.0;
  p.smoothness = 1.0;
  p.objective = [](const Vector& x, Vector& g) {
    g = x;
    return 0.0;
  };
  CHECK_THROWS_AS(heavyrl::solve(p), std::invalid_argument);
  p.smoothness = 3.0;
  p.warm_start = Vector::Constant(2, 5.0);
  CHECK_THROWS_AS(heavyrl::solve(p), std::invalid_argument);
  p.warm_start.reset();
  p.objective = [](const Vector&, Vector& g) {
    g = Vector::Constant(2, std::nan(""));
    return 0.0;
  };
  CHECK_THROWS_AS(heavyrl::solve(p), std::runtime_error);
}

TEST_CASE("metric projection lands on the ball and beats scaling") {
  std::mt19937_64 gen(31);
  for (int trial = 0; trial < 30; ++trial) {
    const int d = 2 + trial % 4;
    const Matrix a = Matrix::Random(d, d);
    const Matrix metric = a * a.transpose() + 0.1 * Matrix::Identity(d, d);
    Eigen::SelfAdjointEigenSolver<Matrix> es(metric);
    const Vector v = testing::random_vector(gen, d, 3.0);
    const double radius = 0.5;
    const Vector x = heavyrl::project_ball_in_metric(v, radius, es.eigenvectors(), es.eigenvalues());
    CHECK(x.norm() <= radius + 1e-10);
    auto dist = [&](const Vector& z) { return (z - v).dot(metric * (z - v)); };
    for (int k = 0; k < 50; ++k) {
      const Vector other = heavyrl::project_ball(testing::random_vector(gen, d), radius);
      CHECK(dist(x) <= dist(other) + 1e-9);
    }
  }
}

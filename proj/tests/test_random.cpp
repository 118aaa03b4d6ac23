#include <cmath>
#include <vector>

#include "doctest.h"
#include "heavyrl/random.hpp"

using heavyrl::Rng;

TEST_CASE("identical seeds give identical streams") {
  Rng a(42, 3);
  Rng b(42, 3);
  for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());
  Rng c(42, 3);
  Rng d(42, 3);
  for (int i = 0; i < 1000; ++i) CHECK(c.student_t(2.0) == d.student_t(2.0));
}

TEST_CASE("distinct streams differ") {
  for (std::uint64_t run = 0; run < 50; ++run) {
    Rng a(7, run);
    Rng b(7, run + 1);
    int same = 0;
    for (int i = 0; i < 16; ++i) same += a.next_u64() == b.next_u64();
    CHECK(same == 0);
  }
  Rng seed_a(1, 0);
  Rng seed_b(2, 0);
  CHECK(seed_a.next_u64() != seed_b.next_u64());
  Rng parent(5, 0);
  Rng child = parent.split(0);
  CHECK(child.next_u64() != Rng(5, 0).next_u64());
}

TEST_CASE("draws depend only on the counter") {
  Rng r(0, 0);
  for (int i = 0; i < 5; ++i) r.next_u64();
  CHECK(r.counter() == 5);
  CHECK(heavyrl::mix64(0) == 0);
}

TEST_CASE("uniform stays inside the open interval") {
  Rng r(9, 0);
  double sum = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    CHECK_UNARY(u > 0.0);
    CHECK_UNARY(u < 1.0);
    sum += u;
  }
  CHECK(sum / n == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("gaussian and gamma moments") {
  Rng r(11, 0);
  const int n = 400000;
  double m1 = 0.0;
  double m2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = r.gaussian();
    m1 += z;
    m2 += z * z;
  }
  CHECK(std::abs(m1 / n) < 0.01);
  CHECK(std::abs(m2 / n - 1.0) < 0.01);

  for (double shape : {0.4, 1.0, 3.5}) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += r.gamma(shape);
    CHECK(s / n == doctest::Approx(shape).epsilon(0.02));
  }
}

TEST_CASE("student t with two degrees of freedom has mean zero") {
  Rng r(13, 0);
  double s = 0.0;
  const int n = 1000000;
  for (int i = 0; i < n; ++i) s += r.student_t(2.0);
  CHECK(std::abs(s / n) < 0.05);

  // Median absolute value of t_2 is sqrt(2/3).
  std::vector<double> abs_draws(100001);
  for (double& x : abs_draws) x = std::abs(r.student_t(2.0));
  std::nth_element(abs_draws.begin(), abs_draws.begin() + 50000, abs_draws.end());
  CHECK(abs_draws[50000] == doctest::Approx(std::sqrt(2.0 / 3.0)).epsilon(0.02));
}

#include <cmath>
#include <functional>
#include <limits>
#include <sstream>

#include "heavyrl/bandit.hpp"
#include "heavyrl/ellipsoid.hpp"
#include "heavyrl/harness.hpp"
#include "heavyrl/huber.hpp"
#include "heavyrl/linear_mdp.hpp"
#include "heavyrl/random.hpp"
#include "heavyrl/regression.hpp"
#include "heavyrl/solver.hpp"

namespace heavyrl {
namespace {

using ld = long double;

bool near(double got, long double want, long double tol) {
  return std::isfinite(got) && std::fabs(static_cast<ld>(got) - want) <= tol * std::max<ld>(1.0L, std::fabs(want));
}

Vector unit(Rng& rng, int d) {
  Vector v(d);
  for (int i = 0; i < d; ++i) v[i] = rng.gaussian();
  return v / v.norm();
}

template <class F>
bool throws(F&& f) {
  try {
    f();
  } catch (const std::exception&) {
    return true;
  }
  return false;
}

class Runner {
 public:
  void check(const std::string& name, const std::function<bool(std::string&)>& body) {
    SelftestCheck c;
    c.name = name;
    try {
      c.passed = body(c.detail);
    } catch (const std::exception& e) {
      c.passed = false;
      c.detail = std::string("exception: ") + e.what();
    }
    checks.push_back(std::move(c));
  }
  std::vector<SelftestCheck> checks;
};

std::string show(double x) {
  std::ostringstream s;
  s.precision(17);
  s << x;
  return s.str();
}

// log(2T^2/delta), log 3T and the schedule constants, computed in long double
// straight from their closed forms.
struct LdSchedule {
  ld c0, c1, tau0;
};

LdSchedule ld_schedule(ld eps, ld T, ld delta, ld b, ld kappa) {
  const ld l2 = std::log(2 * T * T / delta);
  const ld l3 = std::log(3 * T);
  const ld x = (1 - eps) / (1 + eps);
  return {1 / std::sqrt(23 * l2), std::pow(l3, x) / (48 * std::pow(l2, 2 / (1 + eps))),
          std::sqrt(2 * kappa) * b * std::pow(l3, x / 2) / std::pow(l2, 1 / (1 + eps))};
}

LinearMDPSpec tiny_mdp(int S, int A, int H) {
  MdpRewardSpec r;
  MdpNoiseSpec n;
  n.scale_lo = 0.1;
  n.scale_hi = 0.3;
  return make_tabular_linear_mdp(S, A, H, r, n, 1);
}

void ellipsoid_checks(Runner& run) {
  run.check("ellipsoid: identity start", [](std::string&) {
    PrecisionState p(2, 1.0);
    return p.gram() == Matrix::Identity(2, 2) && p.log_det() == 0.0;
  });
  run.check("ellipsoid: scalar start", [](std::string&) {
    PrecisionState p(1, 4.0);
    return p.gram_inv()(0, 0) == 0.25 && near(p.log_det(), std::log(4.0L), 1e-15L);
  });
  run.check("ellipsoid: lambda = 0 rejected", [](std::string&) {
    return throws([] { PrecisionState(3, 0.0); });
  });
  run.check("ellipsoid: diagonal update", [](std::string&) {
    PrecisionState p(2, 1.0);
    p.rank_one_update(Vector::Unit(2, 0), 1.0);
    Matrix g(2, 2), gi(2, 2);
    g << 2, 0, 0, 1;
    gi << 0.5, 0, 0, 1;
    return (p.gram() - g).norm() == 0.0 && (p.gram_inv() - gi).norm() < 1e-15 &&
           near(p.log_det(), std::log(2.0L), 1e-15L);
  });
  run.check("ellipsoid: zero vector update", [](std::string&) {
    PrecisionState p(2, 1.0);
    p.rank_one_update(Vector::Zero(2), 1.0);
    return p.gram() == Matrix::Identity(2, 2) && p.log_det() == 0.0 && p.update_count() == 1;
  });
  run.check("ellipsoid: random updates vs dense inverse", [](std::string& detail) {
    Rng rng(11, 0);
    PrecisionState p(4, 1.0);
    Matrix g = Matrix::Identity(4, 4);
    for (int i = 0; i < 10; ++i) {
      Vector phi(4);
      for (int j = 0; j < 4; ++j) phi[j] = rng.gaussian();
      const double sigma = rng.uniform(0.5, 2.0);
      p.rank_one_update(phi, sigma);
      g += phi * phi.transpose() / (sigma * sigma);
    }
    const double err = (p.gram_inv() - g.inverse()).cwiseAbs().maxCoeff();
    detail = "max error " + show(err);
    return err < 1e-8;
  });
  run.check("ellipsoid: mahalanobis examples", [](std::string&) {
    PrecisionState p(2, 1.0);
    Matrix g(2, 2);
    g << 4, 0, 0, 1;
    const auto q = PrecisionState::from_gram(1.0, g, 1);
    return p.mahalanobis_inv(Vector::Unit(2, 0)) == 1.0 &&
           near(q.mahalanobis_inv(Vector::Unit(2, 0)), 0.5L, 1e-15L);
  });
  run.check("ellipsoid: mahalanobis vs dense solve", [](std::string&) {
    Rng rng(12, 0);
    PrecisionState p(3, 0.5);
    for (int i = 0; i < 7; ++i) p.rank_one_update(unit(rng, 3), rng.uniform(0.5, 2.0));
    const Vector x = unit(rng, 3);
    const double want = std::sqrt(x.dot(p.gram().ldlt().solve(x)));
    return near(p.mahalanobis_inv(x), want, 1e-12L);
  });
}

void huber_checks(Runner& run) {
  run.check("huber: loss branches", [](std::string&) {
    return huber_loss(0.5, 1) == 0.125 && huber_loss(2, 1) == 1.5 && huber_loss(-3, 2) == 4.0;
  });
  run.check("huber: gradient clipping", [](std::string&) {
    return huber_grad(0.5, 1) == 0.5 && huber_grad(2, 1) == 1.0 && huber_grad(-5, 2) == -2.0;
  });
  run.check("huber: schedule at eps = 1", [](std::string&) {
    const auto s = default_schedule(1.0, 100, 0.1, 1.0, 1.0, 1.0, 1.0, 0.1);
    const ld l = std::log(200000.0L);
    return near(s.c0, 1 / std::sqrt(23 * l), 1e-14L) && near(s.c1, 1 / (48 * l), 1e-14L) &&
           near(s.tau0, std::sqrt(2.0L) / std::sqrt(l), 1e-14L);
  });
  run.check("huber: schedule at eps = 0.5", [](std::string&) {
    const auto s = default_schedule(0.5, 10000, 0.01, 1.0, 5.0, 1.0, 1.0, 0.01);
    const auto w = ld_schedule(0.5L, 10000.0L, 0.01L, 1.0L, 5.0L);
    return near(s.c0, w.c0, 1e-13L) && near(s.c1, w.c1, 1e-13L) && near(s.tau0, w.tau0, 1e-13L);
  });
  run.check("huber: delta >= 1 rejected", [](std::string&) {
    return throws([] { default_schedule(1.0, 100, 1.0, 1.0, 1.0, 1.0, 1.0, 0.1); });
  });
  run.check("huber: weight sigma examples", [](std::string& detail) {
    HuberScheduleConfig cfg;
    cfg.sigma_min = 0.1;
    cfg.c0 = 0.5;
    cfg.c1 = 1.0;
    cfg.kappa = 1.0;
    const double a = weight_sigma(cfg, 0.5, 0.0);
    const double b = weight_sigma(cfg, 0.0, 0.05);
    const ld term4 = std::sqrt(0.05L) / std::pow(2.0L, 0.25L);
    const ld want_b = std::max({0.1L, 0.05L / 0.5L, term4});
    const double c = weight_sigma(cfg, 10.0, 1e-6);
    detail = "second example " + show(b);
    return a == 0.5 && near(b, want_b, 1e-15L) && c == 10.0;
  });
  run.check("huber: robustness threshold examples", [](std::string&) {
    HuberScheduleConfig one;
    one.epsilon = 1.0;
    one.tau0 = 2.0;
    HuberScheduleConfig third;
    third.epsilon = 1.0 / 3.0;
    third.tau0 = 1.0;
    const ld two_root_two = 2 * std::sqrt(2.0L);
    return near(robustness_tau(one, 1, 1.0), two_root_two, 1e-15L) &&
           near(robustness_tau(one, 777, 1.0), two_root_two, 1e-15L) &&
           near(robustness_tau(third, 16, 1.0), two_root_two, 1e-14L);
  });
  run.check("huber: threshold at eps = 0.99, d = 10, T = 1e4", [](std::string&) {
    const std::int64_t T = 10000;
    const double smin = 0.01;
    const double kappa = huber_kappa(10, T, 1.0, 10.0, smin);
    const auto cfg = default_schedule(0.99, T, 0.1, 1.0, kappa, 1.0, 1.0, smin);
    const ld kap = 10 * std::log(1 + 10000.0L / (10 * 10 * 0.0001L));
    const auto w = ld_schedule(0.99L, 10000.0L, 0.1L, 1.0L, kap);
    const ld e = (1 - 0.99L) / (2 * 1.99L);
    const ld wt = 0.3L;
    const ld want = w.tau0 * std::sqrt(1 + wt * wt) / wt * std::pow(5000.0L, e);
    return near(robustness_tau(cfg, 5000, 0.3), want, 1e-12L);
  });
}

SolveProblem single_term(double radius, double y) {
  SolveProblem p;
  p.dim = 1;
  p.ball_radius = radius;
  p.lambda = 1.0;
  p.smoothness = 2.0;
  p.objective = [y](const Vector& x, Vector& g) {
    const double z = y - x[0];
    g = x;
    g[0] -= huber_grad(z, 10.0);
    return 0.5 * x[0] * x[0] + huber_loss(z, 10.0);
  };
  return p;
}

void solver_checks(Runner& run) {
  run.check("solver: one-dimensional boundary solution", [](std::string& detail) {
    const auto r = solve(single_term(1.0, 2.0));
    detail = "theta " + show(r.solution[0]);
    return r.converged && std::abs(r.solution[0] - 1.0) < 1e-8;
  });
  run.check("solver: zero data gives zero", [](std::string&) {
    SolveProblem p;
    p.dim = 3;
    p.lambda = 1.0;
    p.smoothness = 1.0;
    p.warm_start = Vector::Constant(3, 0.4);
    p.objective = [](const Vector& x, Vector& g) {
      g = x;
      return 0.5 * x.squaredNorm();
    };
    const auto r = solve(p);
    return r.converged && r.solution.norm() < 1e-8;
  });
  run.check("solver: quadratic regime equals weighted ridge", [](std::string& detail) {
    Rng rng(13, 0);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
      const int d = 1 + static_cast<int>(rng.next_u64() % 8);
      const int n = 1 + static_cast<int>(rng.next_u64() % 50);
      const double lambda = rng.uniform(0.5, 2.0);
      std::vector<Vector> phis;
      std::vector<double> ys, sigmas, taus;
      Vector truth(d);
      for (int i = 0; i < d; ++i) truth[i] = 0.3 * rng.gaussian();
      PrecisionState h(d, lambda);
      Matrix a = lambda * Matrix::Identity(d, d);
      Vector rhs = Vector::Zero(d);
      for (int s = 0; s < n; ++s) {
        Vector phi(d);
        for (int i = 0; i < d; ++i) phi[i] = 0.5 * rng.gaussian();
        phis.push_back(phi);
        ys.push_back(phi.dot(truth) + 0.1 * rng.gaussian());
        sigmas.push_back(rng.uniform(0.5, 2.0));
        taus.push_back(1e3);
        h.rank_one_update(phi, sigmas.back());
        a += phi * phi.transpose() / (sigmas.back() * sigmas.back());
        rhs += ys.back() * phi / (sigmas.back() * sigmas.back());
      }
      const HuberTerms terms{phis, ys, sigmas, taus};
      HuberFitOptions opt;
      opt.precondition = false;
      const auto r = huber_argmin(terms, h, 100.0, Vector::Zero(d), opt);
      worst = std::max(worst, (r.solution - a.ldlt().solve(rhs)).norm());
    }
    detail = "max error " + show(worst);
    return worst < 1e-6;
  });
  run.check("solver: ball projection examples", [](std::string&) {
    Vector x(2);
    x << 3.0, 4.0;
    const Vector p = project_ball(x, 1.0);
    return project_ball(x, 10.0) == x && project_ball(x, 5.0) == x &&
           near(p[0], 0.6L, 1e-15L) && near(p[1], 0.8L, 1e-15L);
  });
}

HuberScheduleConfig small_schedule(int d, std::int64_t T, double lambda) {
  const double smin = 1.0 / std::sqrt(static_cast<double>(T));
  return default_schedule(1.0, T, 0.1, 1.0, huber_kappa(d, T, 1.0, lambda, smin), 1.0, 1.0, smin);
}

void regression_checks(Runner& run) {
  run.check("regression: observe examples", [](std::string&) {
    HuberScheduleConfig cfg;
    cfg.sigma_min = 1.0;
    cfg.c0 = 0.5;
    cfg.c1 = 1e6;
    HuberRegressor reg(2, 1.0, cfg);
    const auto z = reg.observe(Vector::Zero(2), 0.3);
    const auto u = reg.observe(Vector::Unit(2, 0), 0.0);
    const auto h = reg.observe(Vector::Unit(2, 0), 1e6);
    return z.sigma == 1.0 && z.w == 0.0 &&
           z.tau == robustness_tau(cfg, 1, kLeverageFloor) && near(u.sigma, 2.0L, 1e-15L) &&
           near(u.w, 0.5L, 1e-15L) && h.sigma == 1e6 && h.w < 1e-5;
  });
  run.check("regression: noiseless stream recovers the coefficient", [](std::string& detail) {
    Rng rng(14, 0);
    auto cfg = small_schedule(3, 200, 1e-3);
    cfg.c0 = 1.0;
    cfg.c1 = 1.0;
    HuberRegressor reg(3, 1e-3, cfg);
    Vector truth(3);
    truth << 0.5, -0.3, 0.2;
    for (int t = 0; t < 200; ++t) {
      const Vector phi = unit(rng, 3);
      reg.record(phi, phi.dot(truth), 0.0);
    }
    detail = "error " + show((reg.theta() - truth).norm());
    return (reg.theta() - truth).norm() <= 1e-3;
  });
  run.check("regression: single record matches the solver example", [](std::string&) {
    HuberScheduleConfig cfg;
    cfg.sigma_min = 1.0;
    cfg.tau0 = 10.0;
    cfg.c1 = 1e6;
    cfg.B = 1.0;
    HuberRegressor reg(1, 1.0, cfg);
    reg.record(Vector::Ones(1), 2.0, 1.0);
    return std::abs(reg.theta()[0] - 1.0) < 1e-8;
  });
  run.check("regression: NaN target rejected", [](std::string&) {
    HuberRegressor reg(2, 1.0, small_schedule(2, 10, 1.0));
    return throws([&] { reg.record(Vector::Unit(2, 0), std::nan(""), 1.0); });
  });
  run.check("regression: confidence radius examples", [](std::string&) {
    HuberScheduleConfig cfg = small_schedule(2, 100, 1.0);
    cfg.B = 2.0;
    const double r0 = huber_confidence_radius(cfg, 1.0, 0);
    cfg.kappa = 1.7;
    const ld collapse = 3 * 2.0L + 24 * std::sqrt(2 * 1.7L) * std::sqrt(std::log(2 * 10000.0L / 0.1L));
    HuberScheduleConfig half = default_schedule(0.5, 1000, 0.05, 1.3, 2.5, 1.5, 1.0, 0.03);
    const ld e = 0.5L / 3.0L;
    const ld want = 3 * std::sqrt(0.7L) * 1.5L +
                    24 * std::pow(100.0L, e) * std::sqrt(5.0L) * 1.3L *
                        std::pow(std::log(3000.0L), e) *
                        std::pow(std::log(2 * 1e6L / 0.05L), 0.5L / 1.5L);
    return r0 == 6.0 && near(huber_confidence_radius(cfg, 1.0, 57), collapse, 1e-13L) &&
           near(huber_confidence_radius(half, 0.7, 100), want, 1e-12L);
  });
  run.check("regression: perturbed re-solves", [](std::string&) {
    Rng rng(15, 0);
    HuberRegressor empty(3, 1.0, small_schedule(3, 50, 1.0));
    HuberRegressor reg(3, 1.0, small_schedule(3, 50, 1.0));
    for (int t = 0; t < 50; ++t) {
      const Vector phi = unit(rng, 3);
      reg.record(phi, phi.dot(Vector::Constant(3, 0.2)) + 0.01 * rng.gaussian(), 0.01);
    }
    std::vector<double> same(reg.targets().begin(), reg.targets().end());
    return empty.solve_perturbed({}).norm() == 0.0 &&
           (reg.solve_perturbed(same) - reg.theta()).norm() == 0.0;
  });
  run.check("regression: ridge examples", [](std::string& detail) {
    RidgeRegressor none(2, 1.0);
    RidgeRegressor one(2, 1.0);
    one.update(Vector::Unit(2, 0), 2.0, 1.0);
    Rng rng(16, 0);
    RidgeRegressor many(4, 1.0);
    Matrix a = Matrix::Identity(4, 4);
    Vector rhs = Vector::Zero(4);
    for (int s = 0; s < 30; ++s) {
      const Vector phi = unit(rng, 4);
      const double f = rng.gaussian(), sigma = rng.uniform(0.5, 2.0);
      many.update(phi, f, sigma);
      a += phi * phi.transpose() / (sigma * sigma);
      rhs += f * phi / (sigma * sigma);
    }
    const double err = (many.w() - a.ldlt().solve(rhs)).cwiseAbs().maxCoeff();
    detail = "dense error " + show(err);
    return none.w().norm() == 0.0 && near(one.w()[0], 1.0L, 1e-15L) && one.w()[1] == 0.0 &&
           err < 1e-8;
  });
}

BanditInstance basis_instance(Vector theta) {
  BanditInstance inst;
  inst.dim = static_cast<int>(theta.size());
  inst.theta_star = std::move(theta);
  inst.noise.kind = NoiseKind::deterministic;
  inst.decision_set.kind = ArmKind::standard_basis;
  return inst;
}

std::vector<std::size_t> picks(const RunRecord& r) {
  std::vector<std::size_t> out;
  for (const auto& row : r.rows) out.push_back(nlohmann::json::parse(row.diag_json)["arm"]);
  return out;
}

void bandit_checks(Runner& run) {
  run.check("bandit: optimistic argmax examples", [](std::string&) {
    const std::vector<Vector> arms = {Vector::Unit(2, 0), Vector::Unit(2, 1)};
    const std::vector<Vector> twins = {Vector::Unit(2, 0), Vector::Unit(2, 0)};
    const Matrix eye = Matrix::Identity(2, 2);
    return ucb_argmax(arms, Vector::Unit(2, 0), 0.0, eye) == 0 &&
           ucb_argmax(arms, Vector::Unit(2, 0), 0.5, eye) == 0 &&
           ucb_argmax(twins, Vector::Zero(2), 1.0, eye) == 0;
  });
  run.check("bandit: deterministic rewards recover the coefficient", [](std::string& detail) {
    Vector theta(3);
    theta << 0.2, -0.4, 0.6;
    const BanditInstance inst = basis_instance(theta);
    LearnerParams p = LearnerParams::for_instance(inst, 500, 1.0, 0.1, 1.0);
    auto schedule = default_schedule(1.0, 500, 0.1, 1.0,
                                     huber_kappa(3, 500, 1.0, p.lambda, p.sigma_min), 1.0, 1.0,
                                     p.sigma_min);
    schedule.c0 = 1.0;
    schedule.c1 = 1.0;
    p.schedule = schedule;
    HeavyOful learner(p);
    const bool first = near(learner.radius(), 3 * std::sqrt(static_cast<ld>(p.lambda)), 1e-14L);
    run_bandit(inst, learner, 500, 1);
    const double err = (learner.regressor().theta() - theta).cwiseAbs().maxCoeff();
    detail = "max coordinate error " + show(err);
    return first && err < 1e-2;
  });
  run.check("bandit: ridge UCB on orthonormal deterministic arms", [](std::string&) {
    Vector theta(3);
    theta << 0.2, 0.5, 0.8;
    const BanditInstance inst = basis_instance(theta);
    LearnerParams p = LearnerParams::for_instance(inst, 200, 1.0, 0.1, 1.0);
    p.lambda = 0.01;
    RidgeUcb oful(p, false);
    const auto chosen = picks(run_bandit(inst, oful, 200, 2));
    bool ok = chosen[0] == 0 && chosen[1] == 1 && chosen[2] == 2;
    for (std::size_t t = 3; t < chosen.size(); ++t) ok &= chosen[t] == 2;
    return ok;
  });
  run.check("bandit: degenerate baselines equal ridge UCB", [](std::string&) {
    BanditInstance inst;
    inst.dim = 4;
    inst.theta_star = Vector::Constant(4, 0.5);
    inst.noise.df = 3.0;
    inst.noise.epsilon = 0.5;
    LearnerParams p = LearnerParams::for_instance(inst, 300, 0.5, 0.1, 0.3);
    RidgeUcb oful(p, false);
    const auto base = run_bandit(inst, oful, 300, 4);
    LearnerParams inf = p;
    inf.truncation_scale = std::numeric_limits<double>::infinity();
    RidgeUcb trunc(inf, true);
    LearnerParams one = p;
    one.folds = 1;
    MedianOfMeans mom(one);
    return picks(base) == picks(run_bandit(inst, trunc, 300, 4)) &&
           picks(base) == picks(run_bandit(inst, mom, 300, 4));
  });
  run.check("bandit: single-arm sets have zero regret", [](std::string&) {
    BanditInstance inst;
    inst.dim = 4;
    inst.theta_star = Vector::Constant(4, 0.5);
    inst.noise.kind = NoiseKind::gaussian;
    inst.decision_set.arms = 1;
    auto learner = make_bandit_learner("heavy_oful", LearnerParams::for_instance(inst, 100, 1.0, 0.1, 1.0));
    return run_bandit(inst, *learner, 100, 5).final_regret() == 0.0;
  });
}

void mdp_checks(Runner& run) {
  run.check("mdp: horizon one is max reward", [](std::string&) {
    const LinearMDPSpec spec = tiny_mdp(3, 2, 1);
    const auto dp = exact_dp_oracle(spec);
    bool ok = true;
    for (int s = 0; s < 3; ++s) {
      ok &= dp.V[0][s] == std::max(spec.reward_mean(0, s, 0), spec.reward_mean(0, s, 1));
    }
    return ok;
  });
  run.check("mdp: dp oracle vs policy enumeration", [](std::string& detail) {
    const LinearMDPSpec spec = tiny_mdp(3, 2, 3);
    const auto dp = exact_dp_oracle(spec);
    double best = -1.0;
    for (int code = 0; code < (1 << 9); ++code) {
      Policy pol(3, std::vector<int>(3));
      for (int h = 0; h < 3; ++h) {
        for (int s = 0; s < 3; ++s) pol[h][s] = (code >> (h * 3 + s)) & 1;
      }
      best = std::max(best, evaluate_policy(spec, pol)[0][spec.initial_state]);
    }
    detail = "dp " + show(dp.V[0][spec.initial_state]) + " enumeration " + show(best);
    return near(dp.V[0][spec.initial_state], best, 1e-12L);
  });
  run.check("mdp: zero rewards give zero values", [](std::string&) {
    MdpRewardSpec r;
    r.hi = 0.0;
    const auto spec = make_tabular_linear_mdp(3, 2, 3, r, MdpNoiseSpec{}, 2);
    const auto dp = exact_dp_oracle(spec);
    bool ok = true;
    for (const auto& row : dp.V) {
      for (double v : row) ok &= v == 0.0;
    }
    return ok;
  });
  run.check("mdp: generator rows and moments", [](std::string&) {
    const LinearMDPSpec spec = tiny_mdp(3, 2, 3);
    spec.validate();
    bool ok = spec.dim == 6;
    for (int h = 0; h < 3; ++h) {
      for (int s = 0; s < 3; ++s) {
        for (int a = 0; a < 2; ++a) {
          const Vector p = spec.transition(h, s, a);
          ok &= std::abs(p.sum() - 1.0) < 1e-12 && p.minCoeff() >= 0.0;
          ok &= near(spec.psi_star[h].dot(spec.features(s, a)), spec.central_moment(h, s, a), 1e-12L);
        }
      }
    }
    return ok;
  });
  run.check("mdp: weights at the floor", [](std::string&) {
    const LinearMDPSpec spec = tiny_mdp(3, 2, 3);
    const auto p = MdpLearnerParams::for_spec(spec, 2000, 0.05, 1.0);
    const auto c = mdp_constants(p);
    NuInputs first;
    first.phi_norm = 1.0 / std::sqrt(p.lambda_R);
    first.beta_R = c.beta_R_at(p, 0);
    first.beta_R_eps = c.beta_R_eps_at(p, 0);
    SigmaInputs start;
    start.phi_norm = 1.0 / std::sqrt(p.lambda_V);
    const auto sig = value_weight_sigma(p, c, start);
    return reward_weight_nu(p, c, NuInputs{}) == p.nu_min &&
           reward_weight_nu(p, c, first) >= p.nu_min && sig.D == p.cap * p.cap &&
           sig.sigma >= std::sqrt(p.dim * p.dim * p.dim * static_cast<double>(p.horizon)) * p.cap;
  });
  run.check("mdp: rare switch examples", [](std::string&) {
    PrecisionState last(2, 1.0), grown(2, 1.0), mild(2, 1.0);
    grown.rank_one_update(Vector::Unit(2, 0), 1.0);
    mild.rank_one_update(Vector::Unit(2, 0), std::sqrt(2.0));
    mild.rank_one_update(Vector::Unit(2, 1), std::sqrt(5.0));
    return rare_switch_check(grown.log_det(), last.log_det(), 0, 0) &&
           !rare_switch_check(mild.log_det(), last.log_det(), 0, 0) &&
           !rare_switch_check(last.log_det(), last.log_det(), 0, 0);
  });
  run.check("mdp: first episode values are cap and zero", [](std::string&) {
    const LinearMDPSpec spec = tiny_mdp(3, 2, 3);
    HeavyLsviUcb learner(spec, MdpLearnerParams::for_spec(spec, 10, 0.05, 1.0));
    Rng rng(1, 0);
    learner.run_episode(rng);
    bool ok = true;
    for (int h = 0; h < 3; ++h) {
      for (int s = 0; s < 3; ++s) {
        for (int a = 0; a < 2; ++a) ok &= learner.q_opt(h, s, a) == spec.cap && learner.q_pes(h, s, a) == 0.0;
      }
    }
    return ok;
  });
  run.check("mdp: value tables are monotone", [](std::string&) {
    const LinearMDPSpec spec = tiny_mdp(3, 2, 3);
    HeavyLsviUcb learner(spec, MdpLearnerParams::for_spec(spec, 200, 0.05, 1e-4, 0.05, 1.0));
    Rng rng(2, 0);
    std::vector<double> hi(18, INFINITY), lo(18, -INFINITY);
    bool ok = true;
    for (int k = 0; k < 200; ++k) {
      learner.run_episode(rng);
      for (int h = 0; h < 3; ++h) {
        for (int sa = 0; sa < 6; ++sa) {
          const double q = learner.q_opt(h, sa / 2, sa % 2), qc = learner.q_pes(h, sa / 2, sa % 2);
          ok &= q <= hi[h * 6 + sa] && qc >= lo[h * 6 + sa];
          hi[h * 6 + sa] = q;
          lo[h * 6 + sa] = qc;
        }
      }
    }
    return ok;
  });
  run.check("mdp: seeded runs are bit-exact", [](std::string&) {
    const LinearMDPSpec spec = tiny_mdp(3, 2, 3);
    const auto p = MdpLearnerParams::for_spec(spec, 50, 0.05, 1.0);
    const auto a = run_mdp(spec, p, 3), b = run_mdp(spec, p, 3);
    bool ok = a.record.rows.size() == b.record.rows.size();
    for (std::size_t i = 0; ok && i < a.record.rows.size(); ++i) {
      ok &= a.record.rows[i].cum_regret == b.record.rows[i].cum_regret &&
            a.record.rows[i].diag_json == b.record.rows[i].diag_json;
    }
    return ok;
  });
}

void rng_checks(Runner& run) {
  run.check("rng: identical inputs give identical draws", [](std::string&) {
    Rng a(42, 3), b(42, 3);
    for (int i = 0; i < 1000; ++i) {
      if (a.next_u64() != b.next_u64()) return false;
    }
    return true;
  });
  run.check("rng: distinct streams differ", [](std::string&) {
    Rng a(42, 3), b(42, 4);
    int same = 0;
    for (int i = 0; i < 16; ++i) same += a.next_u64() == b.next_u64();
    return same == 0;
  });
  run.check("rng: student-t df=2 mean", [](std::string& detail) {
    Rng rng(7, 0);
    double sum = 0.0;
    for (int i = 0; i < 1000000; ++i) sum += rng.student_t(2.0);
    detail = "mean " + show(sum / 1e6);
    return std::abs(sum / 1e6) < 0.05;
  });
}

void harness_checks(Runner& run) {
  run.check("harness: duplicate seeds rejected", [](std::string&) {
    try {
      parse_config(R"({"kind":"bandit","seeds":[1,1],"algorithms":[{"name":"oful"}]})");
    } catch (const ConfigError& e) {
      return e.where() == "seeds[1]";
    }
    return false;
  });
  run.check("harness: fingerprint ignores key order and number spelling", [](std::string&) {
    const auto a = parse_config(R"({"kind":"bandit","seeds":[1],"algorithms":[{"name":"oful","delta":0.1,"horizon":10}]})");
    const auto b = parse_config(R"({"algorithms":[{"horizon":10,"delta":1e-1,"name":"oful"}],"seeds":[1],"kind":"bandit","output_dir":"x"})");
    return a.fingerprint() == b.fingerprint();
  });
  run.check("harness: csv round trip", [](std::string&) {
    RunRecord r;
    r.run_id = "oful-s3-0123abcd";
    r.seed = 3;
    r.rows = {{1, 0.1, 0.1, R"({"a":1,"b":"x"})"}, {2, 1.0 / 3.0, 0.1 + 1.0 / 3.0, "{}"}};
    const RunRecord back = parse_run_csv(run_csv(r));
    return back.run_id == r.run_id && back.seed == 3 && back.rows.size() == 2 &&
           back.rows[1].instant_regret == r.rows[1].instant_regret &&
           back.rows[0].diag_json == r.rows[0].diag_json && back.algorithm == "oful";
  });
}

}  // namespace

std::vector<SelftestCheck> selftest() {
  Runner run;
  ellipsoid_checks(run);
  huber_checks(run);
  solver_checks(run);
  regression_checks(run);
  bandit_checks(run);
  mdp_checks(run);
  rng_checks(run);
  harness_checks(run);
  return run.checks;
}

}  // namespace heavyrl

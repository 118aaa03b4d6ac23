#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "heavyrl/linalg.hpp"
#include "heavyrl/random.hpp"
#include "heavyrl/record.hpp"
#include "heavyrl/regression.hpp"

namespace heavyrl {

enum class NoiseKind { student_t, gaussian, deterministic };

/// Zero-mean reward noise alpha * eta. The per-round multiplier is
/// alpha = scale * 10^U with U uniform on [log10_lo, log10_hi] (a constant
/// multiplier when the range is empty); eta is Student-t(df) or standard normal.
struct NoiseModel {
  NoiseKind kind = NoiseKind::student_t;
  double df = 2.0;
  double scale = 1.0;
  double log10_lo = 0.0;
  double log10_hi = 0.0;
  /// Moment order used for nu: nu = (E|noise|^{1+epsilon})^{1/(1+epsilon)}.
  double epsilon = 1.0;

  void validate() const;
  double draw_multiplier(Rng& rng) const;
  double sample(Rng& rng, double multiplier) const;
  /// Central moment nu for a given multiplier (exact, closed form).
  double central_moment(double multiplier) const;
  /// Upper bound of nu over all multipliers the model can draw.
  double moment_bound() const;
};

/// (E|X|^p)^{1/p} for the standardized noise shapes.
double student_t_abs_moment(double df, double p);
double gaussian_abs_moment(double p);

enum class ArmKind { unit_sphere, standard_basis, fixed };

struct DecisionSetSpec {
  ArmKind kind = ArmKind::unit_sphere;
  int arms = 20;
  std::vector<Vector> fixed;
};

struct BanditInstance {
  int dim = 1;
  Vector theta_star;
  DecisionSetSpec decision_set;
  NoiseModel noise;
  double B = 1.0;
  double L = 1.0;
  /// Reveal nu_t to the learner; otherwise it receives noise.moment_bound().
  bool reveal_nu = true;

  void validate() const;
  std::vector<Vector> arms(Rng& rng) const;
};

using Diagnostics = std::vector<std::pair<std::string, double>>;

class BanditLearner {
 public:
  virtual ~BanditLearner() = default;
  virtual std::string name() const = 0;
  /// Index of the arm to play; ties go to the lowest index.
  virtual std::size_t choose(const std::vector<Vector>& arms) const = 0;
  virtual void update(const Vector& phi, double reward, double nu) = 0;
  virtual Diagnostics diagnostics() const { return {}; }
};

struct LearnerParams {
  int dim = 1;
  std::int64_t horizon = 1;
  double epsilon = 1.0;
  double delta = 0.1;
  double lambda = 1.0;
  double B = 1.0;
  double L = 1.0;
  double bonus_scale = 1.0;
  double sigma_min = 1.0;
  /// Global bound on nu; the sub-Gaussian proxy of the ridge baselines.
  double nu_bound = 1.0;
  /// Median-of-means fold count; 0 selects ceil(8 log(2T^2/delta)).
  int folds = 0;
  /// Truncation level multiplier; infinity disables clipping.
  double truncation_scale = 1.0;
  /// Heavy-OFUL regression constants; derived from the fields above when unset.
  std::optional<HuberScheduleConfig> schedule;

  /// lambda = d/B^2, sigma_min = 1/sqrt(T), nu_bound from the noise model.
  static LearnerParams for_instance(const BanditInstance& instance, std::int64_t horizon,
                                    double epsilon, double delta, double bonus_scale);
};

/// argmax_i <arm_i, center> + radius |arm_i|_{gram_inv}, lowest index on ties.
std::size_t ucb_argmax(const std::vector<Vector>& arms, const Vector& center, double radius,
                       const Matrix& gram_inv);

/// Abbasi-Yadkori radius R sqrt(d log((1 + t L^2/(lambda d))/delta)) + sqrt(lambda) B.
double ridge_confidence_radius(int dim, std::int64_t t, double L, double lambda, double delta,
                               double R, double B);

class HeavyOful : public BanditLearner {
 public:
  explicit HeavyOful(const LearnerParams& params);
  std::string name() const override { return "heavy_oful"; }
  std::size_t choose(const std::vector<Vector>& arms) const override;
  void update(const Vector& phi, double reward, double nu) override;
  Diagnostics diagnostics() const override;

  const HuberRegressor& regressor() const { return regressor_; }
  double radius() const { return regressor_.confidence_radius() * params_.bonus_scale; }

 private:
  LearnerParams params_;
  HuberRegressor regressor_;
  RecordResult last_;
};

/// Ridge regression with the self-normalized radius. Rewards may be clipped
/// at u_t = truncation_scale * (t / log(2T^2/delta))^{1/(1+eps)} * nu_bound.
class RidgeUcb : public BanditLearner {
 public:
  RidgeUcb(const LearnerParams& params, bool truncate);
  std::string name() const override { return truncate_ ? "truncation" : "oful"; }
  std::size_t choose(const std::vector<Vector>& arms) const override;
  void update(const Vector& phi, double reward, double nu) override;
  Diagnostics diagnostics() const override;

  double radius() const;
  double truncation_level(std::int64_t t) const;
  const RidgeRegressor& ridge() const { return ridge_; }

 private:
  LearnerParams params_;
  bool truncate_;
  RidgeRegressor ridge_;
  std::int64_t t_ = 0;
};

/// Round-robin folds of ridge regressions; each arm scores the median of the
/// per-fold optimistic values.
class MedianOfMeans : public BanditLearner {
 public:
  explicit MedianOfMeans(const LearnerParams& params);
  std::string name() const override { return "median_of_means"; }
  std::size_t choose(const std::vector<Vector>& arms) const override;
  void update(const Vector& phi, double reward, double nu) override;
  Diagnostics diagnostics() const override;

  int folds() const { return static_cast<int>(folds_.size()); }
  static int default_folds(std::int64_t horizon, double delta);

 private:
  LearnerParams params_;
  std::vector<RidgeRegressor> folds_;
  std::vector<std::int64_t> counts_;
  std::int64_t t_ = 0;
};

std::unique_ptr<BanditLearner> make_bandit_learner(const std::string& algorithm,
                                                   const LearnerParams& params);

/// Plays `horizon` rounds. Arms and noise come from streams (seed, 0) and
/// (seed, 1), so every learner faces the same arms and noise for a given seed.
RunRecord run_bandit(const BanditInstance& instance, BanditLearner& learner,
                     std::int64_t horizon, std::uint64_t seed);

}  // namespace heavyrl

#pragma once

#include <cstdint>

#include "heavyrl/linalg.hpp"

namespace heavyrl {

/// Regularized weighted Gram matrix `lambda * I + sum_s phi_s phi_s^T / sigma_s^2`
/// together with its inverse and log-determinant.
///
/// The inverse is maintained by Sherman-Morrison rank-one updates and is
/// recomputed from the Gram matrix by a Cholesky factorization every
/// `kRefactorInterval` updates to bound accumulated drift.
class PrecisionState {
 public:
  static constexpr std::uint64_t kRefactorInterval = 256;

  PrecisionState(int dim, double lambda);

  int dim() const { return dim_; }
  double lambda() const { return lambda_; }
  const Matrix& gram() const { return gram_; }
  const Matrix& gram_inv() const { return gram_inv_; }
  double log_det() const { return log_det_; }
  std::uint64_t update_count() const { return update_count_; }

  /// Adds `phi phi^T / sigma^2`. Returns w^2 = phi^T H^{-1} phi / sigma^2
  /// evaluated against the inverse before the update.
  double rank_one_update(const Vector& phi, double sigma);

  /// sqrt(phi^T H^{-1} phi).
  double mahalanobis_inv(const Vector& phi) const;

  /// sqrt(x^T H x), the norm the confidence ellipsoid is measured in.
  double norm(const Vector& x) const;

  /// Recomputes the inverse and log-determinant from the Gram matrix.
  void refactor();

  /// Rebuilds a state from a stored Gram matrix; inverse and log-determinant
  /// are recomputed by factorization.
  static PrecisionState from_gram(double lambda, const Matrix& gram,
                                  std::uint64_t update_count);

  /// Restores every field verbatim (checkpoint round trip).
  static PrecisionState restore(double lambda, const Matrix& gram, const Matrix& gram_inv,
                                double log_det, std::uint64_t update_count);

 private:
  int dim_;
  double lambda_;
  Matrix gram_;
  Matrix gram_inv_;
  double log_det_;
  std::uint64_t update_count_ = 0;
};

}  // namespace heavyrl

#include "heavyrl/ellipsoid.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace heavyrl {

namespace {

void check_dim(const PrecisionState& state, const Vector& phi) {
  if (phi.size() != state.dim()) {
    throw std::invalid_argument("feature dimension " + std::to_string(phi.size()) +
                                " does not match precision dimension " +
                                std::to_string(state.dim()));
  }
}

}  // namespace

PrecisionState::PrecisionState(int dim, double lambda) : dim_(dim), lambda_(lambda) {
  if (dim < 1) throw std::invalid_argument("precision dimension must be >= 1");
  if (!(lambda > 0.0) || !std::isfinite(lambda)) {
    throw std::invalid_argument("regularizer lambda must be positive and finite");
  }
  gram_ = lambda * Matrix::Identity(dim, dim);
  gram_inv_ = (1.0 / lambda) * Matrix::Identity(dim, dim);
  log_det_ = dim * std::log(lambda);
}

double PrecisionState::rank_one_update(const Vector& phi, double sigma) {
  check_dim(*this, phi);
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw std::invalid_argument("rank-one update weight sigma must be positive and finite");
  }
  const Vector u = phi / sigma;
  const Vector hu = gram_inv_ * u;
  const double w2 = std::max(0.0, u.dot(hu));

  gram_.noalias() += u * u.transpose();
  gram_inv_.noalias() -= (hu * hu.transpose()) / (1.0 + w2);
  gram_inv_ = 0.5 * (gram_inv_ + gram_inv_.transpose()).eval();
  log_det_ += std::log1p(w2);
  ++update_count_;

  if (update_count_ % kRefactorInterval == 0) refactor();
  return w2;
}

double PrecisionState::mahalanobis_inv(const Vector& phi) const {
  check_dim(*this, phi);
  return std::sqrt(std::max(0.0, phi.dot(gram_inv_ * phi)));
}

double PrecisionState::norm(const Vector& x) const {
  check_dim(*this, x);
  return std::sqrt(std::max(0.0, x.dot(gram_ * x)));
}

void PrecisionState::refactor() {
  Eigen::LLT<Matrix> llt(gram_);
  if (llt.info() != Eigen::Success) {
    throw std::runtime_error("Gram matrix lost positive definiteness");
  }
  gram_inv_ = llt.solve(Matrix::Identity(dim_, dim_));
  gram_inv_ = 0.5 * (gram_inv_ + gram_inv_.transpose()).eval();
  const Matrix& l = llt.matrixLLT();
  double ld = 0.0;
  for (int i = 0; i < dim_; ++i) ld += std::log(l(i, i));
  log_det_ = 2.0 * ld;
}

PrecisionState PrecisionState::from_gram(double lambda, const Matrix& gram,
                                         std::uint64_t update_count) {
  if (gram.rows() != gram.cols() || gram.rows() < 1) {
    throw std::invalid_argument("stored Gram matrix must be square and non-empty");
  }
  PrecisionState state(static_cast<int>(gram.rows()), lambda);
  state.gram_ = gram;
  state.update_count_ = update_count;
  state.refactor();
  return state;
}

PrecisionState PrecisionState::restore(double lambda, const Matrix& gram,
                                       const Matrix& gram_inv, double log_det,
                                       std::uint64_t update_count) {
  if (gram.rows() != gram.cols() || gram.rows() < 1 || gram_inv.rows() != gram.rows() ||
      gram_inv.cols() != gram.cols()) {
    throw std::invalid_argument("stored precision matrices have inconsistent shapes");
  }
  PrecisionState state(static_cast<int>(gram.rows()), lambda);
  state.gram_ = gram;
  state.gram_inv_ = gram_inv;
  state.log_det_ = log_det;
  state.update_count_ = update_count;
  return state;
}

}  // namespace heavyrl

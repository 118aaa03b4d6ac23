#pragma once

#include <cstdint>

namespace heavyrl {

/// Counter-based generator: draw i of stream (seed, stream) is a fixed
/// function of (seed, stream, i), so results do not depend on the platform's
/// standard library. Variates are produced by the methods below, not <random>.
class Rng {
 public:
  Rng(std::uint64_t master_seed, std::uint64_t stream);

  std::uint64_t next_u64();
  /// Uniform on (0, 1); never returns 0 or 1.
  double uniform();
  double uniform(double lo, double hi);
  double gaussian();
  /// Gamma(shape, 1) by Marsaglia-Tsang.
  double gamma(double shape);
  double chi_square(double df);
  /// Student-t as Z / sqrt(chi2_df / df).
  double student_t(double df);

  /// Independent child stream.
  Rng split(std::uint64_t substream) const;

  std::uint64_t counter() const { return counter_; }

 private:
  explicit Rng(std::uint64_t key) : key_(key) {}

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t x);

}  // namespace heavyrl

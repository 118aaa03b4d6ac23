#include "heavyrl/random.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace heavyrl {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
constexpr std::uint64_t kStreamMul = 0xD1B54A32D192ED03ULL;

}  // namespace

std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ULL;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBULL;
  x ^= x >> 31;
  return x;
}

Rng::Rng(std::uint64_t master_seed, std::uint64_t stream)
    : key_(mix64(mix64(master_seed + kGolden) ^ mix64((stream + 1) * kStreamMul))) {}

std::uint64_t Rng::next_u64() {
  ++counter_;
  return mix64(key_ + counter_ * kGolden);
}

double Rng::uniform() {
  // 53 random bits, shifted by half an ulp so both ends are excluded.
  return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::gaussian() {
  const double u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double Rng::gamma(double shape) {
  if (!(shape > 0.0)) throw std::invalid_argument("gamma shape must be positive");
  if (shape < 1.0) {
    // Boost to shape + 1 and scale by U^{1/shape}.
    const double g = gamma(shape + 1.0);
    return g * std::pow(uniform(), 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  while (true) {
    double x;
    double v;
    do {
      x = gaussian();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

double Rng::chi_square(double df) { return 2.0 * gamma(0.5 * df); }

double Rng::student_t(double df) {
  if (!(df > 0.0)) throw std::invalid_argument("Student-t needs df > 0");
  const double z = gaussian();
  return z / std::sqrt(chi_square(df) / df);
}

Rng Rng::split(std::uint64_t substream) const {
  return Rng(mix64(key_ ^ mix64((substream + 1) * kStreamMul)));
}

}  // namespace heavyrl

#pragma once

#include <random>

#include "heavyrl/linalg.hpp"

namespace testing {

inline heavyrl::Vector random_vector(std::mt19937_64& gen, int dim, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  heavyrl::Vector v(dim);
  for (int i = 0; i < dim; ++i) v[i] = n(gen);
  return v;
}

inline heavyrl::Vector random_unit(std::mt19937_64& gen, int dim) {
  heavyrl::Vector v = random_vector(gen, dim);
  return v / v.norm();
}

inline double max_abs(const heavyrl::Matrix& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace testing

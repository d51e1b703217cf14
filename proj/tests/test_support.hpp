#pragma once

// Helpers shared by the unit tests: random fills and central differences.

#include <cmath>
#include <functional>

#include "ndnn/matrix.hpp"
#include "ndnn/rng.hpp"

namespace ndnn::test {

inline Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed, double scale = 1.0) {
  RngStream rng(seed);
  return gaussian(rng, 0.0, scale, r, c);
}

// Central difference of f with respect to every entry of x.
inline std::vector<double> numeric_grad(std::span<double> x, const std::function<double()>& f,
                                        double h = 1e-5) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f();
    x[i] = keep - h;
    const double down = f();
    x[i] = keep;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1e-4, std::abs(a), std::abs(b)});
}

inline double max_rel_err(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, rel_err(a[i], b[i]));
  return m;
}

}  // namespace ndnn::test

// Seeded synthetic datasets.
#pragma once

#include "advcert/core.hpp"

#include <cstdint>
#include <random>

namespace advcert {

/// K isotropic Gaussian classes whose means sit on the first axis at
/// (k - (K-1)/2) * gap. Sample i belongs to class i mod K. With K = 2 the labels
/// are +-1 (class 1 is +1); otherwise they are class indices 0..K-1.
inline Dataset generate_gaussians(std::size_t n, std::size_t m, std::size_t K, double gap, double noise,
                                  std::uint64_t seed) {
  detail::require(n >= 1 && m >= 1, "need n >= 1 and m >= 1");
  detail::require(K >= 2, "need K >= 2 classes");
  detail::require(std::isfinite(gap) && std::isfinite(noise) && noise >= 0, "gap and noise must be finite, noise >= 0");
  Rng rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix X(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
  std::vector<std::size_t> cls(n);
  for (std::size_t i = 0; i < n; ++i) {
    cls[i] = i % K;
    for (std::size_t j = 0; j < m; ++j) X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = noise * g(rng);
    X(static_cast<Eigen::Index>(i), 0) += (static_cast<double>(cls[i]) - 0.5 * static_cast<double>(K - 1)) * gap;
  }
  if (K == 2) {
    BinaryLabels y;
    for (auto c : cls) y.values.push_back(c == 1 ? 1 : -1);
    return Dataset(std::move(X), std::move(y));
  }
  return Dataset(std::move(X), ClassLabels{std::move(cls), K});
}

/// y = w.x + noise with w = (1, 1/2, 1/3, ...) and x uniform in [-1, 1]^m.
inline Dataset generate_regression_line(std::size_t n, std::size_t m, double noise, std::uint64_t seed) {
  detail::require(n >= 1 && m >= 1, "need n >= 1 and m >= 1");
  detail::require(std::isfinite(noise) && noise >= 0, "noise must be finite and nonnegative");
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix X(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
  RealLabels y;
  for (std::size_t i = 0; i < n; ++i) {
    double target = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      const double v = u(rng);
      X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
      target += v / static_cast<double>(j + 1);
    }
    y.values.push_back(target + noise * g(rng));
  }
  return Dataset(std::move(X), std::move(y));
}

}  // namespace advcert

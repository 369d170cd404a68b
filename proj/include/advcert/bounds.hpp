// Decomposed risk certificates shared by the linear and network modules.
#pragma once

#include "advcert/core.hpp"

#include <cmath>
#include <string>

namespace advcert {

/// A high-probability upper bound on adversarial risk, split into its parts.
/// `complexity` holds the epsilon-free capacity term and `perturbation`
/// every term that scales with epsilon, so perturbation == 0 at epsilon == 0.
struct BoundReport {
  double empirical = 0.0;
  double perturbation = 0.0;
  double complexity = 0.0;
  double confidence = 0.0;
  double total = 0.0;
  double delta = 0.05;
  double epsilon = 0.0;
  std::size_t n = 0;
  std::string loss;
  std::string form;
};

/// 3 sqrt(ln(2/delta) / (2n))
inline double confidence_term(double delta, std::size_t n) {
  detail::require(delta > 0.0 && delta < 1.0, "delta must lie in (0, 1)");
  detail::require(n >= 1, "confidence term needs n >= 1");
  return 3.0 * std::sqrt(std::log(2.0 / delta) / (2.0 * static_cast<double>(n)));
}

namespace detail {

inline BoundReport finish_report(BoundReport r) {
  require(std::isfinite(r.empirical) && std::isfinite(r.perturbation) &&
              std::isfinite(r.complexity) && std::isfinite(r.confidence),
          "bound evaluation produced a non-finite term");
  r.total = r.empirical + r.perturbation + r.complexity + r.confidence;
  return r;
}

}  // namespace detail
}  // namespace advcert

#pragma once

#include <cmath>

namespace ubr::diff {

/// Lower clamp applied to a probability before taking its logarithm.
inline constexpr double kProbabilityFloor = 1e-12;

/// Logistic function, evaluated on the branch that cannot overflow.
inline double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// 0.5 x^2 inside the unit interval, |x| - 0.5 outside.
inline double smooth_l1(double x) {
  const double a = std::fabs(x);
  return a < 1.0 ? 0.5 * x * x : a - 0.5;
}

inline double smooth_l1_derivative(double x) {
  if (std::fabs(x) < 1.0) return x;
  return x > 0.0 ? 1.0 : -1.0;
}

/// log(p) with p clamped from below so the result stays finite.
inline double log_probability(double p) { return std::log(p < kProbabilityFloor ? kProbabilityFloor : p); }

/// d/dp of log_probability; zero where the clamp is active.
inline double log_probability_derivative(double p) { return p < kProbabilityFloor ? 0.0 : 1.0 / p; }

}  // namespace ubr::diff

#pragma once

#include <cmath>

#include "ivtrans/errors.hpp"

namespace ivtrans {

// One-parameter error-hazard family
//
//   lambda(t) = exp(t) / (1 + r exp(t)),   r >= 0,
//
// with r = 0 the proportional hazards model (extreme-value error) and r = 1
// the proportional odds model (logistic error). The cumulative hazard has the
// closed form Lambda(t) = exp(t) for r = 0 and log(1 + r exp(t)) / r
// otherwise.
struct HazardFamily {
  double r;

  explicit HazardFamily(double r_in) : r(r_in) {
    if (!std::isfinite(r) || r < 0.0)
      throw domain_error("hazard family index r must be finite and >= 0");
  }

  static HazardFamily proportional_hazards() { return HazardFamily(0.0); }
  static HazardFamily proportional_odds() { return HazardFamily(1.0); }
};

namespace detail {

inline void require_finite_time(double t) {
  if (!std::isfinite(t)) throw domain_error("non-finite argument to hazard family");
}

// log(1 + exp(a)) without overflow.
inline double softplus(double a) {
  return a > 0.0 ? a + std::log1p(std::exp(-a)) : std::log1p(std::exp(a));
}

}  // namespace detail

// lambda(t) = 1 / (exp(-t) + r); decays like exp(t) at -inf and saturates at
// 1/r for r > 0.
inline double hazard(const HazardFamily& f, double t) {
  detail::require_finite_time(t);
  if (f.r == 0.0) return std::exp(t);
  return 1.0 / (std::exp(-t) + f.r);
}

inline double cumulative_hazard(const HazardFamily& f, double t) {
  detail::require_finite_time(t);
  if (f.r == 0.0) return std::exp(t);
  return detail::softplus(t + std::log(f.r)) / f.r;
}

// lambda'(t) = exp(t) / (1 + r exp(t))^2 = u / (u + r)^2 with u = exp(-t).
inline double hazard_derivative(const HazardFamily& f, double t) {
  detail::require_finite_time(t);
  if (f.r == 0.0) return std::exp(t);
  if (t < -350.0) return std::exp(t);  // (u + r)^2 would overflow; limit is exp(t)
  const double u = std::exp(-t);
  return u / ((u + f.r) * (u + f.r));
}

// Inverse-survival sampler: the t with exp(-Lambda(t)) = u.
inline double sample_error(const HazardFamily& f, double u) {
  if (!(u > 0.0 && u < 1.0))
    throw domain_error("sample_error requires u strictly inside (0,1)");
  if (f.r == 0.0) return std::log(-std::log(u));
  return std::log(std::expm1(-f.r * std::log(u)) / f.r);
}

}  // namespace ivtrans

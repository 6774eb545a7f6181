/**
 * @file special.hpp
 * @brief Normal-distribution helpers and Gaussian integrals of piecewise
 *        exponentials, evaluated in log space so that far tails neither
 *        overflow nor underflow.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <boost/math/special_functions/erf.hpp>

namespace bbm::special {

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
inline constexpr double kSqrt2 = std::numbers::sqrt2;
inline constexpr double kSqrt2Pi = 2.5066282746310002;  // sqrt(2*pi)

/// Standard normal density.
inline double norm_pdf(double z) { return std::exp(-0.5 * z * z) / kSqrt2Pi; }

/// Standard normal CDF, Phi(z).
inline double norm_cdf(double z) { return 0.5 * std::erfc(-z / kSqrt2); }

/// Upper tail 1 - Phi(z), accurate far into the tail.
inline double norm_sf(double z) { return 0.5 * std::erfc(z / kSqrt2); }

/// log Phi(z). For z < -30 erfc underflows, so the Mills-ratio series is used.
inline double log_norm_cdf(double z) {
  if (z == -kInf) return -kInf;
  if (z == kInf) return 0.0;
  if (z > 5.0) return std::log1p(-norm_sf(z));
  if (z > -30.0) return std::log(norm_cdf(z));
  const double z2 = z * z;
  const double inv = 1.0 / z2;
  // Phi(z) = phi(z)/|z| * (1 - 1/z^2 + 3/z^4 - 15/z^6 + 105/z^8 - ...)
  const double series = 1.0 - inv * (1.0 - 3.0 * inv * (1.0 - 5.0 * inv * (1.0 - 7.0 * inv)));
  return -0.5 * z2 - std::log(-z) - std::log(kSqrt2Pi) + std::log(series);
}

/// log(1 - Phi(z)).
inline double log_norm_sf(double z) { return log_norm_cdf(-z); }

/// Inverse of the upper tail: returns z with 1 - Phi(z) = q, q in (0, 1).
inline double norm_sf_inv(double q) { return kSqrt2 * boost::math::erfc_inv(2.0 * q); }

/// log(Phi(hi) - Phi(lo)) for lo <= hi. Returns -inf when the mass is zero.
inline double log_norm_mass(double lo, double hi) {
  if (!(lo < hi)) return -kInf;
  if (lo > 0.0) {
    // both in the upper half: use the survival function to avoid cancellation
    const double a = log_norm_sf(lo);
    const double b = log_norm_sf(hi);
    if (b == -kInf) return a;
    return a + std::log1p(-std::exp(b - a));
  }
  const double a = log_norm_cdf(hi);
  const double b = log_norm_cdf(lo);
  if (b == -kInf) return a;
  return a + std::log1p(-std::exp(b - a));
}

/**
 * E[exp(s*Y) 1{lo < Y < hi}] for Y ~ N(mean, var).
 *
 * Completing the square gives exp(s*mean + s^2 var/2) (Phi(b) - Phi(a)) with
 * a = (lo - mean - s var)/sd, b = (hi - mean - s var)/sd. The product is
 * formed in log space. For var == 0 the point mass at `mean` is used, with
 * weight 1/2 on a boundary.
 */
inline double gaussian_exp_segment(double mean, double var, double s, double lo, double hi) {
  if (var <= 0.0) {
    if (mean > lo && mean < hi) return std::exp(s * mean);
    if (mean == lo || mean == hi) return 0.5 * std::exp(s * mean);
    return 0.0;
  }
  const double sd = std::sqrt(var);
  const double shift = mean + s * var;
  const double a = (lo == -kInf) ? -kInf : (lo - shift) / sd;
  const double b = (hi == kInf) ? kInf : (hi - shift) / sd;
  const double log_mass = log_norm_mass(a, b);
  if (log_mass == -kInf) return 0.0;
  return std::exp(s * mean + 0.5 * s * s * var + log_mass);
}

/// E[exp(-k |Y - c|)] for Y ~ N(mean, var), k >= 0.
inline double gaussian_laplace_kernel(double mean, double var, double k, double c) {
  // y > c: exp(-k y + k c); y < c: exp(k y - k c)
  const double right = gaussian_exp_segment(mean - c, var, -k, 0.0, kInf);
  const double left = gaussian_exp_segment(mean - c, var, k, -kInf, 0.0);
  return right + left;
}

}  // namespace bbm::special

/**
 * @file kernels.hpp
 * @brief Free Brownian kernels on R^d: the Gaussian transition density,
 *        the alpha-resolvent and the Green function, plus the far-field
 *        asymptote of the resolvent.
 *
 * The resolvent has elementary closed forms in d = 1 and d = 3. Other
 * dimensions use a Laplace-transform quadrature split at t = r^2.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/gamma.hpp>

namespace bbm {

class FreeKernels {
 public:
  explicit FreeKernels(int dimension) : dim_(dimension) {
    if (dimension < 1) throw std::invalid_argument("dimension must be positive");
  }

  int dimension() const { return dim_; }

  /// p_t(x, y) as a function of r = |x - y|.
  double heat(double t, double r) const {
    if (t <= 0.0) throw std::invalid_argument("heat kernel needs t > 0");
    return std::exp(-0.5 * r * r / t) / std::pow(2.0 * std::numbers::pi * t, 0.5 * dim_);
  }

  /// G_alpha(x, y) as a function of r = |x - y|, alpha > 0.
  double resolvent(double alpha, double r) const {
    if (alpha <= 0.0) throw std::invalid_argument("resolvent needs alpha > 0");
    const double k = std::sqrt(2.0 * alpha);
    if (dim_ == 1) return std::exp(-k * r) / k;
    if (dim_ == 3) return std::exp(-k * r) / (2.0 * std::numbers::pi * r);
    return laplace_resolvent(alpha, r);
  }

  /// Green function G(x, y) = G_0, d >= 3.
  double green(double r) const {
    if (dim_ < 3) throw std::invalid_argument("Green function needs d >= 3");
    const double half = 0.5 * dim_;
    return boost::math::tgamma(half - 1.0) / (2.0 * std::pow(std::numbers::pi, half) * std::pow(r, dim_ - 2));
  }

  /// (1/k) (k / (2 pi r))^{(d-1)/2} exp(-k r), k = sqrt(2 alpha).
  double resolvent_asymptote(double alpha, double r) const {
    const double k = std::sqrt(2.0 * alpha);
    return std::pow(k / (2.0 * std::numbers::pi * r), 0.5 * (dim_ - 1)) * std::exp(-k * r) / k;
  }

 private:
  // int_0^inf e^{-alpha t} p_t(r) dt, split at t = r^2 so that both pieces
  // have a tame integrand: the left piece vanishes to all orders at t = 0,
  // the right piece decays exponentially.
  double laplace_resolvent(double alpha, double r) const {
    if (r <= 0.0) {
      if (dim_ >= 2) return std::numeric_limits<double>::infinity();
    }
    auto integrand = [&](double t) {
      if (t <= 0.0) return 0.0;
      return std::exp(-alpha * t - 0.5 * r * r / t) / std::pow(2.0 * std::numbers::pi * t, 0.5 * dim_);
    };
    const double split = r * r;
    using boost::math::quadrature::gauss_kronrod;
    const double left = gauss_kronrod<double, 61>::integrate(integrand, 0.0, split, 12, 1e-13);
    boost::math::quadrature::exp_sinh<double> tail;
    const double right = tail.integrate([&](double s) { return integrand(split + s); }, 1e-13);
    return left + right;
  }

  int dim_;
};

struct ResolventCheck {
  std::vector<double> separations;
  std::vector<double> deviations;  // |G_alpha / asymptote - 1|
  double max_deviation = 0.0;
  bool decreasing = true;
};

/// Compares G_alpha with its far-field asymptote on a ladder of separations.
inline ResolventCheck resolvent_asymptotic_check(int dimension, double alpha,
                                                 std::span<const double> separations) {
  if (alpha <= 0.0) throw std::invalid_argument("resolvent check needs alpha > 0");
  const FreeKernels kernels(dimension);
  ResolventCheck out;
  for (double r : separations) {
    const double dev = std::abs(kernels.resolvent(alpha, r) / kernels.resolvent_asymptote(alpha, r) - 1.0);
    if (!out.deviations.empty() && dev > out.deviations.back() + 1e-15) out.decreasing = false;
    out.separations.push_back(r);
    out.deviations.push_back(dev);
    out.max_deviation = std::max(out.max_deviation, dev);
  }
  return out;
}

inline ResolventCheck resolvent_asymptotic_check(int dimension, double alpha) {
  const std::vector<double> ladder{5.0, 10.0, 20.0};
  return resolvent_asymptotic_check(dimension, alpha, ladder);
}

}  // namespace bbm

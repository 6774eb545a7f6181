/**
 * @file fronts.hpp
 * @brief Centring fronts R1, R2, R3, the weight eta(t) of the ground state
 *        beyond a front, and the limit constants c_d, c_*, c_0, C_0.
 */
#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <variant>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/bessel.hpp>

#include "spectral.hpp"

namespace bbm {

class FrontError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Slowly varying corrections a(t), b(t), as named presets.
struct Correction {
  enum class Kind { zero, log_log, sqrt_log };
  Kind kind = Kind::zero;
  double coef = 0.0;

  double operator()(double t) const {
    switch (kind) {
      case Kind::zero: return 0.0;
      case Kind::log_log: return coef * std::log(std::log(std::max(t, std::numbers::e)));
      case Kind::sqrt_log: return coef * std::sqrt(std::log(std::max(t, 1.0)));
    }
    return 0.0;
  }

  /// Whether the correction tends to +infinity.
  bool diverges() const { return kind != Kind::zero && coef > 0.0; }

  std::string name() const {
    switch (kind) {
      case Kind::zero: return "zero";
      case Kind::log_log: return "loglog";
      case Kind::sqrt_log: return "sqrtlog";
    }
    return "zero";
  }
};

struct FrontR1 {
  double kappa = 0.0;
};
struct FrontR2 {
  double delta = 0.0;
  Correction a;
};
struct FrontR3 {
  double gamma = 0.0;
  Correction b;
};

/// A front t -> R(t); the principal eigenvalue and dimension fix its speed and log term.
class FrontSpec {
 public:
  using Kind = std::variant<FrontR1, FrontR2, FrontR3>;

  FrontSpec(Kind kind, double lambda, int dimension) : kind_(kind), lambda_(lambda), dim_(dimension) {
    if (!(lambda < 0.0)) throw FrontError("fronts need a negative principal eigenvalue");
    const double lo = std::sqrt(-lambda / 2.0);
    const double hi = std::sqrt(-2.0 * lambda);
    if (const auto* r2 = std::get_if<FrontR2>(&kind_)) {
      if (!(r2->delta > lo && r2->delta < hi))
        throw FrontError("R2 needs delta strictly inside (sqrt(-lambda/2), sqrt(-2 lambda)) = (" + std::to_string(lo) +
                         ", " + std::to_string(hi) + ")");
    }
    if (const auto* r3 = std::get_if<FrontR3>(&kind_)) {
      if (r3->gamma < dimension - 1) throw FrontError("R3 needs gamma >= d - 1");
      if (r3->gamma == dimension - 1 && !r3->b.diverges())
        throw FrontError("R3 with gamma = d - 1 needs a correction b(t) tending to infinity");
    }
  }

  const Kind& kind() const { return kind_; }
  double lambda() const { return lambda_; }
  int dimension() const { return dim_; }
  double speed() const { return std::sqrt(-lambda_ / 2.0); }
  double decay_rate() const { return std::sqrt(-2.0 * lambda_); }

  double operator()(double t) const {
    const double logt = t > 0.0 ? std::log(t) : 0.0;
    if (const auto* r1 = std::get_if<FrontR1>(&kind_))
      return speed() * t + (dim_ - 1) / (2.0 * decay_rate()) * logt + r1->kappa;
    if (const auto* r2 = std::get_if<FrontR2>(&kind_)) return r2->delta * t + r2->a(t);
    const auto& r3 = std::get<FrontR3>(kind_);
    return speed() * t + r3.gamma / (2.0 * decay_rate()) * logt + r3.b(t);
  }

  std::string describe() const {
    if (const auto* r1 = std::get_if<FrontR1>(&kind_)) return "R1(kappa=" + std::to_string(r1->kappa) + ")";
    if (const auto* r2 = std::get_if<FrontR2>(&kind_))
      return "R2(delta=" + std::to_string(r2->delta) + ",a=" + r2->a.name() + ":" + std::to_string(r2->a.coef) + ")";
    const auto& r3 = std::get<FrontR3>(kind_);
    return "R3(gamma=" + std::to_string(r3.gamma) + ",b=" + r3.b.name() + ":" + std::to_string(r3.b.coef) + ")";
  }

 private:
  Kind kind_;
  double lambda_;
  int dim_;
};

struct LimitConstants {
  int dimension = 1;
  double c_d = 0.0;
  double c_star = 0.0;         // c_d (sqrt(-lambda/2))^{(d-1)/2}, surface integral by Gauss-Legendre
  double c_star_closed = 0.0;  // same constant from the closed-form surface integral
  double c_zero = 0.0;         // one-sided (rightmost particle), d = 1
  double C_zero = 0.0;         // two-sided, d = 1
};

namespace fronts_detail {

/// int_{S^{d-1}} e^{x <theta, e>} d theta in closed form.
inline double surface_closed(int d, double x) {
  if (d == 1) return 2.0 * std::cosh(x);
  if (d == 2) return 2.0 * std::numbers::pi * boost::math::cyl_bessel_i(0, x);
  if (x == 0.0) return 4.0 * std::numbers::pi;
  return 4.0 * std::numbers::pi * std::sinh(x) / x;
}

/// Same integral by the polar substitution and Gauss-Legendre nodes.
inline double surface_quadrature(int d, double x) {
  using boost::math::quadrature::gauss;
  if (d == 1) return std::exp(x) + std::exp(-x);
  if (d == 2) return 2.0 * gauss<double, 30>::integrate([&](double th) { return std::exp(x * std::cos(th)); }, 0.0, std::numbers::pi);
  return 2.0 * std::numbers::pi * gauss<double, 30>::integrate([&](double u) { return std::exp(x * u); }, -1.0, 1.0);
}

/// int S(k |z|) h(z) nu(dz) for a surface-factor function S.
template <class Surface>
double weighted_integral(const SpectralData& sd, Surface S) {
  const double k = sd.sqrt_m2l;
  const int d = sd.dimension;
  if (const auto* a = std::get_if<AtomicPotential>(&sd.nu)) {
    double total = 0.0;
    for (std::size_t j = 0; j < a->size(); ++j)
      total += a->weights[j] * sd.h(Point{a->locations[j], 0.0, 0.0}) * S(d, k * std::abs(a->locations[j]));
    return total;
  }
  if (const auto* s = std::get_if<ShellPotential>(&sd.nu)) {
    const double area = spectral_detail::sphere_area(d) * std::pow(s->radius, d - 1);
    return s->weight * area * sd.h.radial(s->radius) * S(d, k * s->radius);
  }
  const auto& r = std::get<RadialPotential>(sd.nu);
  auto f = [&](double rho) {
    return r.value(rho) * sd.h.radial(rho) * S(d, k * rho) * spectral_detail::sphere_area(d) * std::pow(rho, d - 1);
  };
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, 0.0, r.shape.radius, 15, 1e-13);
}

/// int_R^inf e^{-k|y - a|} dy.
inline double exp_peak_right_mass(double k, double a, double R) {
  if (R >= a) return std::exp(-k * (R - a)) / k;
  return (2.0 - std::exp(-k * (a - R))) / k;
}

}  // namespace fronts_detail

/**
 * One-sided constant in d = 1: (1/(-2 lambda)) int e^{side k z} h(z) nu(dz).
 * side = +1 gives c_0 (rightward tail), side = -1 the leftward one.
 */
inline double directional_constant_1d(const SpectralData& sd, int side) {
  const auto* a = std::get_if<AtomicPotential>(&sd.nu);
  const double k = sd.sqrt_m2l;
  double total = 0.0;
  if (a) {
    for (std::size_t j = 0; j < a->size(); ++j)
      total += a->weights[j] * sd.h(Point{a->locations[j], 0.0, 0.0}) * std::exp(side * k * a->locations[j]);
  } else {
    // symmetric radial densities in d = 1: both half-lines contribute e^{k r} and e^{-k r}
    total = 0.5 * fronts_detail::weighted_integral(sd, fronts_detail::surface_closed);
  }
  return total / (-2.0 * sd.lambda);
}

/// Limit constants for a ground state. Throws when the weighted integral is not positive.
inline LimitConstants constants(const SpectralData& sd) {
  const int d = sd.dimension;
  const double k = sd.sqrt_m2l;
  LimitConstants out;
  out.dimension = d;
  const double quad = fronts_detail::weighted_integral(sd, fronts_detail::surface_quadrature);
  const double closed = fronts_detail::weighted_integral(sd, fronts_detail::surface_closed);
  out.c_d = std::pow(k, 0.5 * (d - 5)) / std::pow(2.0 * std::numbers::pi, 0.5 * (d - 1)) * quad;
  if (!(out.c_d > 0.0)) throw SpectralError("nonpositive constant c_d: inconsistent signed potential");
  out.c_star = out.c_d * std::pow(std::sqrt(-sd.lambda / 2.0), 0.5 * (d - 1));
  out.c_star_closed = std::pow(-sd.lambda, 0.5 * (d - 3)) / (2.0 * std::pow(2.0 * std::numbers::pi, 0.5 * (d - 1))) * closed;
  if (d == 1) {
    out.C_zero = out.c_d;
    out.c_zero = directional_constant_1d(sd, +1);
  }
  return out;
}

/**
 * c_{d,Theta} for a spherical cap Theta = {theta : theta_1 >= cos(phi)}.
 * For the radial families the inner surface integral does not depend on
 * the direction of z, so the cap contributes its area fraction; point
 * masses in d = 1 use the half-lines phi < pi/2 (rightward) and phi > pi/2.
 */
inline double directional_constant(const SpectralData& sd, double phi) {
  const int d = sd.dimension;
  const auto c = constants(sd);
  if (d == 1) {
    if (phi >= std::numbers::pi) return c.c_d;
    return phi < 0.5 * std::numbers::pi ? directional_constant_1d(sd, +1) : c.c_d - directional_constant_1d(sd, -1);
  }
  double fraction = 0.0;
  if (d == 2) fraction = phi / std::numbers::pi;
  else fraction = 0.5 * (1.0 - std::cos(phi));
  return c.c_d * fraction;
}

/// int_{|y| > R} h(y) dy (R <= 0 gives ||h||_1).
inline double h_tail_mass(const SpectralData& sd, double R) {
  const double k = sd.sqrt_m2l;
  const int d = sd.dimension;
  R = std::max(R, 0.0);
  if (const auto* rep = std::get_if<GroundState::Atomic>(&sd.h.representation())) {
    double total = 0.0;
    for (std::size_t j = 0; j < rep->locations.size(); ++j) {
      const double a = rep->locations[j];
      total += rep->coefs[j] * (fronts_detail::exp_peak_right_mass(k, a, R) + fronts_detail::exp_peak_right_mass(k, -a, R));
    }
    return total;
  }
  using boost::math::quadrature::gauss_kronrod;
  const double area = spectral_detail::sphere_area(d);
  auto radial = [&](double r) { return sd.h.radial(r) * area * std::pow(r, d - 1); };
  // beyond `edge` h is an exact free decay with an elementary tail integral
  double edge = R;
  double amplitude = 0.0;
  if (const auto* s = std::get_if<GroundState::Shell>(&sd.h.representation())) {
    edge = std::max(R, s->radius);
    // h(r) = amplitude (R_s / (k r)) 2 sinh(k R_s) e^{-k r} for r >= R_s
    amplitude = s->amplitude * s->radius / k * 2.0 * std::sinh(k * s->radius);
  } else {
    const auto& g = std::get<GroundState::Radial>(sd.h.representation());
    edge = std::max(R, g.match_radius);
    amplitude = g.tail_scale;
  }
  double inner = 0.0;
  if (edge > R) inner = gauss_kronrod<double, 61>::integrate(radial, R, edge, 15, 1e-13);
  double outer = 0.0;
  if (d == 1) outer = area * amplitude * std::exp(-k * edge) / k;
  else if (d == 3) outer = area * amplitude * (edge / k + 1.0 / (k * k)) * std::exp(-k * edge);  // int r e^{-kr}
  else outer = area * amplitude * edge * boost::math::cyl_bessel_k(1, k * edge) / k;              // int r K0(kr)
  return inner + outer;
}

/// int_R^inf h(y) dy in d = 1.
inline double h_right_tail_mass(const SpectralData& sd, double R) {
  const auto& rep = std::get<GroundState::Atomic>(sd.h.representation());
  double total = 0.0;
  for (std::size_t j = 0; j < rep.locations.size(); ++j)
    total += rep.coefs[j] * fronts_detail::exp_peak_right_mass(sd.sqrt_m2l, rep.locations[j], R);
  return total;
}

struct EtaValue {
  double exact = 0.0;
  double asymptotic = 0.0;
};

/// eta(t) = e^{-lambda t} int_{|y| > R(t)} h, and c_d R^{(d-1)/2} e^{-lambda t - k R}.
inline EtaValue eta(const SpectralData& sd, const LimitConstants& c, const FrontSpec& front, double t) {
  const double R = front(t);
  EtaValue out;
  out.exact = std::exp(-sd.lambda * t) * h_tail_mass(sd, R);
  out.asymptotic = c.c_d * std::pow(std::max(R, 0.0), 0.5 * (sd.dimension - 1)) * std::exp(-sd.lambda * t - sd.sqrt_m2l * R);
  return out;
}

enum class TailMode { two_sided, rightmost };

/**
 * Right-hand side of the tail asymptotics at (t, x). R1 uses the limit
 * h(x) c_* e^{-k kappa}; rightmost mode (d = 1) replaces c_d and c_* by c_0.
 */
inline double predicted_tail(const SpectralData& sd, const LimitConstants& c, const FrontSpec& front, double t,
                             const Point& x, TailMode mode = TailMode::two_sided) {
  const int d = sd.dimension;
  const double k = sd.sqrt_m2l;
  const double hx = sd.h(x);
  const bool right = mode == TailMode::rightmost;
  if (right && d != 1) throw FrontError("rightmost-particle mode needs d = 1");
  const double cd = right ? c.c_zero : c.c_d;
  const double cs = right ? c.c_zero : c.c_star;
  if (const auto* r1 = std::get_if<FrontR1>(&front.kind())) return hx * cs * std::exp(-k * r1->kappa);
  if (const auto* r2 = std::get_if<FrontR2>(&front.kind()))
    return cd * std::pow(r2->delta, 0.5 * (d - 1)) * hx * std::exp((-sd.lambda - k * r2->delta) * t - k * r2->a(t)) *
           std::pow(t, 0.5 * (d - 1));
  const auto& r3 = std::get<FrontR3>(front.kind());
  return cs * hx * std::exp(-k * r3.b(t)) * std::pow(t, 0.5 * (d - 1 - r3.gamma));
}

}  // namespace bbm

/**
 * @file measures.hpp
 * @brief Compactly supported branching-rate measures, binary branching
 *        models built on them, and samplers for the additive functional
 *        A_t^mu along a Brownian path.
 *
 * Three families are supported:
 *  - point masses on the line (d = 1),
 *  - the surface measure of a sphere of radius R_s (d >= 2),
 *  - a bounded radial density V(|x|) supported in a ball of radius r0.
 *
 * For a point mass the additive functional is weight * local time at the
 * atom; for the sphere it is weight * local time of |B| at R_s; for a
 * density it is the occupation integral of V.
 */
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include "kernels.hpp"
#include "rng.hpp"
#include "special.hpp"

namespace bbm {

/// Invalid measure, model or parameter combination.
class ModelError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Points live in R^3; coordinates beyond the model dimension stay zero.
using Point = std::array<double, 3>;

inline double norm(const Point& x) { return std::sqrt(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]); }

struct Atom {
  double location = 0.0;
  double weight = 1.0;
};

struct AtomsMeasure {
  std::vector<Atom> atoms;
};

struct ShellMeasure {
  int dimension = 3;
  double radius = 1.0;
  double weight = 1.0;  // mass per unit surface area
};

enum class DensityProfile { constant, power, tent };

/// mu(dx) = weight * V(|x|) dx with V supported in |x| <= radius.
struct DensityMeasure {
  int dimension = 1;
  DensityProfile profile = DensityProfile::constant;
  double exponent = 0.0;  // only for DensityProfile::power, V(r) = (r / radius)^exponent
  double radius = 1.0;
  double weight = 1.0;

  /// Radial profile V(r), without the weight factor.
  double profile_value(double r) const {
    if (r > radius) return 0.0;
    switch (profile) {
      case DensityProfile::constant: return 1.0;
      case DensityProfile::power: return std::pow(r / radius, exponent);
      case DensityProfile::tent: return 1.0 - r / radius;
    }
    return 0.0;
  }
};

/// A compactly supported Kato-class measure. Construct through the factories.
class KatoMeasure {
 public:
  using Variant = std::variant<AtomsMeasure, ShellMeasure, DensityMeasure>;

  static KatoMeasure atoms(std::vector<Atom> atoms) {
    if (atoms.empty()) throw ModelError("atomic measure needs at least one atom");
    for (const auto& a : atoms) {
      if (!(a.weight > 0.0) || !std::isfinite(a.weight)) throw ModelError("atom weights must be positive");
      if (!std::isfinite(a.location)) throw ModelError("atom locations must be finite");
    }
    return KatoMeasure(AtomsMeasure{std::move(atoms)});
  }

  static KatoMeasure shell(int dimension, double radius, double weight) {
    if (dimension < 2 || dimension > 3) throw ModelError("sphere-shell measures need d = 2 or 3");
    if (!(radius > 0.0)) throw ModelError("shell radius must be positive");
    if (!(weight > 0.0)) throw ModelError("shell weight must be positive");
    return KatoMeasure(ShellMeasure{dimension, radius, weight});
  }

  static KatoMeasure density(DensityMeasure d) {
    if (d.dimension < 1 || d.dimension > 3) throw ModelError("density measures need d in {1, 2, 3}");
    if (!(d.radius > 0.0)) throw ModelError("density support radius must be positive");
    if (!(d.weight > 0.0)) throw ModelError("density weight must be positive");
    if (d.profile == DensityProfile::power && d.exponent < 0.0)
      throw ModelError("power profile needs a nonnegative exponent (bounded V)");
    return KatoMeasure(std::move(d));
  }

  const Variant& variant() const { return v_; }
  bool is_atoms() const { return std::holds_alternative<AtomsMeasure>(v_); }
  bool is_shell() const { return std::holds_alternative<ShellMeasure>(v_); }
  bool is_density() const { return std::holds_alternative<DensityMeasure>(v_); }
  const AtomsMeasure& as_atoms() const { return std::get<AtomsMeasure>(v_); }
  const ShellMeasure& as_shell() const { return std::get<ShellMeasure>(v_); }
  const DensityMeasure& as_density() const { return std::get<DensityMeasure>(v_); }

  int dimension() const {
    return std::visit(
        [](const auto& m) -> int {
          using T = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<T, AtomsMeasure>) return 1;
          else return m.dimension;
        },
        v_);
  }

  /// Radius of a centred ball containing the support.
  double support_radius() const {
    if (is_atoms()) {
      double r = 0.0;
      for (const auto& a : as_atoms().atoms) r = std::max(r, std::abs(a.location));
      return r;
    }
    if (is_shell()) return as_shell().radius;
    return as_density().radius;
  }

  /// Number of components carrying their own offspring law (atoms, else 1).
  std::size_t components() const { return is_atoms() ? as_atoms().atoms.size() : 1; }

 private:
  explicit KatoMeasure(Variant v) : v_(std::move(v)) {}
  Variant v_;
};

/// Signed point-mass potential on the line: nu = sum_j weights[j] delta_{locations[j]}.
struct AtomicPotential {
  std::vector<double> locations;
  std::vector<double> weights;

  std::size_t size() const { return locations.size(); }
  bool trivial() const {
    return std::all_of(weights.begin(), weights.end(), [](double w) { return w == 0.0; });
  }
};

/**
 * Branching rate mu plus binary offspring law p0 + p2 = 1, with p2 constant
 * on each component (per atom, or on the whole shell / density support).
 * Q = R = 2 p2, nu = (Q - 1) mu, nu_R = R mu.
 */
class BranchingModel {
 public:
  BranchingModel(KatoMeasure rate, std::vector<double> p2) : rate_(std::move(rate)), p2_(std::move(p2)) {
    if (p2_.size() == 1 && rate_.components() > 1) p2_.assign(rate_.components(), p2_.front());
    if (p2_.size() != rate_.components()) throw ModelError("need one p2 value per measure component");
    for (double p : p2_)
      if (!(p >= 0.0 && p <= 1.0)) throw ModelError("p2 must lie in [0, 1]");
  }

  const KatoMeasure& rate() const { return rate_; }
  int dimension() const { return rate_.dimension(); }
  double p2(std::size_t component = 0) const { return p2_.at(component); }
  const std::vector<double>& p2_values() const { return p2_; }

  /// Q(x) = sum n p_n(x) = 2 p2.
  double offspring_mean(std::size_t component = 0) const { return 2.0 * p2(component); }
  /// R(x) = sum n(n-1) p_n(x) = 2 p2.
  double offspring_factorial_moment(std::size_t component = 0) const { return 2.0 * p2(component); }
  /// Density of nu = (Q - 1) mu with respect to mu on a component.
  double nu_factor(std::size_t component = 0) const { return offspring_mean(component) - 1.0; }

  /// nu = (Q - 1) mu for an atomic rate measure.
  AtomicPotential nu() const { return atomic_scaled([this](std::size_t j) { return nu_factor(j); }); }
  /// nu_R = R mu for an atomic rate measure.
  AtomicPotential nu_r() const {
    return atomic_scaled([this](std::size_t j) { return offspring_factorial_moment(j); });
  }

 private:
  template <class F>
  AtomicPotential atomic_scaled(F factor) const {
    if (!rate_.is_atoms()) throw ModelError("atomic potential requested for a non-atomic rate measure");
    AtomicPotential out;
    const auto& atoms = rate_.as_atoms().atoms;
    for (std::size_t j = 0; j < atoms.size(); ++j) {
      out.locations.push_back(atoms[j].location);
      out.weights.push_back(factor(j) * atoms[j].weight);
    }
    return out;
  }

  KatoMeasure rate_;
  std::vector<double> p2_;
};

/// One step of a Brownian path.
struct PathSegment {
  Point start{};
  Point end{};
  double duration = 0.0;
};

enum class LocalTimeScheme {
  bridge,           ///< exact Brownian-bridge local time given the endpoints
  shell_occupation  ///< occupation of [a - eps, a + eps] / (2 eps), eps = sqrt(dt)
};

namespace local_time {

/// Hits with probability below e^-60 are treated as impossible.
inline constexpr double kNegligibleLogHit = -60.0;

/**
 * Local time at `level` accumulated by a Brownian bridge from x to y over
 * duration dt, sampled exactly.
 *
 * With u = |x - a| + |y - a|, the bridge reaches a with probability
 * exp(-(u^2 - (x - y)^2) / (2 dt)); given that it does, ell + u has density
 * proportional to v exp(-v^2 / (2 dt)) on v > u.
 */
inline double bridge_sample(double x, double y, double level, double dt, CounterRng& rng) {
  const double u = std::abs(x - level) + std::abs(y - level);
  const double d = x - y;
  const double log_hit = -(u * u - d * d) / (2.0 * dt);
  if (log_hit < kNegligibleLogHit) return 0.0;
  if (log_hit < 0.0 && std::log(rng.uniform()) > log_hit) return 0.0;
  const double e = -2.0 * dt * std::log(rng.uniform());
  return e / (std::sqrt(u * u + e) + u);
}

/// Mean of bridge_sample, for tests and diagnostics.
inline double bridge_mean(double x, double y, double level, double dt) {
  const double u = std::abs(x - level) + std::abs(y - level);
  const double d = x - y;
  // E[ell] = exp(d^2/2dt) * int_u^inf (v - u) v/dt exp(-v^2/2dt) dv
  //        = exp(d^2/2dt) * sqrt(2 pi dt) * (1 - Phi(u / sqrt(dt)))
  const double sd = std::sqrt(dt);
  return std::exp(0.5 * d * d / dt + special::log_norm_sf(u / sd)) * special::kSqrt2Pi * sd;
}

/// Occupation-shell estimate of the local time over one step (trapezoid in time).
inline double shell_estimate(double x, double y, double level, double dt) {
  const double eps = std::sqrt(dt);
  const double inside = (std::abs(x - level) < eps ? 0.5 : 0.0) + (std::abs(y - level) < eps ? 0.5 : 0.0);
  return inside * dt / (2.0 * eps);
}

/**
 * Time at which the local time at a level, started at distance d0 from it,
 * first reaches ell_star, conditioned on this happening before dt.
 *
 * The hitting time of the level plus the inverse local time at ell_star is a
 * first-passage time of d0 + ell_star, whose law is that of v^2 / Z^2.
 */
inline double crossing_time(double d0, double ell_star, double dt, CounterRng& rng) {
  const double v = d0 + ell_star;
  if (v <= 0.0) return 0.0;
  const double c = v / std::sqrt(dt);
  const double u = rng.uniform();
  if (c > 30.0) {
    // deep tail: P(tau <= s | tau <= dt) ~ exp(-v^2/2 (1/s - 1/dt))
    return 1.0 / (1.0 / dt - 2.0 * std::log(u) / (v * v));
  }
  const double z = special::norm_sf_inv(u * special::norm_sf(c));
  return std::min(dt, (v / z) * (v / z));
}

}  // namespace local_time

/**
 * Sample of A_{t+dt}^mu - A_t^mu given the segment endpoints.
 * Point masses and the sphere use bridge local times (or the occupation
 * shell); densities use the endpoint trapezoid and are deterministic.
 */
inline double additive_increment(const PathSegment& seg, const KatoMeasure& m, CounterRng& rng,
                                 LocalTimeScheme scheme = LocalTimeScheme::bridge) {
  if (!(seg.duration > 0.0)) throw ModelError("path segment needs a positive duration");
  const double dt = seg.duration;
  auto sample_level = [&](double a, double b, double level) {
    return scheme == LocalTimeScheme::bridge ? local_time::bridge_sample(a, b, level, dt, rng)
                                             : local_time::shell_estimate(a, b, level, dt);
  };
  if (m.is_atoms()) {
    if (seg.start[1] != 0.0 || seg.start[2] != 0.0 || seg.end[1] != 0.0 || seg.end[2] != 0.0)
      throw ModelError("atomic measures live in d = 1");
    double total = 0.0;
    for (const auto& atom : m.as_atoms().atoms)
      total += atom.weight * sample_level(seg.start[0], seg.end[0], atom.location);
    return total;
  }
  if (m.is_shell()) {
    const auto& s = m.as_shell();
    return s.weight * sample_level(norm(seg.start), norm(seg.end), s.radius);
  }
  const auto& d = m.as_density();
  return d.weight * 0.5 * dt * (d.profile_value(norm(seg.start)) + d.profile_value(norm(seg.end)));
}

/**
 * Potential at |x| = r of the unit "sphere" measure of radius rho:
 * int_{|y| = rho} G_alpha(x, y) sigma(dy). In d = 1 the sphere is {-rho, rho}
 * with counting measure.
 */
inline double sphere_potential(int dimension, double alpha, double rho, double r) {
  const double k = std::sqrt(2.0 * alpha);
  if (dimension == 1) return (std::exp(-k * std::abs(r - rho)) + std::exp(-k * (r + rho))) / k;
  if (dimension == 3) {
    if (r == 0.0) return 2.0 * rho * std::exp(-k * rho);
    const double lo = std::min(r, rho);
    const double hi = std::max(r, rho);
    // (rho / r) (e^{-k|r-rho|} - e^{-k(r+rho)}) / k written with sinh to avoid cancellation
    return (rho / (k * r)) * std::exp(-k * hi) * 2.0 * std::sinh(k * lo);
  }
  if (dimension == 2) {
    const FreeKernels kernels(2);
    auto f = [&](double theta) {
      const double dist2 = r * r + rho * rho - 2.0 * r * rho * std::cos(theta);
      return kernels.resolvent(alpha, std::sqrt(std::max(dist2, 0.0)));
    };
    boost::math::quadrature::tanh_sinh<double> integrator;
    return 2.0 * rho * integrator.integrate(f, 0.0, std::numbers::pi, 1e-9);
  }
  throw ModelError("sphere potential implemented for d in {1, 2, 3}");
}

/// alpha-potential G_alpha mu at a point with |x| = r (radial families) or x = r (atoms).
inline double alpha_potential(const KatoMeasure& m, double alpha, double r) {
  if (m.is_atoms()) {
    const FreeKernels k1(1);
    double total = 0.0;
    for (const auto& a : m.as_atoms().atoms) total += a.weight * k1.resolvent(alpha, std::abs(r - a.location));
    return total;
  }
  if (m.is_shell()) {
    const auto& s = m.as_shell();
    return s.weight * sphere_potential(s.dimension, alpha, s.radius, r);
  }
  const auto& d = m.as_density();
  auto f = [&](double rho) { return d.profile_value(rho) * sphere_potential(d.dimension, alpha, rho, r); };
  using boost::math::quadrature::gauss_kronrod;
  double total = 0.0;
  if (r > 0.0 && r < d.radius) {
    total = gauss_kronrod<double, 31>::integrate(f, 0.0, r, 8, 1e-10) +
            gauss_kronrod<double, 31>::integrate(f, r, d.radius, 8, 1e-10);
  } else {
    total = gauss_kronrod<double, 31>::integrate(f, 0.0, d.radius, 8, 1e-10);
  }
  return d.weight * total;
}

struct KatoReport {
  bool kato_and_compact = false;
  double support_radius = 0.0;
  std::vector<double> alphas;
  std::vector<double> sup_potentials;  // sup_x int G_alpha(x, y) mu(dy), one per alpha
  bool decreasing_in_alpha = true;
  std::string diagnostic;
};

/**
 * Validates the Kato and compact-support properties of a measure and reports
 * sup_x G_alpha mu(x) at alpha in {1, 10, 100}. Every constructible measure
 * passes; the report exhibits the decay in alpha.
 */
inline KatoReport is_kato_and_compact(const KatoMeasure& m) {
  KatoReport out;
  out.support_radius = m.support_radius();
  out.alphas = {1.0, 10.0, 100.0};
  for (double alpha : out.alphas) {
    double sup = 0.0;
    if (m.is_atoms()) {
      // the potential is a sum of peaks, so its maximum sits on an atom
      for (const auto& a : m.as_atoms().atoms) sup = std::max(sup, alpha_potential(m, alpha, a.location));
    } else if (m.is_shell()) {
      // maximal on the sphere itself
      sup = alpha_potential(m, alpha, m.as_shell().radius);
    } else {
      const double r0 = m.support_radius();
      constexpr int kSamples = 24;
      for (int i = 0; i <= kSamples; ++i) sup = std::max(sup, alpha_potential(m, alpha, 1.25 * r0 * i / kSamples));
    }
    if (!out.sup_potentials.empty() && sup > out.sup_potentials.back()) out.decreasing_in_alpha = false;
    out.sup_potentials.push_back(sup);
  }
  const bool finite = std::all_of(out.sup_potentials.begin(), out.sup_potentials.end(),
                                  [](double v) { return std::isfinite(v); });
  out.kato_and_compact = finite && out.decreasing_in_alpha && std::isfinite(out.support_radius);
  out.diagnostic = out.kato_and_compact ? "ok" : "alpha-potential not finite or not decaying";
  return out;
}

}  // namespace bbm

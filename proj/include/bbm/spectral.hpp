/**
 * @file spectral.hpp
 * @brief Principal eigenvalue lambda and L^2-normalized ground state h of
 *        -Delta/2 - nu for the supported potential families.
 *
 * Point masses and the sphere use the resolvent identity
 * h(x) = int G_{-lambda}(x, y) h(y) nu(dy), which reduces to a finite
 * matrix (atoms) or a scalar (sphere) eigenproblem in alpha = -lambda.
 * Radial densities use a finite-volume discretization of the radial
 * operator. Finite-difference oracles based on Sturm-sequence bisection are
 * provided for cross-checks.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/bessel.hpp>

#include "measures.hpp"
#include "volterra.hpp"

namespace bbm {

class SpectralError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// nu = (Q - 1) mu on a sphere of radius `radius`, per unit surface area.
struct ShellPotential {
  int dimension = 3;
  double radius = 1.0;
  double weight = 1.0;
};

/// nu(dx) = factor * weight * V(|x|) dx, with V from `shape`.
struct RadialPotential {
  DensityMeasure shape;
  double factor = 1.0;

  double value(double r) const { return factor * shape.weight * shape.profile_value(r); }
};

using Potential = std::variant<AtomicPotential, ShellPotential, RadialPotential>;

/// nu = (Q - 1) mu for a branching model.
inline Potential potential_of(const BranchingModel& model) {
  const auto& rate = model.rate();
  if (rate.is_atoms()) return model.nu();
  if (rate.is_shell()) {
    const auto& s = rate.as_shell();
    return ShellPotential{s.dimension, s.radius, model.nu_factor() * s.weight};
  }
  return RadialPotential{rate.as_density(), model.nu_factor()};
}

namespace spectral_detail {

inline double sphere_area(int d) {
  switch (d) {
    case 1: return 2.0;
    case 2: return 2.0 * std::numbers::pi;
    case 3: return 4.0 * std::numbers::pi;
    default: throw SpectralError("dimension must be 1, 2 or 3");
  }
}

/**
 * Lowest eigenvalue of the symmetric tridiagonal matrix (diag, off) by
 * bisection on the Sturm count.
 */
inline double lowest_tridiagonal_eigenvalue(const std::vector<double>& diag, const std::vector<double>& off) {
  const std::size_t n = diag.size();
  double lo = diag[0];
  double hi = diag[0];
  for (std::size_t i = 0; i < n; ++i) {
    const double r = (i > 0 ? std::abs(off[i - 1]) : 0.0) + (i + 1 < n ? std::abs(off[i]) : 0.0);
    lo = std::min(lo, diag[i] - r);
    hi = std::max(hi, diag[i] + r);
  }
  auto count_below = [&](double x) {
    std::size_t count = 0;
    double q = diag[0] - x;
    if (q < 0.0) ++count;
    for (std::size_t i = 1; i < n; ++i) {
      if (q == 0.0) q = 1e-300;
      q = diag[i] - x - off[i - 1] * off[i - 1] / q;
      if (q < 0.0) ++count;
    }
    return count;
  };
  for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, std::abs(lo)); ++it) {
    const double mid = 0.5 * (lo + hi);
    if (count_below(mid) >= 1) hi = mid;
    else lo = mid;
  }
  return 0.5 * (lo + hi);
}

/// Eigenvector of a symmetric tridiagonal matrix near `shift`, by inverse iteration.
inline std::vector<double> tridiagonal_eigenvector(const std::vector<double>& diag, const std::vector<double>& off,
                                                   double eigenvalue) {
  const std::size_t n = diag.size();
  const double shift = eigenvalue - 1e-10 * std::max(1.0, std::abs(eigenvalue));
  std::vector<double> v(n, 1.0);
  std::vector<double> c(n);
  std::vector<double> d(n);
  for (int it = 0; it < 4; ++it) {
    // Thomas algorithm on (T - shift) x = v
    double denom = diag[0] - shift;
    c[0] = n > 1 ? off[0] / denom : 0.0;
    d[0] = v[0] / denom;
    for (std::size_t i = 1; i < n; ++i) {
      denom = diag[i] - shift - off[i - 1] * c[i - 1];
      c[i] = i + 1 < n ? off[i] / denom : 0.0;
      d[i] = (v[i] - off[i - 1] * d[i - 1]) / denom;
    }
    v[n - 1] = d[n - 1];
    for (std::size_t i = n - 1; i-- > 0;) v[i] = d[i] - c[i] * v[i + 1];
    double norm2 = 0.0;
    for (double x : v) norm2 += x * x;
    const double scale = 1.0 / std::sqrt(norm2);
    for (double& x : v) x *= scale;
  }
  if (v[0] + v[n / 2] < 0.0)
    for (double& x : v) x = -x;
  return v;
}

/**
 * Radial finite-volume operator -(1/2) r^{1-d} (r^{d-1} u')' - nu on cells
 * r_i = (i + 1/2) dr in (0, L), zero flux at 0, Dirichlet at L, symmetrized
 * by the cell volumes. `cell_potential[i]` is the average of nu over cell i.
 */
struct RadialOperator {
  std::vector<double> diag;
  std::vector<double> off;
  std::vector<double> volume;
  double dr = 0.0;

  RadialOperator(int d, double dr_, const std::vector<double>& cell_potential) : dr(dr_) {
    const std::size_t n = cell_potential.size();
    diag.assign(n, 0.0);
    off.assign(n > 0 ? n - 1 : 0, 0.0);
    volume.assign(n, 0.0);
    auto face = [&](std::size_t i) { return std::pow((i + 1) * dr, d - 1); };  // face between cells i and i+1
    for (std::size_t i = 0; i < n; ++i) volume[i] = std::pow((i + 0.5) * dr, d - 1) * dr;
    for (std::size_t i = 0; i < n; ++i) {
      const double right = face(i) / dr;
      const double left = i > 0 ? face(i - 1) / dr : 0.0;
      diag[i] = 0.5 * (left + right) / volume[i] - cell_potential[i];
      if (i + 1 < n) off[i] = -0.5 * right / std::sqrt(volume[i] * volume[i + 1]);
    }
  }
};

}  // namespace spectral_detail

/**
 * Lowest eigenvalue of -(1/2) u'' - nu on [lo, hi] with Dirichlet ends and
 * mesh `mesh`, each atom lumped onto its neighbouring nodes.
 */
inline double finite_difference_eigenvalue(const AtomicPotential& nu, double lo, double hi, double mesh) {
  const auto n = static_cast<std::size_t>(std::llround((hi - lo) / mesh)) - 1;
  std::vector<double> diag(n, 1.0 / (mesh * mesh));
  std::vector<double> off(n - 1, -0.5 / (mesh * mesh));
  for (std::size_t j = 0; j < nu.size(); ++j) {
    const double pos = (nu.locations[j] - lo) / mesh - 1.0;  // node index of the atom
    const double base = std::floor(pos);
    const double frac = pos - base;
    const auto i = static_cast<std::ptrdiff_t>(base);
    if (i >= 0 && static_cast<std::size_t>(i) < n) diag[i] -= (1.0 - frac) * nu.weights[j] / mesh;
    if (frac > 0.0 && i + 1 >= 0 && static_cast<std::size_t>(i + 1) < n) diag[i + 1] -= frac * nu.weights[j] / mesh;
  }
  return spectral_detail::lowest_tridiagonal_eigenvalue(diag, off);
}

/// Lowest eigenvalue of the radial finite-volume operator for a sphere potential on (0, L).
inline double finite_difference_eigenvalue(const ShellPotential& nu, double L, double dr) {
  // cells centred so that the sphere sits at a cell centre
  const double dr_fit = nu.radius / (std::floor(nu.radius / dr) + 0.5);
  const auto n = static_cast<std::size_t>(L / dr_fit);
  std::vector<double> pot(n, 0.0);
  const auto k = static_cast<std::size_t>(std::llround(nu.radius / dr_fit - 0.5));
  pot[k] = nu.weight * std::pow(nu.radius, nu.dimension - 1) / (std::pow((k + 0.5) * dr_fit, nu.dimension - 1) * dr_fit);
  const spectral_detail::RadialOperator op(nu.dimension, dr_fit, pot);
  return spectral_detail::lowest_tridiagonal_eigenvalue(op.diag, op.off);
}

/// Ground state h. Atomic and sphere states are closed forms; radial densities interpolate a grid.
class GroundState {
 public:
  struct Atomic {
    std::vector<double> locations;
    std::vector<double> coefs;  // h(x) = sum_j coefs[j] exp(-k |x - a_j|)
  };
  struct Shell {
    int dimension = 3;
    double radius = 1.0;
    double amplitude = 1.0;  // h(x) = amplitude * sphere potential at |x|
  };
  struct Radial {
    int dimension = 1;
    double dr = 0.0;
    std::vector<double> values;  // at cell centres (i + 1/2) dr
    double match_radius = 0.0;   // beyond it the exact free decay is used
    double tail_scale = 0.0;     // h(r) = tail_scale * decay(r) for r >= match_radius
  };

  GroundState() = default;
  GroundState(double k, std::variant<Atomic, Shell, Radial> rep) : k_(k), rep_(std::move(rep)) {}

  double decay_rate() const { return k_; }
  const std::variant<Atomic, Shell, Radial>& representation() const { return rep_; }

  double operator()(const Point& x) const {
    if (const auto* a = std::get_if<Atomic>(&rep_)) {
      double s = 0.0;
      for (std::size_t j = 0; j < a->locations.size(); ++j) s += a->coefs[j] * std::exp(-k_ * std::abs(x[0] - a->locations[j]));
      return s;
    }
    return radial(norm(x));
  }

  /// h as a function of |x| for radial states; for atoms, h at x = r.
  double radial(double r) const {
    if (std::holds_alternative<Atomic>(rep_)) return (*this)(Point{r, 0.0, 0.0});
    if (const auto* s = std::get_if<Shell>(&rep_)) {
      const double alpha = 0.5 * k_ * k_;
      return s->amplitude * sphere_potential(s->dimension, alpha, s->radius, r);
    }
    const auto& g = std::get<Radial>(rep_);
    if (r >= g.match_radius) return g.tail_scale * free_decay(g.dimension, r);
    const double pos = r / g.dr - 0.5;
    if (pos <= 0.0) return g.values.front();
    const auto i = static_cast<std::size_t>(pos);
    if (i + 1 >= g.values.size()) return g.values.back();
    const double frac = pos - i;
    return (1.0 - frac) * g.values[i] + frac * g.values[i + 1];
  }

  /// Atomic h as a test function for the Volterra oracle.
  PiecewiseExponential as_piecewise_exponential() const {
    const auto& a = std::get<Atomic>(rep_);
    return PiecewiseExponential::exponential_peaks(a.locations, a.coefs, k_);
  }

  /// Radially symmetric free solution decaying like e^{-k r} r^{-(d-1)/2}.
  double free_decay(int d, double r) const {
    if (d == 1) return std::exp(-k_ * r);
    if (d == 3) return std::exp(-k_ * r) / r;
    return boost::math::cyl_bessel_k(0, k_ * r);
  }

 private:
  double k_ = 0.0;
  std::variant<Atomic, Shell, Radial> rep_;
};

struct SpectralData {
  int dimension = 1;
  double lambda = 0.0;
  double sqrt_m2l = 0.0;  // sqrt(-2 lambda)
  GroundState h;
  std::vector<double> h_at_support;  // at the atoms, or at the shell radius, or at the centre
  double l2_norm_residual = 0.0;     // | ||h||_2 - 1 | by independent quadrature
  double lambda2_diag = 0.0;         // fitted, diagnostic only
  double envelope_c1 = 0.0;
  double envelope_c2 = 0.0;
  Potential nu;
};

namespace spectral_detail {

/// Records c1, c2 with c1 <= h(x) |x|^{(d-1)/2} e^{k|x|} <= c2 for 1 <= |x| <= r_max.
inline void fill_envelope(SpectralData& sd, double r_max) {
  const double k = sd.sqrt_m2l;
  double c1 = special::kInf;
  double c2 = 0.0;
  constexpr int kSamples = 400;
  const std::vector<double> signs = sd.dimension == 1 ? std::vector<double>{-1.0, 1.0} : std::vector<double>{1.0};
  for (double sign : signs) {
    for (int i = 0; i <= kSamples; ++i) {
      const double r = 1.0 + (r_max - 1.0) * i / kSamples;
      const double v = sd.h(Point{sign * r, 0.0, 0.0}) * std::pow(r, 0.5 * (sd.dimension - 1)) * std::exp(k * r);
      c1 = std::min(c1, v);
      c2 = std::max(c2, v);
    }
  }
  sd.envelope_c1 = c1;
  sd.envelope_c2 = c2;
}

/// ||h||_2^2 by adaptive quadrature of the radial (or 1-d) profile, split at the given breakpoints.
inline double l2_norm_squared(const SpectralData& sd, std::vector<double> breaks) {
  using boost::math::quadrature::gauss_kronrod;
  const int d = sd.dimension;
  auto radial_density = [&](double r) {
    const double v = sd.h.radial(r);
    return v * v * sphere_area(d) * std::pow(r, d - 1);
  };
  // truncation radius: relative tail below 1e-12 given the e^{-2kr} envelope
  const double r_trunc = breaks.back() + 14.0 / sd.sqrt_m2l;
  double total = 0.0;
  if (std::holds_alternative<GroundState::Atomic>(sd.h.representation())) {
    // integrate over the line, both sides
    std::sort(breaks.begin(), breaks.end());
    const double lo = breaks.front() - 14.0 / sd.sqrt_m2l;
    const double hi = breaks.back() + 14.0 / sd.sqrt_m2l;
    std::vector<double> pts{lo};
    for (double b : breaks) pts.push_back(b);
    pts.push_back(hi);
    auto f = [&](double x) {
      const double v = sd.h(Point{x, 0.0, 0.0});
      return v * v;
    };
    for (std::size_t i = 0; i + 1 < pts.size(); ++i)
      if (pts[i + 1] > pts[i]) total += gauss_kronrod<double, 61>::integrate(f, pts[i], pts[i + 1], 15, 1e-14);
    // exponential tails beyond lo and hi
    total += (f(lo) + f(hi)) / (2.0 * sd.sqrt_m2l);
    return total;
  }
  std::vector<double> pts{0.0};
  for (double b : breaks)
    if (b > 0.0) pts.push_back(b);
  pts.push_back(r_trunc);
  std::sort(pts.begin(), pts.end());
  for (std::size_t i = 0; i + 1 < pts.size(); ++i)
    if (pts[i + 1] > pts[i]) total += gauss_kronrod<double, 61>::integrate(radial_density, pts[i], pts[i + 1], 15, 1e-14);
  return total;
}

}  // namespace spectral_detail

/**
 * lambda_2 diagnostic: the log-slope s of |e^{lambda t} p_t^nu(x, x) - h(x)^2|
 * over the second half of [0, T], reported as lambda - s. T defaults to
 * min(4 / |lambda|, 20) so the gap stays well above the solver
 * error. Never asserted.
 */
inline double fit_lambda2(const SpectralData& sd, const AtomicPotential& nu, double x, double horizon = 0.0,
                          int steps = 800) {
  if (horizon <= 0.0) horizon = std::min(4.0 / std::abs(sd.lambda), 20.0);
  const VolterraSolution sol(nu, x, horizon, steps);
  const double h2 = std::pow(sd.h(Point{x, 0.0, 0.0}), 2);
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  int n = 0;
  for (int i = steps / 2; i <= steps; i += std::max(1, steps / 40)) {
    const double t = sol.time(i);
    const double diff = std::abs(std::exp(sd.lambda * t) * sol.g(i, 0) - h2);
    if (!(diff > 1e-6 * h2)) continue;
    const double y = std::log(diff);
    sx += t;
    sy += y;
    sxx += t * t;
    sxy += t * y;
    ++n;
  }
  if (n < 3) return 0.0;
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  return sd.lambda - slope;
}

/**
 * Atomic potential on the line. alpha = -lambda is the point where the
 * largest eigenvalue of K(alpha) = G_alpha W equals one; K is similar to the
 * symmetric L^T W L with G_alpha = L L^T.
 */
inline SpectralData principal_eigenvalue(const AtomicPotential& nu, bool with_lambda2 = true) {
  const std::size_t m = nu.size();
  if (m == 0 || std::none_of(nu.weights.begin(), nu.weights.end(), [](double w) { return w > 0.0; }))
    throw SpectralError("no negative eigenvalue: potential has no positive part");

  // largest eigenvalue of K(alpha) and, on request, the matching h at the atoms
  auto top = [&](double alpha, Eigen::VectorXd* h_atoms) {
    const double k = std::sqrt(2.0 * alpha);
    Eigen::MatrixXd G(m, m);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j) G(i, j) = std::exp(-k * std::abs(nu.locations[i] - nu.locations[j])) / k;
    const Eigen::LLT<Eigen::MatrixXd> llt(G);
    const Eigen::MatrixXd L = llt.matrixL();
    Eigen::VectorXd w(m);
    for (std::size_t j = 0; j < m; ++j) w(j) = nu.weights[j];
    const Eigen::MatrixXd S = L.transpose() * w.asDiagonal() * L;
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
    if (h_atoms) *h_atoms = L * es.eigenvectors().col(m - 1);
    return es.eigenvalues()(m - 1);
  };

  double lo = 1e-8;
  double hi = 1e8;
  if (top(lo, nullptr) <= 1.0)
    throw SpectralError("no negative eigenvalue: spectral radius of K(alpha) below 1 on (1e-8, 1e8)");
  if (top(hi, nullptr) >= 1.0) throw SpectralError("eigenvalue below -1e8: potential too strong");
  // bisection in log alpha down to adjacent doubles
  for (int it = 0; it < 400; ++it) {
    const double mid = std::sqrt(lo * hi);
    if (!(mid > lo && mid < hi)) break;
    if (top(mid, nullptr) > 1.0) lo = mid;
    else hi = mid;
  }
  const double alpha = top(hi, nullptr) == 1.0 ? hi : lo;

  Eigen::VectorXd h_atoms;
  top(alpha, &h_atoms);
  if (h_atoms.sum() < 0.0) h_atoms = -h_atoms;
  const double k = std::sqrt(2.0 * alpha);
  std::vector<double> coefs(m);
  for (std::size_t j = 0; j < m; ++j) coefs[j] = nu.weights[j] * h_atoms(j) / k;
  // int e^{-k|y-a|} e^{-k|y-b|} dy = e^{-k|a-b|} (|a-b| + 1/k)
  double norm2 = 0.0;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      const double dist = std::abs(nu.locations[i] - nu.locations[j]);
      norm2 += coefs[i] * coefs[j] * std::exp(-k * dist) * (dist + 1.0 / k);
    }
  const double scale = 1.0 / std::sqrt(norm2);
  for (double& c : coefs) c *= scale;

  SpectralData sd;
  sd.dimension = 1;
  sd.lambda = -alpha;
  sd.sqrt_m2l = k;
  sd.h = GroundState(k, GroundState::Atomic{nu.locations, coefs});
  for (double a : nu.locations) sd.h_at_support.push_back(sd.h(Point{a, 0.0, 0.0}));
  sd.nu = nu;
  sd.l2_norm_residual = std::abs(std::sqrt(spectral_detail::l2_norm_squared(sd, nu.locations)) - 1.0);
  double r_max = 1.0;
  for (double a : nu.locations) r_max = std::max(r_max, std::abs(a) + 1.0);
  spectral_detail::fill_envelope(sd, r_max + 30.0 / k);
  if (with_lambda2) sd.lambda2_diag = fit_lambda2(sd, nu, nu.locations.front());
  return sd;
}

/**
 * Sphere potential in d = 3. With w = (2p - 1) beta, the consistency
 * w * int_{|y|=R} G_alpha(R e, y) sigma(dy) = 1 reads k = w (1 - e^{-2kR}),
 * solvable with k > 0 iff w R > 1/2.
 */
inline SpectralData principal_eigenvalue_shell(const ShellPotential& nu) {
  if (nu.dimension != 3) throw SpectralError("shell eigenproblem implemented for d = 3");
  const double w = nu.weight;
  const double R = nu.radius;
  if (!(w * R > 0.5)) throw SpectralError("subcritical shell: (2p-1) beta R_s <= 1/2, no negative eigenvalue");
  double lo = 0.0;
  double hi = w;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (!(mid > lo && mid < hi)) break;
    if (w * (-std::expm1(-2.0 * mid * R)) - mid > 0.0) lo = mid;
    else hi = mid;
  }
  const double k = 0.5 * (lo + hi);

  // ||h||^2 = 4 pi A^2 R^2 / k^2 * 4 [e^{-2kR}(sinh(2kR)/(4k) - R/2) + sinh^2(kR) e^{-2kR} / (2k)]
  // with h(r) = A (R/r)(e^{-k|r-R|} - e^{-k(r+R)})/k; each bracket term is written in decaying exponentials
  const double e2 = std::exp(-2.0 * k * R);
  const double inner = (1.0 - e2 * e2) / (8.0 * k) - 0.5 * R * e2;  // e^{-2kR} sinh(2kR)/(4k) - R e^{-2kR}/2
  const double outer = (1.0 - e2) * (1.0 - e2) / (8.0 * k);         // sinh^2(kR) e^{-2kR} / (2k)
  const double norm2 = 4.0 * std::numbers::pi * R * R / (k * k) * 4.0 * (inner + outer);
  const double amplitude = 1.0 / std::sqrt(norm2);

  SpectralData sd;
  sd.dimension = 3;
  sd.lambda = -0.5 * k * k;
  sd.sqrt_m2l = k;
  sd.h = GroundState(k, GroundState::Shell{3, R, amplitude});
  sd.h_at_support = {sd.h.radial(R)};
  sd.nu = nu;
  sd.l2_norm_residual = std::abs(std::sqrt(spectral_detail::l2_norm_squared(sd, {R})) - 1.0);
  spectral_detail::fill_envelope(sd, std::max(R + 1.0, 2.0) + 30.0 / k);
  return sd;
}

/// Convenience overload from the model parameters (radius, beta, p2).
inline SpectralData principal_eigenvalue_shell(double radius, double beta, double p2) {
  return principal_eigenvalue_shell(ShellPotential{3, radius, (2.0 * p2 - 1.0) * beta});
}

namespace spectral_detail {

inline std::vector<double> radial_cell_potential(const RadialPotential& nu, double dr, std::size_t n) {
  std::vector<double> pot(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = i * dr;
    const double b = a + dr;
    if (a >= nu.shape.radius) break;
    // cell average of nu by 3-point Gauss on the part inside the support
    const double hi = std::min(b, nu.shape.radius);
    static constexpr double kNodes[3] = {-0.7745966692414834, 0.0, 0.7745966692414834};
    static constexpr double kWeights[3] = {5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};
    double s = 0.0;
    for (int q = 0; q < 3; ++q) s += kWeights[q] * nu.value(0.5 * (a + hi) + 0.5 * (hi - a) * kNodes[q]);
    pot[i] = 0.5 * s * (hi - a) / dr;
  }
  return pot;
}

}  // namespace spectral_detail

/// Lowest eigenvalue of the radial finite-volume operator for a radial density on (0, L).
inline double finite_difference_eigenvalue(const RadialPotential& nu, double L, double dr) {
  const auto n = static_cast<std::size_t>(L / dr);
  const spectral_detail::RadialOperator op(nu.shape.dimension, dr,
                                           spectral_detail::radial_cell_potential(nu, dr, n));
  return spectral_detail::lowest_tridiagonal_eigenvalue(op.diag, op.off);
}

/**
 * Radial density. lambda from the finite-volume operator; the box is widened
 * until it spans 40 decay lengths beyond the support. h is the grid
 * eigenvector inside the support and the exact free decay outside.
 */
inline SpectralData principal_eigenvalue_density(const RadialPotential& nu) {
  const int d = nu.shape.dimension;
  const double r0 = nu.shape.radius;
  const double dr = r0 / 400.0;
  double L = r0 + 40.0;
  double lambda = 0.0;
  std::vector<double> vec;
  spectral_detail::RadialOperator op(d, dr, {0.0});
  for (int attempt = 0; attempt < 6; ++attempt) {
    const auto n = static_cast<std::size_t>(L / dr);
    op = spectral_detail::RadialOperator(d, dr, spectral_detail::radial_cell_potential(nu, dr, n));
    lambda = spectral_detail::lowest_tridiagonal_eigenvalue(op.diag, op.off);
    if (!(lambda < 0.0)) break;
    const double needed = r0 + 40.0 / std::sqrt(-2.0 * lambda);
    if (needed <= L) break;
    L = std::min(needed * 1.1, r0 + 4.0e4 * dr);
    if (attempt == 5) break;
  }
  if (!(lambda < 0.0)) throw SpectralError("no negative eigenvalue: density below the criticality threshold");
  vec = spectral_detail::tridiagonal_eigenvector(op.diag, op.off, lambda);
  const double k = std::sqrt(-2.0 * lambda);

  // undo the volume symmetrization: u_i = v_i / sqrt(V_i)
  GroundState::Radial rep;
  rep.dimension = d;
  rep.dr = dr;
  const auto inside = static_cast<std::size_t>(std::ceil(r0 / dr)) + 2;
  rep.values.resize(inside);
  for (std::size_t i = 0; i < inside; ++i) rep.values[i] = vec[i] / std::sqrt(op.volume[i]);
  rep.match_radius = (inside - 1 + 0.5) * dr;
  GroundState probe(k, rep);
  rep.tail_scale = rep.values.back() / probe.free_decay(d, rep.match_radius);

  SpectralData sd;
  sd.dimension = d;
  sd.lambda = lambda;
  sd.sqrt_m2l = k;
  sd.nu = nu;
  sd.h = GroundState(k, rep);
  const double norm2 = spectral_detail::l2_norm_squared(sd, {r0, rep.match_radius});
  for (double& v : rep.values) v /= std::sqrt(norm2);
  rep.tail_scale /= std::sqrt(norm2);
  sd.h = GroundState(k, rep);
  sd.h_at_support = {sd.h.radial(0.0)};
  sd.l2_norm_residual = std::abs(std::sqrt(spectral_detail::l2_norm_squared(sd, {r0, rep.match_radius})) - 1.0);
  spectral_detail::fill_envelope(sd, std::max(r0 + 1.0, 2.0) + 30.0 / k);
  return sd;
}

/// Dispatch on the potential family.
inline SpectralData principal_eigenvalue(const Potential& nu) {
  if (const auto* a = std::get_if<AtomicPotential>(&nu)) return principal_eigenvalue(*a);
  if (const auto* s = std::get_if<ShellPotential>(&nu)) return principal_eigenvalue_shell(*s);
  return principal_eigenvalue_density(std::get<RadialPotential>(nu));
}

inline SpectralData principal_eigenvalue(const BranchingModel& model) { return principal_eigenvalue(potential_of(model)); }

/**
 * Criticality threshold beta_* of a radial density in d = 3: the smallest
 * beta for which nu = (2p - 1) beta V carries a bound state. By Sturm
 * oscillation this happens iff the zero-energy solution u = r h of
 * -(1/2) u'' - nu u = 0, u(0) = 0, u'(0) = 1 vanishes somewhere on (0, inf),
 * i.e. inside the support or, beyond it, where u is linear. In d = 1, 2 every
 * beta > 0 is supercritical and 0 is returned.
 */
inline double density_threshold(const DensityMeasure& shape, double p2) {
  if (!(p2 > 0.5)) throw SpectralError("density threshold needs p2 > 1/2");
  if (shape.dimension < 3) return 0.0;
  const double r0 = shape.radius;
  auto bound = [&](double beta) {
    const RadialPotential nu{shape, (2.0 * p2 - 1.0) * beta / shape.weight};
    constexpr int kSteps = 20000;
    const double hstep = r0 / kSteps;
    double u = 0.0;
    double du = 1.0;
    auto acc = [&](double r, double uu) { return -2.0 * nu.value(r) * uu; };  // u'' = -2 nu u
    for (int i = 0; i < kSteps; ++i) {
      const double r = i * hstep;
      // classical RK4 on (u, u')
      const double k1u = du, k1v = acc(r, u);
      const double k2u = du + 0.5 * hstep * k1v, k2v = acc(r + 0.5 * hstep, u + 0.5 * hstep * k1u);
      const double k3u = du + 0.5 * hstep * k2v, k3v = acc(r + 0.5 * hstep, u + 0.5 * hstep * k2u);
      const double k4u = du + hstep * k3v, k4v = acc(r + hstep, u + hstep * k3u);
      u += hstep / 6.0 * (k1u + 2 * k2u + 2 * k3u + k4u);
      du += hstep / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v);
      if (u <= 0.0) return true;
    }
    return du < 0.0;
  };
  double lo = 0.0;
  double hi = 1.0;
  while (!bound(hi)) hi *= 2.0;
  for (int it = 0; it < 100 && hi - lo > 1e-12 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (bound(mid)) hi = mid;
    else lo = mid;
  }
  return 0.5 * (lo + hi);
}

struct EigenResidualReport {
  bool available = false;  // false when no Volterra oracle exists for the family
  std::vector<double> points;
  std::vector<double> times;
  std::vector<std::vector<double>> residuals;  // [point][time]: |e^{lambda t} p_t^nu h(x) / h(x) - 1|
  double max_residual = 0.0;
  double envelope_c1 = 0.0;
  double envelope_c2 = 0.0;
};

/// Residuals of p_t^nu h = e^{-lambda t} h at the given points and times (atomic potentials).
inline EigenResidualReport eigen_residual_report(const SpectralData& sd, const std::vector<double>& points,
                                                 const std::vector<double>& times = {0.5, 1.0, 2.0},
                                                 int steps = 512) {
  EigenResidualReport out;
  out.envelope_c1 = sd.envelope_c1;
  out.envelope_c2 = sd.envelope_c2;
  out.points = points;
  out.times = times;
  const auto* nu = std::get_if<AtomicPotential>(&sd.nu);
  if (!nu) return out;
  out.available = true;
  const PiecewiseExponential h = sd.h.as_piecewise_exponential();
  const double horizon = *std::max_element(times.begin(), times.end());
  for (double x : points) {
    const VolterraSolution sol(*nu, x, horizon, steps);
    std::vector<double> row;
    for (double t : times) {
      const int i = static_cast<int>(std::lround(t / sol.step()));
      const double value = sol.expectation(h, i) * std::exp(sd.lambda * sol.time(i));
      const double r = std::abs(value / sd.h(Point{x, 0.0, 0.0}) - 1.0);
      row.push_back(r);
      out.max_residual = std::max(out.max_residual, r);
    }
    out.residuals.push_back(std::move(row));
  }
  return out;
}

inline EigenResidualReport eigen_residual_report(const SpectralData& sd) {
  std::vector<double> points{0.0};
  if (const auto* nu = std::get_if<AtomicPotential>(&sd.nu))
    for (double a : nu->locations)
      if (a != 0.0) points.push_back(a);
  return eigen_residual_report(sd, points);
}

}  // namespace bbm

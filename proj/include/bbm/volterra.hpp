/**
 * @file volterra.hpp
 * @brief Feynman-Kac kernel p_t^nu for a signed point-mass potential on the
 *        line, computed from the Duhamel identity as a Volterra system.
 *
 * With atoms a_j and weights w_j, g_j(t) = p_t^nu(x, a_j) satisfies
 *
 *   g_j(t) = p_t(x, a_j) + sum_k w_k int_0^t g_k(s) p_{t-s}(a_k, a_j) ds.
 *
 * The first terms of the Neumann series are elementary because time
 * convolutions of Gaussian kernels have closed forms (in Laplace space they
 * are powers of e^{-kW}/k). They are summed exactly; the remainder is smooth
 * at t = 0 and is solved by piecewise-linear product integration against
 * the 1/sqrt(t-s) kernel, with the kernel moments in closed form.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "measures.hpp"
#include "special.hpp"

namespace bbm {

class VolterraError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace volterra_detail {

inline double heat1(double t, double d) { return std::exp(-0.5 * d * d / t) / std::sqrt(2.0 * std::numbers::pi * t); }

/// int_0^U p_u(d) du.
inline double moment0(double U, double d) {
  if (U <= 0.0) return 0.0;
  const double ad = std::abs(d);
  return std::sqrt(2.0 * U / std::numbers::pi) * std::exp(-0.5 * ad * ad / U) - ad * std::erfc(ad / std::sqrt(2.0 * U));
}

/// int_0^U u p_u(d) du.
inline double moment1(double U, double d) {
  if (U <= 0.0) return 0.0;
  const double ad = std::abs(d);
  return 2.0 / (3.0 * special::kSqrt2Pi) * U * std::sqrt(U) * std::exp(-0.5 * ad * ad / U) -
         ad * ad / 3.0 * moment0(U, ad);
}

/**
 * Hat-function weights for int_0^{nh} p_u(d) v(u) du with v linear on each
 * cell [qh, (q+1)h]: lower[q] multiplies v(qh), upper[q] multiplies v((q+1)h).
 */
struct ProductWeights {
  std::vector<double> lower;
  std::vector<double> upper;

  ProductWeights(double d, double h, int n) : lower(n), upper(n) {
    double m0_prev = 0.0;
    double m1_prev = 0.0;
    for (int q = 0; q < n; ++q) {
      const double m0 = moment0((q + 1) * h, d);
      const double m1 = moment1((q + 1) * h, d);
      const double j0 = m0 - m0_prev;
      const double j1 = m1 - m1_prev;
      lower[q] = ((q + 1) * h * j0 - j1) / h;
      upper[q] = (j1 - q * h * j0) / h;
      m0_prev = m0;
      m1_prev = m1;
    }
  }
};

/**
 * Inverse Laplace transform (in t, with alpha = k^2 / 2) of e^{-kW} / k^n,
 * n = 1..5. Layer 1 is the heat kernel, layer n+2 is half the time integral
 * of layer n.
 */
inline double layer(int n, double t, double W) {
  if (t <= 0.0) return 0.0;
  const double st = std::sqrt(t);
  const double z = W / st;
  switch (n) {
    case 1: return heat1(t, W);
    case 2: return special::norm_sf(z);
    case 3: return 0.5 * moment0(t, W);
    case 4: return 0.5 * ((t + W * W) * special::norm_sf(z) - W * st * special::norm_pdf(z));
    case 5: return 0.25 * (t * moment0(t, W) - moment1(t, W));
    default: throw std::invalid_argument("layer order must be in 1..5");
  }
}

/**
 * int_0^t layer(n, s, W) Phibar(z / sqrt(t - s)) ds. In Laplace space
 * Phibar(z / sqrt u) is e^{-kz} / k^2 for z >= 0 and (2 - e^{-k|z|}) / k^2
 * for z < 0.
 */
inline double layer_passage_convolution(int n, double t, double W, double z) {
  if (z == special::kInf) return 0.0;
  if (z == -special::kInf) return 2.0 * layer(n + 2, t, W);
  if (z >= 0.0) return layer(n + 2, t, W + z);
  return 2.0 * layer(n + 2, t, W) - layer(n + 2, t, W - z);
}

}  // namespace volterra_detail

/**
 * Test function f(y) = sum of terms coef * exp(slope * (y - anchor)) on
 * (lo, hi). Gaussian expectations of such terms are elementary, which gives
 * closed-form P_u f for constants, tail indicators, h and h^2.
 */
class PiecewiseExponential {
 public:
  struct Term {
    double lo;
    double hi;
    double coef;
    double slope;
    double anchor;
  };

  PiecewiseExponential() = default;
  explicit PiecewiseExponential(std::vector<Term> terms) : terms_(std::move(terms)) {}

  static PiecewiseExponential constant(double c) { return PiecewiseExponential({{-special::kInf, special::kInf, c, 0.0, 0.0}}); }

  /// 1{|y| > R}.
  static PiecewiseExponential tail_indicator(double R) {
    if (R < 0.0) return constant(1.0);
    return PiecewiseExponential({{-special::kInf, -R, 1.0, 0.0, 0.0}, {R, special::kInf, 1.0, 0.0, 0.0}});
  }

  /// 1{y > R}.
  static PiecewiseExponential right_tail_indicator(double R) {
    return PiecewiseExponential({{R, special::kInf, 1.0, 0.0, 0.0}});
  }

  /// sum_i c_i exp(-k |y - a_i|).
  static PiecewiseExponential exponential_peaks(const std::vector<double>& locations, const std::vector<double>& coefs,
                                                double k) {
    std::vector<Term> terms;
    for (std::size_t i = 0; i < locations.size(); ++i) {
      terms.push_back({-special::kInf, locations[i], coefs[i], k, locations[i]});
      terms.push_back({locations[i], special::kInf, coefs[i], -k, locations[i]});
    }
    return PiecewiseExponential(std::move(terms));
  }

  PiecewiseExponential times(const PiecewiseExponential& other) const {
    std::vector<Term> out;
    for (const auto& a : terms_) {
      for (const auto& b : other.terms_) {
        const double lo = std::max(a.lo, b.lo);
        const double hi = std::min(a.hi, b.hi);
        if (!(lo < hi)) continue;
        // e^{sa(y-A)} e^{sb(y-B)} = e^{sb(A-B)} e^{(sa+sb)(y-A)}
        const double shift = b.slope == 0.0 ? 0.0 : b.slope * (a.anchor - b.anchor);
        out.push_back({lo, hi, a.coef * b.coef * std::exp(shift), a.slope + b.slope, a.anchor});
      }
    }
    return PiecewiseExponential(std::move(out));
  }

  double operator()(double y) const {
    double total = 0.0;
    for (const auto& t : terms_) {
      double weight = 0.0;
      if (y > t.lo && y < t.hi) weight = 1.0;
      else if (y == t.lo || y == t.hi) weight = 0.5;
      if (weight != 0.0) total += weight * t.coef * std::exp(t.slope * (y - t.anchor));
    }
    return total;
  }

  /// P_u f(a) = E[f(a + B_u)]; at u = 0 the boundary convention of operator().
  double heat(double a, double u) const {
    if (u <= 0.0) return (*this)(a);
    double total = 0.0;
    for (const auto& t : terms_)
      total += t.coef * special::gaussian_exp_segment(a - t.anchor, u, t.slope, t.lo - t.anchor, t.hi - t.anchor);
    return total;
  }

  /// True when every term is a constant on an interval (indicator combinations).
  bool piecewise_constant() const {
    return std::all_of(terms_.begin(), terms_.end(), [](const Term& t) { return t.slope == 0.0; });
  }

  /// int_0^t layer(n, s, W) P_{t-s} f(a) ds; requires piecewise_constant().
  double layer_convolution(int n, double t, double W, double a) const {
    double total = 0.0;
    for (const auto& term : terms_) {
      // P_u 1{lo < y < hi}(a) = Phibar((lo - a)/sqrt u) - Phibar((hi - a)/sqrt u)
      const double zlo = term.lo == -special::kInf ? -special::kInf : term.lo - a;
      const double zhi = term.hi == special::kInf ? special::kInf : term.hi - a;
      total += term.coef * (volterra_detail::layer_passage_convolution(n, t, W, zlo) -
                            volterra_detail::layer_passage_convolution(n, t, W, zhi));
    }
    return total;
  }

  const std::vector<Term>& terms() const { return terms_; }

 private:
  std::vector<Term> terms_;
};

/// Three-term split of E_x[e^{A_t}; |B_t| > R].
struct TailDecomposition {
  double total = 0.0;
  double free_part = 0.0;      // P_x(|B_t| > R)
  double principal_part = 0.0; // e^{-lambda t} h(x) int_{|y|>R} h
  double remainder = 0.0;      // int_{|y|>R} q_t(x, y) dy
};

/**
 * Grid solution of the atomic Volterra system from a fixed source point.
 * Evaluators take a grid index i (time t_i = i * h).
 *
 * The kernel is expanded along chains of atoms: a chain x -> a_{k1} -> ...
 * -> a_{kr} -> y of total length W carries weight w_{k1}...w_{kr} and the
 * time profile layer(r + 1, t, W). Chains with r <= 2 ending on an atom
 * (r <= 3 ending anywhere) are summed in closed form; the remainder chi_j
 * (chains with r >= 3 ending on a_j) solves the Volterra system on the grid.
 */
class VolterraSolution {
 public:
  VolterraSolution(AtomicPotential nu, double source, double horizon, int steps)
      : nu_(std::move(nu)), source_(source), horizon_(horizon), steps_(steps), h_(horizon / steps) {
    if (!(horizon > 0.0)) throw VolterraError("Volterra horizon must be positive");
    if (steps < 16) throw VolterraError("Volterra grid needs at least 16 steps");
    if (nu_.locations.size() != nu_.weights.size()) throw VolterraError("atom locations and weights differ in length");
    solve();
  }

  const AtomicPotential& potential() const { return nu_; }
  double source() const { return source_; }
  double horizon() const { return horizon_; }
  int steps() const { return steps_; }
  double step() const { return h_; }
  double time(int i) const { return i * h_; }
  bool converged() const { return converged_; }
  double convergence_change() const { return convergence_change_; }

  void set_convergence(bool ok, double change) {
    converged_ = ok;
    convergence_change_ = change;
  }

  void require_converged() const {
    if (!converged_)
      throw VolterraError("Volterra solver did not converge (grid doubling changed p_T by " +
                          std::to_string(convergence_change_) + ")");
  }

  /// Regular part phi_j(t_i) = g_j(t_i) - p_{t_i}(x, a_j); phi_j(0) is the right limit.
  double phi(int i, std::size_t j) const { return phi_[index(i, j)]; }

  /// g_j(t_i) = p_{t_i}^nu(x, a_j), i >= 1.
  double g(int i, std::size_t j) const {
    return volterra_detail::heat1(time(i), source_ - nu_.locations[j]) + phi(i, j);
  }

  /// p_{t_i}^nu(x, y), i >= 1.
  double kernel(int i, double y) const {
    const double t = time(i);
    double total = 0.0;
    for (int r = 0; r <= 3; ++r)
      for_each_chain(r, y, [&](double coef, double W) { total += coef * volterra_detail::layer(r + 1, t, W); });
    for (std::size_t j = 0; j < m_; ++j) {
      const volterra_detail::ProductWeights pw(std::abs(nu_.locations[j] - y), h_, i);
      double s = 0.0;
      for (int q = 0; q < i; ++q) s += pw.lower[q] * chi(i - q, j) + pw.upper[q] * chi(i - q - 1, j);
      total += nu_.weights[j] * s;
    }
    return total;
  }

  /// E_x[e^{A_{t_i}^nu} f(B_{t_i})] = int p_{t_i}^nu(x, y) f(y) dy.
  double expectation(const PiecewiseExponential& f, int i) const {
    const double t = time(i);
    double total = f.heat(source_, t);
    if (i == 0) return total;
    std::vector<double> pf(static_cast<std::size_t>(i) + 1);
    const bool exact = f.piecewise_constant();
    for (std::size_t j = 0; j < m_; ++j) {
      const double a = nu_.locations[j];
      for (int q = 0; q <= i; ++q) pf[q] = f.heat(a, time(i - q));  // pf[q] = P_{t - s_q} f(a_j)
      double part = 0.0;
      if (exact) {
        // closed-form chains (r <= 2 ending on a_j) convolved with P_u f(a_j), plus chi by trapezoid
        for (int r = 0; r <= 2; ++r)
          for_each_chain(r, a, [&](double coef, double W) { part += coef * f.layer_convolution(r + 1, t, W, a); });
        part += trapezoid(i, pf, [&](int q) { return chi(q, j); });
      } else {
        part = source_convolution(i, j, pf);
      }
      total += nu_.weights[j] * part;
    }
    return total;
  }

  /**
   * int_0^{t_i} g_j(s) v(s) ds for v sampled on the grid (v[q] = v(t_q)):
   * product integration for the free part, trapezoid for phi.
   */
  double source_convolution(int i, std::size_t j, const std::vector<double>& v) const {
    const auto& pw = source_weights_[j];
    double free_part = 0.0;
    for (int q = 0; q < i; ++q) free_part += pw.lower[q] * v[q] + pw.upper[q] * v[q + 1];
    return free_part + trapezoid(i, v, [&](int q) { return phi(q, j); });
  }

 private:
  std::size_t index(int i, std::size_t j) const { return static_cast<std::size_t>(i) * m_ + j; }
  double chi(int i, std::size_t j) const { return chi_[index(i, j)]; }

  template <class F>
  double trapezoid(int i, const std::vector<double>& v, F values) const {
    double s = 0.5 * (values(0) * v[0] + values(i) * v[i]);
    for (int q = 1; q < i; ++q) s += values(q) * v[q];
    return s * h_;
  }

  /// Calls fn(weight product, chain length) for every chain x -> r atoms -> y.
  template <class Fn>
  void for_each_chain(int r, double y, Fn fn) const {
    if (r == 0) {
      fn(1.0, std::abs(source_ - y));
      return;
    }
    std::vector<std::size_t> idx(static_cast<std::size_t>(r), 0);
    while (true) {
      double coef = 1.0;
      double W = std::abs(source_ - nu_.locations[idx[0]]);
      for (int s = 0; s < r; ++s) {
        coef *= nu_.weights[idx[s]];
        if (s + 1 < r) W += std::abs(nu_.locations[idx[s]] - nu_.locations[idx[s + 1]]);
      }
      W += std::abs(nu_.locations[idx[r - 1]] - y);
      fn(coef, W);
      int s = r - 1;
      while (s >= 0 && ++idx[s] == m_) idx[s--] = 0;
      if (s < 0) break;
    }
  }

  void solve() {
    m_ = nu_.size();
    phi_.assign(static_cast<std::size_t>(steps_ + 1) * m_, 0.0);
    chi_.assign(phi_.size(), 0.0);
    for (std::size_t j = 0; j < m_; ++j)
      source_weights_.emplace_back(std::abs(source_ - nu_.locations[j]), h_, steps_);
    if (m_ == 0) return;

    std::vector<volterra_detail::ProductWeights> pair_weights;
    pair_weights.reserve(m_ * m_);
    for (std::size_t j = 0; j < m_; ++j)
      for (std::size_t k = 0; k < m_; ++k)
        pair_weights.emplace_back(std::abs(nu_.locations[j] - nu_.locations[k]), h_, steps_);
    auto pw = [&](std::size_t j, std::size_t k) -> const volterra_detail::ProductWeights& {
      return pair_weights[j * m_ + k];
    };

    Eigen::MatrixXd system(m_, m_);
    for (std::size_t j = 0; j < m_; ++j)
      for (std::size_t k = 0; k < m_; ++k)
        system(j, k) = (j == k ? 1.0 : 0.0) - nu_.weights[k] * pw(j, k).lower[0];
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(system);

    Eigen::VectorXd rhs(m_);
    for (int i = 1; i <= steps_; ++i) {
      const double t = time(i);
      for (std::size_t j = 0; j < m_; ++j) {
        double r = 0.0;
        for_each_chain(3, nu_.locations[j], [&](double coef, double W) { r += coef * volterra_detail::layer(4, t, W); });
        for (std::size_t k = 0; k < m_; ++k) {
          const auto& w = pw(j, k);
          double acc = w.upper[0] * chi(i - 1, k);
          for (int q = 1; q < i; ++q) acc += w.lower[q] * chi(i - q, k) + w.upper[q] * chi(i - q - 1, k);
          r += nu_.weights[k] * acc;
        }
        rhs(j) = r;
      }
      const Eigen::VectorXd next = lu.solve(rhs);
      for (std::size_t j = 0; j < m_; ++j) chi_[index(i, j)] = next(j);
    }

    for (int i = 0; i <= steps_; ++i) {
      const double t = time(i);
      for (std::size_t j = 0; j < m_; ++j) {
        double v = chi(i, j);
        for (int r = 1; r <= 2; ++r)
          for_each_chain(r, nu_.locations[j], [&](double coef, double W) {
            // right limits at t = 0: layer 2 tends to 1/2 on zero-length chains, layer 3 to 0
            if (i > 0) v += coef * volterra_detail::layer(r + 1, t, W);
            else if (r == 1 && W == 0.0) v += 0.5 * coef;
          });
        phi_[index(i, j)] = v;
      }
    }
  }

  AtomicPotential nu_;
  double source_;
  double horizon_;
  int steps_;
  double h_;
  std::size_t m_ = 0;
  std::vector<double> phi_;
  std::vector<double> chi_;
  std::vector<volterra_detail::ProductWeights> source_weights_;
  bool converged_ = true;
  double convergence_change_ = 0.0;
};

/**
 * Solves the atomic Volterra system on a uniform grid of `steps` cells.
 * With tolerance > 0 the grid is doubled once and the solution is flagged
 * non-converged when p_T^nu(x, x) moves by more than the tolerance
 * (relative); the finer solution is returned.
 */
inline VolterraSolution solve_volterra(const AtomicPotential& nu, double source, double horizon, int steps,
                                       double tolerance = 0.0) {
  if (tolerance <= 0.0) return VolterraSolution(nu, source, horizon, steps);
  const VolterraSolution coarse(nu, source, horizon, steps);
  VolterraSolution fine(nu, source, horizon, 2 * steps);
  const double a = coarse.kernel(coarse.steps(), source);
  const double b = fine.kernel(fine.steps(), source);
  const double change = std::abs(b - a) / std::abs(b);
  fine.set_convergence(change <= tolerance, change);
  return fine;
}

/// int_{|y| > R} p_T^nu(x, y) dy at the solution horizon.
inline double fk_expectation_tail(const VolterraSolution& sol, double R) {
  sol.require_converged();
  return sol.expectation(PiecewiseExponential::tail_indicator(R), sol.steps());
}

/**
 * Same quantity split into free, principal and remainder parts, given the
 * principal eigenvalue, h(x) and int_{|y|>R} h.
 */
inline TailDecomposition fk_expectation_tail(const VolterraSolution& sol, double R, double lambda, double h_at_source,
                                             double h_tail_mass) {
  TailDecomposition out;
  out.total = fk_expectation_tail(sol, R);
  const double t = sol.horizon();
  out.free_part = PiecewiseExponential::tail_indicator(R).heat(sol.source(), t);
  out.principal_part = std::exp(-lambda * t) * h_at_source * h_tail_mass;
  out.remainder = out.total - out.free_part - out.principal_part;
  return out;
}

}  // namespace bbm

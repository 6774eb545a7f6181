/**
 * @file simulator.hpp
 * @brief Branching Brownian motion with measure-driven clocks.
 *
 * Each particle carries an Exp(1) threshold and the additive functional
 * A^mu accumulated since its birth. It branches when A^mu crosses the
 * threshold: with probability p2 it is replaced by two children at the
 * branching point (fresh thresholds), otherwise it dies.
 *
 * For point masses the local time over a step and the endpoint are sampled
 * jointly and exactly. When the threshold is crossed the endpoint is
 * discarded, the crossing time is drawn from the first-passage law of
 * |x - a| + (remaining budget) / weight conditioned to fall inside the step,
 * and the children restart at the atom for the rest of the step. For a
 * single atom the scheme has no step bias.
 *
 * Random numbers come from per-lineage counter streams, so a replicate does
 * not depend on how many threads run or in which order.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "fronts.hpp"
#include "measures.hpp"
#include "rng.hpp"
#include "spectral.hpp"
#include "volterra.hpp"

namespace bbm {

struct Particle {
  Point x{};
  double threshold = 1.0;
  double accumulated = 0.0;
  std::uint64_t lineage = 1;
};

/// Lineage id of child `which` (0 or 1) of `parent`.
constexpr std::uint64_t child_lineage(std::uint64_t parent, std::uint64_t which) {
  return mix64(parent * 0x9E3779B97F4A7C15ull + which + 1);
}

struct ParticleSystem {
  double t = 0.0;
  std::vector<Particle> particles;
  bool extinct = false;
  double extinction_time = std::numeric_limits<double>::infinity();
  bool cap_exceeded = false;
  std::uint32_t steps_taken = 0;

  std::size_t size() const { return particles.size(); }
};

class PopulationCapError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SimulationOptions {
  double dt = 1e-3;
  std::size_t population_cap = 10'000'000;
  LocalTimeScheme scheme = LocalTimeScheme::bridge;
};

/// Initial system: one particle at x0 with a threshold from its own stream.
inline ParticleSystem initial_system(const Point& x0, std::uint64_t replicate_key) {
  ParticleSystem ps;
  CounterRng rng(replicate_key, 1, 0xFFFFFFFFu);
  ps.particles.push_back(Particle{x0, rng.exponential(), 0.0, 1});
  return ps;
}

namespace sim_detail {

struct Pending {
  Particle p;
  double remaining;  // time left in the current step
};

class Stepper {
 public:
  Stepper(const BranchingModel& model, const SimulationOptions& opt) : model_(model), opt_(opt) {
    const auto& m = model.rate();
    dim_ = m.dimension();
    if (m.is_atoms())
      for (const auto& a : m.as_atoms().atoms) atoms_.push_back(a);
  }

  /// Advances every particle by dt, appending survivors and offspring to `out`.
  void advance(const std::vector<Particle>& in, std::vector<Particle>& out, double dt, std::uint64_t key,
               std::uint32_t step) const {
    std::vector<Pending> stack;
    for (const auto& p : in) {
      stack.push_back({p, dt});
      while (!stack.empty()) {
        Pending cur = stack.back();
        stack.pop_back();
        CounterRng rng(key, cur.p.lineage, step);
        move_one(cur, rng, key, out, stack);
        if (out.size() + stack.size() > opt_.population_cap) throw PopulationCapError("population cap exceeded");
      }
    }
  }

 private:
  void branch(const Particle& parent, const Point& at, double remaining, std::size_t component, CounterRng& rng,
              std::uint64_t key, std::vector<Particle>& out, std::vector<Pending>& stack) const {
    if (rng.uniform() >= model_.p2(component)) return;  // death
    for (std::uint64_t c = 0; c < 2; ++c) {
      const std::uint64_t id = child_lineage(parent.lineage, c);
      // the child's threshold comes from its own stream, block reserved for births
      CounterRng birth(key, id, 0xFFFFFFFFu);
      Particle child{at, birth.exponential(), 0.0, id};
      if (remaining > 0.0) stack.push_back({child, remaining});
      else out.push_back(child);
    }
  }

  void move_one(const Pending& cur, CounterRng& rng, std::uint64_t key, std::vector<Particle>& out, std::vector<Pending>& stack) const {
    const double dt = cur.remaining;
    const double sd = std::sqrt(dt);
    const Particle& p = cur.p;
    Point y = p.x;
    for (int i = 0; i < dim_; ++i) y[i] += sd * rng.normal();
    const double budget = p.threshold - p.accumulated;
    const auto& m = model_.rate();

    if (m.is_atoms()) {
      double total = 0.0;
      double ell_small[8];
      std::vector<double> ell_big;
      double* ells = ell_small;
      if (atoms_.size() > 8) {
        ell_big.resize(atoms_.size());
        ells = ell_big.data();
      }
      for (std::size_t j = 0; j < atoms_.size(); ++j) {
        ells[j] = opt_.scheme == LocalTimeScheme::bridge
                      ? local_time::bridge_sample(p.x[0], y[0], atoms_[j].location, dt, rng)
                      : local_time::shell_estimate(p.x[0], y[0], atoms_[j].location, dt);
        total += atoms_[j].weight * ells[j];
      }
      if (total < budget) {
        out.push_back(Particle{y, p.threshold, p.accumulated + total, p.lineage});
        return;
      }
      // atom that carried the crossing, chosen proportionally to its share of the increment
      std::size_t j = 0;
      if (atoms_.size() > 1) {
        double u = rng.uniform() * total;
        for (j = 0; j + 1 < atoms_.size(); ++j) {
          u -= atoms_[j].weight * ells[j];
          if (u < 0.0) break;
        }
      }
      const double a = atoms_[j].location;
      double tau = 0.0;
      if (opt_.scheme == LocalTimeScheme::bridge) {
        const double ell_star = budget / total * ells[j];  // exact for one atom: budget / weight
        tau = local_time::crossing_time(std::abs(p.x[0] - a), ell_star, dt, rng);
      } else {
        tau = dt * budget / total;
      }
      branch(p, Point{a, 0.0, 0.0}, dt - tau, j, rng, key, out, stack);
      return;
    }

    if (m.is_shell()) {
      const auto& s = m.as_shell();
      const double r0 = norm(p.x);
      const double r1 = norm(y);
      const double ell = opt_.scheme == LocalTimeScheme::bridge
                             ? local_time::bridge_sample(r0, r1, s.radius, dt, rng)
                             : local_time::shell_estimate(r0, r1, s.radius, dt);
      const double inc = s.weight * ell;
      if (inc < budget) {
        out.push_back(Particle{y, p.threshold, p.accumulated + inc, p.lineage});
        return;
      }
      const double tau = opt_.scheme == LocalTimeScheme::bridge
                             ? local_time::crossing_time(std::abs(r0 - s.radius), budget / s.weight, dt, rng)
                             : dt * budget / inc;
      // direction of the straight bridge at tau, placed on the sphere
      Point dir{};
      const double f = tau / dt;
      for (int i = 0; i < 3; ++i) dir[i] = p.x[i] + f * (y[i] - p.x[i]);
      double nd = norm(dir);
      if (nd == 0.0) {
        dir = {1.0, 0.0, 0.0};
        nd = 1.0;
      }
      Point at{};
      for (int i = 0; i < 3; ++i) at[i] = s.radius * dir[i] / nd;
      branch(p, at, dt - tau, 0, rng, key, out, stack);
      return;
    }

    const auto& d = m.as_density();
    const double v0 = d.weight * d.profile_value(norm(p.x));
    const double v1 = d.weight * d.profile_value(norm(y));
    const double inc = 0.5 * dt * (v0 + v1);
    if (inc < budget) {
      out.push_back(Particle{y, p.threshold, p.accumulated + inc, p.lineage});
      return;
    }
    // trapezoid accumulation is quadratic in s: v0 s + (v1 - v0) s^2 / (2 dt) = budget
    double tau = 0.0;
    const double qa = 0.5 * (v1 - v0) / dt;
    if (std::abs(qa) < 1e-14 * std::max(v0, v1)) tau = budget / v0;
    else tau = (-v0 + std::sqrt(std::max(v0 * v0 + 4.0 * qa * budget, 0.0))) / (2.0 * qa);
    tau = std::clamp(tau, 0.0, dt);
    // Brownian bridge point at tau
    const double f = tau / dt;
    const double bsd = std::sqrt(tau * (dt - tau) / dt);
    Point at{};
    for (int i = 0; i < dim_; ++i) at[i] = p.x[i] + f * (y[i] - p.x[i]) + bsd * rng.normal();
    branch(p, at, dt - tau, 0, rng, key, out, stack);
  }

  const BranchingModel& model_;
  SimulationOptions opt_;
  int dim_ = 1;
  std::vector<Atom> atoms_;
};

}  // namespace sim_detail

/**
 * Advances the system by dt. Throws PopulationCapError past the cap (the
 * system is then left at its previous state with cap_exceeded set).
 */
inline void step(ParticleSystem& ps, double dt, const BranchingModel& model, std::uint64_t replicate_key,
                 const SimulationOptions& opt = {}) {
  if (!(dt > 0.0)) throw ModelError("step needs dt > 0");
  if (ps.extinct) {
    ps.t += dt;
    ++ps.steps_taken;
    return;
  }
  const sim_detail::Stepper stepper(model, opt);
  std::vector<Particle> next;
  next.reserve(ps.particles.size() + ps.particles.size() / 4 + 4);
  try {
    stepper.advance(ps.particles, next, dt, replicate_key, ps.steps_taken);
  } catch (const PopulationCapError&) {
    ps.cap_exceeded = true;
    throw;
  }
  ps.particles.swap(next);
  ps.t += dt;
  ++ps.steps_taken;
  if (ps.particles.empty()) {
    ps.extinct = true;
    ps.extinction_time = ps.t;  // resolved to the step containing the last death
  }
}

/// What to record at each checkpoint besides the fixed fields.
struct ObservableSpec {
  std::vector<FrontSpec> fronts;
  std::vector<double> radii;  // fixed radii R for Z_t^R
};

struct Observables {
  double t = 0.0;
  std::uint64_t Z = 0;
  double L = 0.0;  // max |B|, 0 when extinct
  double R = std::numeric_limits<double>::quiet_NaN();  // rightmost position (d = 1), NaN when extinct
  double M = 0.0;  // e^{lambda t} sum h(B)
  double Y = std::numeric_limits<double>::quiet_NaN();  // L - sqrt(-lambda/2) t - (d-1)/(2 sqrt(-2 lambda)) log t
  std::vector<double> front_values;           // R(t) per front
  std::vector<std::uint64_t> front_counts;    // Z_t^{R(t)} per front
  std::vector<std::uint64_t> front_right;     // particles in (R(t), inf), d = 1
  std::vector<std::uint64_t> radius_counts;   // Z_t^R per fixed radius
  bool extinct = false;
  bool cap_exceeded = false;
};

/// Observables of the current state; without spectral data (no bound state) M and Y are NaN.
inline Observables observe(const ParticleSystem& ps, const SpectralData* sd, int dimension, const ObservableSpec& spec) {
  Observables o;
  o.t = ps.t;
  o.extinct = ps.extinct;
  o.cap_exceeded = ps.cap_exceeded;
  o.Z = ps.particles.size();
  double hsum = 0.0;
  double rightmost = -std::numeric_limits<double>::infinity();
  for (const auto& p : ps.particles) {
    o.L = std::max(o.L, norm(p.x));
    rightmost = std::max(rightmost, p.x[0]);
    if (sd) hsum += sd->h(p.x);
  }
  if (!ps.particles.empty() && dimension == 1) o.R = rightmost;
  if (sd) {
    o.M = std::exp(sd->lambda * ps.t) * hsum;
    if (ps.t > 0.0 && !ps.particles.empty())
      o.Y = o.L - std::sqrt(-sd->lambda / 2.0) * ps.t - (dimension - 1) / (2.0 * sd->sqrt_m2l) * std::log(ps.t);
  } else {
    o.M = std::numeric_limits<double>::quiet_NaN();
  }
  for (const auto& f : spec.fronts) {
    const double r = f(ps.t);
    std::uint64_t c = 0;
    std::uint64_t cr = 0;
    for (const auto& p : ps.particles) {
      if (norm(p.x) > r) ++c;
      if (p.x[0] > r) ++cr;
    }
    o.front_values.push_back(r);
    o.front_counts.push_back(c);
    o.front_right.push_back(cr);
  }
  for (double r : spec.radii) {
    std::uint64_t c = 0;
    for (const auto& p : ps.particles)
      if (norm(p.x) > r) ++c;
    o.radius_counts.push_back(c);
  }
  return o;
}

inline Observables observe(const ParticleSystem& ps, const SpectralData& sd, const ObservableSpec& spec) {
  return observe(ps, &sd, sd.dimension, spec);
}

/**
 * One replicate from x0, recording observables at the sorted checkpoint
 * times. Between checkpoints the interval is cut into equal steps no longer
 * than opt.dt. On a cap breach the remaining checkpoints are recorded with
 * cap_exceeded set and the last complete state.
 */
inline std::vector<Observables> run_replicate(const BranchingModel& model, const SpectralData* sd, const Point& x0,
                                              const std::vector<double>& checkpoints, const ObservableSpec& spec,
                                              std::uint64_t master_seed, std::uint64_t replicate,
                                              const SimulationOptions& opt = {}) {
  if (!std::is_sorted(checkpoints.begin(), checkpoints.end())) throw ModelError("checkpoints must be sorted");
  if (!checkpoints.empty() && checkpoints.front() < 0.0) throw ModelError("checkpoints must be nonnegative");
  const std::uint64_t key = replicate_key(master_seed, replicate);
  ParticleSystem ps = initial_system(x0, key);
  std::vector<Observables> out;
  out.reserve(checkpoints.size());
  double t = 0.0;
  for (double tc : checkpoints) {
    const double span = tc - t;
    if (span > 0.0 && !ps.cap_exceeded) {
      const auto n = static_cast<std::uint64_t>(std::ceil(span / opt.dt - 1e-9));
      const double h = span / static_cast<double>(n);
      try {
        for (std::uint64_t i = 0; i < n; ++i) step(ps, h, model, key, opt);
      } catch (const PopulationCapError&) {
      }
      if (!ps.cap_exceeded) ps.t = tc;  // remove rounding drift
    }
    t = tc;
    out.push_back(observe(ps, sd, model.dimension(), spec));
  }
  return out;
}

inline std::vector<Observables> run_replicate(const BranchingModel& model, const SpectralData& sd, const Point& x0,
                                              const std::vector<double>& checkpoints, const ObservableSpec& spec,
                                              std::uint64_t master_seed, std::uint64_t replicate,
                                              const SimulationOptions& opt = {}) {
  return run_replicate(model, &sd, x0, checkpoints, spec, master_seed, replicate, opt);
}

/// E_x[Z_t(f)] by the many-to-one identity, evaluated on the Volterra oracle.
inline double many_to_one_oracle(const BranchingModel& model, double x0, double t, const PiecewiseExponential& f,
                                 int steps = 512) {
  const VolterraSolution sol(model.nu(), x0, t, steps);
  return sol.expectation(f, steps);
}

/**
 * E_x[(Z_t^R)^2] by the many-to-two identity: E_x[e^{A_t}; |B_t| > R] plus
 * sum_j rho_j int_0^t p_s^nu(x, a_j) U_j(t - s)^2 ds with rho = R mu and
 * U_j(u) = E_{a_j}[e^{A_u}; |B_u| > R].
 */
inline double second_moment_oracle(const BranchingModel& model, double x0, double t, double R, int steps = 512) {
  if (!model.rate().is_atoms()) throw ModelError("second-moment oracle needs an atomic model in d = 1");
  const AtomicPotential nu = model.nu();
  const AtomicPotential rho = model.nu_r();
  const auto tail = PiecewiseExponential::tail_indicator(R);
  const VolterraSolution from_x(nu, x0, t, steps);
  double total = from_x.expectation(tail, steps);
  for (std::size_t j = 0; j < nu.size(); ++j) {
    const VolterraSolution from_atom(nu, nu.locations[j], t, steps);
    std::vector<double> v(static_cast<std::size_t>(steps) + 1);
    for (int q = 0; q <= steps; ++q) {
      const double u = from_atom.expectation(tail, steps - q);
      v[q] = u * u;
    }
    total += rho.weights[j] * from_x.source_convolution(steps, j, v);
  }
  return total;
}

/**
 * E_x[M_t^2] = e^{2 lambda t} E_x[e^{A_t} h^2(B_t)]
 *            + sum_j rho_j h(a_j)^2 int_0^t e^{2 lambda s} p_s^nu(x, a_j) ds.
 */
inline double martingale_second_moment_oracle(const BranchingModel& model, const SpectralData& sd, double x0, double t,
                                              int steps = 512) {
  const AtomicPotential nu = model.nu();
  const AtomicPotential rho = model.nu_r();
  const auto h = sd.h.as_piecewise_exponential();
  const VolterraSolution sol(nu, x0, t, steps);
  double total = std::exp(2.0 * sd.lambda * t) * sol.expectation(h.times(h), steps);
  std::vector<double> v(static_cast<std::size_t>(steps) + 1);
  for (int q = 0; q <= steps; ++q) v[q] = std::exp(2.0 * sd.lambda * sol.time(q));
  for (std::size_t j = 0; j < nu.size(); ++j) {
    const double ha = sd.h(Point{nu.locations[j], 0.0, 0.0});
    total += rho.weights[j] * ha * ha * sol.source_convolution(steps, j, v);
  }
  return total;
}

}  // namespace bbm

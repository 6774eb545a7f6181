#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <tuple>
#include <vector>

#include "bbm/measures.hpp"
#include "bbm/special.hpp"

using namespace bbm;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

struct Moments {
  double sum = 0, sum2 = 0;
  int n = 0;
  void add(double v) {
    sum += v;
    sum2 += v * v;
    ++n;
  }
  double mean() const { return sum / n; }
  double se() const { return std::sqrt((sum2 / n - mean() * mean()) / (n - 1)); }
};

// Accumulated A over [0, t] from x0 along a path cut into `steps` segments.
double accumulate(const KatoMeasure& m, double x0, double t, int steps, CounterRng& rng) {
  const double dt = t / steps;
  Point x{x0, 0, 0};
  double a = 0.0;
  for (int i = 0; i < steps; ++i) {
    Point y = x;
    y[0] += std::sqrt(dt) * rng.normal();
    a += additive_increment({x, y, dt}, m, rng);
    x = y;
  }
  return a;
}

}  // namespace

TEST_CASE("factories enforce positivity, dimensions and compact support", "[measures]") {
  CHECK_THROWS_AS(KatoMeasure::atoms({}), ModelError);
  CHECK_THROWS_AS(KatoMeasure::atoms({Atom{0.0, -1.0}}), ModelError);
  CHECK_THROWS_AS(KatoMeasure::shell(1, 1.0, 1.0), ModelError);
  CHECK_THROWS_AS(KatoMeasure::shell(3, 0.0, 1.0), ModelError);
  CHECK_THROWS_AS(KatoMeasure::density(DensityMeasure{3, DensityProfile::constant, 0.0, -1.0, 1.0}), ModelError);
  const auto two = KatoMeasure::atoms({Atom{-1.0, 1.0}, Atom{2.0, 0.5}});
  CHECK(two.dimension() == 1);
  CHECK(two.support_radius() == 2.0);
  CHECK(two.components() == 2);
}

TEST_CASE("binary offspring: Q = R = 2 p2 and nu = (Q - 1) mu", "[measures]") {
  const BranchingModel m(KatoMeasure::atoms({Atom{0.0, 2.0}, Atom{1.0, 1.0}}), {0.75, 0.25});
  CHECK(m.offspring_mean(0) == 1.5);
  CHECK(m.offspring_factorial_moment(1) == 0.5);
  const auto nu = m.nu();
  CHECK_THAT(nu.weights[0], WithinAbs(1.0, 1e-15));
  CHECK_THAT(nu.weights[1], WithinAbs(-0.5, 1e-15));
  const auto nr = m.nu_r();
  CHECK_THAT(nr.weights[0], WithinAbs(3.0, 1e-15));
  CHECK_THAT(nr.weights[1], WithinAbs(0.5, 1e-15));
  CHECK_THROWS_AS(BranchingModel(KatoMeasure::atoms({Atom{0.0, 1.0}}), {1.2}), ModelError);
  CHECK_THROWS_AS(BranchingModel(KatoMeasure::atoms({Atom{0.0, 1.0}}), {0.5, 0.5}), ModelError);
}

TEST_CASE("zero density gives zero increments", "[measures]") {
  const auto m = KatoMeasure::density(DensityMeasure{1, DensityProfile::power, 2.0, 1.0, 1.0});
  CounterRng rng(1, 1, 0);
  // V(0) = 0 for the power profile and the segment stays at the origin
  CHECK(additive_increment({{0, 0, 0}, {0, 0, 0}, 0.1}, m, rng) == 0.0);
  CHECK(additive_increment({{3, 0, 0}, {4, 0, 0}, 0.1}, m, rng) == 0.0);
}

TEST_CASE("a bridge far from the atom collects no local time", "[measures]") {
  const auto m = KatoMeasure::atoms({Atom{0.0, 1.0}});
  CounterRng rng(2, 1, 0);
  int nonzero = 0;
  for (int i = 0; i < 100000; ++i) nonzero += additive_increment({{1, 0, 0}, {2, 0, 0}, 0.01}, m, rng) > 0.0;
  CHECK(nonzero == 0);
}

TEST_CASE("increments reject bad segments", "[measures]") {
  CounterRng rng(3, 1, 0);
  const auto atoms = KatoMeasure::atoms({Atom{0.0, 1.0}});
  CHECK_THROWS_AS(additive_increment({{0, 0, 0}, {1, 0, 0}, 0.0}, atoms, rng), ModelError);
  CHECK_THROWS_AS(additive_increment({{0, 1, 0}, {1, 0, 0}, 0.1}, atoms, rng), ModelError);
}

TEST_CASE("mean local time at the origin equals E|B_1| = sqrt(2/pi)", "[measures]") {
  const auto m = KatoMeasure::atoms({Atom{0.0, 1.0}});
  Moments mom;
  CounterRng rng(replicate_key(11, 0), 1, 0);
  for (int i = 0; i < 1000000; ++i) mom.add(accumulate(m, 0.0, 1.0, 1, rng));
  CHECK_THAT(mom.mean(), WithinAbs(std::sqrt(2.0 / std::numbers::pi), 3 * mom.se()));
}

TEST_CASE("bridge local time sampler matches its closed-form mean", "[measures]") {
  CounterRng rng(replicate_key(12, 0), 1, 0);
  for (auto [x, y, dt] : {std::tuple{0.0, 0.0, 1.0}, std::tuple{0.3, -0.2, 0.5}, std::tuple{1.0, 0.5, 0.25}}) {
    Moments mom;
    for (int i = 0; i < 200000; ++i) mom.add(local_time::bridge_sample(x, y, 0.0, dt, rng));
    CHECK_THAT(mom.mean(), WithinAbs(local_time::bridge_mean(x, y, 0.0, dt), 3.5 * mom.se()));
  }
}

TEST_CASE("increments are additive over concatenated segments in expectation", "[measures]") {
  const auto m = KatoMeasure::atoms({Atom{0.2, 1.0}});
  Moments one, two;
  CounterRng r1(replicate_key(13, 0), 1, 0);
  CounterRng r2(replicate_key(13, 1), 1, 0);
  for (int i = 0; i < 300000; ++i) {
    one.add(accumulate(m, 0.0, 1.0, 1, r1));
    two.add(accumulate(m, 0.0, 1.0, 2, r2));
  }
  CHECK_THAT(one.mean(), WithinAbs(two.mean(), 3 * std::hypot(one.se(), two.se())));
}

TEST_CASE("doubling the weight doubles the increment on shared randomness", "[measures]") {
  const auto a = KatoMeasure::atoms({Atom{0.0, 1.0}});
  const auto b = KatoMeasure::atoms({Atom{0.0, 2.0}});
  for (std::uint32_t s = 0; s < 200; ++s) {
    CounterRng ra(99, 5, s);
    CounterRng rb(99, 5, s);
    const double ia = accumulate(a, 0.1, 0.8, 4, ra);
    const double ib = accumulate(b, 0.1, 0.8, 4, rb);
    CHECK_THAT(ib, WithinAbs(2.0 * ia, 1e-12));
  }
}

TEST_CASE("density increments converge at first order under step halving", "[measures]") {
  // smooth V(x) = x^2 / 100 (support radius 10 is never reached); coupled paths sampled on the finest grid
  const auto m = KatoMeasure::density(DensityMeasure{1, DensityProfile::power, 2.0, 10.0, 1.0});
  CounterRng rng(replicate_key(15, 0), 1, 0);
  constexpr int kFine = 256;
  const double t = 1.0;
  std::vector<double> rms(4, 0.0);  // differences between step dt and dt / 2 for dt = t/16 ... t/128
  const int paths = 2000;
  std::vector<double> path(kFine + 1);
  for (int p = 0; p < paths; ++p) {
    path[0] = 0.0;
    for (int i = 0; i < kFine; ++i) path[i + 1] = path[i] + std::sqrt(t / kFine) * rng.normal();
    auto trapezoid = [&](int steps) {
      const int stride = kFine / steps;
      double a = 0.0;
      for (int i = 0; i < steps; ++i)
        a += additive_increment({{path[i * stride], 0, 0}, {path[(i + 1) * stride], 0, 0}, t / steps}, m, rng);
      return a;
    };
    for (int l = 0; l < 4; ++l) {
      const int steps = 16 << l;
      const double diff = trapezoid(steps) - trapezoid(2 * steps);
      rms[l] += diff * diff / paths;
    }
  }
  // least-squares slope of log2 RMS difference against log2 dt
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (int l = 0; l < 4; ++l) {
    const double x = -(4.0 + l);
    const double y = 0.5 * std::log2(rms[l]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double slope = (4 * sxy - sx * sy) / (4 * sxx - sx * sx);
  CHECK(slope > 0.8);
  CHECK(slope < 1.2);
}

TEST_CASE("crossing time follows the conditioned first-passage law", "[measures]") {
  // P(tau <= s | tau <= dt) = sf(v / sqrt(s)) / sf(v / sqrt(dt)), v = d0 + ell*
  const double d0 = 0.3, ell = 0.2, dt = 1.0, v = d0 + ell;
  CounterRng rng(replicate_key(14, 0), 1, 0);
  const int n = 200000;
  int below = 0;
  const double s = 0.4;
  for (int i = 0; i < n; ++i) below += local_time::crossing_time(d0, ell, dt, rng) <= s;
  const double p = special::norm_sf(v / std::sqrt(s)) / special::norm_sf(v / std::sqrt(dt));
  CHECK_THAT(static_cast<double>(below) / n, WithinAbs(p, 4 * std::sqrt(p * (1 - p) / n)));
}

TEST_CASE("Kato report exhibits decay of the alpha-potential", "[measures]") {
  const auto atom = KatoMeasure::atoms({Atom{0.0, 1.0}});
  CHECK_THAT(alpha_potential(atom, 2.0, 0.0), WithinAbs(0.5, 1e-14));
  for (const auto& m : {atom, KatoMeasure::density(DensityMeasure{1, DensityProfile::constant, 0.0, 1.0, 1.0}),
                        KatoMeasure::shell(3, 1.0, 1.0)}) {
    const auto r = is_kato_and_compact(m);
    CHECK(r.kato_and_compact);
    CHECK(r.decreasing_in_alpha);
    REQUIRE(r.sup_potentials.size() == 3);
    CHECK(std::isfinite(r.sup_potentials[0]));
    CHECK(r.sup_potentials[2] < r.sup_potentials[0]);
  }
}

TEST_CASE("sphere potential in d = 3 reduces to the classical shell formula", "[measures]") {
  const double alpha = 0.5, rho = 1.3, k = std::sqrt(2 * alpha);
  // at the centre every point of the sphere sits at distance rho
  const double expected = 4 * std::numbers::pi * rho * rho * std::exp(-k * rho) / (2 * std::numbers::pi * rho);
  CHECK_THAT(sphere_potential(3, alpha, rho, 0.0), WithinRel(expected, 1e-10));
  CHECK_THAT(sphere_potential(3, alpha, rho, 1e-7), WithinRel(expected, 1e-6));
}

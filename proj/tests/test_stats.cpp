#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <vector>

#include "bbm/fronts.hpp"
#include "bbm/rng.hpp"
#include "bbm/stats.hpp"

using namespace bbm;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("Wilson interval reference values", "[stats]") {
  const auto w = wilson_interval(5, 10);
  CHECK_THAT(w.lo, WithinAbs(0.236593, 1e-6));
  CHECK_THAT(w.hi, WithinAbs(0.763407, 1e-6));
  const auto zero = wilson_interval(0, 100);
  CHECK(zero.lo == 0.0);
  CHECK(zero.hi > 0.0);
  CHECK(wilson_interval(100, 100).hi == 1.0);
  CHECK_THROWS_AS(wilson_interval(0, 0), AnalysisError);
}

TEST_CASE("Wilson intervals reach nominal coverage on known Bernoulli laws", "[stats]") {
  CounterRng rng(replicate_key(3, 3), 0, 0);
  for (double p : {0.01, 0.1, 0.5}) {
    int covered = 0;
    const int trials = 2000, n = 200;
    for (int t = 0; t < trials; ++t) {
      std::uint64_t k = 0;
      for (int i = 0; i < n; ++i) k += rng.uniform() < p;
      const auto w = wilson_interval(k, n);
      covered += w.lo <= p && p <= w.hi;
    }
    CHECK(covered >= 0.93 * trials);
  }
}

TEST_CASE("tail estimates: invariants, flags and degenerate fronts", "[stats]") {
  const auto e = estimate_tail(37, 1000, 10.0, 9.0, 0.0366, 0.05, 0.04);
  CHECK(e.p_hat == 0.037);
  CHECK(e.wilson.lo <= e.p_hat);
  CHECK(e.wilson.hi >= e.p_hat);
  CHECK(e.flag() == "graded");
  CHECK_THAT(e.ratio, WithinRel(0.037 / 0.0366, 1e-14));
  CHECK(estimate_tail(0, 1000, 10.0, 9.0, 0.0366, 0.05).flag() == "no_hits");
  CHECK(estimate_tail(3, 1000, 1.0, 0.5, 0.5, 0.8).flag() == "too_early");
  CHECK(estimate_tail(3, 1000, 1.0, 0.5, 0.5, 0.3).flag() == "informational");

  // a front below zero is exceeded by every replicate since L_t >= 0
  const auto sd = principal_eigenvalue(BranchingModel(KatoMeasure::atoms({Atom{0.0, 1.0}}), {1.0}));
  const auto c = constants(sd);
  const FrontSpec below(FrontR1{-5.0}, sd.lambda, 1);
  const std::vector<std::uint8_t> all(100, 1);
  CHECK(estimate_tail(all, sd, c, below, 1.0, Point{0, 0, 0}).p_hat == 1.0);
  CHECK_THROWS_WITH(estimate_tail(std::vector<std::uint8_t>{}, sd, c, below, 1.0, Point{0, 0, 0}),
                    Catch::Matchers::ContainsSubstring("no records"));
}

TEST_CASE("moment sandwich", "[stats]") {
  CHECK(tail_sandwich(0.3, 0.01, 0.35, 0.5).holds);   // [0.245, 0.35]
  CHECK_FALSE(tail_sandwich(0.4, 0.01, 0.35, 0.5).holds);
  CHECK_FALSE(tail_sandwich(0.2, 0.01, 0.35, 0.5).holds);
  CHECK(tail_sandwich(0.37, 0.01, 0.35, 0.5).holds);  // within 3 SE above
}

TEST_CASE("Gumbel mixture: exact samples pass, shifted samples fail", "[stats]") {
  // Y = (log(c M) + G) / rate with G standard Gumbel has P(Y <= k | M) = exp(-c M e^{-rate k})
  CounterRng rng(replicate_key(8, 1), 0, 0);
  const double c = 2.0, rate = 1.0;
  const int n = 20000;
  std::vector<double> y(n), m(n), shifted(n);
  for (int i = 0; i < n; ++i) {
    m[i] = 0.5 + rng.exponential();
    const double g = -std::log(rng.exponential());
    y[i] = (std::log(c * m[i]) + g) / rate;
    shifted[i] = y[i] + 0.3;
  }
  const auto fit = gumbel_mixture_test(y, m, c, rate, default_kappa_grid(rate));
  CHECK(fit.distance < fit.noise_floor);
  CHECK(fit.distance >= 0.0);
  CHECK(fit.distance <= 1.0);
  for (std::size_t i = 0; i + 1 < fit.kappa.size(); ++i) {
    CHECK(fit.empirical[i] <= fit.empirical[i + 1]);
    CHECK(fit.mixture[i] <= fit.mixture[i + 1]);
    CHECK(fit.mixture[i] >= 0.0);
    CHECK(fit.mixture[i] <= 1.0);
  }
  CHECK(gumbel_mixture_test(shifted, m, c, rate, default_kappa_grid(rate)).distance > 3 * fit.noise_floor);
  CHECK_THROWS_AS(gumbel_mixture_test({}, {}, c, rate, default_kappa_grid(rate)), AnalysisError);
  CHECK_THROWS_AS(gumbel_mixture_test({1.0}, {1.0, 2.0}, c, rate, default_kappa_grid(rate)), AnalysisError);
}

TEST_CASE("Gumbel mixture tail bound at kappa = 8 / rate", "[stats]") {
  // 1 - mixture <= c_* e^{-rate kappa} E[M]; unit atom: c_* = 2, E[M] = 1
  const double rate = 1.0;
  std::vector<double> m(1000, 1.0);
  std::vector<double> y(1000, 0.0);
  const auto fit = gumbel_mixture_test(y, m, 2.0, rate, {8.0 / rate});
  CHECK(1.0 - fit.mixture[0] < 1e-2);
  CHECK(std::abs(fit.mixture[0] - fit.empirical[0]) < 1e-2);
}

TEST_CASE("conditional front count", "[stats]") {
  std::vector<std::uint64_t> beyond(1000, 0);
  for (int i = 0; i < 80; ++i) beyond[i] = 1;
  for (int i = 80; i < 95; ++i) beyond[i] = 2;
  for (int i = 95; i < 100; ++i) beyond[i] = 5;
  const auto r = yaglom_front_count(beyond, 10.0);
  CHECK(r.hits == 100);
  CHECK(r.counts.count(0) == 0);
  CHECK(r.counts.at(1) == 80);
  CHECK_THAT(r.p_one, WithinAbs(0.8, 1e-15));
  CHECK_FALSE(r.inconclusive);
  const auto pmf = r.pmf_intervals();
  CHECK(pmf.size() == 3);
  for (const auto& [k, iv] : pmf) {
    const double phat = static_cast<double>(r.counts.at(k)) / 100.0;
    CHECK(iv.lo <= phat);
    CHECK(iv.hi >= phat);
    // simultaneous intervals are wider than the marginal one
    CHECK(iv.hi - iv.lo > wilson_interval(r.counts.at(k), 100).hi - wilson_interval(r.counts.at(k), 100).lo);
  }
  CHECK(yaglom_front_count(std::vector<std::uint64_t>(10, 1), 1.0).inconclusive);
  CHECK_THROWS_AS(yaglom_front_count({}, 1.0), AnalysisError);
}

TEST_CASE("median with batch standard error", "[stats]") {
  CounterRng rng(replicate_key(4, 4), 0, 0);
  const int n = 40000;
  std::vector<double> x(n);
  for (auto& v : x) v = rng.normal();
  const auto med = median_with_se(x);
  // asymptotic SE of the normal median: sqrt(pi/2) / sqrt(n)
  const double se = std::sqrt(std::numbers::pi / 2.0 / n);
  CHECK_THAT(med.median, WithinAbs(0.0, 4 * se));
  CHECK_THAT(med.se, WithinRel(se, 0.5));
  CHECK_THROWS_AS(median_with_se(std::vector<double>(10, 0.0)), AnalysisError);
}

TEST_CASE("speed and centring fit recovers known coefficients", "[stats]") {
  std::vector<double> t, y, se;
  for (double s = 10; s <= 40; s += 5) {
    t.push_back(s);
    y.push_back(0.3 + 0.5 * s + 0.7 * std::log(s));
    se.push_back(0.05);
  }
  const auto f = speed_and_centring_fit(t, y, se);
  CHECK_THAT(f.slope, WithinAbs(0.5, 1e-10));
  CHECK_THAT(f.log_coef, WithinAbs(0.7, 1e-9));
  CHECK_THAT(f.intercept, WithinAbs(0.3, 1e-8));
  CHECK(f.slope_se > 0.0);
  CHECK(f.chi2 < 1e-12);
  CHECK_THROWS_AS(speed_and_centring_fit({1, 2, 3}, {1, 2, 3}, {1, 1, 1}), AnalysisError);
}

TEST_CASE("non-increasing within tolerance", "[stats]") {
  CHECK(non_increasing_within({0.3, 0.2, 0.21, 0.1}, {0.01, 0.01, 0.01, 0.01}, 2.0));
  CHECK_FALSE(non_increasing_within({0.3, 0.2, 0.3, 0.1}, {0.01, 0.01, 0.01, 0.01}, 2.0));
}

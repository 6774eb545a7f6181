/**
 * @file stats.hpp
 * @brief Estimators that turn replicate ensembles into verdicts.
 *
 * Everything here is a pure function of recorded observables, so analysis
 * of persisted results reproduces the same numbers.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fronts.hpp"

namespace bbm {

class AnalysisError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kZ95 = 1.959963984540054;

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
  bool contains(double v) const { return lo <= v && v <= hi; }
};

/// Wilson score interval for k successes out of n trials.
inline Interval wilson_interval(std::uint64_t k, std::uint64_t n, double z = kZ95) {
  if (n == 0) throw AnalysisError("no records");
  if (k > n) throw AnalysisError("hit count exceeds replicate count");
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(k) / nn;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double centre = (p + z2 / (2.0 * nn)) / denom;
  const double half = z / denom * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn));
  // exact endpoints at k = 0 and k = n
  return {k == 0 ? 0.0 : std::max(0.0, centre - half), k == n ? 1.0 : std::min(1.0, centre + half)};
}

struct TailEstimate {
  double t = 0.0;
  double front = 0.0;
  std::uint64_t hits = 0;
  std::uint64_t replicates = 0;
  double p_hat = 0.0;
  double se = 0.0;
  Interval wilson;
  double m1 = std::numeric_limits<double>::quiet_NaN();  // oracle first moment, when available
  double prediction = std::numeric_limits<double>::quiet_NaN();
  double ratio = std::numeric_limits<double>::quiet_NaN();
  double ratio_se = std::numeric_limits<double>::quiet_NaN();
  double eta = std::numeric_limits<double>::quiet_NaN();
  bool ratio_defined = false;
  bool too_early = false;  // eta(t) > 0.5
  bool graded = false;     // eta(t) < 0.1

  std::string flag() const {
    if (!ratio_defined) return "no_hits";
    if (too_early) return "too_early";
    return graded ? "graded" : "informational";
  }
};

/// Core estimator on counts; prediction and eta come from the fronts module.
inline TailEstimate estimate_tail(std::uint64_t hits, std::uint64_t replicates, double t, double front,
                                  double prediction, double eta_value,
                                  double m1 = std::numeric_limits<double>::quiet_NaN()) {
  TailEstimate e;
  e.t = t;
  e.front = front;
  e.hits = hits;
  e.replicates = replicates;
  e.wilson = wilson_interval(hits, replicates);
  e.p_hat = static_cast<double>(hits) / static_cast<double>(replicates);
  e.se = std::sqrt(e.p_hat * (1.0 - e.p_hat) / static_cast<double>(replicates));
  e.m1 = m1;
  e.prediction = prediction;
  e.eta = eta_value;
  e.too_early = eta_value > 0.5;
  e.graded = eta_value < 0.1;
  e.ratio_defined = hits > 0 && prediction > 0.0;
  if (e.ratio_defined) {
    e.ratio = e.p_hat / prediction;
    e.ratio_se = e.se / prediction;
  }
  return e;
}

/**
 * Estimator from the indicator L_t > R(t) over an ensemble at time t; the
 * prediction uses the two-sided tail from x0.
 */
inline TailEstimate estimate_tail(const std::vector<std::uint8_t>& exceed, const SpectralData& sd,
                                  const LimitConstants& c, const FrontSpec& front, double t, const Point& x0,
                                  double m1 = std::numeric_limits<double>::quiet_NaN()) {
  if (exceed.empty()) throw AnalysisError("no records");
  const auto hits = static_cast<std::uint64_t>(std::count(exceed.begin(), exceed.end(), std::uint8_t{1}));
  return estimate_tail(hits, exceed.size(), t, front(t), predicted_tail(sd, c, front, t, x0), eta(sd, c, front, t).exact,
                       m1);
}

/// Paley-Zygmund / Chebyshev sandwich m1^2 / m2 <= p <= m1 with k-SE slack on each side.
struct SandwichCheck {
  double lower = 0.0;
  double upper = 0.0;
  double p_hat = 0.0;
  double se = 0.0;
  bool holds = false;
};

inline SandwichCheck tail_sandwich(double p_hat, double se, double m1, double m2, double slack_se = 3.0) {
  SandwichCheck s;
  s.lower = m2 > 0.0 ? m1 * m1 / m2 : 0.0;
  s.upper = m1;
  s.p_hat = p_hat;
  s.se = se;
  s.holds = p_hat >= s.lower - slack_se * se && p_hat <= s.upper + slack_se * se;
  return s;
}

struct GumbelMixtureFit {
  std::vector<double> kappa;
  std::vector<double> empirical;  // P(Y_t <= kappa)
  std::vector<double> mixture;    // E[exp(-c e^{-rate kappa} M_T)]
  double distance = 0.0;          // sup over the grid
  double argmax = 0.0;
  double noise_floor = 0.0;       // 95% Kolmogorov band of the ECDF
  std::size_t samples = 0;
};

/// Default kappa grid spanning the bulk of the mixture law.
inline std::vector<double> default_kappa_grid(double rate, int points = 401) {
  std::vector<double> g(points);
  const double lo = -6.0 / rate;
  const double hi = 8.0 / rate;
  for (int i = 0; i < points; ++i) g[i] = lo + (hi - lo) * i / (points - 1);
  return g;
}

/**
 * ECDF of Y_t against the Gumbel mixture with M_infinity replaced by M_T.
 * Both samples must come from the same surviving replicates.
 */
inline GumbelMixtureFit gumbel_mixture_test(std::vector<double> y, const std::vector<double>& m_proxy, double c_star,
                                            double rate, std::vector<double> kappa) {
  if (y.empty()) throw AnalysisError("no records");
  if (m_proxy.size() != y.size()) throw AnalysisError("Y and M samples differ in size");
  if (!(c_star > 0.0) || !(rate > 0.0)) throw AnalysisError("mixture needs c_* > 0 and a positive rate");
  if (!std::is_sorted(kappa.begin(), kappa.end())) std::sort(kappa.begin(), kappa.end());
  std::sort(y.begin(), y.end());
  GumbelMixtureFit fit;
  fit.samples = y.size();
  fit.kappa = kappa;
  const double n = static_cast<double>(y.size());
  for (double k : kappa) {
    const double emp = static_cast<double>(std::upper_bound(y.begin(), y.end(), k) - y.begin()) / n;
    const double s = c_star * std::exp(-rate * k);
    double acc = 0.0;
    for (double m : m_proxy) acc += std::exp(-s * m);
    const double mix = acc / n;
    fit.empirical.push_back(emp);
    fit.mixture.push_back(mix);
    const double dist = std::abs(emp - mix);
    if (dist > fit.distance) {
      fit.distance = dist;
      fit.argmax = k;
    }
  }
  fit.noise_floor = 1.3581 / std::sqrt(n);
  return fit;
}

struct YaglomResult {
  double t = 0.0;
  std::uint64_t hits = 0;
  std::map<std::uint64_t, std::uint64_t> counts;  // k -> replicates with Z^{R(t)} = k, k >= 1
  double p_one = std::numeric_limits<double>::quiet_NaN();
  Interval p_one_ci;
  bool inconclusive = true;  // fewer than 50 hits

  /// Simultaneous (Bonferroni) Wilson intervals for the conditional pmf.
  std::map<std::uint64_t, Interval> pmf_intervals() const {
    std::map<std::uint64_t, Interval> out;
    if (hits == 0) return out;
    const double z = std::max(kZ95, special::norm_sf_inv(0.025 / static_cast<double>(counts.size())));
    for (const auto& [k, n] : counts) out[k] = wilson_interval(n, hits, z);
    return out;
  }
};

/// Conditional law of the number of particles beyond the front, given at least one.
inline YaglomResult yaglom_front_count(const std::vector<std::uint64_t>& beyond, double t) {
  if (beyond.empty()) throw AnalysisError("no records");
  YaglomResult r;
  r.t = t;
  for (auto k : beyond)
    if (k > 0) {
      ++r.hits;
      ++r.counts[k];
    }
  r.inconclusive = r.hits < 50;
  if (r.hits > 0) {
    const std::uint64_t ones = r.counts.count(1) ? r.counts.at(1) : 0;
    r.p_one = static_cast<double>(ones) / static_cast<double>(r.hits);
    r.p_one_ci = wilson_interval(ones, r.hits);
  }
  return r;
}

struct MedianEstimate {
  double median = 0.0;
  double se = 0.0;
};

/// Sample median with a standard error from batch medians (batches in replicate order).
inline MedianEstimate median_with_se(const std::vector<double>& xs, int batches = 20) {
  if (xs.size() < static_cast<std::size_t>(2 * batches)) throw AnalysisError("too few samples for batch medians");
  auto median = [](std::vector<double> v) {
    const std::size_t m = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + m, v.end());
    double hi = v[m];
    if (v.size() % 2 == 1) return hi;
    const double lo = *std::max_element(v.begin(), v.begin() + m);
    return 0.5 * (lo + hi);
  };
  MedianEstimate out;
  out.median = median(xs);
  std::vector<double> bm;
  const std::size_t per = xs.size() / batches;
  for (int b = 0; b < batches; ++b)
    bm.push_back(median(std::vector<double>(xs.begin() + b * per, xs.begin() + (b + 1) * per)));
  const double mean = std::accumulate(bm.begin(), bm.end(), 0.0) / batches;
  double ss = 0.0;
  for (double v : bm) ss += (v - mean) * (v - mean);
  // batch medians have variance ~ batches x that of the full median
  out.se = std::sqrt(ss / (batches - 1) / batches);
  return out;
}

struct SpeedFit {
  double intercept = 0.0;
  double slope = 0.0;
  double slope_se = 0.0;
  double log_coef = 0.0;
  double log_coef_se = 0.0;
  double chi2 = 0.0;
  int points = 0;
};

/**
 * Weighted least squares of median L_t on [1, t, log t]. Standard errors
 * come from the supplied per-point errors (not rescaled by the residuals).
 */
inline SpeedFit speed_and_centring_fit(const std::vector<double>& t, const std::vector<double>& median,
                                       const std::vector<double>& se) {
  const auto n = static_cast<Eigen::Index>(t.size());
  if (n < 4) throw AnalysisError("speed fit needs at least 4 ladder points");
  if (median.size() != t.size() || se.size() != t.size()) throw AnalysisError("ladder arrays differ in size");
  Eigen::MatrixXd X(n, 3);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(t[i] > 0.0) || !(se[i] > 0.0)) throw AnalysisError("speed fit needs t > 0 and positive errors");
    const double w = 1.0 / se[i];
    X(i, 0) = w;
    X(i, 1) = w * t[i];
    X(i, 2) = w * std::log(t[i]);
    y(i) = w * median[i];
  }
  const Eigen::Matrix3d XtX = X.transpose() * X;
  const Eigen::Vector3d beta = XtX.ldlt().solve(X.transpose() * y);
  const Eigen::Matrix3d cov = XtX.inverse();
  SpeedFit f;
  f.intercept = beta(0);
  f.slope = beta(1);
  f.log_coef = beta(2);
  f.slope_se = std::sqrt(cov(1, 1));
  f.log_coef_se = std::sqrt(cov(2, 2));
  f.chi2 = (y - X * beta).squaredNorm();
  f.points = static_cast<int>(n);
  return f;
}

/// Non-increasing within tolerance: a[i+1] <= a[i] + k * sqrt(se[i]^2 + se[i+1]^2).
inline bool non_increasing_within(const std::vector<double>& a, const std::vector<double>& se, double k) {
  for (std::size_t i = 0; i + 1 < a.size(); ++i)
    if (a[i + 1] > a[i] + k * std::hypot(se[i], se[i + 1])) return false;
  return true;
}

}  // namespace bbm

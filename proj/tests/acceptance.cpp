// Acceptance run: one PASS/FAIL line per criterion, tolerances pinned below.
// Usage: acceptance [criterion numbers...]   (default: all)

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "bbm/bbm.hpp"
#include "max_law_oracle.hpp"

using namespace bbm;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
  double budget_seconds = 0.0;
};

std::string num(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

unsigned worker_threads() { return std::max(1u, std::thread::hardware_concurrency()); }

struct Moments {
  double sum = 0, sum2 = 0, n = 0;
  void add(double v) {
    sum += v;
    sum2 += v * v;
    n += 1;
  }
  double mean() const { return sum / n; }
  double se() const { return std::sqrt((sum2 / n - mean() * mean()) / (n - 1)); }
};

ExperimentConfig unit_atom(double p2 = 1.0) {
  ExperimentConfig c;
  c.name = "acceptance";
  c.p2 = {p2};
  c.seed = 20261016;
  return c;
}

double delta_kernel_at_origin(double beta, double t) {
  return 1.0 / std::sqrt(2.0 * std::numbers::pi * t) +
         0.5 * beta * std::exp(0.5 * beta * beta * t) * std::erfc(-beta * std::sqrt(0.5 * t));
}

// ------------------------------------------------------------------ criteria

Outcome eigenvalue_exactness() {
  constexpr double kTol = 1e-12;
  double worst = 0.0;
  int points = 0;
  for (double beta : {0.5, 1.0, 2.0, 4.0, 8.0})
    for (double p : {0.6, 0.7, 0.85, 1.0}) {
      const auto sd = principal_eigenvalue(AtomicPotential{{0.0}, {(2 * p - 1) * beta}});
      const double w = (2 * p - 1) * beta;
      worst = std::max(worst, std::abs(sd.lambda + 0.5 * w * w));
      ++points;
    }
  return {worst < kTol && points == 20, num(points) + " (beta, p) points, max |lambda - exact| = " + num(worst) + " (tol 1e-12)", 1.0};
}

Outcome ground_state_exactness() {
  constexpr double kTol = 1e-8;
  constexpr double kEnvelope = 1.01;
  double worst = 0.0, ratio = 0.0;
  for (double beta : {0.5, 1.0, 2.0, 4.0, 8.0})
    for (double p : {0.6, 0.7, 0.85, 1.0}) {
      const auto sd = principal_eigenvalue(AtomicPotential{{0.0}, {(2 * p - 1) * beta}});
      const double h0 = sd.h(Point{0, 0, 0});
      worst = std::max(worst, std::abs(h0 * h0 - (2 * p - 1) * beta));
      ratio = std::max(ratio, sd.envelope_c2 / sd.envelope_c1);
    }
  return {worst < kTol && ratio < kEnvelope,
          "max |h(0)^2 - (2p-1) beta| = " + num(worst) + " (tol 1e-8), max c2/c1 = " + num(ratio, 8) + " (< 1.01)", 1.0};
}

Outcome constant_pipeline() {
  constexpr double kTol = 1e-10;
  double worst_closed = 0.0, worst_paths = 0.0;
  for (double beta : {0.5, 1.0, 2.0, 4.0, 8.0})
    for (double p : {0.6, 0.7, 0.85, 1.0}) {
      const auto sd = principal_eigenvalue(AtomicPotential{{0.0}, {(2 * p - 1) * beta}});
      const auto c = constants(sd);
      const double expected = 2.0 / std::sqrt((2 * p - 1) * beta);
      worst_closed = std::max({worst_closed, std::abs(c.c_star / expected - 1), std::abs(c.C_zero / expected - 1)});
      worst_paths = std::max(worst_paths, std::abs(c.c_star / c.c_star_closed - 1));
    }
  return {worst_closed < kTol && worst_paths < kTol,
          "max rel |c_* - 2/sqrt((2p-1)beta)| = " + num(worst_closed) + ", Gauss-Legendre vs closed surface integral " +
              num(worst_paths) + " (tol 1e-10)",
          1.0};
}

Outcome volterra_convergence() {
  constexpr double kRelTol = 2e-2;
  constexpr double kMinOrder = 1.5;
  const AtomicPotential unit{{0.0}, {1.0}};
  const double T = 10.0;
  const double scaled = std::exp(-0.5 * T) * VolterraSolution(unit, 0.0, T, 512).kernel(512, 0.0);
  const double rel = std::abs(scaled - 1.0);
  // grid-halving order on p_T^nu(0,0) against its closed form
  const double exact = delta_kernel_at_origin(1.0, T);
  std::vector<double> err;
  for (int n : {64, 128, 256, 512}) err.push_back(std::abs(VolterraSolution(unit, 0.0, T, n).kernel(n, 0.0) / exact - 1.0));
  double order = 1e300;
  std::string orders;
  bool roundoff = true;
  for (std::size_t i = 0; i + 1 < err.size(); ++i) {
    if (err[i + 1] > 1e-13) roundoff = false;
    const double o = std::log2(err[i] / std::max(err[i + 1], 1e-300));
    order = std::min(order, o);
    orders += (i ? ", " : "") + num(o, 3);
  }
  const bool order_ok = roundoff || order >= kMinOrder;
  return {rel < kRelTol && order_ok,
          "e^{lambda T} p_T(0,0) at T = 10, N = 512: rel err " + num(rel) + " (tol 2e-2); errors vs closed form N=64..512: " +
              num(err[0]) + " .. " + num(err[3]) + ", halving orders [" + orders + "]" +
              (roundoff ? " (at roundoff)" : "") + " (>= 1.5)",
          10.0};
}

Outcome many_to_one() {
  constexpr int kReplicates = 100000;
  constexpr double kSe = 3.0;
  const std::vector<double> ts{0.5, 1.0, 2.0};
  std::string detail;
  bool ok = true;
  for (double p : {1.0, 0.5}) {
    auto cfg = unit_atom(p);
    cfg.horizon_time = 2.0;
    cfg.step_time = 0.25;
    cfg.checkpoint_times = ts;
    cfg.replicates = kReplicates;
    const auto ctx = prepare(cfg);
    std::vector<Moments> z(ts.size());
    run_ensemble(ctx, worker_threads(), [&](std::uint64_t, const std::vector<Observables>& obs) {
      for (std::size_t k = 0; k < obs.size(); ++k) z[k].add(static_cast<double>(obs[k].Z));
    });
    for (std::size_t k = 0; k < ts.size(); ++k) {
      const double oracle = many_to_one_oracle(ctx.model, 0.0, ts[k], PiecewiseExponential::constant(1.0));
      const double dev = (z[k].mean() - oracle) / z[k].se();
      ok = ok && std::abs(dev) <= kSe;
      detail += (detail.empty() ? "" : "; ") + std::string(p == 1.0 ? "unit" : "critical") + " t=" + num(ts[k]) + ": " +
                num(z[k].mean(), 6) + " vs " + num(oracle, 6) + " (" + num(dev, 2) + " SE)";
    }
  }
  return {ok, detail + " [tol 3 SE, 1e5 replicates]", 300.0};
}

Outcome many_to_two() {
  constexpr int kReplicates = 100000;
  auto cfg = unit_atom();
  cfg.checkpoint_times = {1.0};
  cfg.step_time = 0.25;
  cfg.replicates = kReplicates;
  cfg.radii = {0.0, 1.0};
  const auto ctx = prepare(cfg);
  std::vector<Moments> s(2);
  run_ensemble(ctx, worker_threads(), [&](std::uint64_t, const std::vector<Observables>& obs) {
    for (std::size_t j = 0; j < 2; ++j) {
      const auto c = static_cast<double>(obs[0].radius_counts[j]);
      s[j].add(c * c);
    }
  });
  bool ok = true;
  std::string detail;
  for (std::size_t j = 0; j < 2; ++j) {
    const double oracle = second_moment_oracle(ctx.model, 0.0, 1.0, cfg.radii[j]);
    const double dev = (s[j].mean() - oracle) / s[j].se();
    ok = ok && std::abs(dev) <= 3.0;
    detail += (j ? "; " : "") + std::string("(t, R) = (1, ") + num(cfg.radii[j]) + "): E[(Z^R)^2] " + num(s[j].mean(), 6) +
              " vs oracle " + num(oracle, 6) + " (" + num(dev, 2) + " SE)";
  }
  return {ok, detail + " [tol 3 SE]", 600.0};
}

Outcome martingale() {
  constexpr int kReplicates = 100000;
  auto cfg = unit_atom();
  cfg.horizon_time = 10.0;
  cfg.step_time = 1.0;
  cfg.checkpoint_times = {1.0, 5.0, 10.0};
  cfg.replicates = kReplicates;
  const auto ctx = prepare(cfg);
  std::vector<Moments> m(3), m2(3);
  run_ensemble(ctx, worker_threads(), [&](std::uint64_t, const std::vector<Observables>& obs) {
    for (std::size_t k = 0; k < 3; ++k) {
      m[k].add(obs[k].M);
      m2[k].add(obs[k].M * obs[k].M);
    }
  });
  const double h0 = ctx.sd->h(cfg.start());
  bool ok = true;
  std::string detail;
  for (std::size_t k = 0; k < 3; ++k) {
    const double t = cfg.checkpoint_times[k];
    const double d1 = (m[k].mean() - h0) / m[k].se();
    const double oracle = martingale_second_moment_oracle(ctx.model, *ctx.sd, 0.0, t);
    const double d2 = (m2[k].mean() - oracle) / m2[k].se();
    ok = ok && std::abs(d1) <= 3.0 && std::abs(d2) <= 3.0;
    detail += (k ? "; " : "") + std::string("t=") + num(t) + ": E M " + num(m[k].mean(), 5) + " (" + num(d1, 2) +
              " SE), E M^2 " + num(m2[k].mean(), 5) + " vs " + num(oracle, 5) + " (" + num(d2, 2) + " SE)";
  }
  return {ok, detail + " [h(0) = " + num(h0) + ", tol 3 SE]", 600.0};
}

Outcome speed_and_centring() {
  // beta = 0.7, p = 1: lambda = -0.245 keeps E[Z_40] near 2e4 per replicate
  constexpr int kReplicates = 10000;
  auto cfg = unit_atom();
  cfg.atom_weights = {0.7};
  cfg.horizon_time = 40.0;
  cfg.step_time = 2.0;
  cfg.checkpoint_times = {10, 15, 20, 25, 30, 35, 40};
  cfg.replicates = kReplicates;
  const auto ctx = prepare(cfg);
  const std::size_t K = cfg.checkpoint_times.size();
  std::vector<std::vector<double>> L(K);
  run_ensemble(ctx, worker_threads(), [&](std::uint64_t, const std::vector<Observables>& obs) {
    for (std::size_t k = 0; k < K; ++k)
      if (!obs[k].extinct) L[k].push_back(obs[k].L);
  });
  std::vector<double> med, se;
  for (const auto& v : L) {
    const auto e = median_with_se(v);
    med.push_back(e.median);
    se.push_back(e.se);
  }
  const auto fit = speed_and_centring_fit(cfg.checkpoint_times, med, se);
  const double speed = std::sqrt(-ctx.sd->lambda / 2.0);
  const double zs = (fit.slope - speed) / fit.slope_se;
  const double zl = fit.log_coef / fit.log_coef_se;
  // the same fit on exact medians from the KPP equation, for this atom and the unit atom
  const auto exact_fit = [&](double beta) {
    std::vector<double> m;
    for (double t : cfg.checkpoint_times) m.push_back(bbm_oracle::max_norm_median(beta, t, {0.02, 0.01}));
    return speed_and_centring_fit(cfg.checkpoint_times, m, se);
  };
  const auto e07 = exact_fit(0.7), e1 = exact_fit(1.0);
  return {std::abs(zs) <= 2.0 && std::abs(zl) <= 2.0,
          "beta = 0.7 atom (lambda = " + num(ctx.sd->lambda) + "): slope " + num(fit.slope, 5) + " +- " +
              num(fit.slope_se, 3) + " vs sqrt(-lambda/2) = " + num(speed, 5) + " (" + num(zs, 2) + " SE); log coef " +
              num(fit.log_coef, 4) + " +- " + num(fit.log_coef_se, 3) + " (" + num(zl, 2) + " SE) [tol 2 SE]; exact medians give slope " +
              num(e07.slope, 4) + ", log coef " + num(e07.log_coef, 3) + " (unit atom: slope " + num(e1.slope, 4) + " vs 0.5)",
          1800.0};
}

// Criteria 9, 10 and 12 share one ensemble of the unit atom with the delta = 0.9 front.
struct TailLadder {
  std::vector<double> t;
  std::vector<TailEstimate> est;
  std::vector<double> m2;
  std::vector<YaglomResult> yaglom;
  double seconds = 0.0;
};

const TailLadder& tail_ladder() {
  static const TailLadder ladder = [] {
    constexpr int kReplicates = 1000000;
    const auto start = std::chrono::steady_clock::now();
    auto cfg = unit_atom();
    cfg.horizon_time = 12.0;
    cfg.step_time = 2.0;
    cfg.checkpoint_times = {6, 8, 10, 12};
    cfg.replicates = kReplicates;
    cfg.fronts = {FrontDescriptor::parse("R2:delta=0.9")};
    const auto ctx = prepare(cfg);
    const std::size_t K = cfg.checkpoint_times.size();
    std::vector<std::vector<std::uint64_t>> beyond(K);
    for (auto& b : beyond) b.reserve(kReplicates);
    run_ensemble(ctx, worker_threads(), [&](std::uint64_t, const std::vector<Observables>& obs) {
      for (std::size_t k = 0; k < K; ++k) beyond[k].push_back(obs[k].front_counts[0]);
    });
    TailLadder out;
    out.t = cfg.checkpoint_times;
    const auto& front = ctx.fronts[0];
    for (std::size_t k = 0; k < K; ++k) {
      const double t = out.t[k];
      const double R = front(t);
      std::uint64_t hits = 0;
      for (auto b : beyond[k]) hits += b > 0;
      const double m1 = many_to_one_oracle(ctx.model, 0.0, t, PiecewiseExponential::tail_indicator(R));
      out.est.push_back(estimate_tail(hits, kReplicates, t, R, predicted_tail(*ctx.sd, *ctx.constants, front, t, cfg.start()),
                                      eta(*ctx.sd, *ctx.constants, front, t).exact, m1));
      out.m2.push_back(second_moment_oracle(ctx.model, 0.0, t, R));
      out.yaglom.push_back(yaglom_front_count(beyond[k], t));
    }
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
  }();
  return ladder;
}

Outcome tail_sandwich_check() {
  const auto& L = tail_ladder();
  bool ok = true;
  int graded = 0;
  std::string detail;
  for (std::size_t k = 0; k < L.t.size(); ++k) {
    const auto& e = L.est[k];
    if (!e.graded) continue;
    ++graded;
    const auto s = tail_sandwich(e.p_hat, e.se, e.m1, L.m2[k]);
    ok = ok && s.holds;
    detail += (detail.empty() ? "" : "; ") + std::string("t=") + num(e.t) + ": " + num(s.lower, 5) + " <= " +
              num(e.p_hat, 5) + " <= " + num(s.upper, 5) + (s.holds ? "" : " VIOLATED");
  }
  return {ok && graded > 0, std::to_string(graded) + " graded checkpoints (eta < 0.1); " + detail + " [3 SE slack]", 1e300};
}

Outcome tail_ratio_trend() {
  const auto& L = tail_ladder();
  std::vector<double> gap, se;
  std::string detail;
  for (const auto& e : L.est) {
    gap.push_back(std::abs(e.ratio - 1.0));
    se.push_back(e.ratio_se);
    detail += (detail.empty() ? "" : ", ") + std::string("t=") + num(e.t) + ": " + num(e.ratio, 4) + " +- " + num(e.ratio_se, 2);
  }
  const bool trend = non_increasing_within(gap, se, 2.0);
  const double last = L.est.back().ratio;
  const bool final_ok = last >= 0.8 && last <= 1.2;
  return {trend && final_ok,
          "p_hat / predicted (delta = 0.9, 1e6 replicates): " + detail + "; |ratio - 1| non-increasing within 2 SE: " +
              (trend ? "yes" : "no") + "; final ratio in [0.8, 1.2]: " + (final_ok ? "yes" : "no"),
          3600.0};
}

Outcome yaglom_trend() {
  const auto& L = tail_ladder();
  std::vector<double> miss, se;
  std::string detail;
  for (const auto& y : L.yaglom) {
    const double p = y.p_one;
    miss.push_back(1.0 - p);
    se.push_back(std::sqrt(p * (1.0 - p) / static_cast<double>(y.hits)));
    detail += (detail.empty() ? "" : ", ") + std::string("t=") + num(y.t) + ": " + num(p, 4) + " (" + std::to_string(y.hits) +
              " hits)";
  }
  const bool trend = non_increasing_within(miss, se, 2.0);
  // last checkpoint that is graded for the tail comparison
  double final_p = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t k = 0; k < L.t.size(); ++k)
    if (L.est[k].graded && !L.yaglom[k].inconclusive) final_p = L.yaglom[k].p_one;
  const bool final_ok = final_p > 0.9;
  return {trend && final_ok,
          "P(Z^{R2} = 1 | hit): " + detail + "; increasing within 2 SE: " + (trend ? "yes" : "no") +
              "; final graded value " + num(final_p, 4) + " (> 0.9)",
          1e300};
}

Outcome gumbel_trend() {
  constexpr int kReplicates = 100000;
  constexpr double kFinal = 0.05;
  auto cfg = unit_atom();
  cfg.horizon_time = 15.0;
  cfg.step_time = 1.5;
  cfg.checkpoint_times = {3, 4.5, 6, 7.5, 9, 12, 15};
  cfg.replicates = kReplicates;
  const auto ctx = prepare(cfg);
  const std::size_t K = cfg.checkpoint_times.size();
  std::vector<std::vector<double>> Y(K), M(K);
  run_ensemble(ctx, worker_threads(), [&](std::uint64_t, const std::vector<Observables>& obs) {
    for (std::size_t k = 0; k < K; ++k) {
      Y[k].push_back(obs[k].Y);
      M[k].push_back(obs[k].M);
    }
  });
  auto index = [&](double t) {
    return static_cast<std::size_t>(std::find(cfg.checkpoint_times.begin(), cfg.checkpoint_times.end(), t) -
                                    cfg.checkpoint_times.begin());
  };
  const double rate = ctx.sd->sqrt_m2l;
  std::vector<double> D, floor;
  std::string detail;
  for (double t : {6.0, 9.0, 12.0, 15.0}) {
    // p2 = 1: every replicate survives
    const auto fit = gumbel_mixture_test(Y[index(t)], M[index(t / 2)], ctx.constants->c_star, rate, default_kappa_grid(rate));
    D.push_back(fit.distance);
    floor.push_back(fit.noise_floor);
    detail += (detail.empty() ? "" : ", ") + std::string("D(") + num(t) + ") = " + num(fit.distance, 4);
  }
  bool trend = true;
  for (std::size_t i = 0; i + 1 < D.size(); ++i) trend = trend && D[i + 1] <= D[i] + floor[i + 1];
  const bool final_ok = D.back() < kFinal;
  return {trend && final_ok,
          detail + " (noise floor " + num(floor.back(), 3) + "); non-increasing within the floor: " + (trend ? "yes" : "no") +
              "; D(15) < 0.05: " + (final_ok ? "yes" : "no"),
          3600.0};
}

Outcome shell_tail_integral() {
  constexpr double kTol = 1e-2;
  const auto sd = principal_eigenvalue_shell(1.0, 1.0, 1.0);
  const auto c = constants(sd);
  const double R = 20.0;
  const double ratio = h_tail_mass(sd, R) / (c.c_d * std::exp(-sd.sqrt_m2l * R) * R);
  // d = 1 is exact for every R
  const auto atom = principal_eigenvalue(AtomicPotential{{0.0}, {1.0}});
  const double exact1 = h_tail_mass(atom, R) / (constants(atom).c_d * std::exp(-atom.sqrt_m2l * R));
  const double larger = 400.0;
  const double ratio_far = h_tail_mass(sd, larger) / (c.c_d * std::exp(-sd.sqrt_m2l * larger) * larger);
  return {std::abs(ratio - 1.0) < kTol && std::abs(exact1 - 1.0) < 1e-12,
          "d = 3 shell (R_s = 1, beta = 1, p = 1): ratio at R = 20 is " + num(ratio, 6) + " (tol 1e-2), at R = 400 " +
              num(ratio_far, 6) + "; d = 1 atom ratio " + num(exact1, 12),
          10.0};
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

Outcome determinism() {
  auto cfg = load_config((fs::path(BBM_SOURCE_DIR) / "configs" / "smoke.json").string());
  const auto ctx = prepare(cfg);
  std::vector<std::string> digests;
  for (unsigned threads : {1u, 4u, 16u}) {
    const auto dir = fs::temp_directory_path() / ("bbm_acceptance_threads" + std::to_string(threads));
    fs::remove_all(dir);
    run_experiment(ctx, dir, threads);
    std::ifstream in(dir / "results.tsv", std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    digests.push_back(ss.str());
    fs::remove_all(dir);
  }
  const bool same = digests[0] == digests[1] && digests[0] == digests[2];
  return {same && !digests[0].empty(),
          "smoke config, results.tsv under 1 / 4 / 16 threads: " + std::string(same ? "byte-identical" : "DIFFERENT") + " (" +
              std::to_string(digests[0].size()) + " bytes, fnv1a " + hex64(fnv1a64(digests[0])) + ")",
          300.0};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"eigenvalue exactness", eigenvalue_exactness},
      {"ground-state exactness", ground_state_exactness},
      {"constant pipeline", constant_pipeline},
      {"Volterra oracle convergence", volterra_convergence},
      {"many-to-one", many_to_one},
      {"many-to-two", many_to_two},
      {"martingale moments", martingale},
      {"speed and centring", speed_and_centring},
      {"tail sandwich", tail_sandwich_check},
      {"tail ratio trend", tail_ratio_trend},
      {"Gumbel mixture trend", gumbel_trend},
      {"conditional front count", yaglom_trend},
      {"ground-state tail integral", shell_tail_integral},
      {"determinism", determinism},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::stoi(argv[i]));
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what(), 0.0};
    }
    double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    // criteria 9 and 12 reuse the ensemble of criterion 10 and share its budget
    if (id == 9 || id == 12) {
      seconds = tail_ladder().seconds;
      o.budget_seconds = 3600.0;
    }
    const bool in_budget = o.budget_seconds <= 0.0 || seconds <= o.budget_seconds;
    const bool pass = o.pass && in_budget;
    failed += !pass;
    std::printf("criterion %2d %s  %-28s %s | %.1f s (budget %s s)%s\n", id, pass ? "PASS" : "FAIL", criteria[i].first.c_str(),
                o.detail.c_str(), seconds, num(o.budget_seconds).c_str(), in_budget ? "" : " OVER BUDGET");
    std::fflush(stdout);
  }
  std::printf("%d criteria failed\n", failed);
  return failed == 0 ? 0 : 1;
}

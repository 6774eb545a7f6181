/**
 * @file experiment.hpp
 * @brief Ensemble runs, result persistence and analyses over persisted runs.
 *
 * A run directory holds
 *   config.json   canonical configuration
 *   header.json   spectral data, constants, fronts, seed (deterministic)
 *   results.tsv   one record per (replicate, checkpoint), replicate order
 *   run_meta.json wall time and thread count (not part of the determinism contract)
 *
 * Replicates run on worker threads in chunks; the calling thread consumes
 * finished chunks in replicate order, so the output does not depend on the
 * thread count.
 */
#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "config.hpp"
#include "fronts.hpp"
#include "measures.hpp"
#include "simulator.hpp"
#include "spectral.hpp"
#include "stats.hpp"

namespace bbm {

inline constexpr int kResultsSchema = 1;

enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitCapBreach = 3, kExitAnalysis = 4 };

/// Everything derived from a validated configuration.
struct RunContext {
  ExperimentConfig config;
  std::string hash;
  BranchingModel model;
  std::optional<SpectralData> sd;
  std::optional<LimitConstants> constants;
  std::vector<FrontSpec> fronts;
  ObservableSpec observables;
  SimulationOptions options;
  KatoReport kato;
  double expected_population = 1.0;  // E[Z] at the horizon

  const SpectralData* spectral() const { return sd ? &*sd : nullptr; }
};

/**
 * Validates a configuration and derives the model data. Throws ConfigError
 * for invalid configurations, for fronts without a bound state and when the
 * expected population at the horizon exceeds the cap.
 */
inline RunContext prepare(const ExperimentConfig& cfg) {
  cfg.validate();
  std::optional<BranchingModel> model;
  try {
    model.emplace(cfg.model());
  } catch (const ModelError& e) {
    throw ConfigError(std::string("invalid model: ") + e.what());
  }
  RunContext ctx{cfg, config_hash(cfg), *model, {}, {}, {}, {}, {}, {}, 1.0};
  ctx.kato = is_kato_and_compact(ctx.model.rate());
  if (!ctx.kato.kato_and_compact) throw ConfigError("measure fails the Kato / compact-support check");
  try {
    ctx.sd = principal_eigenvalue(ctx.model);
    ctx.constants = constants(*ctx.sd);
  } catch (const SpectralError&) {
    ctx.sd.reset();
  }
  if (!cfg.fronts.empty() && !ctx.sd) throw ConfigError("fronts need a model with a negative principal eigenvalue");
  for (const auto& f : cfg.fronts) {
    try {
      ctx.fronts.push_back(f.resolve(ctx.sd->lambda, cfg.dimension));
    } catch (const FrontError& e) {
      throw ConfigError("front " + f.str() + ": " + e.what());
    }
  }
  ctx.observables.fronts = ctx.fronts;
  ctx.observables.radii = cfg.radii;
  ctx.options.dt = cfg.step_time;
  ctx.options.population_cap = cfg.population_cap;
  ctx.options.scheme = cfg.scheme();

  const double T = cfg.checkpoint_times.back();
  if (ctx.sd && T > 0.0) {
    if (ctx.model.rate().is_atoms())
      ctx.expected_population = many_to_one_oracle(ctx.model, cfg.x0[0], T, PiecewiseExponential::constant(1.0), 256);
    else
      ctx.expected_population =
          std::max(1.0, std::exp(-ctx.sd->lambda * T) * ctx.sd->h(cfg.start()) * h_tail_mass(*ctx.sd, 0.0));
  }
  if (ctx.expected_population > static_cast<double>(cfg.population_cap))
    throw ConfigError("expected population " + std::to_string(ctx.expected_population) + " at t = " + std::to_string(T) +
                      " exceeds population_cap");
  return ctx;
}

using ReplicateSink = std::function<void(std::uint64_t replicate, const std::vector<Observables>&)>;

/**
 * Runs replicates [first, first + count) on `threads` workers; `sink` is
 * called on the calling thread in replicate order.
 */
inline void run_ensemble(const RunContext& ctx, unsigned threads, const ReplicateSink& sink, std::uint64_t first = 0,
                         std::uint64_t count = 0) {
  if (count == 0) count = ctx.config.replicates;
  threads = std::max(1u, threads);
  const Point x0 = ctx.config.start();
  auto one = [&](std::uint64_t rep) {
    return run_replicate(ctx.model, ctx.spectral(), x0, ctx.config.checkpoint_times, ctx.observables, ctx.config.seed,
                         rep, ctx.options);
  };
  if (threads == 1) {
    for (std::uint64_t r = first; r < first + count; ++r) sink(r, one(r));
    return;
  }
  const std::uint64_t chunk = std::max<std::uint64_t>(64, 32ull * threads);
  std::vector<std::vector<Observables>> buffer;
  for (std::uint64_t start = first; start < first + count; start += chunk) {
    const std::uint64_t n = std::min(chunk, first + count - start);
    buffer.assign(n, {});
    std::atomic<std::uint64_t> next{0};
    auto worker = [&] {
      for (std::uint64_t i = next++; i < n; i = next++) buffer[i] = one(start + i);
    };
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < threads; ++w) pool.emplace_back(worker);
    pool.clear();  // joins
    for (std::uint64_t i = 0; i < n; ++i) sink(start + i, buffer[i]);
  }
}

// ---------------------------------------------------------------- persistence

namespace results_detail {

inline std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  return shortest(v);
}

}  // namespace results_detail

inline std::vector<std::string> result_columns(const RunContext& ctx) {
  std::vector<std::string> cols{"replicate", "t", "Z", "L", "R", "M", "Y", "extinct", "cap_exceeded"};
  for (std::size_t i = 0; i < ctx.fronts.size(); ++i) {
    cols.push_back("front" + std::to_string(i));
    cols.push_back("Z_front" + std::to_string(i));
    cols.push_back("Z_right_front" + std::to_string(i));
  }
  for (std::size_t j = 0; j < ctx.config.radii.size(); ++j) cols.push_back("Z_radius" + std::to_string(j));
  return cols;
}

inline std::string schema_line(const std::string& hash) {
  return "# bbm-results schema=" + std::to_string(kResultsSchema) + " config_hash=" + hash;
}

inline std::string format_record(std::uint64_t replicate, const Observables& o) {
  using results_detail::fmt;
  std::string s = std::to_string(replicate);
  auto add = [&](const std::string& v) {
    s += '\t';
    s += v;
  };
  add(fmt(o.t));
  add(std::to_string(o.Z));
  add(fmt(o.L));
  add(fmt(o.R));
  add(fmt(o.M));
  add(fmt(o.Y));
  add(o.extinct ? "1" : "0");
  add(o.cap_exceeded ? "1" : "0");
  for (std::size_t i = 0; i < o.front_values.size(); ++i) {
    add(fmt(o.front_values[i]));
    add(std::to_string(o.front_counts[i]));
    add(std::to_string(o.front_right[i]));
  }
  for (auto c : o.radius_counts) add(std::to_string(c));
  return s;
}

inline nlohmann::json header_json(const RunContext& ctx) {
  nlohmann::json h;
  h["schema"] = kResultsSchema;
  h["config_hash"] = ctx.hash;
  h["config"] = to_json(ctx.config);
  h["seed"] = ctx.config.seed;
  h["expected_population_at_horizon"] = ctx.expected_population;
  h["kato"] = {{"kato_and_compact", ctx.kato.kato_and_compact}, {"alphas", ctx.kato.alphas}, {"sup_potentials", ctx.kato.sup_potentials}};
  if (ctx.sd) {
    const auto& sd = *ctx.sd;
    h["lambda"] = sd.lambda;
    h["sqrt_minus_2_lambda"] = sd.sqrt_m2l;
    h["speed"] = std::sqrt(-sd.lambda / 2.0);
    h["h_at_support"] = sd.h_at_support;
    h["h_at_x0"] = sd.h(ctx.config.start());
    h["lambda2_diagnostic"] = sd.lambda2_diag;
    h["l2_norm_residual"] = sd.l2_norm_residual;
    const auto& c = *ctx.constants;
    h["constants"] = {{"c_d", c.c_d}, {"c_star", c.c_star}, {"c_star_closed", c.c_star_closed}};
    if (ctx.config.dimension == 1) {
      h["constants"]["C_zero"] = c.C_zero;
      h["constants"]["c_zero"] = c.c_zero;
    }
  } else {
    h["lambda"] = nullptr;
  }
  std::vector<nlohmann::json> fronts;
  for (std::size_t i = 0; i < ctx.fronts.size(); ++i)
    fronts.push_back({{"index", i}, {"spec", ctx.config.fronts[i].str()}, {"describe", ctx.fronts[i].describe()}});
  h["fronts"] = fronts;
  h["columns"] = result_columns(ctx);
  return h;
}

struct RunOutcome {
  std::filesystem::path dir;
  std::uint64_t records = 0;
  std::uint64_t cap_breaches = 0;
  int exit_code = kExitOk;
};

/// Output directory: explicit, else the config's, else $BBM_OUTPUT_ROOT (default "runs") / name-hash.
inline std::filesystem::path output_directory(const ExperimentConfig& cfg, const std::string& explicit_dir = "") {
  if (!explicit_dir.empty()) return explicit_dir;
  if (!cfg.output_dir.empty()) return cfg.output_dir;
  const char* root = std::getenv("BBM_OUTPUT_ROOT");
  return std::filesystem::path(root && *root ? root : "runs") / (cfg.name + "-" + config_hash(cfg).substr(0, 8));
}

inline void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << s;
}

inline RunOutcome run_experiment(const RunContext& ctx, const std::filesystem::path& dir, unsigned threads) {
  std::filesystem::create_directories(dir);
  write_text(dir / "config.json", emit_config(ctx.config));
  write_text(dir / "header.json", header_json(ctx).dump(2) + "\n");
  RunOutcome out;
  out.dir = dir;
  const auto t0 = std::chrono::steady_clock::now();
  {
    std::ofstream res(dir / "results.tsv", std::ios::binary);
    if (!res) throw std::runtime_error("cannot write results in " + dir.string());
    res << schema_line(ctx.hash) << '\n';
    const auto cols = result_columns(ctx);
    for (std::size_t i = 0; i < cols.size(); ++i) res << (i ? "\t" : "") << cols[i];
    res << '\n';
    run_ensemble(ctx, threads, [&](std::uint64_t rep, const std::vector<Observables>& obs) {
      bool capped = false;
      for (const auto& o : obs) {
        res << format_record(rep, o) << '\n';
        ++out.records;
        capped = capped || o.cap_exceeded;
      }
      if (capped) ++out.cap_breaches;
    });
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out.exit_code = out.cap_breaches ? kExitCapBreach : kExitOk;
  nlohmann::json meta{{"config_hash", ctx.hash},
                      {"threads", threads},
                      {"wall_seconds", wall},
                      {"records", out.records},
                      {"cap_breaches", out.cap_breaches},
                      {"status", out.cap_breaches ? "partial" : "complete"}};
  write_text(dir / "run_meta.json", meta.dump(2) + "\n");
  return out;
}

// ------------------------------------------------------------------ analysis

/// Results of one run, loaded column-wise and grouped by checkpoint.
struct ResultTable {
  std::string hash;
  nlohmann::json header;
  std::vector<std::string> columns;
  std::vector<double> checkpoints;
  // rows[checkpoint index][record] -> values in column order
  std::vector<std::vector<std::vector<double>>> rows;

  std::size_t column(const std::string& name) const {
    const auto it = std::find(columns.begin(), columns.end(), name);
    if (it == columns.end()) throw AnalysisError("results lack column " + name);
    return static_cast<std::size_t>(it - columns.begin());
  }

  std::size_t checkpoint_index(double t) const {
    for (std::size_t i = 0; i < checkpoints.size(); ++i)
      if (std::abs(checkpoints[i] - t) <= 1e-9 * std::max(1.0, std::abs(t))) return i;
    throw AnalysisError("results have no checkpoint t = " + results_detail::fmt(t));
  }

  std::vector<double> values(std::size_t k, const std::string& name) const {
    const std::size_t c = column(name);
    std::vector<double> v;
    v.reserve(rows.at(k).size());
    for (const auto& r : rows[k]) v.push_back(r[c]);
    return v;
  }
};

inline ResultTable load_results(const std::filesystem::path& dir) {
  ResultTable tab;
  {
    std::ifstream hin(dir / "header.json");
    if (!hin) throw AnalysisError("no header.json in " + dir.string());
    try {
      tab.header = nlohmann::json::parse(hin);
    } catch (const nlohmann::json::exception& e) {
      throw AnalysisError(std::string("bad header.json: ") + e.what());
    }
  }
  if (tab.header.value("schema", -1) != kResultsSchema) throw AnalysisError("schema version mismatch in header.json");
  tab.hash = tab.header.at("config_hash").get<std::string>();
  std::ifstream in(dir / "results.tsv");
  if (!in) throw AnalysisError("no results.tsv in " + dir.string());
  std::string line;
  if (!std::getline(in, line) || line != schema_line(tab.hash))
    throw AnalysisError("schema version mismatch in results.tsv");
  if (!std::getline(in, line)) throw AnalysisError("no records");
  {
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, '\t')) tab.columns.push_back(c);
  }
  const auto cps = tab.header.at("config").at("checkpoint_times").get<std::vector<double>>();
  tab.checkpoints = cps;
  tab.rows.resize(cps.size());
  std::size_t records = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    row.reserve(tab.columns.size());
    const char* p = line.c_str();
    char* end = nullptr;
    while (*p) {
      row.push_back(std::strtod(p, &end));
      p = end;
      if (*p == '\t') ++p;
      else if (*p) throw AnalysisError("malformed record: " + line.substr(0, 80));
    }
    if (row.size() != tab.columns.size()) throw AnalysisError("record has the wrong field count");
    tab.rows[tab.checkpoint_index(row[1])].push_back(std::move(row));
    ++records;
  }
  if (records == 0) throw AnalysisError("no records");
  return tab;
}

struct AnalysisSpec {
  std::vector<std::string> analyses{"moments", "tail", "yaglom", "gumbel", "speed"};
  std::optional<double> checkpoint;  // restrict to one checkpoint
  std::optional<std::size_t> front;  // restrict to one front
  bool wants(const std::string& a) const { return std::find(analyses.begin(), analyses.end(), a) != analyses.end(); }
};

struct Verdict {
  std::string analysis;
  double t = 0.0;
  std::string front;
  std::string metric;
  double value = 0.0;
  double se = 0.0;
  double reference = std::numeric_limits<double>::quiet_NaN();
  std::string flag;
};

struct AnalysisOutcome {
  std::vector<Verdict> verdicts;
  std::vector<std::filesystem::path> plots;
};

namespace analysis_detail {

inline double mean(const std::vector<double>& v) {
  return v.empty() ? std::numeric_limits<double>::quiet_NaN() : std::accumulate(v.begin(), v.end(), 0.0) / v.size();
}

inline double std_error(const std::vector<double>& v) {
  if (v.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / (v.size() - 1) / v.size());
}

inline void write_plot(const std::filesystem::path& p, const std::string& hash, const std::vector<double>& x,
                       const std::vector<double>& y) {
  std::ostringstream os;
  os << "# config_hash=" << hash << '\n';
  for (std::size_t i = 0; i < x.size(); ++i) os << results_detail::fmt(x[i]) << ' ' << results_detail::fmt(y[i]) << '\n';
  write_text(p, os.str());
}

}  // namespace analysis_detail

/**
 * Runs the requested analyses on a run directory and writes verdicts.csv
 * plus two-column plot files (each starting with a config-hash comment).
 */
inline AnalysisOutcome analyze(const std::filesystem::path& dir, const AnalysisSpec& spec = {}) {
  using analysis_detail::mean;
  using analysis_detail::std_error;
  const ResultTable tab = load_results(dir);
  ExperimentConfig cfg;
  try {
    cfg = parse_config(tab.header.at("config").dump());
  } catch (const ConfigError& e) {
    throw AnalysisError(std::string("header config unreadable: ") + e.what());
  }
  if (config_hash(cfg) != tab.hash) throw AnalysisError("config hash mismatch between header and embedded config");
  RunContext ctx = [&] {
    try {
      return prepare(cfg);
    } catch (const ConfigError& e) {
      throw AnalysisError(std::string("config no longer valid: ") + e.what());
    }
  }();
  AnalysisOutcome out;
  const bool atoms = ctx.model.rate().is_atoms();
  const int d = cfg.dimension;
  std::vector<std::size_t> ks;
  for (std::size_t k = 0; k < tab.checkpoints.size(); ++k)
    if (!spec.checkpoint || std::abs(tab.checkpoints[k] - *spec.checkpoint) < 1e-9) ks.push_back(k);
  if (spec.checkpoint && ks.empty()) throw AnalysisError("results have no checkpoint t = " + results_detail::fmt(*spec.checkpoint));
  std::vector<std::size_t> fs;
  for (std::size_t i = 0; i < ctx.fronts.size(); ++i)
    if (!spec.front || *spec.front == i) fs.push_back(i);
  if (spec.front && fs.empty()) throw AnalysisError("no front with index " + std::to_string(*spec.front));
  auto push = [&](Verdict v) { out.verdicts.push_back(std::move(v)); };

  if (spec.wants("moments")) {
    for (auto k : ks) {
      const double t = tab.checkpoints[k];
      const auto Z = tab.values(k, "Z");
      double ref = std::numeric_limits<double>::quiet_NaN();
      if (atoms && t > 0.0) ref = many_to_one_oracle(ctx.model, cfg.x0[0], t, PiecewiseExponential::constant(1.0), 256);
      if (t == 0.0) ref = 1.0;
      const double m = mean(Z);
      const double se = std_error(Z);
      push({"moments", t, "", "mean_Z", m, se, ref, std::isnan(ref) ? "informational" : (std::abs(m - ref) <= 3 * se ? "pass" : "fail")});
      if (ctx.sd) {
        const auto M = tab.values(k, "M");
        const double href = ctx.sd->h(cfg.start());
        const double mm = mean(M);
        const double ms = std_error(M);
        push({"moments", t, "", "mean_M", mm, ms, href, std::abs(mm - href) <= 3 * ms ? "pass" : "fail"});
      }
    }
  }

  if (spec.wants("tail") && ctx.sd) {
    for (auto i : fs) {
      std::vector<double> ts, ratios;
      for (auto k : ks) {
        const double t = tab.checkpoints[k];
        const auto counts = tab.values(k, "Z_front" + std::to_string(i));
        std::uint64_t hits = 0;
        for (double c : counts) hits += c > 0.0;
        const double m1 = atoms && t > 0.0
                              ? many_to_one_oracle(ctx.model, cfg.x0[0], t,
                                                   PiecewiseExponential::tail_indicator(std::max(0.0, ctx.fronts[i](t))), 256)
                              : std::numeric_limits<double>::quiet_NaN();
        const auto e = estimate_tail(hits, counts.size(), t, ctx.fronts[i](t),
                                     predicted_tail(*ctx.sd, *ctx.constants, ctx.fronts[i], t, cfg.start()),
                                     eta(*ctx.sd, *ctx.constants, ctx.fronts[i], t).exact, m1);
        const std::string fname = cfg.fronts[i].str();
        push({"tail", t, fname, "p_hat", e.p_hat, e.se, e.prediction, e.flag()});
        push({"tail", t, fname, "ratio", e.ratio, e.ratio_se, 1.0, e.flag()});
        if (atoms && t > 0.0 && ctx.fronts[i](t) >= 0.0) {
          const double m2 = second_moment_oracle(ctx.model, cfg.x0[0], t, ctx.fronts[i](t), 256);
          const auto sw = tail_sandwich(e.p_hat, e.se, m1, m2);
          push({"tail", t, fname, "sandwich_lower", sw.lower, e.se, e.p_hat, sw.holds ? "pass" : "fail"});
          push({"tail", t, fname, "sandwich_upper", sw.upper, e.se, e.p_hat, sw.holds ? "pass" : "fail"});
        }
        if (e.ratio_defined) {
          ts.push_back(t);
          ratios.push_back(e.ratio);
        }
      }
      if (!ts.empty()) {
        const auto p = dir / ("tail_ratio_front" + std::to_string(i) + ".dat");
        analysis_detail::write_plot(p, tab.hash, ts, ratios);
        out.plots.push_back(p);
      }
    }
  }

  if (spec.wants("yaglom") && ctx.sd) {
    for (auto i : fs) {
      if (std::holds_alternative<FrontR1>(cfg.fronts[i].kind)) continue;
      for (auto k : ks) {
        const double t = tab.checkpoints[k];
        std::vector<std::uint64_t> beyond;
        for (double c : tab.values(k, "Z_front" + std::to_string(i))) beyond.push_back(static_cast<std::uint64_t>(c));
        const auto y = yaglom_front_count(beyond, t);
        if (y.hits == 0) {
          push({"yaglom", t, cfg.fronts[i].str(), "P(k=1|hit)", std::numeric_limits<double>::quiet_NaN(), 0.0, 1.0, "no_hits"});
          continue;
        }
        const double se = std::sqrt(y.p_one * (1.0 - y.p_one) / static_cast<double>(y.hits));
        push({"yaglom", t, cfg.fronts[i].str(), "P(k=1|hit)", y.p_one, se, 1.0, y.inconclusive ? "inconclusive" : "measured"});
      }
    }
  }

  if (spec.wants("gumbel") && ctx.sd) {
    const double rate = ctx.sd->sqrt_m2l;
    const double c = ctx.constants->c_star;
    for (auto k : ks) {
      const double t = tab.checkpoints[k];
      if (t <= 0.0) continue;
      std::size_t kT = 0;
      try {
        kT = tab.checkpoint_index(t / 2.0);
      } catch (const AnalysisError&) {
        if (spec.checkpoint) throw AnalysisError("gumbel analysis at t = " + results_detail::fmt(t) +
                                                 " needs the M_T checkpoint T = " + results_detail::fmt(t / 2.0));
        continue;
      }
      const auto Y = tab.values(k, "Y");
      const auto Zt = tab.values(k, "Z");
      const auto MT = tab.values(kT, "M");
      std::vector<double> ys, ms;
      for (std::size_t r = 0; r < Y.size(); ++r) {
        // survival proxy: Z_t >= 1 in d = 1, 2; M_T > 1e-6 in d = 3
        const bool alive = d < 3 ? Zt[r] >= 1.0 : MT[r] > 1e-6;
        if (!alive || std::isnan(Y[r])) continue;
        ys.push_back(Y[r]);
        ms.push_back(MT[r]);
      }
      if (ys.empty()) continue;
      const auto fit = gumbel_mixture_test(ys, ms, c, rate, default_kappa_grid(rate));
      push({"gumbel", t, "", "D", fit.distance, fit.noise_floor, 0.0, "measured"});
      const auto pe = dir / ("gumbel_t" + results_detail::fmt(t) + "_empirical.dat");
      const auto pm = dir / ("gumbel_t" + results_detail::fmt(t) + "_mixture.dat");
      analysis_detail::write_plot(pe, tab.hash, fit.kappa, fit.empirical);
      analysis_detail::write_plot(pm, tab.hash, fit.kappa, fit.mixture);
      out.plots.push_back(pe);
      out.plots.push_back(pm);
    }
  }

  if (spec.wants("speed") && ctx.sd) {
    std::vector<double> ts, med, se;
    for (auto k : ks) {
      const double t = tab.checkpoints[k];
      if (t <= 0.0) continue;
      const auto L = tab.values(k, "L");
      const auto Z = tab.values(k, "Z");
      std::vector<double> alive;
      for (std::size_t r = 0; r < L.size(); ++r)
        if (Z[r] >= 1.0) alive.push_back(L[r]);
      if (alive.size() < 40) continue;
      const auto m = median_with_se(alive);
      ts.push_back(t);
      med.push_back(m.median);
      se.push_back(m.se);
    }
    if (ts.size() >= 4) {
      const auto fit = speed_and_centring_fit(ts, med, se);
      const double v = std::sqrt(-ctx.sd->lambda / 2.0);
      const double lc = (d - 1) / (2.0 * ctx.sd->sqrt_m2l);
      push({"speed", ts.back(), "", "slope", fit.slope, fit.slope_se, v,
            std::abs(fit.slope - v) <= 2 * fit.slope_se ? "pass" : "fail"});
      push({"speed", ts.back(), "", "log_coefficient", fit.log_coef, fit.log_coef_se, lc,
            std::abs(fit.log_coef - lc) <= 2 * fit.log_coef_se ? "pass" : "fail"});
      const auto p = dir / "median_L.dat";
      analysis_detail::write_plot(p, tab.hash, ts, med);
      out.plots.push_back(p);
    } else if (spec.analyses.size() == 1) {
      throw AnalysisError("speed fit needs at least 4 checkpoints with surviving runs");
    }
  }

  std::ostringstream csv;
  csv << "config_hash,analysis,t,front,metric,value,se,reference,flag\n";
  for (const auto& v : out.verdicts)
    csv << tab.hash << ',' << v.analysis << ',' << results_detail::fmt(v.t) << ",\"" << v.front << "\"," << v.metric << ','
        << results_detail::fmt(v.value) << ',' << results_detail::fmt(v.se) << ',' << results_detail::fmt(v.reference)
        << ',' << v.flag << '\n';
  write_text(dir / "verdicts.csv", csv.str());
  return out;
}

}  // namespace bbm

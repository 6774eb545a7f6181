// Command-line front end: validate, spectral, run, analyze, report.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "bbm/bbm.hpp"

namespace {

using nlohmann::json;

void print_error(const std::string& kind, const std::string& message) {
  std::cerr << json{{"error", kind}, {"message", message}}.dump() << '\n';
}

struct Overrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::vector<double> checkpoints;
  std::vector<std::string> fronts;
};

bbm::ExperimentConfig load_with_overrides(const Overrides& o) {
  auto cfg = bbm::load_config(o.config_path);
  if (o.seed) cfg.seed = *o.seed;
  if (!o.checkpoints.empty()) {
    cfg.checkpoint_times = o.checkpoints;
    std::sort(cfg.checkpoint_times.begin(), cfg.checkpoint_times.end());
    cfg.horizon_time = std::max(cfg.horizon_time, cfg.checkpoint_times.back());
  }
  if (!o.fronts.empty()) {
    cfg.fronts.clear();
    for (const auto& f : o.fronts) cfg.fronts.push_back(bbm::FrontDescriptor::parse(f));
  }
  return cfg;
}

json spectral_json(const bbm::RunContext& ctx) {
  json j = bbm::header_json(ctx);
  j.erase("columns");
  if (ctx.sd) {
    json fronts = json::array();
    for (std::size_t i = 0; i < ctx.fronts.size(); ++i) {
      json pts = json::array();
      for (double t : ctx.config.checkpoint_times) {
        if (t <= 0.0) continue;
        const auto e = bbm::eta(*ctx.sd, *ctx.constants, ctx.fronts[i], t);
        pts.push_back({{"t", t},
                       {"front", ctx.fronts[i](t)},
                       {"eta", e.exact},
                       {"eta_asymptotic", e.asymptotic},
                       {"predicted_tail", bbm::predicted_tail(*ctx.sd, *ctx.constants, ctx.fronts[i], t, ctx.config.start())}});
      }
      fronts.push_back({{"spec", ctx.config.fronts[i].str()}, {"checkpoints", pts}});
    }
    j["front_predictions"] = fronts;
    j["envelope"] = {{"c1", ctx.sd->envelope_c1}, {"c2", ctx.sd->envelope_c2}};
  }
  return j;
}

int report(const std::filesystem::path& dir) {
  const auto csv = dir / "verdicts.csv";
  if (!std::filesystem::exists(csv)) bbm::analyze(dir);
  std::ifstream hin(dir / "header.json");
  const json header = json::parse(hin);
  std::cout << "run        " << dir.string() << '\n'
            << "config     " << header.at("config_hash").get<std::string>() << '\n'
            << "model      " << header.at("config").at("model").dump() << '\n';
  if (!header.at("lambda").is_null())
    std::cout << "lambda     " << header.at("lambda").get<double>() << '\n'
              << "constants  " << header.at("constants").dump() << '\n';
  std::ifstream in(csv);
  std::string line;
  std::getline(in, line);
  std::printf("\n%-8s %8s  %-22s %-18s %14s %12s %14s  %s\n", "analysis", "t", "front", "metric", "value", "se",
              "reference", "flag");
  while (std::getline(in, line)) {
    // config_hash,analysis,t,"front",metric,value,se,reference,flag
    std::vector<std::string> f;
    std::string cur;
    bool quoted = false;
    for (char ch : line) {
      if (ch == '"') quoted = !quoted;
      else if (ch == ',' && !quoted) {
        f.push_back(cur);
        cur.clear();
      } else {
        cur += ch;
      }
    }
    f.push_back(cur);
    if (f.size() != 9) continue;
    std::printf("%-8s %8s  %-22s %-18s %14.6g %12.4g %14.6g  %s\n", f[1].c_str(), f[2].c_str(), f[3].c_str(),
                f[4].c_str(), std::stod(f[5]), std::stod(f[6]), std::stod(f[7]), f[8].c_str());
  }
  return bbm::kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Branching Brownian motion with measure-driven branching"};
  app.require_subcommand(1);

  Overrides ov;
  unsigned threads = std::max(1u, std::thread::hardware_concurrency());
  std::string out_dir;
  std::optional<double> checkpoint;
  std::optional<std::size_t> front_index;
  std::vector<std::string> analyses;

  auto add_config = [&](CLI::App* sub) {
    sub->add_option("--config", ov.config_path, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", ov.seed, "override the master seed");
    sub->add_option("--checkpoint", ov.checkpoints, "override checkpoint times (repeatable)");
    sub->add_option("--front", ov.fronts, "override fronts, e.g. R2:delta=0.9 (repeatable)");
  };

  auto* validate = app.add_subcommand("validate", "check a config and print its derived data");
  add_config(validate);
  auto* spectral = app.add_subcommand("spectral", "principal eigenvalue, ground state, constants, front predictions");
  add_config(spectral);
  auto* run = app.add_subcommand("run", "simulate the replicate ensemble and persist results");
  add_config(run);
  run->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
  run->add_option("--out", out_dir, "output directory (default: config output_dir, else $BBM_OUTPUT_ROOT/name-hash)");

  auto* analyze = app.add_subcommand("analyze", "run analyses on a result directory");
  analyze->add_option("--out", out_dir, "result directory")->required()->check(CLI::ExistingDirectory);
  analyze->add_option("--checkpoint", checkpoint, "restrict to one checkpoint time");
  analyze->add_option("--front", front_index, "restrict to one front (index into the config's fronts)");
  analyze->add_option("--analysis", analyses, "subset of moments, tail, yaglom, gumbel, speed")
      ->check(CLI::IsMember({"moments", "tail", "yaglom", "gumbel", "speed"}));

  auto* rep = app.add_subcommand("report", "print the verdict table of a result directory");
  rep->add_option("--out", out_dir, "result directory")->required()->check(CLI::ExistingDirectory);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : bbm::kExitConfig;
  }

  try {
    if (validate->parsed() || spectral->parsed() || run->parsed()) {
      bbm::RunContext ctx = [&] {
        try {
          return bbm::prepare(load_with_overrides(ov));
        } catch (const bbm::ConfigError&) {
          throw;
        } catch (const std::exception& e) {
          throw bbm::ConfigError(e.what());
        }
      }();
      if (validate->parsed()) {
        std::cout << json{{"valid", true},
                          {"config_hash", ctx.hash},
                          {"lambda", ctx.sd ? json(ctx.sd->lambda) : json(nullptr)},
                          {"expected_population_at_horizon", ctx.expected_population},
                          {"population_cap", ctx.config.population_cap}}
                         .dump(2)
                  << '\n';
        return bbm::kExitOk;
      }
      if (spectral->parsed()) {
        std::cout << spectral_json(ctx).dump(2) << '\n';
        return bbm::kExitOk;
      }
      const auto dir = bbm::output_directory(ctx.config, out_dir);
      const auto outcome = bbm::run_experiment(ctx, dir, threads);
      std::cout << json{{"dir", dir.string()},
                        {"config_hash", ctx.hash},
                        {"records", outcome.records},
                        {"cap_breaches", outcome.cap_breaches},
                        {"status", outcome.cap_breaches ? "partial" : "complete"}}
                       .dump(2)
                << '\n';
      return outcome.exit_code;
    }
    if (analyze->parsed()) {
      bbm::AnalysisSpec spec;
      if (!analyses.empty()) spec.analyses = analyses;
      spec.checkpoint = checkpoint;
      spec.front = front_index;
      const auto outcome = bbm::analyze(out_dir, spec);
      std::cout << json{{"verdicts", outcome.verdicts.size()}, {"plots", outcome.plots.size()}}.dump() << '\n';
      return bbm::kExitOk;
    }
    return report(out_dir);
  } catch (const bbm::ConfigError& e) {
    print_error("config", e.what());
    return bbm::kExitConfig;
  } catch (const bbm::AnalysisError& e) {
    print_error("analysis", e.what());
    return bbm::kExitAnalysis;
  } catch (const std::exception& e) {
    print_error("runtime", e.what());
    return analyze->parsed() || rep->parsed() ? bbm::kExitAnalysis : bbm::kExitConfig;
  }
}

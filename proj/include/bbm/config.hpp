/**
 * @file config.hpp
 * @brief Experiment configuration: JSON text, canonical emission and hashing.
 *
 * Times are in model units and carry a `_time` / `_times` suffix. Comments
 * are accepted on input. emit() writes keys in sorted order with
 * round-trip double formatting, so parse(emit(c)) == c and the hash of the
 * emitted text identifies a configuration.
 */
#pragma once

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "fronts.hpp"
#include "measures.hpp"

namespace bbm {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shortest text that reads back to the same double.
inline std::string shortest(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

/// A front before the principal eigenvalue is known, e.g. "R2:delta=0.9,a=loglog*0.5".
struct FrontDescriptor {
  FrontSpec::Kind kind = FrontR1{};

  static FrontDescriptor parse(const std::string& text) {
    const auto colon = text.find(':');
    const std::string head = text.substr(0, colon);
    FrontDescriptor fd;
    double main = 0.0;
    Correction corr;
    bool have_main = false;
    if (colon != std::string::npos) {
      std::stringstream ss(text.substr(colon + 1));
      std::string item;
      while (std::getline(ss, item, ',')) {
        const auto eq = item.find('=');
        if (eq == std::string::npos) throw ConfigError("front parameter without '=': " + item);
        const std::string key = item.substr(0, eq);
        const std::string val = item.substr(eq + 1);
        if (key == "kappa" || key == "delta" || key == "gamma") {
          main = to_double(val, text);
          have_main = true;
          if ((head == "R1") != (key == "kappa") || (head == "R2") != (key == "delta"))
            throw ConfigError("parameter " + key + " does not belong to " + head);
        } else if (key == "a" || key == "b") {
          corr = parse_correction(val, text);
        } else {
          throw ConfigError("unknown front parameter '" + key + "' in " + text);
        }
      }
    }
    if (head == "R1") fd.kind = FrontR1{main};
    else if (head == "R2") fd.kind = FrontR2{main, corr};
    else if (head == "R3") fd.kind = FrontR3{main, corr};
    else throw ConfigError("front must start with R1, R2 or R3: " + text);
    if (head != "R1" && !have_main) throw ConfigError("front " + text + " lacks its rate parameter");
    return fd;
  }

  std::string str() const {
    std::ostringstream os;
    if (const auto* r1 = std::get_if<FrontR1>(&kind)) {
      os << "R1:kappa=" << shortest(r1->kappa);
    } else if (const auto* r2 = std::get_if<FrontR2>(&kind)) {
      os << "R2:delta=" << shortest(r2->delta);
      if (r2->a.kind != Correction::Kind::zero) os << ",a=" << r2->a.name() << '*' << shortest(r2->a.coef);
    } else {
      const auto& r3 = std::get<FrontR3>(kind);
      os << "R3:gamma=" << shortest(r3.gamma);
      if (r3.b.kind != Correction::Kind::zero) os << ",b=" << r3.b.name() << '*' << shortest(r3.b.coef);
    }
    return os.str();
  }

  FrontSpec resolve(double lambda, int dimension) const { return FrontSpec(kind, lambda, dimension); }

  bool operator==(const FrontDescriptor& o) const { return str() == o.str(); }

 private:
  static double to_double(const std::string& s, const std::string& ctx) {
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw ConfigError("bad number '" + s + "' in front " + ctx);
    }
  }

  static Correction parse_correction(const std::string& s, const std::string& ctx) {
    const auto star = s.find('*');
    const std::string name = s.substr(0, star);
    Correction c;
    c.coef = star == std::string::npos ? 1.0 : to_double(s.substr(star + 1), ctx);
    if (name == "zero") c = Correction{};
    else if (name == "loglog") c.kind = Correction::Kind::log_log;
    else if (name == "sqrtlog") c.kind = Correction::Kind::sqrt_log;
    else throw ConfigError("unknown correction '" + name + "' in front " + ctx);
    return c;
  }
};

struct ExperimentConfig {
  std::string name = "experiment";

  // model
  std::string family = "atoms";  // atoms | shell | density
  int dimension = 1;
  std::vector<double> atom_locations{0.0};
  std::vector<double> atom_weights{1.0};
  std::vector<double> p2{1.0};  // per atom, or one value for shell / density
  double shell_radius = 1.0;
  double shell_weight = 1.0;
  std::string density_profile = "constant";  // constant | power | tent
  double density_exponent = 0.0;
  double density_radius = 1.0;
  double density_weight = 1.0;

  // run
  std::vector<double> x0{0.0};
  double horizon_time = 1.0;
  double step_time = 1e-3;
  std::vector<double> checkpoint_times{1.0};
  std::uint64_t replicates = 1000;
  std::uint64_t seed = 1;
  std::uint64_t population_cap = 10'000'000;
  std::string local_time_scheme = "bridge";  // bridge | shell
  std::vector<FrontDescriptor> fronts;
  std::vector<double> radii;
  std::string output_dir;  // empty: derived from the output root

  bool operator==(const ExperimentConfig&) const = default;

  /// Throws ConfigError on any inconsistency; call before building the model.
  void validate() const {
    auto fail = [](const std::string& m) { throw ConfigError(m); };
    if (family != "atoms" && family != "shell" && family != "density") fail("model.family must be atoms, shell or density");
    if (dimension < 1 || dimension > 3) fail("dimension must be 1, 2 or 3");
    if (family == "atoms") {
      if (dimension != 1) fail("atomic models live in d = 1");
      if (atom_locations.empty() || atom_locations.size() != atom_weights.size())
        fail("atoms need matching locations and weights");
      if (p2.size() != atom_locations.size()) fail("atoms need one p2 per atom");
    } else if (p2.size() != 1) {
      fail("shell and density models take a single p2");
    }
    if (family == "shell" && dimension < 2) fail("shell models need d >= 2");
    if (family == "density" && density_profile != "constant" && density_profile != "power" && density_profile != "tent")
      fail("density profile must be constant, power or tent");
    for (double p : p2)
      if (!(p >= 0.0 && p <= 1.0)) fail("p2 values must lie in [0, 1]");
    if (x0.size() != static_cast<std::size_t>(dimension)) fail("x0 must have `dimension` coordinates");
    if (!(step_time > 0.0)) fail("step_time must be positive");
    if (checkpoint_times.empty()) fail("at least one checkpoint is needed");
    for (std::size_t i = 0; i < checkpoint_times.size(); ++i) {
      if (checkpoint_times[i] < 0.0) fail("checkpoints must be nonnegative");
      if (i > 0 && !(checkpoint_times[i] > checkpoint_times[i - 1])) fail("checkpoints must be strictly increasing");
    }
    if (checkpoint_times.back() > horizon_time) fail("checkpoints must not exceed horizon_time");
    if (replicates < 1) fail("replicates must be at least 1");
    if (population_cap < 1) fail("population_cap must be at least 1");
    if (local_time_scheme != "bridge" && local_time_scheme != "shell") fail("local_time_scheme must be bridge or shell");
  }

  KatoMeasure measure() const {
    if (family == "atoms") {
      std::vector<Atom> atoms;
      for (std::size_t i = 0; i < atom_locations.size(); ++i) atoms.push_back(Atom{atom_locations[i], atom_weights[i]});
      return KatoMeasure::atoms(atoms);
    }
    if (family == "shell") return KatoMeasure::shell(dimension, shell_radius, shell_weight);
    DensityMeasure d;
    d.dimension = dimension;
    d.profile = density_profile == "power" ? DensityProfile::power
                : density_profile == "tent" ? DensityProfile::tent
                                            : DensityProfile::constant;
    d.exponent = density_exponent;
    d.radius = density_radius;
    d.weight = density_weight;
    return KatoMeasure::density(d);
  }

  BranchingModel model() const { return BranchingModel(measure(), p2); }

  Point start() const {
    Point p{};
    for (std::size_t i = 0; i < x0.size() && i < 3; ++i) p[i] = x0[i];
    return p;
  }

  LocalTimeScheme scheme() const {
    return local_time_scheme == "shell" ? LocalTimeScheme::shell_occupation : LocalTimeScheme::bridge;
  }
};

inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json model;
  model["family"] = c.family;
  model["dimension"] = c.dimension;
  model["p2"] = c.p2;
  if (c.family == "atoms") {
    model["atom_locations"] = c.atom_locations;
    model["atom_weights"] = c.atom_weights;
  } else if (c.family == "shell") {
    model["shell_radius"] = c.shell_radius;
    model["shell_weight"] = c.shell_weight;
  } else {
    model["density_profile"] = c.density_profile;
    model["density_exponent"] = c.density_exponent;
    model["density_radius"] = c.density_radius;
    model["density_weight"] = c.density_weight;
  }
  nlohmann::json j;
  j["name"] = c.name;
  j["model"] = model;
  j["x0"] = c.x0;
  j["horizon_time"] = c.horizon_time;
  j["step_time"] = c.step_time;
  j["checkpoint_times"] = c.checkpoint_times;
  j["replicates"] = c.replicates;
  j["seed"] = c.seed;
  j["population_cap"] = c.population_cap;
  j["local_time_scheme"] = c.local_time_scheme;
  std::vector<std::string> fronts;
  for (const auto& f : c.fronts) fronts.push_back(f.str());
  j["fronts"] = fronts;
  j["radii"] = c.radii;
  j["output_dir"] = c.output_dir;
  return j;
}

namespace config_detail {

template <class T>
void read(const nlohmann::json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> known, const std::string& where) {
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || item.key() == k;
    if (!ok) throw ConfigError("unknown key '" + item.key() + "' in " + where);
  }
}

}  // namespace config_detail

/// Parses configuration text. Missing keys keep their defaults; unknown keys are errors.
inline ExperimentConfig parse_config(const std::string& text) {
  using config_detail::read;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text, nullptr, true, /*ignore_comments=*/true);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  config_detail::reject_unknown(j,
                                {"name", "model", "x0", "horizon_time", "step_time", "checkpoint_times", "replicates",
                                 "seed", "population_cap", "local_time_scheme", "fronts", "radii", "output_dir"},
                                "config");
  ExperimentConfig c;
  read(j, "name", c.name);
  if (j.contains("model")) {
    const auto& m = j.at("model");
    config_detail::reject_unknown(m,
                                  {"family", "dimension", "p2", "atom_locations", "atom_weights", "shell_radius",
                                   "shell_weight", "density_profile", "density_exponent", "density_radius",
                                   "density_weight"},
                                  "model");
    read(m, "family", c.family);
    read(m, "dimension", c.dimension);
    read(m, "p2", c.p2);
    read(m, "atom_locations", c.atom_locations);
    read(m, "atom_weights", c.atom_weights);
    read(m, "shell_radius", c.shell_radius);
    read(m, "shell_weight", c.shell_weight);
    read(m, "density_profile", c.density_profile);
    read(m, "density_exponent", c.density_exponent);
    read(m, "density_radius", c.density_radius);
    read(m, "density_weight", c.density_weight);
  }
  read(j, "x0", c.x0);
  read(j, "horizon_time", c.horizon_time);
  read(j, "step_time", c.step_time);
  read(j, "checkpoint_times", c.checkpoint_times);
  read(j, "replicates", c.replicates);
  read(j, "seed", c.seed);
  read(j, "population_cap", c.population_cap);
  read(j, "local_time_scheme", c.local_time_scheme);
  std::vector<std::string> fronts;
  read(j, "fronts", fronts);
  for (const auto& f : fronts) c.fronts.push_back(FrontDescriptor::parse(f));
  read(j, "radii", c.radii);
  read(j, "output_dir", c.output_dir);
  // fields of other families are not emitted, so reset them for a clean round trip
  const ExperimentConfig defaults;
  if (c.family != "atoms") {
    c.atom_locations = defaults.atom_locations;
    c.atom_weights = defaults.atom_weights;
  }
  if (c.family != "shell") {
    c.shell_radius = defaults.shell_radius;
    c.shell_weight = defaults.shell_weight;
  }
  if (c.family != "density") {
    c.density_profile = defaults.density_profile;
    c.density_exponent = defaults.density_exponent;
    c.density_radius = defaults.density_radius;
    c.density_weight = defaults.density_weight;
  }
  return c;
}

inline std::string emit_config(const ExperimentConfig& c) { return to_json(c).dump(2) + "\n"; }

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

/// FNV-1a 64-bit.
inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

/// Hash of the canonical emission, ignoring the output directory.
inline std::string config_hash(const ExperimentConfig& c) {
  ExperimentConfig k = c;
  k.output_dir.clear();
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(emit_config(k))));
  return buf;
}

}  // namespace bbm

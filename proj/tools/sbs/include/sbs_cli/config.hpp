#pragma once

// JSON run configuration with field-path error messages.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "sbs/errors.hpp"
#include "sbs/scatter.hpp"

namespace sbs::cli {

using json = nlohmann::json;

/// Bad configuration; the message starts with the offending field path.
class ConfigError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

namespace detail {

inline std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

[[noreturn]] inline void fail(const std::string& path, const std::string& what) {
  throw ConfigError(path + ": " + what);
}

inline const json* member(const json& obj, const std::string& key) {
  const auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

inline void require_object(const json& j, const std::string& path) {
  if (!j.is_object()) fail(path.empty() ? "<root>" : path, "expected an object");
}

inline void allow_keys(const json& obj, const std::string& path, const std::set<std::string>& allowed) {
  for (const auto& [key, value] : obj.items())
    if (!allowed.count(key)) fail(join(path, key), "unknown field");
}

inline double number(const json& obj, const std::string& path, const std::string& key,
                     std::optional<double> fallback = std::nullopt) {
  const json* v = member(obj, key);
  if (!v) {
    if (fallback) return *fallback;
    fail(join(path, key), "missing required field");
  }
  if (!v->is_number()) fail(join(path, key), "expected a number");
  return v->get<double>();
}

inline std::int64_t integer(const json& obj, const std::string& path, const std::string& key,
                            std::optional<std::int64_t> fallback = std::nullopt) {
  const json* v = member(obj, key);
  if (!v) {
    if (fallback) return *fallback;
    fail(join(path, key), "missing required field");
  }
  if (!v->is_number_integer()) fail(join(path, key), "expected an integer");
  return v->get<std::int64_t>();
}

inline std::string string(const json& obj, const std::string& path, const std::string& key,
                          std::optional<std::string> fallback = std::nullopt) {
  const json* v = member(obj, key);
  if (!v) {
    if (fallback) return *fallback;
    fail(join(path, key), "missing required field");
  }
  if (!v->is_string()) fail(join(path, key), "expected a string");
  return v->get<std::string>();
}

inline std::vector<double> numbers(const json& obj, const std::string& path, const std::string& key,
                                   std::vector<double> fallback) {
  const json* v = member(obj, key);
  if (!v) return fallback;
  if (!v->is_array()) fail(join(path, key), "expected an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < v->size(); ++i) {
    if (!(*v)[i].is_number()) fail(join(path, key) + "[" + std::to_string(i) + "]", "expected a number");
    out.push_back((*v)[i].get<double>());
  }
  return out;
}

inline void positive(double x, const std::string& path) {
  if (!(x > 0.0)) fail(path, "must be > 0");
}

inline void in_range(double x, double lo, double hi, const std::string& path) {
  if (!(x >= lo && x <= hi)) fail(path, "must lie in [" + json(lo).dump() + ", " + json(hi).dump() + "]");
}

inline const json& block(const json& root, const std::string& key) {
  static const json empty = json::object();
  const json* v = member(root, key);
  if (!v) return empty;
  require_object(*v, key);
  return *v;
}

}  // namespace detail

struct GeometryConfig {
  double a = 10.0;
  double epsilon = 4.0;
  double dx = 1.0;
  double L = 50.0;
  double density = 1.0;
  double c = 1.0;

  scatter::ScatteringGeometry geometry() const { return {a, epsilon, dx, L, density, c}; }
};

struct DistributionConfig {
  /// point | isotropic | thermal | csv
  std::string kind = "point";
  double k0 = 0.1;
  double cos_theta = 1.0;
  double phi = 0.0;
  double k_thermal = 0.03;
  double k_max = 0.1;
  int n_k = 16;
  std::string directions = "cube26";
  std::filesystem::path csv;
};

struct TimeConfig {
  std::vector<double> values{0.0, 0.5, 1.0, 2.0, 4.0};
  /// tau_D (values are multiples of tau_D) | absolute
  std::string unit = "tau_D";
};

struct FractionConfig {
  double f = 0.5;
  double m = 0.25;
  /// Plateau abscissae; empty means every multiple of m in [0, 1].
  std::vector<double> f_values;
};

struct OracleConfig {
  /// qubit: pure or mixed qubit photons rotated by +-theta.
  /// distribution: photons drawn from the configured distribution, S1 = 1,
  /// S2 the explicit relative unitary.
  std::string model = "qubit";
  int photons = 8;
  double theta = 0.7;
  double env_p0 = 1.0;
  double p1 = 0.5;
  double c12 = 0.5;
  Index dim_cap = 1 << 11;
};

struct AlphaConfig {
  std::string source = "exact_overlap";
  std::optional<double> value;
};

struct ThresholdConfig {
  double soft_warn = 0.1;
  double soft_error = 0.5;
  double phase_product = 0.05;
  double phase_broadcast = 0.1;
  double slack_tolerance = 1e-9;
  double pf_tolerance = 1e-10;
};

struct BoundsConfig {
  int trials = 100;
  int d = 2;
  std::vector<int> counts{4, 8};
  std::vector<double> fractions{0.25, 0.5, 0.75};
};

struct PfcastConfig {
  int bases = 20;
};

struct SweepAxis {
  std::string path;
  std::vector<json> values;
};

struct SweepConfig {
  std::string command;
  std::vector<SweepAxis> axes;
};

struct RunConfig {
  GeometryConfig geometry;
  DistributionConfig distribution;
  TimeConfig time;
  FractionConfig fractions;
  OracleConfig oracle;
  AlphaConfig alpha;
  ThresholdConfig thresholds;
  BoundsConfig bounds;
  PfcastConfig pfcast;
  std::optional<SweepConfig> sweep;
  std::optional<std::uint64_t> seed;
  /// The document this was parsed from, with --seed applied.
  json raw = json::object();
  std::filesystem::path base_dir;

  std::uint64_t require_seed(const std::string& what) const {
    if (!seed) detail::fail("seed", "required for " + what);
    return *seed;
  }
};

/// Validates and converts a configuration document. Relative CSV paths are
/// resolved against `base_dir`.
inline RunConfig parse_config(const json& root, const std::filesystem::path& base_dir = {}) {
  using namespace detail;
  require_object(root, "");
  allow_keys(root, "", {"geometry", "distribution", "time", "fractions", "oracle", "alpha", "thresholds", "bounds",
                        "pfcast", "sweep", "seed"});
  RunConfig c;
  c.raw = root;
  c.base_dir = base_dir;

  if (const json* s = member(root, "seed")) {
    if (!s->is_number_unsigned() && !(s->is_number_integer() && s->get<std::int64_t>() >= 0))
      fail("seed", "expected a non-negative integer");
    c.seed = s->get<std::uint64_t>();
  }

  {
    const json& g = block(root, "geometry");
    allow_keys(g, "geometry", {"a", "epsilon", "dx", "L", "density", "c"});
    auto& o = c.geometry;
    o.a = number(g, "geometry", "a", o.a);
    o.epsilon = number(g, "geometry", "epsilon", o.epsilon);
    o.dx = number(g, "geometry", "dx", o.dx);
    o.L = number(g, "geometry", "L", o.L);
    o.density = number(g, "geometry", "density", o.density);
    o.c = number(g, "geometry", "c", o.c);
    positive(o.a, "geometry.a");
    positive(o.epsilon, "geometry.epsilon");
    if (!(o.dx >= 0.0)) fail("geometry.dx", "must be >= 0");
    positive(o.L, "geometry.L");
    positive(o.density, "geometry.density");
    positive(o.c, "geometry.c");
  }

  {
    const json& d = block(root, "distribution");
    allow_keys(d, "distribution", {"kind", "k0", "cos_theta", "phi", "k_thermal", "k_max", "n_k", "directions", "path"});
    auto& o = c.distribution;
    o.kind = string(d, "distribution", "kind", o.kind);
    if (o.kind == "point" || o.kind == "isotropic") {
      o.k0 = number(d, "distribution", "k0", o.k0);
      positive(o.k0, "distribution.k0");
      if (o.kind == "point") {
        o.cos_theta = number(d, "distribution", "cos_theta", o.cos_theta);
        o.phi = number(d, "distribution", "phi", o.phi);
        in_range(o.cos_theta, -1.0, 1.0, "distribution.cos_theta");
      }
    } else if (o.kind == "thermal") {
      o.k_thermal = number(d, "distribution", "k_thermal", o.k_thermal);
      o.k_max = number(d, "distribution", "k_max", o.k_max);
      o.n_k = static_cast<int>(integer(d, "distribution", "n_k", o.n_k));
      o.directions = string(d, "distribution", "directions", o.directions);
      positive(o.k_thermal, "distribution.k_thermal");
      positive(o.k_max, "distribution.k_max");
      if (o.n_k < 1) fail("distribution.n_k", "must be >= 1");
      if (o.directions != "cube26" && o.directions != "gauss_legendre")
        fail("distribution.directions", "expected 'cube26' or 'gauss_legendre'");
    } else if (o.kind == "csv") {
      const std::filesystem::path p = string(d, "distribution", "path");
      o.csv = p.is_absolute() || base_dir.empty() ? p : base_dir / p;
    } else {
      fail("distribution.kind", "expected one of point, isotropic, thermal, csv");
    }
  }

  {
    const json& t = block(root, "time");
    allow_keys(t, "time", {"values", "start", "stop", "steps", "unit"});
    auto& o = c.time;
    o.unit = string(t, "time", "unit", o.unit);
    if (o.unit != "tau_D" && o.unit != "absolute") fail("time.unit", "expected 'tau_D' or 'absolute'");
    if (member(t, "values")) {
      if (member(t, "start") || member(t, "stop") || member(t, "steps"))
        fail("time", "give either values or start/stop/steps");
      o.values = numbers(t, "time", "values", {});
    } else if (member(t, "start") || member(t, "stop") || member(t, "steps")) {
      const double start = number(t, "time", "start", 0.0);
      const double stop = number(t, "time", "stop");
      const auto steps = integer(t, "time", "steps");
      if (steps < 1) fail("time.steps", "must be >= 1");
      if (!(stop >= start)) fail("time.stop", "must be >= time.start");
      o.values.clear();
      for (std::int64_t i = 0; i <= steps; ++i)
        o.values.push_back(start + (stop - start) * static_cast<double>(i) / static_cast<double>(steps));
    }
    for (std::size_t i = 0; i < o.values.size(); ++i)
      if (!(o.values[i] >= 0.0)) fail("time.values[" + std::to_string(i) + "]", "must be >= 0");
  }

  {
    const json& f = block(root, "fractions");
    allow_keys(f, "fractions", {"f", "m", "f_values"});
    auto& o = c.fractions;
    o.f = number(f, "fractions", "f", o.f);
    o.m = number(f, "fractions", "m", o.m);
    o.f_values = numbers(f, "fractions", "f_values", {});
    in_range(o.f, 0.0, 1.0, "fractions.f");
    if (!(o.m > 0.0 && o.m <= 1.0)) fail("fractions.m", "must lie in (0, 1]");
    const double M = 1.0 / o.m;
    if (std::abs(M - std::round(M)) > 1e-9) fail("fractions.m", "1/m must be an integer");
    for (std::size_t i = 0; i < o.f_values.size(); ++i)
      in_range(o.f_values[i], 0.0, 1.0, "fractions.f_values[" + std::to_string(i) + "]");
  }

  {
    const json& q = block(root, "oracle");
    allow_keys(q, "oracle", {"model", "photons", "theta", "env_p0", "p1", "c12", "dim_cap"});
    auto& o = c.oracle;
    o.model = string(q, "oracle", "model", o.model);
    if (o.model != "qubit" && o.model != "distribution") fail("oracle.model", "expected 'qubit' or 'distribution'");
    const auto photons = integer(q, "oracle", "photons", o.photons);
    if (photons < 0 || photons > 4096) fail("oracle.photons", "must lie in [0, 4096]");
    o.photons = static_cast<int>(photons);
    o.theta = number(q, "oracle", "theta", o.theta);
    o.env_p0 = number(q, "oracle", "env_p0", o.env_p0);
    o.p1 = number(q, "oracle", "p1", o.p1);
    o.c12 = number(q, "oracle", "c12", o.c12);
    const auto cap = integer(q, "oracle", "dim_cap", o.dim_cap);
    if (cap < 2) fail("oracle.dim_cap", "must be >= 2");
    o.dim_cap = static_cast<Index>(cap);
    in_range(o.env_p0, 0.0, 1.0, "oracle.env_p0");
    in_range(o.p1, 0.0, 1.0, "oracle.p1");
    if (std::abs(o.c12) > std::sqrt(o.p1 * (1.0 - o.p1)) + 1e-12)
      fail("oracle.c12", "|c12| must not exceed sqrt(p1 (1 - p1))");
  }

  {
    const json& a = block(root, "alpha");
    allow_keys(a, "alpha", {"source", "value"});
    auto& o = c.alpha;
    o.source = string(a, "alpha", "source", o.source);
    if (o.source != "exact_overlap" && o.source != "formula" && o.source != "override")
      fail("alpha.source", "expected exact_overlap, formula or override");
    if (member(a, "value")) {
      o.value = number(a, "alpha", "value");
      in_range(*o.value, 0.0, 1.0, "alpha.value");
    }
    if (o.source == "override" && !o.value) fail("alpha.value", "required when alpha.source is 'override'");
  }

  {
    const json& t = block(root, "thresholds");
    allow_keys(t, "thresholds",
               {"soft_warn", "soft_error", "phase_product", "phase_broadcast", "slack_tolerance", "pf_tolerance"});
    auto& o = c.thresholds;
    o.soft_warn = number(t, "thresholds", "soft_warn", o.soft_warn);
    o.soft_error = number(t, "thresholds", "soft_error", o.soft_error);
    o.phase_product = number(t, "thresholds", "phase_product", o.phase_product);
    o.phase_broadcast = number(t, "thresholds", "phase_broadcast", o.phase_broadcast);
    o.slack_tolerance = number(t, "thresholds", "slack_tolerance", o.slack_tolerance);
    o.pf_tolerance = number(t, "thresholds", "pf_tolerance", o.pf_tolerance);
    positive(o.soft_warn, "thresholds.soft_warn");
    if (!(o.soft_error > o.soft_warn)) fail("thresholds.soft_error", "must exceed thresholds.soft_warn");
    positive(o.phase_product, "thresholds.phase_product");
    positive(o.phase_broadcast, "thresholds.phase_broadcast");
    if (!(o.slack_tolerance >= 0.0)) fail("thresholds.slack_tolerance", "must be >= 0");
    positive(o.pf_tolerance, "thresholds.pf_tolerance");
  }

  {
    const json& b = block(root, "bounds");
    allow_keys(b, "bounds", {"trials", "d", "counts", "fractions"});
    auto& o = c.bounds;
    const auto trials = integer(b, "bounds", "trials", o.trials);
    if (trials < 0) fail("bounds.trials", "must be >= 0");
    o.trials = static_cast<int>(trials);
    const auto d = integer(b, "bounds", "d", o.d);
    if (d < 2 || d > 4) fail("bounds.d", "must lie in [2, 4]");
    o.d = static_cast<int>(d);
    if (const json* cs = member(b, "counts")) {
      if (!cs->is_array() || cs->empty()) fail("bounds.counts", "expected a non-empty array of integers");
      o.counts.clear();
      for (std::size_t i = 0; i < cs->size(); ++i) {
        const std::string p = "bounds.counts[" + std::to_string(i) + "]";
        if (!(*cs)[i].is_number_integer()) fail(p, "expected an integer");
        const auto n = (*cs)[i].get<std::int64_t>();
        if (n < 1 || n > 12) fail(p, "must lie in [1, 12]");
        o.counts.push_back(static_cast<int>(n));
      }
    }
    o.fractions = numbers(b, "bounds", "fractions", o.fractions);
    if (o.fractions.empty()) fail("bounds.fractions", "must not be empty");
    for (std::size_t i = 0; i < o.fractions.size(); ++i)
      in_range(o.fractions[i], 0.0, 1.0, "bounds.fractions[" + std::to_string(i) + "]");
  }

  {
    const json& p = block(root, "pfcast");
    allow_keys(p, "pfcast", {"bases"});
    const auto bases = integer(p, "pfcast", "bases", c.pfcast.bases);
    if (bases < 0) fail("pfcast.bases", "must be >= 0");
    c.pfcast.bases = static_cast<int>(bases);
  }

  if (const json* s = member(root, "sweep")) {
    require_object(*s, "sweep");
    allow_keys(*s, "sweep", {"command", "grid"});
    SweepConfig sw;
    sw.command = string(*s, "sweep", "command");
    if (sw.command == "sweep") fail("sweep.command", "a sweep cannot run a sweep");
    const json* grid = member(*s, "grid");
    if (!grid) fail("sweep.grid", "missing required field");
    require_object(*grid, "sweep.grid");
    for (const auto& [key, values] : grid->items()) {
      const std::string p = "sweep.grid." + key;
      if (!values.is_array() || values.empty()) fail(p, "expected a non-empty array");
      sw.axes.push_back({key, std::vector<json>(values.begin(), values.end())});
    }
    c.sweep = std::move(sw);
  }
  return c;
}

/// Reads and parses a configuration file; `seed_override` replaces the seed.
inline RunConfig load_config(const std::filesystem::path& path, std::optional<std::uint64_t> seed_override = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  json root;
  try {
    root = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config: " + path.string() + ": " + e.what());
  }
  if (seed_override && root.is_object()) root["seed"] = *seed_override;
  return parse_config(root, path.parent_path());
}

}  // namespace sbs::cli

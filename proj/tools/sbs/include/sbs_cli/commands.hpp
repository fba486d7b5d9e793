#pragma once

// Subcommand bodies. Each is a pure function of the configuration.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <string>

#include <spdlog/spdlog.h>

#include "sbs/sbs.hpp"
#include "sbs_cli/config.hpp"
#include "sbs_cli/table.hpp"

namespace sbs::cli {

enum ExitCode : int { kOk = 0, kValidation = 1, kCapacity = 2, kViolation = 3 };

struct Result {
  Table table;
  std::optional<json> summary;
  int exit_code = kOk;
};

namespace detail {

inline scatter::SoftThresholds soft(const RunConfig& c) { return {c.thresholds.soft_warn, c.thresholds.soft_error}; }

inline scatter::PhotonDistribution distribution(const RunConfig& c, const scatter::ScatteringGeometry& g) {
  using namespace sbs::scatter;
  const auto& d = c.distribution;
  const auto thr = soft(c);
  auto build = [&]() -> PhotonDistribution {
    if (d.kind == "point") return make_distribution(PointSpec{d.k0, d.cos_theta, d.phi}, nullptr, g, thr);
    if (d.kind == "isotropic") return make_distribution(IsotropicMonochromaticSpec{d.k0}, nullptr, g, thr);
    if (d.kind == "thermal") {
      const auto dirs = d.directions == "cube26" ? DirectionSet::cube26 : DirectionSet::gauss_legendre;
      return make_distribution(ThermalSpec{d.k_thermal, d.k_max, d.n_k, dirs}, nullptr, g, thr);
    }
    std::ifstream in(d.csv);
    if (!in) fail("distribution.path", "cannot open " + d.csv.string());
    return read_distribution_csv(in, g.displacement(), thr);
  };
  auto dist = build();
  if (dist.regime() == SoftRegime::warn)
    spdlog::warn("max k*dx = {} is above the soft-scattering warning threshold {}", dist.soft_score(),
                 c.thresholds.soft_warn);
  return dist;
}

inline double time_value(const RunConfig& c, double v, double tau) {
  if (c.time.unit == "absolute") return v;
  if (std::isinf(tau)) fail("time.unit", "tau_D is infinite for this configuration; use 'absolute'");
  return v * tau;
}

inline asymptotics::AlphaOptions alpha_options(const RunConfig& c) {
  asymptotics::AlphaOptions o;
  if (c.alpha.source == "formula") o.source = asymptotics::AlphaSource::formula;
  else if (c.alpha.source == "override") o.source = asymptotics::AlphaSource::override_value;
  o.override_value = c.alpha.value;
  return o;
}

inline scatter::ShellUnitary relative_unitary(const RunConfig& c, const scatter::PhotonDistribution& d,
                                              const scatter::ScatteringGeometry& g, const std::string& what) {
  scatter::RelativeUnitaryOptions opt;
  opt.seed = c.require_seed(what);
  opt.thresholds = soft(c);
  return scatter::build_relative_unitary(d.grid_ptr(), g, opt);
}

inline Matrix rotation(double theta) {
  Matrix r(2, 2);
  r << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
  return r;
}

/// The oracle instance described by the oracle block; the system state comes
/// from p1 and c12.
inline oracle::OracleInstance oracle_instance(const RunConfig& c) {
  const auto& o = c.oracle;
  oracle::OracleInstance inst;
  Matrix sys(2, 2);
  sys << o.p1, o.c12, o.c12, 1.0 - o.p1;
  inst.system = DensityMatrix(sys);
  inst.photons = o.photons;
  inst.m = c.fractions.m;
  inst.dim_cap = o.dim_cap;
  if (o.model == "qubit") {
    Matrix env = Matrix::Zero(2, 2);
    env(0, 0) = o.env_p0;
    env(1, 1) = 1.0 - o.env_p0;
    inst.environment = DensityMatrix(env);
    inst.s1 = rotation(o.theta);
    inst.s2 = rotation(-o.theta);
  } else {
    const auto g = c.geometry.geometry();
    const auto d = distribution(c, g);
    const auto n = d.size();
    if (n > o.dim_cap)
      throw CapacityError("oracle.model = distribution: " + std::to_string(n) +
                          " grid nodes per photon exceed oracle.dim_cap = " + std::to_string(o.dim_cap));
    Matrix env = Matrix::Zero(n, n);
    for (Index i = 0; i < n; ++i) env(i, i) = d.prob(i);
    inst.environment = DensityMatrix(env);
    inst.s1 = Matrix::Identity(n, n);
    inst.s2 = relative_unitary(c, d, g, "oracle.model = distribution").entries;
  }
  return inst;
}

}  // namespace detail

/// Columns t, gamma_finiteL, gamma_thermo, tau_D.
inline Result run_decoherence(const RunConfig& c) {
  using namespace sbs::asymptotics;
  const auto g = c.geometry.geometry();
  const auto d = detail::distribution(c, g);
  const double tau = decoherence_time(d, g);
  Result r;
  r.table.header = {"t", "gamma_finiteL", "gamma_thermo", "tau_D"};
  for (double v : c.time.values) {
    const double t = detail::time_value(c, v, tau);
    r.table.add({t, decoherence_factor(d, g, c.fractions.f, photon_count(g, t)),
                 decoherence_factor_thermodynamic(d, g, c.fractions.f, t), tau});
  }
  return r;
}

/// Macro-overlap decay: columns t, B_macro_finiteL, B_macro_thermo, B_micro,
/// alpha, tau_D, tau_broadcast, plus a JSON summary of the eta report.
inline Result run_overlap(const RunConfig& c) {
  using namespace sbs::asymptotics;
  const auto g = c.geometry.geometry();
  const auto d = detail::distribution(c, g);
  const auto rep = eta_bars(detail::relative_unitary(c, d, g, "overlap"), d, g, detail::alpha_options(c));
  const auto ts = timescales(rep);
  const double b_micro = micro_overlap(rep, g.box_edge());
  Result r;
  r.table.header = {"t", "B_macro_finiteL", "B_macro_thermo", "B_micro", "alpha", "tau_D", "tau_broadcast"};
  for (double v : c.time.values) {
    const double t = detail::time_value(c, v, rep.tau_D);
    r.table.add({t, macro_overlap(t, c.fractions.m, rep, Limit::finite_box),
                 macro_overlap(t, c.fractions.m, rep, Limit::thermodynamic), b_micro, rep.alpha, rep.tau_D,
                 ts.broadcast});
  }
  r.summary = json{{"eta_bar", rep.eta_bar},
                   {"eta_prime", rep.eta_prime},
                   {"alpha", rep.alpha},
                   {"alpha_formula", rep.alpha_formula},
                   {"alpha_exact", rep.alpha_exact},
                   {"alpha_source", to_string(rep.source)},
                   {"alpha_defined", rep.alpha_defined},
                   {"degenerate", rep.degenerate},
                   {"eta_consistency", rep.eta_consistency},
                   {"B_micro_formula", rep.B_micro_formula},
                   {"B_micro_exact", rep.B_micro_exact}};
  if (rep.degenerate) spdlog::warn("photon distribution is not injective on its shells; alpha_formula is unreliable");
  return r;
}

/// Columns f, I_bits, H_S, tail_norm, B_macro, broadcast_distance, phase.
inline Result run_plateau(const RunConfig& c) {
  const auto inst = detail::oracle_instance(c);
  std::vector<double> fs = c.fractions.f_values;
  if (fs.empty()) {
    const int M = static_cast<int>(std::lround(1.0 / c.fractions.m));
    for (int i = 0; i <= M; ++i) fs.push_back(static_cast<double>(i) / M);
  }
  const oracle::PhaseThresholds thr{c.thresholds.phase_product, c.thresholds.phase_broadcast};
  const auto curve = oracle::mutual_info_curve(inst, fs, thr);
  Result r;
  r.table.header = {"f", "I_bits", "H_S", "tail_norm", "B_macro", "broadcast_distance", "phase"};
  for (const auto& row : curve.rows)
    r.table.add({row.f, row.I_bits, row.H_S, row.tail_norm, row.B_macro, row.broadcast_distance,
                 std::string(oracle::to_string(row.phase))});
  r.summary = json{{"photons", curve.photons}, {"m", curve.m}, {"H_S", curve.H_S}, {"model", c.oracle.model}};
  return r;
}

/// One row per seeded random instance; exit code kViolation when any slack
/// falls below -thresholds.slack_tolerance.
inline Result run_bounds(const RunConfig& c) {
  Result r;
  r.table.header = {"trial",   "N",         "f",          "H_S",     "I_exact",       "rhs",
                    "slack",   "epsilon_E", "epsilon_fE", "B_macro", "out_of_regime"};
  const auto& b = c.bounds;
  double min_slack = std::numeric_limits<double>::infinity();
  int violations = 0, out_of_regime = 0;
  if (b.trials > 0) {
    const auto seed = c.require_seed("bounds");
    for (int i = 0; i < b.trials; ++i) {
      Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(i));
      const auto inst = bounds::random_instance(rng, b.d, b.counts, b.fractions);
      const auto rep = bounds::theorem1_bound(inst, c.oracle.dim_cap);
      r.table.add({std::int64_t{i}, std::int64_t{inst.N}, inst.f, rep.H_S, rep.I_exact, rep.rhs, rep.slack,
                   rep.epsilon_E, rep.epsilon_fE, rep.B_macro, std::int64_t{rep.out_of_regime ? 1 : 0}});
      min_slack = std::min(min_slack, rep.slack);
      if (rep.slack < -c.thresholds.slack_tolerance) {
        ++violations;
        spdlog::error("bounds: trial {} has slack {}", i, rep.slack);
      }
      if (rep.out_of_regime) ++out_of_regime;
    }
  }
  r.summary = json{{"trials", b.trials},
                   {"violations", violations},
                   {"out_of_regime", out_of_regime},
                   {"slack_tolerance", c.thresholds.slack_tolerance},
                   {"min_slack", b.trials > 0 ? json(min_slack) : json(nullptr)}};
  if (violations > 0) r.exit_code = kViolation;
  return r;
}

/// Random 2-dim bases, their stationary spectra and the pointer spectrum
/// after the oracle channel. Exit code kViolation when any deviation exceeds
/// thresholds.pf_tolerance.
inline Result run_pfcast(const RunConfig& c) {
  Result r;
  r.table.header = {"basis",   "lambda_0",      "lambda_1",
                    "pointer_0", "pointer_1", "max_deviation", "stationarity_residual", "unique", "orthogonal"};
  double worst = 0.0;
  if (c.pfcast.bases > 0) {
    const auto seed = c.require_seed("pfcast");
    const auto base = detail::oracle_instance(c);
    const double f = c.fractions.f;
    const pfcast::Channel channel = [&](const DensityMatrix& rho) {
      auto inst = base;
      inst.system = rho;
      return oracle::cc_channel_apply(rho, oracle::cc_channel_of(inst.at(f)));
    };
    for (int i = 0; i < c.pfcast.bases; ++i) {
      Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(i));
      const Matrix phi = random_unitary(2, rng);
      const auto st = pfcast::stationary_distribution(pfcast::unistochastic_from_basis(phi));
      const auto rep = pfcast::verify_pf_broadcast(phi, st.distribution, channel, c.thresholds.pf_tolerance);
      r.table.add({std::int64_t{i}, rep.lambda(0), rep.lambda(1), rep.pointer_probs(0), rep.pointer_probs(1),
                   rep.max_deviation, rep.stationarity_residual, std::int64_t{st.unique ? 1 : 0},
                   std::int64_t{rep.ensemble.orthogonal ? 1 : 0}});
      worst = std::max(worst, rep.max_deviation);
    }
  }
  r.summary = json{{"bases", c.pfcast.bases}, {"max_deviation", worst}, {"tolerance", c.thresholds.pf_tolerance}};
  if (worst > c.thresholds.pf_tolerance) r.exit_code = kViolation;
  return r;
}

inline bool is_command(const std::string& name) {
  return name == "decoherence" || name == "overlap" || name == "plateau" || name == "bounds" || name == "pfcast";
}

inline Result run_command(const std::string& name, const RunConfig& c) {
  if (name == "decoherence") return run_decoherence(c);
  if (name == "overlap") return run_overlap(c);
  if (name == "plateau") return run_plateau(c);
  if (name == "bounds") return run_bounds(c);
  if (name == "pfcast") return run_pfcast(c);
  throw ConfigError("command: unknown subcommand '" + name + "'");
}

/// Exit code for an exception escaping a command.
inline int exit_code_of(const std::exception& e) {
  if (dynamic_cast<const CapacityError*>(&e)) return kCapacity;
  return kValidation;
}

}  // namespace sbs::cli

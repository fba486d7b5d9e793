#pragma once

// Closed-form tier: decoherence factor and time, eta / eta' / alpha, micro and
// macro overlaps and the two formation timescales.

#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>

#include "sbs/errors.hpp"
#include "sbs/qmath.hpp"
#include "sbs/scatter.hpp"

namespace sbs::asymptotics {

using scatter::PhotonDistribution;
using scatter::ScatteringGeometry;
using scatter::ShellUnitary;

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

/// Number of photons scattered up to time t: N_t = L^2 (N/V) c t.
inline double photon_count(const ScatteringGeometry& geom, double t) {
  if (!(t >= 0.0)) throw ValidationError("time must be >= 0");
  return geom.box_edge() * geom.box_edge() * geom.density() * geom.light_speed() * t;
}

/// Macrofraction bookkeeping: M = 1/m fractions of m N_t photons each, a
/// fraction f of which is observed.
struct MacrofractionSpec {
  double m = 1.0;
  double f = 0.0;
  double photons = 0.0;

  MacrofractionSpec(double m_, double f_, double photons_) : m(m_), f(f_), photons(photons_) {
    if (!(m > 0.0 && m <= 1.0)) throw ValidationError("fractions.m must lie in (0, 1]");
    if (!(f >= 0.0 && f <= 1.0)) throw ValidationError("fractions.f must lie in [0, 1]");
    if (!(photons >= 0.0)) throw ValidationError("photon count must be >= 0");
    const double M = 1.0 / m;
    if (std::abs(M - std::round(M)) > 1e-9) throw ValidationError("fractions.m: 1/m must be an integer");
  }

  int count() const { return static_cast<int>(std::lround(1.0 / m)); }

  /// f M, required to be integral when the environment is partitioned.
  int observed_macrofractions() const {
    const double fm = f * count();
    if (std::abs(fm - std::round(fm)) > 1e-9) {
      std::ostringstream os;
      os << "fractions: f*M = " << fm << " is not an integer";
      throw ValidationError(os.str());
    }
    return static_cast<int>(std::lround(fm));
  }
};

// ---------------------------------------------------------------------------
// decoherence factor and time

/// sum_k p(k) k^6 (3 + 11 cos^2 Theta_k).
inline double dipole_moment_sum(const PhotonDistribution& dist) {
  double s = 0.0;
  for (Index i = 0; i < dist.size(); ++i) {
    const double p = dist.prob(i);
    if (p == 0.0) continue;
    const double k = dist.grid().node(i).k;
    const double c = dist.grid().cos_theta(i);
    s += p * std::pow(k, 6) * (3.0 + 11.0 * c * c);
  }
  return s;
}

/// Per-photon damping (2 pi dx^2 a~^6 / 15 L^2) sum p k^6 (3 + 11 cos^2 Theta).
inline double decoherence_deficit(const PhotonDistribution& dist, const ScatteringGeometry& geom) {
  const double dx = geom.displacement();
  const double L = geom.box_edge();
  const double deficit =
      2.0 * std::numbers::pi * dx * dx * std::pow(geom.effective_radius(), 6) / (15.0 * L * L) * dipole_moment_sum(dist);
  if (deficit > 1.0) {
    std::ostringstream os;
    os << "decoherence factor: bracket " << 1.0 - deficit
       << " is negative; per-photon damping too strong for box L = " << L;
    throw RegimeError(os.str());
  }
  return deficit;
}

/// 1 - decoherence_deficit.
inline double decoherence_base(const PhotonDistribution& dist, const ScatteringGeometry& geom) {
  return 1.0 - decoherence_deficit(dist, geom);
}

/// |Tr S1 rho S2^dagger|^{(1-f) N_t} at leading order in 1/L.
inline double decoherence_factor(const PhotonDistribution& dist, const ScatteringGeometry& geom, double f,
                                 double photons) {
  if (!(f >= 0.0 && f <= 1.0)) throw ValidationError("decoherence_factor: f must lie in [0, 1]");
  if (!(photons >= 0.0)) throw ValidationError("decoherence_factor: N_t must be >= 0");
  const double exponent = (1.0 - f) * photons;
  if (exponent == 0.0) return 1.0;
  const double deficit = decoherence_deficit(dist, geom);
  if (deficit == 1.0) return 0.0;
  return std::exp(exponent * std::log1p(-deficit));
}

/// 1/tau_D = (2 pi / 15)(N/V) dx^2 c a~^6 sum p k^6 (3 + 11 cos^2 Theta).
/// Infinite when nothing decoheres (dx = 0).
inline double decoherence_time(const PhotonDistribution& dist, const ScatteringGeometry& geom) {
  const double dx = geom.displacement();
  const double rate = 2.0 * std::numbers::pi / 15.0 * geom.density() * dx * dx * geom.light_speed() *
                      std::pow(geom.effective_radius(), 6) * dipole_moment_sum(dist);
  return rate > 0.0 ? 1.0 / rate : kInfinity;
}

/// exp(-(1-f) t / tau_D).
inline double decoherence_factor_thermodynamic(const PhotonDistribution& dist, const ScatteringGeometry& geom,
                                               double f, double t) {
  const double tau = decoherence_time(dist, geom);
  if (std::isinf(tau)) return 1.0;
  return std::exp(-(1.0 - f) * t / tau);
}

// ---------------------------------------------------------------------------
// eta, eta', alpha

enum class AlphaSource {
  /// alpha = L^2 (1 - B_exact)/eta with B_exact the overlap of the explicit micro states.
  exact_overlap,
  /// alpha = (eta - eta')/eta from the shell unitary.
  formula,
  /// scalar supplied by the caller
  override_value,
};

inline const char* to_string(AlphaSource s) {
  switch (s) {
    case AlphaSource::exact_overlap: return "exact_overlap";
    case AlphaSource::formula: return "formula";
    case AlphaSource::override_value: return "override";
  }
  return "?";
}

struct AlphaOptions {
  AlphaSource source = AlphaSource::exact_overlap;
  std::optional<double> override_value;
};

struct OverlapReport {
  double eta_bar = 0.0;
  double eta_prime = 0.0;
  /// The alpha used downstream (see source).
  double alpha = 0.0;
  double alpha_formula = 0.0;
  double alpha_exact = 0.0;
  AlphaSource source = AlphaSource::exact_overlap;
  /// False when eta <= 0: the distribution has no distinguishing power.
  bool alpha_defined = true;
  /// p is not injective on the shells it touches; the perturbative formula
  /// does not apply there.
  bool degenerate = false;

  double tau_D = kInfinity;
  /// |eta - (tau_D (N/V) c)^{-1}| relative to the latter.
  double eta_consistency = 0.0;
  double B_micro_formula = 1.0;
  double B_micro_exact = 1.0;

  double box_edge = 0.0;
  double density = 0.0;
  double light_speed = 0.0;
};

namespace detail {

inline void require_same_grid(const ShellUnitary& u, const PhotonDistribution& dist) {
  if (u.grid == dist.grid_ptr()) return;
  if (!u.grid || u.grid->size() != dist.size()) throw ShapeError("eta_bars: unitary and distribution grids differ");
  for (Index i = 0; i < dist.size(); ++i) {
    const auto& a = u.grid->node(i);
    const auto& b = dist.grid().node(i);
    if (a.k != b.k || (a.direction - b.direction).norm() > 1e-12)
      throw ShapeError("eta_bars: unitary and distribution grids differ");
  }
}

/// B(rho, W rho W^dagger) for diagonal rho, block by block over shells:
/// the trace norm of sqrt(rho) W sqrt(rho).
inline double exact_micro_overlap(const ShellUnitary& w, const PhotonDistribution& dist) {
  double b = 0.0;
  for (const auto& sh : dist.grid().shells()) {
    Eigen::VectorXd sq(sh.count);
    bool any = false;
    for (Index i = 0; i < sh.count; ++i) {
      sq(i) = std::sqrt(dist.prob(sh.begin + i));
      any = any || sq(i) > 0.0;
    }
    if (!any) continue;
    const Matrix block = sq.asDiagonal() * w.entries.block(sh.begin, sh.begin, sh.count, sh.count) * sq.asDiagonal();
    b += trace_norm(block);
  }
  return std::min(b, 1.0);
}

}  // namespace detail

/// eta = (L^2/2)(1 - sum_k p(k) |<k|S1^dag S2|k>|^2),
/// eta' = (L^2/2) sum_k sum_{k' != k} p(k) |<k|S1^dag S2|k'>|^2,
/// together with alpha from the requested source and the tau_D cross-check.
/// `relative` may be labelled S1dagS2 or S2dagS1.
inline OverlapReport eta_bars(const ShellUnitary& relative, const PhotonDistribution& dist,
                              const ScatteringGeometry& geom, const AlphaOptions& opt = {}) {
  using scatter::ShellLabel;
  if (relative.label != ShellLabel::S1dagS2 && relative.label != ShellLabel::S2dagS1)
    throw ValidationError("eta_bars: expected a relative unitary S1^dag S2 or S2^dag S1");
  detail::require_same_grid(relative, dist);
  const ShellUnitary w = relative.label == ShellLabel::S1dagS2 ? relative : relative.adjoint();

  const double L = geom.box_edge();
  const double L2 = L * L;
  // 1 - |w_ii|^2 as (1 - re)(1 + re) - im^2 per node: no cancellation in the sum
  double deficit = 0.0;
  double off = 0.0;
  for (Index i = 0; i < dist.size(); ++i) {
    const double p = dist.prob(i);
    if (p == 0.0) continue;
    const cplx d = w.entries(i, i);
    deficit += p * ((1.0 - d.real()) * (1.0 + d.real()) - d.imag() * d.imag());
    for (Index j = 0; j < dist.size(); ++j)
      if (j != i) off += p * std::norm(w.entries(i, j));
  }

  OverlapReport r;
  r.box_edge = L;
  r.density = geom.density();
  r.light_speed = geom.light_speed();
  r.eta_bar = 0.5 * L2 * deficit;
  r.eta_prime = 0.5 * L2 * off;
  r.degenerate = dist.degenerate();
  r.tau_D = decoherence_time(dist, geom);
  if (std::isfinite(r.tau_D)) {
    const double predicted = 1.0 / (r.tau_D * geom.density() * geom.light_speed());
    r.eta_consistency = std::abs(r.eta_bar - predicted) / predicted;
  }
  r.B_micro_formula = 1.0 - (r.eta_bar - r.eta_prime) / L2;
  r.B_micro_exact = detail::exact_micro_overlap(w, dist);

  r.alpha_defined = r.eta_bar > 0.0;
  if (r.alpha_defined) {
    r.alpha_formula = std::clamp((r.eta_bar - r.eta_prime) / r.eta_bar, 0.0, 1.0);
    r.alpha_exact = std::clamp(L2 * (1.0 - r.B_micro_exact) / r.eta_bar, 0.0, 1.0);
  }
  r.source = opt.source;
  switch (opt.source) {
    case AlphaSource::exact_overlap: r.alpha = r.alpha_exact; break;
    case AlphaSource::formula: r.alpha = r.alpha_formula; break;
    case AlphaSource::override_value:
      if (!opt.override_value || !(*opt.override_value >= 0.0 && *opt.override_value <= 1.0))
        throw ValidationError("alpha override must be a number in [0, 1]");
      r.alpha = *opt.override_value;
      r.alpha_defined = true;
      break;
  }
  return r;
}

/// 1 - (eta - eta')/L^2.
inline double micro_overlap(const OverlapReport& report, double L) {
  if (!(L > 0.0)) throw ValidationError("micro_overlap: L must be > 0");
  return std::clamp(1.0 - (report.eta_bar - report.eta_prime) / (L * L), 0.0, 1.0);
}

enum class Limit { finite_box, thermodynamic };

/// B[rho1_mac(t), rho2_mac(t)]: (1 - alpha eta / L^2)^{m N_t} in a finite box,
/// exp(-alpha m t / tau_D) in the thermodynamic limit.
inline double macro_overlap(double t, double m, const OverlapReport& report, Limit limit) {
  if (!(t >= 0.0)) throw ValidationError("macro_overlap: t must be >= 0");
  if (!(m > 0.0 && m <= 1.0)) throw ValidationError("macro_overlap: m must lie in (0, 1]");
  if (t == 0.0 || report.alpha == 0.0) return 1.0;
  if (limit == Limit::thermodynamic) {
    if (std::isinf(report.tau_D)) return 1.0;
    return std::exp(-report.alpha * m * t / report.tau_D);
  }
  const double L2 = report.box_edge * report.box_edge;
  const double photons = L2 * report.density * report.light_speed * t;
  const double base = 1.0 - report.alpha * report.eta_bar / L2;
  if (base < 0.0) throw RegimeError("macro_overlap: 1 - alpha eta / L^2 is negative");
  return std::pow(base, m * photons);
}

struct Timescales {
  double decoherence = kInfinity;
  /// tau_D / alpha; infinite when alpha = 0.
  double broadcast = kInfinity;
};

inline Timescales timescales(const OverlapReport& report) {
  Timescales ts;
  ts.decoherence = report.tau_D;
  ts.broadcast = report.alpha > 0.0 ? report.tau_D / report.alpha : kInfinity;
  return ts;
}

}  // namespace sbs::asymptotics

#pragma once

// Continuity bounds and the composite bound on |H_S - I(S:fE)| for a
// two-branch controlled-unitary environment. Entropies in bits throughout.

#include <array>
#include <cmath>
#include <sstream>
#include <vector>

#include "sbs/errors.hpp"
#include "sbs/oracle.hpp"
#include "sbs/qmath.hpp"
#include "sbs/random.hpp"

namespace sbs::bounds {

/// h(p) in bits.
inline double binary_entropy(double p) {
  if (!(p >= 0.0 && p <= 1.0)) {
    std::ostringstream os;
    os << "binary_entropy: p = " << p << " outside [0, 1]";
    throw ValidationError(os.str());
  }
  if (p == 0.0 || p == 1.0) return 0.0;
  return -p * std::log2(p) - (1.0 - p) * std::log2(1.0 - p);
}

/// |S(rho) - S(sigma)| <= (eps/2) log2(d-1) + h(eps/2), eps = ||rho - sigma||_tr.
inline double fannes_audenaert(double eps, Index d) {
  if (!(eps >= 0.0 && eps <= 2.0 + 1e-12)) throw ValidationError("fannes_audenaert: eps must lie in [0, 2]");
  if (d < 2) throw ValidationError("fannes_audenaert: d must be >= 2");
  const double t = std::min(eps, 2.0) / 2.0;
  return t * std::log2(static_cast<double>(d - 1)) + binary_entropy(t);
}

/// |S(A|B)_rho - S(A|B)_sigma| <= 4 eps log2 d_A + 2 h(eps), eps = ||rho - sigma||_tr.
inline double alicki_fannes(double eps, Index d_s) {
  if (!(eps >= 0.0 && eps <= 1.0)) throw ValidationError("alicki_fannes: eps must lie in [0, 1]");
  if (d_s < 1) throw ValidationError("alicki_fannes: d_S must be >= 1");
  return 4.0 * eps * std::log2(static_cast<double>(d_s)) + 2.0 * binary_entropy(eps);
}

/// H(p) - 2 sqrt(p1 p2) B^copies; negative values are vacuous but returned.
inline double imax_lower_bound(double p1, double p2, double overlap, double copies) {
  const std::array<double, 2> p{p1, p2};
  return shannon_entropy(p) - 2.0 * std::sqrt(p1 * p2) * std::pow(overlap, copies);
}

struct BoundInstance {
  std::array<double, 2> p{0.5, 0.5};
  cplx c12 = 0.0;
  Matrix U1 = Matrix::Identity(2, 2);
  Matrix U2 = Matrix::Identity(2, 2);
  Matrix rho0E = Matrix::Identity(2, 2) / 2.0;
  int N = 1;
  double f = 1.0;

  void validate() const {
    if (std::abs(p[0] + p[1] - 1.0) > 1e-12 || p[0] < 0.0 || p[1] < 0.0)
      throw ValidationError("BoundInstance: p must be a probability pair");
    if (std::abs(c12) > std::sqrt(p[0] * p[1]) + 1e-12)
      throw ValidationError("BoundInstance: |c12| exceeds sqrt(p1 p2)");
    if (N < 1) throw ValidationError("BoundInstance: N must be >= 1");
  }

  DensityMatrix system() const {
    Matrix s(2, 2);
    s << p[0], c12, std::conj(c12), p[1];
    return DensityMatrix::trusted(std::move(s));
  }

  oracle::OutState out_state(Index dim_cap = oracle::kDefaultDimensionCap) const {
    validate();
    return oracle::evolve_out_state(system(), DensityMatrix(rho0E), U1, U2, N, f, 1.0 / N, dim_cap);
  }
};

struct BoundReport {
  double H_S = 0.0;
  double I_exact = 0.0;
  double rhs = 0.0;
  double epsilon_E = 0.0;
  double epsilon_fE = 0.0;
  double B_macro = 1.0;
  double slack = 0.0;
  bool out_of_regime = false;
};

/// rhs = h(eps_E/2) + 2 h(eps_fE) + 4 eps_fE + 2 sqrt(p1 p2) B^{fN}.
inline double theorem1_rhs(double p1, double p2, double eps_E, double eps_fE, double overlap, int observed) {
  return binary_entropy(eps_E / 2.0) + 2.0 * binary_entropy(eps_fE) + 4.0 * eps_fE +
         2.0 * std::sqrt(p1 * p2) * std::pow(overlap, observed);
}

inline BoundReport theorem1_bound(const BoundInstance& inst, Index dim_cap = oracle::kDefaultDimensionCap) {
  const oracle::OutState st = inst.out_state(dim_cap);
  BoundReport r;
  r.H_S = oracle::pointer_entropy(st);
  r.I_exact = oracle::mutual_information(st);
  const double coh = 2.0 * std::abs(inst.c12);
  const double lam = std::abs(st.lambda);
  r.epsilon_E = coh * std::pow(lam, st.photons);
  r.epsilon_fE = coh * std::pow(lam, st.unobserved());
  const double b = oracle::micro_overlap(st);
  r.B_macro = std::pow(b, st.observed());
  r.rhs = theorem1_rhs(inst.p[0], inst.p[1], r.epsilon_E, r.epsilon_fE, b, st.observed());
  r.slack = r.rhs - std::abs(r.H_S - r.I_exact);
  r.out_of_regime = r.epsilon_E > 0.5 || r.epsilon_fE > 0.5;
  return r;
}

/// U1 = U2, c12 = 0, p = (1/2, 1/2): I = 0 and rhs = H_S = 1.
inline BoundInstance saturation_instance(int N = 4, double f = 0.5) {
  BoundInstance inst;
  inst.N = N;
  inst.f = f;
  return inst;
}

/// Random instance: d-dimensional environments, N drawn from `counts`, f from
/// `fractions` (f N integral is enforced by redrawing N).
inline BoundInstance random_instance(Rng& rng, Index d = 2, const std::vector<int>& counts = {4, 8},
                                     const std::vector<double>& fractions = {0.25, 0.5, 0.75}) {
  BoundInstance inst;
  const double p1 = rng.uniform();
  inst.p = {p1, 1.0 - p1};
  const double r = rng.uniform() * std::sqrt(p1 * (1.0 - p1));
  const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
  inst.c12 = std::polar(r, phi);
  inst.U1 = random_unitary(d, rng);
  inst.U2 = random_unitary(d, rng);
  const Index rank = 1 + static_cast<Index>(rng.bits() % static_cast<std::uint64_t>(d));
  inst.rho0E = random_density_matrix(d, rng, rank);
  inst.f = fractions[rng.bits() % fractions.size()];
  inst.N = counts[rng.bits() % counts.size()];
  return inst;
}

// ---------------------------------------------------------------------------
// photon model: the four rhs terms as functions of t

struct AsymptoticTerms {
  double decoherence = 0.0;  // h(|c12| e^{-t/tau})
  double tail_entropy = 0.0; // 2 h(2|c12| e^{-(1-f)t/tau})
  double tail_linear = 0.0;  // 8 |c12| e^{-(1-f)t/tau}
  double overlap = 0.0;      // 2 sqrt(p1 p2) e^{-alpha f t/tau}
  double total() const { return decoherence + tail_entropy + tail_linear + overlap; }
};

inline AsymptoticTerms asymptotic_bound_terms(double p1, double c12_abs, double alpha, double f, double t_over_tau) {
  const double p2 = 1.0 - p1;
  const double e_all = 2.0 * c12_abs * std::exp(-t_over_tau);
  const double e_f = 2.0 * c12_abs * std::exp(-(1.0 - f) * t_over_tau);
  AsymptoticTerms out;
  out.decoherence = binary_entropy(std::min(e_all / 2.0, 1.0));
  out.tail_entropy = 2.0 * binary_entropy(std::min(e_f, 1.0));
  out.tail_linear = 4.0 * e_f;
  out.overlap = 2.0 * std::sqrt(p1 * p2) * std::exp(-alpha * f * t_over_tau);
  return out;
}

}  // namespace sbs::bounds

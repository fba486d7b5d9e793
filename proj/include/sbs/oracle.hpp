#pragma once

// Exact finite-dimensional post-scattering state S:fE.
//
// A two-location system interacts with N_t identical photons through the
// controlled unitary |x_i><x_i| (x) S_i^{(x) N_t}. The out-state is stored by
// its building blocks only: the 2x2 system matrix c, the single-photon
// operators S_i rho S_j^dagger and Lambda = Tr S1 rho S2^dagger. A dense
// matrix exists only for the observed fraction, on demand.

#include <array>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "sbs/errors.hpp"
#include "sbs/qmath.hpp"
#include "sbs/scatter.hpp"

namespace sbs::oracle {

inline constexpr Index kDefaultDimensionCap = Index{1} << 14;

namespace detail {

inline int integral_count(double fraction, int photons, const char* what) {
  const double n = fraction * photons;
  if (std::abs(n - std::round(n)) > 1e-9) {
    std::ostringstream os;
    os << what << " * N_t = " << n << " is not an integer";
    throw ValidationError(os.str());
  }
  return static_cast<int>(std::lround(n));
}

/// d^n, or max() on overflow.
inline Index checked_power(Index d, int n) {
  Index out = 1;
  for (int i = 0; i < n; ++i) {
    if (out > std::numeric_limits<Index>::max() / d) return std::numeric_limits<Index>::max();
    out *= d;
  }
  return out;
}

inline void require_unitary(const Matrix& u, Index d, const char* name) {
  if (u.rows() != d || u.cols() != d) {
    std::ostringstream os;
    os << name << ": expected " << d << "x" << d << ", got " << u.rows() << "x" << u.cols();
    throw ShapeError(os.str());
  }
  const double defect = (u.adjoint() * u - Matrix::Identity(d, d)).cwiseAbs().maxCoeff();
  if (defect > 1e-9) {
    std::ostringstream os;
    os << name << " is not unitary (max |U^dag U - 1| = " << defect << ")";
    throw ValidationError(os.str());
  }
}

}  // namespace detail

struct OutState {
  /// <x_i| rho_S |x_j>.
  Eigen::Matrix2cd system = Eigen::Matrix2cd::Zero();
  /// Tr S1 rho S2^dagger.
  cplx lambda = 1.0;
  int photons = 0;
  double f = 0.0;
  double m = 1.0;
  /// S_i rho S_i^dagger, i = 1, 2.
  std::array<Matrix, 2> same;
  /// S1 rho S2^dagger.
  Matrix cross;
  Index photon_dim = 1;
  Index dim_cap = kDefaultDimensionCap;

  int observed() const { return detail::integral_count(f, photons, "f"); }
  int unobserved() const { return photons - observed(); }
  int macro_size() const { return detail::integral_count(m, photons, "m"); }

  double pointer_probability(int i) const { return system(i, i).real(); }
  double coherence() const { return std::abs(system(0, 1)); }

  /// Observed macrofractions f M = (f N_t)/(m N_t).
  int observed_macrofractions() const {
    const int k = observed();
    const int q = macro_size();
    if (k == 0) return 0;
    if (q == 0 || k % q != 0) {
      std::ostringstream os;
      os << "observed photons " << k << " do not split into macrofractions of " << q;
      throw ValidationError(os.str());
    }
    return k / q;
  }

  /// Dimension of the assembled S:fE matrix, 2 d^{f N_t}.
  Index assembled_dim() const {
    const Index env = detail::checked_power(photon_dim, observed());
    return env > std::numeric_limits<Index>::max() / 2 ? std::numeric_limits<Index>::max() : 2 * env;
  }

  void require_capacity(Index dim, const std::string& what) const {
    if (dim > dim_cap) {
      std::ostringstream os;
      os << what << ": dimension " << (dim == std::numeric_limits<Index>::max() ? std::string("overflow")
                                                                                 : std::to_string(dim))
         << " exceeds cap " << dim_cap << " (photon_dim d = " << photon_dim << ", f*N_t = " << observed()
         << ", m*N_t = " << macro_size() << "); lower N_t, f or m, or raise the dimension cap";
      throw CapacityError(os.str());
    }
  }
};

/// Post-scattering state for rho_S (x) rho_ph^{(x) N_t} after N_t controlled
/// scatterings, with a fraction f of the photons observed.
inline OutState evolve_out_state(const DensityMatrix& rho_s, const DensityMatrix& rho_ph, const Matrix& s1,
                                 const Matrix& s2, int photons, double f, double m,
                                 Index dim_cap = kDefaultDimensionCap) {
  if (rho_s.dim() != 2) throw ShapeError("evolve_out_state: the system must be two-dimensional");
  if (photons < 0) throw ValidationError("evolve_out_state: N_t must be >= 0");
  if (!(f >= 0.0 && f <= 1.0)) throw ValidationError("evolve_out_state: f must lie in [0, 1]");
  if (!(m > 0.0 && m <= 1.0)) throw ValidationError("evolve_out_state: m must lie in (0, 1]");
  const Index d = rho_ph.dim();
  detail::require_unitary(s1, d, "S1");
  detail::require_unitary(s2, d, "S2");

  OutState st;
  st.system = rho_s.matrix();
  st.photons = photons;
  st.f = f;
  st.m = m;
  st.photon_dim = d;
  st.dim_cap = dim_cap;
  (void)st.observed();
  (void)st.macro_size();
  const Matrix& rho = rho_ph.matrix();
  st.same[0] = s1 * rho * s1.adjoint();
  st.same[1] = s2 * rho * s2.adjoint();
  st.cross = s1 * rho * s2.adjoint();
  st.lambda = st.cross.trace();
  st.require_capacity(st.assembled_dim(), "evolve_out_state");
  return st;
}

/// Photon-model variant: rho_ph = diag p(k) on the shell grid, S_i given as
/// explicit shell unitaries.
inline OutState evolve_out_state(const DensityMatrix& rho_s, const scatter::PhotonDistribution& dist,
                                 const scatter::ShellUnitary& s1, const scatter::ShellUnitary& s2, int photons,
                                 double f, double m, Index dim_cap = kDefaultDimensionCap) {
  Matrix rho = Matrix::Zero(dist.size(), dist.size());
  for (Index i = 0; i < dist.size(); ++i) rho(i, i) = dist.prob(i);
  return evolve_out_state(rho_s, DensityMatrix::trusted(std::move(rho)), s1.entries, s2.entries, photons, f, m,
                          dim_cap);
}

// ---------------------------------------------------------------------------
// dense assembly

/// Off-diagonal block c_12 Lambda^{(1-f)N_t} (S1 rho S2^dag)^{(x) f N_t}.
inline Matrix coherent_block(const OutState& st) {
  const cplx amp = st.system(0, 1) * std::pow(st.lambda, st.unobserved());
  return amp * tensor_power(st.cross, st.observed());
}

/// The i = j part only when `coherent` is false; the i != j part only when
/// `diagonal` is false.
inline Matrix assemble(const OutState& st, bool diagonal = true, bool coherent = true) {
  st.require_capacity(st.assembled_dim(), "assemble");
  const int k = st.observed();
  const Index de = detail::checked_power(st.photon_dim, k);
  Matrix out = Matrix::Zero(2 * de, 2 * de);
  if (diagonal) {
    out.topLeftCorner(de, de) = st.system(0, 0) * tensor_power(st.same[0], k);
    out.bottomRightCorner(de, de) = st.system(1, 1) * tensor_power(st.same[1], k);
  }
  if (coherent) {
    const Matrix b = coherent_block(st);
    out.topRightCorner(de, de) = b;
    out.bottomLeftCorner(de, de) = b.adjoint();
  }
  return out;
}

/// ||rho^{i != j}_{S:fE}||_tr = 2 |c_12| |Lambda|^{(1-f) N_t}; exact.
inline double coherent_tail_norm(const OutState& st) {
  return 2.0 * st.coherence() * std::pow(std::abs(st.lambda), st.unobserved());
}

/// Reduced system state after all N_t photons: coherence c_12 Lambda^{N_t}.
inline Eigen::Matrix2cd reduced_system(const OutState& st) {
  Eigen::Matrix2cd rs = st.system;
  rs(0, 1) *= std::pow(st.lambda, st.photons);
  rs(1, 0) = std::conj(rs(0, 1));
  return rs;
}

/// B of the single-photon states S1 rho S1^dag and S2 rho S2^dag.
inline double micro_overlap(const OutState& st) {
  return generalized_overlap(DensityMatrix::trusted(st.same[0]), DensityMatrix::trusted(st.same[1]));
}

/// (S_i rho S_i^dagger)^{(x) m N_t} for i = 1, 2. All macrofractions carry the
/// same pair; `index` only has to name one of them.
inline std::pair<DensityMatrix, DensityMatrix> macro_states(const OutState& st, int index = 0) {
  const int q = st.macro_size();
  const int count = static_cast<int>(std::lround(1.0 / st.m));
  if (index < 0 || index >= count) throw ValidationError("macro_states: macrofraction index out of range");
  st.require_capacity(detail::checked_power(st.photon_dim, q), "macro_states");
  return {DensityMatrix::trusted(tensor_power(st.same[0], q)), DensityMatrix::trusted(tensor_power(st.same[1], q))};
}

/// B of the macro states, from the micro overlap by tensor multiplicativity.
inline double macro_overlap(const OutState& st) { return std::pow(micro_overlap(st), st.macro_size()); }

/// H({p_i}) of the pointer probabilities.
inline double pointer_entropy(const OutState& st) {
  const std::array<double, 2> p{st.pointer_probability(0), st.pointer_probability(1)};
  return shannon_entropy(p);
}

/// Exact I(S : fE) from the assembled state.
inline double mutual_information(const OutState& st) {
  const int k = st.observed();
  if (k == 0) return 0.0;
  const Matrix rho = assemble(st);
  return sbs::mutual_information(DensityMatrix::trusted(rho), 2, detail::checked_power(st.photon_dim, k));
}

// ---------------------------------------------------------------------------
// broadcast structure

/// Trace-norm distance between the assembled state and the nearest state of
/// spectrum-broadcast form built from it: the system is pinched in the pointer
/// basis and each macro state is projected on its side of the Helstrom split
/// of rho1_mac - rho2_mac and renormalized.
inline double broadcast_distance(const OutState& st) {
  const int k = st.observed();
  const int copies = st.observed_macrofractions();
  st.require_capacity(st.assembled_dim(), "broadcast_distance");
  const Matrix actual = assemble(st);
  if (k == 0) {
    Matrix pinched = actual;
    pinched(0, 1) = pinched(1, 0) = 0.0;
    return trace_norm_hermitian(actual - pinched);
  }

  const auto [r1, r2] = macro_states(st);
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * ((r1.matrix() - r2.matrix()) + (r1.matrix() - r2.matrix()).adjoint()));
  const Index n = r1.dim();
  Matrix plus = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i)
    if (es.eigenvalues()(i) > 0.0) plus += es.eigenvectors().col(i) * es.eigenvectors().col(i).adjoint();
  const Matrix minus = Matrix::Identity(n, n) - plus;

  auto project = [](const Matrix& proj, const Matrix& rho) {
    Matrix out = proj * rho * proj;
    const double tr = out.trace().real();
    return tr > 1e-14 ? Matrix(out / tr) : rho;
  };
  const Matrix s1 = project(plus, r1.matrix());
  const Matrix s2 = project(minus, r2.matrix());

  const Index de = detail::checked_power(st.photon_dim, k);
  Matrix candidate = Matrix::Zero(2 * de, 2 * de);
  candidate.topLeftCorner(de, de) = st.pointer_probability(0) * tensor_power(s1, copies);
  candidate.bottomRightCorner(de, de) = st.pointer_probability(1) * tensor_power(s2, copies);
  return trace_norm_hermitian(actual - candidate);
}

enum class Phase { product, broadcasting, full_information };

inline const char* to_string(Phase p) {
  switch (p) {
    case Phase::product: return "product";
    case Phase::broadcasting: return "broadcasting";
    case Phase::full_information: return "full_information";
  }
  return "?";
}

struct PhaseThresholds {
  double product = 0.05;
  double broadcast = 0.1;
};

inline Phase classify_phase(double mutual_info, double pointer_entropy, const PhaseThresholds& thr = {}) {
  if (mutual_info < thr.product) return Phase::product;
  if (std::abs(mutual_info - pointer_entropy) < thr.broadcast) return Phase::broadcasting;
  return Phase::full_information;
}

inline Phase classify_phase(const OutState& st, const PhaseThresholds& thr = {}) {
  return classify_phase(mutual_information(st), pointer_entropy(st), thr);
}

// ---------------------------------------------------------------------------
// instances and plateau curves

/// Everything that fixes an out-state except the observed fraction f.
struct OracleInstance {
  DensityMatrix system = DensityMatrix::maximally_mixed(2);
  DensityMatrix environment = DensityMatrix::maximally_mixed(2);
  Matrix s1 = Matrix::Identity(2, 2);
  Matrix s2 = Matrix::Identity(2, 2);
  int photons = 0;
  double m = 1.0;
  Index dim_cap = kDefaultDimensionCap;

  OutState at(double f) const { return evolve_out_state(system, environment, s1, s2, photons, f, m, dim_cap); }
};

struct PlateauRow {
  double f = 0.0;
  double I_bits = 0.0;
  double H_S = 0.0;
  double tail_norm = 0.0;
  double B_macro = 1.0;
  double broadcast_distance = 0.0;
  Phase phase = Phase::product;
};

struct PlateauCurve {
  std::vector<PlateauRow> rows;
  double H_S = 0.0;
  int photons = 0;
  double m = 1.0;
};

/// Exact I(f) (and the companion diagnostics) for every f in `fractions`.
inline PlateauCurve mutual_info_curve(const OracleInstance& inst, const std::vector<double>& fractions,
                                      const PhaseThresholds& thr = {}) {
  if (fractions.size() < 3) throw ValidationError("mutual_info_curve: need at least three fractions");
  PlateauCurve curve;
  curve.photons = inst.photons;
  curve.m = inst.m;
  for (double f : fractions) {
    const OutState st = inst.at(f);
    PlateauRow row;
    row.f = f;
    row.I_bits = mutual_information(st);
    row.H_S = pointer_entropy(st);
    row.tail_norm = coherent_tail_norm(st);
    row.B_macro = macro_overlap(st);
    row.broadcast_distance = broadcast_distance(st);
    row.phase = classify_phase(row.I_bits, row.H_S, thr);
    curve.H_S = row.H_S;
    curve.rows.push_back(row);
  }
  return curve;
}

// ---------------------------------------------------------------------------
// CC-type broadcasting channel

struct CcChannel {
  /// One asymptotic macro state per pointer state.
  std::vector<DensityMatrix> macro_states;
  /// Number of observed macrofractions f M.
  int copies = 1;
  /// Pairwise overlap above which the macro states count as non-orthogonal.
  double orthogonality_tolerance = 1e-6;
};

struct CcEnsemble {
  std::vector<double> probs;
  std::vector<DensityMatrix> macro_states;
  int copies = 1;
  /// Largest pairwise B between distinct macro states.
  double max_overlap = 0.0;
  bool orthogonal = true;

  /// sum_i p_i |x_i><x_i| (x) rho_i^{(x) copies}.
  Matrix assemble(Index dim_cap = kDefaultDimensionCap) const {
    const Index n = static_cast<Index>(probs.size());
    const Index de = detail::checked_power(macro_states.front().dim(), copies);
    if (de > dim_cap / n) throw CapacityError("CcEnsemble::assemble: dimension exceeds cap");
    Matrix out = Matrix::Zero(n * de, n * de);
    for (Index i = 0; i < n; ++i)
      out.block(i * de, i * de, de, de) = probs[static_cast<std::size_t>(i)] *
                                          tensor_power(macro_states[static_cast<std::size_t>(i)].matrix(), copies);
    return out;
  }
};

/// rho_S -> sum_i <x_i|rho_S|x_i> rho_i^{mac (x) fM}. Non-orthogonal macro
/// states are reported through `orthogonal` and `max_overlap`.
inline CcEnsemble cc_channel_apply(const DensityMatrix& rho_s, const CcChannel& channel) {
  const auto n = static_cast<std::size_t>(rho_s.dim());
  if (channel.macro_states.size() != n) {
    std::ostringstream os;
    os << "cc_channel_apply: " << channel.macro_states.size() << " macro states for a " << n
       << "-dimensional system";
    throw ShapeError(os.str());
  }
  if (channel.copies < 0) throw ValidationError("cc_channel_apply: copies must be >= 0");
  CcEnsemble out;
  out.copies = channel.copies;
  out.macro_states = channel.macro_states;
  for (std::size_t i = 0; i < n; ++i) out.probs.push_back(rho_s.matrix()(static_cast<Index>(i), static_cast<Index>(i)).real());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      out.max_overlap = std::max(out.max_overlap, generalized_overlap(channel.macro_states[i], channel.macro_states[j]));
  out.orthogonal = out.max_overlap <= channel.orthogonality_tolerance;
  return out;
}

/// The channel realised by an out-state: its macro states and f M copies.
inline CcChannel cc_channel_of(const OutState& st, double orthogonality_tolerance = 1e-6) {
  auto [r1, r2] = macro_states(st);
  return {{std::move(r1), std::move(r2)}, st.observed_macrofractions(), orthogonality_tolerance};
}

}  // namespace sbs::oracle

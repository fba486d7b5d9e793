#pragma once

// Dense complex-matrix kernel and quantum-information measures.
//
// Entropies are in bits. Eigenvalues in [-tolerance, 0] are treated as exact
// zeros before logarithms and square roots; anything more negative is an error.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <limits>
#include <cstddef>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "sbs/errors.hpp"

namespace sbs {

using cplx = std::complex<double>;
using Index = Eigen::Index;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using RealVector = Eigen::VectorXd;

/// A general square operator; no invariant beyond shape (e.g. S1 rho S2^dagger).
using Operator = Matrix;

inline constexpr double kEigenTolerance = 1e-9;

class DensityMatrix {
 public:
  /// Validates Hermiticity, unit trace and positivity to within `tolerance`.
  explicit DensityMatrix(Matrix entries, double tolerance = kEigenTolerance)
      : entries_(std::move(entries)), tolerance_(tolerance) {
    validate();
  }

  /// Wraps a matrix that is a density matrix by construction (no eigensolve).
  static DensityMatrix trusted(Matrix entries, double tolerance = kEigenTolerance) {
    return DensityMatrix(std::move(entries), tolerance, Unchecked{});
  }

  static DensityMatrix pure(const Vector& psi) {
    const double n = psi.norm();
    if (!(n > 0.0)) throw ValidationError("pure state vector has zero norm");
    const Vector u = psi / n;
    return trusted(u * u.adjoint());
  }

  static DensityMatrix maximally_mixed(Index dim) {
    if (dim <= 0) throw ShapeError("dimension must be positive");
    return trusted(Matrix::Identity(dim, dim) / static_cast<double>(dim));
  }

  const Matrix& matrix() const noexcept { return entries_; }
  Index dim() const noexcept { return entries_.rows(); }
  double tolerance() const noexcept { return tolerance_; }

 private:
  struct Unchecked {};
  DensityMatrix(Matrix entries, double tolerance, Unchecked)
      : entries_(std::move(entries)), tolerance_(tolerance) {}

  void validate() const;

  Matrix entries_;
  double tolerance_;
};

// ---------------------------------------------------------------------------
// elementary helpers

inline void require_square(const Matrix& m, const char* what) {
  if (m.rows() != m.cols() || m.rows() == 0) {
    std::ostringstream os;
    os << what << ": expected a non-empty square matrix, got " << m.rows() << "x" << m.cols();
    throw ShapeError(os.str());
  }
}

/// Eigenvalues of the Hermitian part of `m`, ascending.
inline RealVector hermitian_eigenvalues(const Matrix& m) {
  require_square(m, "hermitian_eigenvalues");
  const Matrix h = 0.5 * (m + m.adjoint());
  Eigen::SelfAdjointEigenSolver<Matrix> es(h, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw Error("Hermitian eigensolver did not converge");
  return es.eigenvalues();
}

/// Kronecker product a (x) b.
inline Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

/// a^{(x) n}; the 1x1 identity for n = 0.
inline Matrix tensor_power(const Matrix& a, int n) {
  if (n < 0) throw ValidationError("tensor_power: negative exponent");
  Matrix out = Matrix::Identity(1, 1);
  for (int i = 0; i < n; ++i) out = kron(out, a);
  return out;
}

/// Positive square root of a Hermitian PSD matrix via its eigendecomposition.
/// Eigenvalues at or below the solver's noise floor (n eps max|w|) are taken
/// as exact zeros.
inline Matrix psd_sqrt(const Matrix& m, double tolerance = kEigenTolerance) {
  require_square(m, "psd_sqrt");
  const Matrix h = 0.5 * (m + m.adjoint());
  Eigen::SelfAdjointEigenSolver<Matrix> es(h);
  if (es.info() != Eigen::Success) throw Error("Hermitian eigensolver did not converge");
  RealVector w = es.eigenvalues();
  const double floor =
      static_cast<double>(w.size()) * std::numeric_limits<double>::epsilon() * w.cwiseAbs().maxCoeff();
  for (Index i = 0; i < w.size(); ++i) {
    if (w(i) < -tolerance) {
      std::ostringstream os;
      os << "psd_sqrt: eigenvalue " << w(i) << " below -" << tolerance;
      throw ValidationError(os.str());
    }
    w(i) = w(i) > floor ? std::sqrt(w(i)) : 0.0;
  }
  return es.eigenvectors() * w.asDiagonal() * es.eigenvectors().adjoint();
}

// ---------------------------------------------------------------------------
// norms and overlaps

/// Sum of singular values.
inline double trace_norm(const Operator& m) {
  require_square(m, "trace_norm");
  Eigen::BDCSVD<Matrix> svd(m);
  return svd.singularValues().sum();
}

/// Trace norm of a Hermitian matrix as the sum of absolute eigenvalues.
inline double trace_norm_hermitian(const Matrix& m) {
  return hermitian_eigenvalues(m).cwiseAbs().sum();
}

/// B(rho1, rho2) = Tr sqrt(sqrt(rho1) rho2 sqrt(rho1)) = ||sqrt(rho1) sqrt(rho2)||_tr,
/// clamped to [0, 1].
inline double generalized_overlap(const DensityMatrix& rho1, const DensityMatrix& rho2) {
  if (rho1.dim() != rho2.dim()) {
    std::ostringstream os;
    os << "generalized_overlap: dimension mismatch " << rho1.dim() << " vs " << rho2.dim();
    throw ShapeError(os.str());
  }
  const double tol = std::max(rho1.tolerance(), rho2.tolerance());
  const Matrix prod = psd_sqrt(rho1.matrix(), tol) * psd_sqrt(rho2.matrix(), tol);
  return std::clamp(trace_norm(prod), 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// partial trace

namespace detail {

inline Index checked_product(std::span<const Index> dims) {
  Index total = 1;
  for (Index d : dims) {
    if (d <= 0) throw ShapeError("partial_trace: subsystem dimensions must be positive");
    total *= d;
  }
  return total;
}

}  // namespace detail

/// Traces out every subsystem not listed in `keep`. Kept subsystems stay in
/// their original order. Works for arbitrary operators, not only states.
inline Matrix partial_trace(const Matrix& m, std::span<const Index> dims, std::span<const Index> keep) {
  require_square(m, "partial_trace");
  const Index total = detail::checked_product(dims);
  if (total != m.rows()) {
    std::ostringstream os;
    os << "partial_trace: product of subsystem dims " << total << " != matrix dim " << m.rows();
    throw ShapeError(os.str());
  }
  const auto n = static_cast<Index>(dims.size());
  std::vector<bool> kept(static_cast<std::size_t>(n), false);
  for (Index k : keep) {
    if (k < 0 || k >= n) throw ShapeError("partial_trace: keep index out of range");
    if (kept[static_cast<std::size_t>(k)]) throw ShapeError("partial_trace: duplicate keep index");
    kept[static_cast<std::size_t>(k)] = true;
  }

  // Row-major strides: subsystem 0 is the most significant digit.
  std::vector<Index> stride(static_cast<std::size_t>(n), 1);
  for (Index s = n - 2; s >= 0; --s)
    stride[static_cast<std::size_t>(s)] = stride[static_cast<std::size_t>(s + 1)] * dims[static_cast<std::size_t>(s + 1)];

  Index dk = 1;
  Index dt = 1;
  for (Index s = 0; s < n; ++s) (kept[static_cast<std::size_t>(s)] ? dk : dt) *= dims[static_cast<std::size_t>(s)];

  // offset[a] for each kept multi-index a, offset[b] for each traced one.
  auto offsets = [&](bool want_kept, Index count) {
    std::vector<Index> out(static_cast<std::size_t>(count), 0);
    for (Index idx = 0; idx < count; ++idx) {
      Index rem = idx;
      Index off = 0;
      for (Index s = n - 1; s >= 0; --s) {
        if (kept[static_cast<std::size_t>(s)] != want_kept) continue;
        const Index d = dims[static_cast<std::size_t>(s)];
        off += (rem % d) * stride[static_cast<std::size_t>(s)];
        rem /= d;
      }
      out[static_cast<std::size_t>(idx)] = off;
    }
    return out;
  };
  const auto ko = offsets(true, dk);
  const auto to = offsets(false, dt);

  Matrix out = Matrix::Zero(dk, dk);
  for (Index a = 0; a < dk; ++a)
    for (Index b = 0; b < dk; ++b) {
      cplx acc = 0.0;
      for (Index t = 0; t < dt; ++t) acc += m(ko[a] + to[t], ko[b] + to[t]);
      out(a, b) = acc;
    }
  return out;
}

inline DensityMatrix partial_trace(const DensityMatrix& rho, std::span<const Index> dims,
                                   std::span<const Index> keep) {
  return DensityMatrix::trusted(partial_trace(rho.matrix(), dims, keep), rho.tolerance());
}

// ---------------------------------------------------------------------------
// entropies

/// Shannon entropy in bits of a probability vector (0 log 0 = 0).
inline double shannon_entropy(std::span<const double> probs) {
  double h = 0.0;
  for (double p : probs)
    if (p > 0.0) h -= p * std::log2(p);
  return h;
}

/// -sum w log2 w over eigenvalues, clamping [-tolerance, 0] to 0.
inline double entropy_of_spectrum(const RealVector& w, double tolerance = kEigenTolerance) {
  double s = 0.0;
  for (Index i = 0; i < w.size(); ++i) {
    if (w(i) < -tolerance) {
      std::ostringstream os;
      os << "entropy: eigenvalue " << w(i) << " below -" << tolerance;
      throw ValidationError(os.str());
    }
    if (w(i) > 0.0) s -= w(i) * std::log2(w(i));
  }
  return s;
}

inline double von_neumann_entropy(const DensityMatrix& rho) {
  return entropy_of_spectrum(hermitian_eigenvalues(rho.matrix()), rho.tolerance());
}

/// I(A:B) = S(A) + S(B) - S(AB) for a state on C^dimA (x) C^dimB.
inline double mutual_information(const DensityMatrix& rho_ab, Index dim_a, Index dim_b) {
  if (dim_a <= 0 || dim_b <= 0 || dim_a * dim_b != rho_ab.dim()) {
    std::ostringstream os;
    os << "mutual_information: " << dim_a << " x " << dim_b << " != " << rho_ab.dim();
    throw ShapeError(os.str());
  }
  const std::array<Index, 2> dims{dim_a, dim_b};
  const std::array<Index, 1> keep_a{0};
  const std::array<Index, 1> keep_b{1};
  const double tol = rho_ab.tolerance();
  const double sa = entropy_of_spectrum(hermitian_eigenvalues(partial_trace(rho_ab.matrix(), dims, keep_a)), tol);
  const double sb = entropy_of_spectrum(hermitian_eigenvalues(partial_trace(rho_ab.matrix(), dims, keep_b)), tol);
  const double sab = entropy_of_spectrum(hermitian_eigenvalues(rho_ab.matrix()), tol);
  return sa + sb - sab;
}

/// Holevo quantity chi = S(sum p_i rho_i) - sum p_i S(rho_i).
inline double holevo_chi(std::span<const double> probs, std::span<const DensityMatrix> states) {
  if (probs.size() != states.size() || probs.empty())
    throw ShapeError("holevo_chi: probabilities and states must have equal, non-zero length");
  const Index d = states.front().dim();
  double total = 0.0;
  for (double p : probs) {
    if (p < 0.0) throw ValidationError("holevo_chi: negative probability");
    total += p;
  }
  if (std::abs(total - 1.0) > kEigenTolerance) throw ValidationError("holevo_chi: probabilities do not sum to 1");

  Matrix avg = Matrix::Zero(d, d);
  double conditional = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (states[i].dim() != d) throw ShapeError("holevo_chi: states differ in dimension");
    avg += probs[i] * states[i].matrix();
    if (probs[i] > 0.0) conditional += probs[i] * von_neumann_entropy(states[i]);
  }
  return entropy_of_spectrum(hermitian_eigenvalues(avg)) - conditional;
}

// ---------------------------------------------------------------------------

inline void DensityMatrix::validate() const {
  require_square(entries_, "DensityMatrix");
  const double herm = (entries_ - entries_.adjoint()).cwiseAbs().maxCoeff();
  if (herm > tolerance_) {
    std::ostringstream os;
    os << "DensityMatrix: not Hermitian (max |rho - rho^dagger| = " << herm << ")";
    throw ValidationError(os.str());
  }
  const double tr = entries_.trace().real();
  if (std::abs(tr - 1.0) > tolerance_) {
    std::ostringstream os;
    os << "DensityMatrix: trace " << tr << " != 1";
    throw ValidationError(os.str());
  }
  const double lo = hermitian_eigenvalues(entries_).minCoeff();
  if (lo < -tolerance_) {
    std::ostringstream os;
    os << "DensityMatrix: eigenvalue " << lo << " below -" << tolerance_;
    throw ValidationError(os.str());
  }
}

}  // namespace sbs

#pragma once

// Stationary spectra of unistochastic matrices and their transmission through
// a broadcasting channel.

#include <cmath>
#include <functional>
#include <sstream>
#include <utility>

#include <Eigen/Eigenvalues>

#include "sbs/errors.hpp"
#include "sbs/oracle.hpp"
#include "sbs/qmath.hpp"

namespace sbs::pfcast {

using RealMatrix = Eigen::MatrixXd;

/// Column-stochastic matrix: nonnegative entries, columns summing to 1.
class StochasticMatrix {
 public:
  explicit StochasticMatrix(RealMatrix p, double tolerance = 1e-12) : p_(std::move(p)) {
    if (p_.rows() != p_.cols() || p_.rows() == 0) throw ShapeError("StochasticMatrix: must be square and non-empty");
    if (p_.minCoeff() < -tolerance) throw ValidationError("StochasticMatrix: negative entry");
    const double col = (p_.colwise().sum().array() - 1.0).abs().maxCoeff();
    if (col > tolerance) {
      std::ostringstream os;
      os << "StochasticMatrix: column sums deviate from 1 by " << col;
      throw ValidationError(os.str());
    }
  }

  Index n() const { return p_.rows(); }
  const RealMatrix& entries() const { return p_; }
  double operator()(Index i, Index j) const { return p_(i, j); }

  bool doubly_stochastic(double tolerance = 1e-12) const {
    return (p_.rowwise().sum().array() - 1.0).abs().maxCoeff() <= tolerance;
  }

 private:
  RealMatrix p_;
};

namespace detail {

inline void require_orthonormal(const Matrix& basis, const char* name, double tolerance) {
  if (basis.rows() != basis.cols() || basis.rows() == 0) {
    std::ostringstream os;
    os << name << ": expected a square matrix of basis columns";
    throw ShapeError(os.str());
  }
  const double defect = (basis.adjoint() * basis - Matrix::Identity(basis.cols(), basis.cols())).cwiseAbs().maxCoeff();
  if (defect > tolerance) {
    std::ostringstream os;
    os << name << " is not orthonormal (max deviation " << defect << ")";
    throw ValidationError(os.str());
  }
}

}  // namespace detail

/// P_ij = |<phi_i|x_j>|^2 with phi_i and x_j the columns of the two matrices.
inline StochasticMatrix unistochastic_from_bases(const Matrix& phi, const Matrix& pointer, double tolerance = 1e-10) {
  detail::require_orthonormal(phi, "phi basis", tolerance);
  detail::require_orthonormal(pointer, "pointer basis", tolerance);
  if (phi.rows() != pointer.rows()) throw ShapeError("unistochastic_from_bases: basis dimensions differ");
  return StochasticMatrix((phi.adjoint() * pointer).cwiseAbs2(), 1e-10);
}

inline StochasticMatrix unistochastic_from_basis(const Matrix& phi) {
  return unistochastic_from_bases(phi, Matrix::Identity(phi.rows(), phi.rows()));
}

struct Stationary {
  RealVector distribution;
  /// False when eigenvalue 1 is degenerate; the uniform start then picks the
  /// answer.
  bool unique = true;
  bool used_power_iteration = false;
  /// max_i |(P lambda)_i - lambda_i|.
  double residual = 0.0;
};

inline double stationarity_residual(const StochasticMatrix& p, const RealVector& lambda) {
  return (p.entries() * lambda - lambda).cwiseAbs().maxCoeff();
}

/// A probability vector with P lambda = lambda. Unique case: eigenvector of
/// eigenvalue 1. Degenerate case, or a failed eigensolve: power iteration of
/// the lazy chain (P + 1)/2 from the uniform vector.
inline Stationary stationary_distribution(const StochasticMatrix& p, double tolerance = 1e-10) {
  const Index n = p.n();
  Stationary out;
  Eigen::EigenSolver<RealMatrix> es(p.entries());
  Index ones = 0;
  Index best = 0;
  for (Index i = 0; i < n; ++i) {
    const double gap = std::abs(es.eigenvalues()(i) - 1.0);
    if (gap < 1e-9) ++ones;
    if (gap < std::abs(es.eigenvalues()(best) - 1.0)) best = i;
  }
  out.unique = ones <= 1;

  if (out.unique && es.info() == Eigen::Success) {
    RealVector v = es.eigenvectors().col(best).real();
    if (v.sum() < 0.0) v = -v;
    if (v.minCoeff() >= -1e-12 && v.sum() > 0.0) {
      v = v.cwiseMax(0.0);
      v /= v.sum();
      out.distribution = v;
      out.residual = stationarity_residual(p, v);
      if (out.residual <= tolerance) return out;
    }
  }

  out.used_power_iteration = true;
  const RealMatrix lazy = 0.5 * (p.entries() + RealMatrix::Identity(n, n));
  RealVector v = RealVector::Constant(n, 1.0 / static_cast<double>(n));
  for (int it = 0; it < 1'000'000; ++it) {
    RealVector next = lazy * v;
    next /= next.sum();
    const double change = (next - v).cwiseAbs().maxCoeff();
    v = std::move(next);
    if (change < 1e-15 && stationarity_residual(p, v) <= tolerance) break;
  }
  out.distribution = v;
  out.residual = stationarity_residual(p, v);
  return out;
}

inline Stationary stationary_distribution(const RealMatrix& p) { return stationary_distribution(StochasticMatrix(p)); }

using Channel = std::function<oracle::CcEnsemble(const DensityMatrix&)>;

/// The CC channel with fixed macro states.
inline Channel make_channel(oracle::CcChannel channel) {
  return [ch = std::move(channel)](const DensityMatrix& rho) { return oracle::cc_channel_apply(rho, ch); };
}

struct PfReport {
  RealMatrix P;
  RealVector lambda;
  RealVector pointer_probs;
  double max_deviation = 0.0;
  double stationarity_residual = 0.0;
  oracle::CcEnsemble ensemble;
};

/// Prepares sum_i lambda_i |phi_i><phi_i| and sends it through `channel`.
inline PfReport verify_pf_broadcast(const Matrix& phi, const RealVector& lambda, const Channel& channel,
                                    double tolerance = 1e-10) {
  const StochasticMatrix p = unistochastic_from_basis(phi);
  if (lambda.size() != p.n()) throw ShapeError("verify_pf_broadcast: lambda has the wrong length");
  if (lambda.minCoeff() < 0.0 || std::abs(lambda.sum() - 1.0) > 1e-12)
    throw ValidationError("verify_pf_broadcast: lambda is not a probability vector");
  PfReport r;
  r.P = p.entries();
  r.lambda = lambda;
  r.stationarity_residual = stationarity_residual(p, lambda);
  if (r.stationarity_residual > tolerance) {
    std::ostringstream os;
    os << "verify_pf_broadcast: lambda is not stationary for P (residual " << r.stationarity_residual << ")";
    throw ValidationError(os.str());
  }
  const Matrix rho = phi * lambda.cast<cplx>().asDiagonal() * phi.adjoint();
  r.ensemble = channel(DensityMatrix(rho));
  r.pointer_probs = Eigen::Map<const RealVector>(r.ensemble.probs.data(), static_cast<Index>(r.ensemble.probs.size()));
  r.max_deviation = (r.pointer_probs - lambda).cwiseAbs().maxCoeff();
  return r;
}

}  // namespace sbs::pfcast

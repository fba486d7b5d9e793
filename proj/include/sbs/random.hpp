#pragma once

// Deterministic random numbers and random quantum objects.
//
// std::normal_distribution and friends are implementation-defined, so the
// transforms below are written against raw mt19937_64 output. Given a seed the
// streams are identical on every conforming platform.

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <random>

#include <Eigen/Dense>

namespace sbs {

/// SplitMix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(mix_seed(seed)) {}

  /// Stream `index` of a partitioned seed; streams do not depend on each other.
  static Rng stream(std::uint64_t seed, std::uint64_t index) {
    return Rng(mix_seed(seed) ^ mix_seed(index + 0x632BE59BD9B4E019ULL));
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal (Box-Muller, no cached second variate).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  std::complex<double> complex_normal() { return {normal(), normal()}; }

  std::uint64_t bits() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

/// Haar-random unitary from the QR decomposition of a Ginibre matrix.
inline Eigen::MatrixXcd random_unitary(Eigen::Index d, Rng& rng) {
  Eigen::MatrixXcd g(d, d);
  for (Eigen::Index j = 0; j < d; ++j)
    for (Eigen::Index i = 0; i < d; ++i) g(i, j) = rng.complex_normal();
  Eigen::HouseholderQR<Eigen::MatrixXcd> qr(g);
  Eigen::MatrixXcd q = qr.householderQ();
  const Eigen::MatrixXcd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < d; ++j) {
    const double mag = std::abs(r(j, j));
    if (mag > 0.0) q.col(j) *= r(j, j) / mag;
  }
  return q;
}

/// Random unit vector, uniform on the complex sphere.
inline Eigen::VectorXcd random_pure_vector(Eigen::Index d, Rng& rng) {
  Eigen::VectorXcd v(d);
  for (Eigen::Index i = 0; i < d; ++i) v(i) = rng.complex_normal();
  return v / v.norm();
}

/// Random density matrix G G^dagger / Tr with G a d x rank Ginibre matrix.
inline Eigen::MatrixXcd random_density_matrix(Eigen::Index d, Rng& rng, Eigen::Index rank = -1) {
  if (rank <= 0) rank = d;
  Eigen::MatrixXcd g(d, rank);
  for (Eigen::Index j = 0; j < rank; ++j)
    for (Eigen::Index i = 0; i < d; ++i) g(i, j) = rng.complex_normal();
  Eigen::MatrixXcd rho = g * g.adjoint();
  rho /= rho.trace().real();
  return rho;
}

}  // namespace sbs

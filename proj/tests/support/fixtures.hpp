#pragma once

#include <memory>
#include <vector>

#include "sbs/random.hpp"
#include "sbs/scatter.hpp"

namespace sbs::fixtures {

/// a = 10, eps = 4 (a~^6 = 2.5e5), dx = 1, N/V = c = 1. Per-photon damping at
/// k = 0.1 is about 1.5 / L^2.
inline scatter::ScatteringGeometry geometry(double L = 50.0, double dx = 1.0) {
  return {10.0, 4.0, dx, L, 1.0, 1.0};
}

inline scatter::GridPtr cube_grid(std::vector<double> ks = {0.05, 0.08, 0.1}) {
  return std::make_shared<const scatter::ShellGrid>(scatter::ShellGrid::cube26(ks));
}

inline scatter::GridPtr gl_grid(std::vector<double> ks = {0.06, 0.1}, int nt = 4, int np = 4) {
  return std::make_shared<const scatter::ShellGrid>(scatter::ShellGrid::gauss_legendre(ks, nt, np));
}

/// Smooth direction- and k-dependent weights with a small random jitter so
/// that p is injective.
inline std::vector<double> anisotropic_probs(const scatter::ShellGrid& g, std::uint64_t seed = 3) {
  Rng rng(seed);
  std::vector<double> p(static_cast<std::size_t>(g.size()));
  double total = 0.0;
  for (Index i = 0; i < g.size(); ++i) {
    const auto& n = g.node(i);
    const double w = (1.0 + 0.6 * n.direction.z() + 0.3 * n.direction.x()) * (1.0 + 5.0 * n.k) *
                     (1.0 + 0.2 * rng.uniform());
    p[static_cast<std::size_t>(i)] = w;
    total += w;
  }
  for (auto& x : p) x /= total;
  return p;
}

inline scatter::PhotonDistribution anisotropic(const scatter::GridPtr& g, double dx = 1.0, std::uint64_t seed = 3) {
  return {g, anisotropic_probs(*g, seed), dx};
}

}  // namespace sbs::fixtures

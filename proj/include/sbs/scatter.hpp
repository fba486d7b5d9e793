#pragma once

// Discretized momentum-shell model of the photon environment.
//
// Photons are scalar plane waves |k> on a finite set of directions per
// wavenumber shell. The sphere displacement dx points along +z, so the
// scattering angle Theta of a node is the polar angle of its direction.

#include <algorithm>
#include <cmath>
#include <limits>
#include <cstdint>
#include <istream>
#include <memory>
#include <numbers>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/special_functions/legendre.hpp>

#include "sbs/errors.hpp"
#include "sbs/qmath.hpp"
#include "sbs/random.hpp"

namespace sbs::scatter {

using Vec3 = Eigen::Vector3d;

// ---------------------------------------------------------------------------
// geometry

class ScatteringGeometry {
 public:
  /// radius a, relative permittivity epsilon, displacement dx, box edge L,
  /// photon density N/V and light speed c, in any consistent unit system.
  ScatteringGeometry(double radius, double permittivity, double displacement, double box_edge,
                     double density, double light_speed)
      : radius_(radius),
        permittivity_(permittivity),
        displacement_(displacement),
        box_edge_(box_edge),
        density_(density),
        light_speed_(light_speed) {
    if (!(radius > 0.0)) throw ValidationError("geometry.a: radius must be > 0");
    if (!(permittivity > 0.0)) throw ValidationError("geometry.epsilon: permittivity must be > 0");
    if (!(displacement >= 0.0)) throw ValidationError("geometry.dx: displacement must be >= 0");
    if (!(box_edge > 0.0)) throw ValidationError("geometry.L: box edge must be > 0");
    if (!(density > 0.0)) throw ValidationError("geometry.density: N/V must be > 0");
    if (!(light_speed > 0.0)) throw ValidationError("geometry.c: light speed must be > 0");
  }

  double radius() const noexcept { return radius_; }
  double permittivity() const noexcept { return permittivity_; }
  double displacement() const noexcept { return displacement_; }
  double box_edge() const noexcept { return box_edge_; }
  double density() const noexcept { return density_; }
  double light_speed() const noexcept { return light_speed_; }

  /// a~ = a [(eps - 1)/(eps + 2)]^{1/3}; negative for eps < 1, only a~^6 enters.
  double effective_radius() const noexcept {
    return radius_ * std::cbrt((permittivity_ - 1.0) / (permittivity_ + 2.0));
  }

  ScatteringGeometry with_displacement(double dx) const {
    return {radius_, permittivity_, dx, box_edge_, density_, light_speed_};
  }
  ScatteringGeometry with_box_edge(double L) const {
    return {radius_, permittivity_, displacement_, L, density_, light_speed_};
  }

 private:
  double radius_;
  double permittivity_;
  double displacement_;
  double box_edge_;
  double density_;
  double light_speed_;
};

// ---------------------------------------------------------------------------
// soft-scattering guard

struct SoftThresholds {
  double warn = 0.1;
  double error = 0.5;
};

enum class SoftRegime { ok, warn };

/// Classifies k*dx; throws RegimeError above the hard threshold.
inline SoftRegime check_soft(double kdx, const SoftThresholds& thr) {
  if (kdx > thr.error) {
    std::ostringstream os;
    os << "soft-scattering regime violated: k*dx = " << kdx << " > " << thr.error;
    throw RegimeError(os.str());
  }
  return kdx > thr.warn ? SoftRegime::warn : SoftRegime::ok;
}

// ---------------------------------------------------------------------------
// shell grid

struct ShellNode {
  double k = 0.0;
  Vec3 direction = Vec3::UnitZ();
  /// Solid-angle quadrature weight; weights of one shell sum to 4 pi.
  double weight = 0.0;
};

struct Shell {
  double k = 0.0;
  Index begin = 0;
  Index count = 0;
};

class ShellGrid {
 public:
  /// Nodes must be ordered by non-decreasing k; nodes whose k agree to a
  /// relative 1e-12 form one elastic shell.
  explicit ShellGrid(std::vector<ShellNode> nodes) : nodes_(std::move(nodes)) {
    if (nodes_.empty()) throw ValidationError("ShellGrid: no nodes");
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      auto& n = nodes_[i];
      if (!(n.k > 0.0)) throw ValidationError("ShellGrid: wavenumbers must be > 0");
      const double len = n.direction.norm();
      if (!(len > 0.0)) throw ValidationError("ShellGrid: zero direction vector");
      n.direction /= len;
      if (i > 0 && n.k < nodes_[i - 1].k) throw ValidationError("ShellGrid: nodes not sorted by wavenumber");
    }
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      const auto idx = static_cast<Index>(i);
      if (shells_.empty() || std::abs(nodes_[i].k - shells_.back().k) > 1e-12 * shells_.back().k) {
        shells_.push_back({nodes_[i].k, idx, 0});
      }
      nodes_[i].k = shells_.back().k;
      ++shells_.back().count;
    }
    shell_of_.resize(nodes_.size());
    for (std::size_t s = 0; s < shells_.size(); ++s)
      for (Index i = shells_[s].begin; i < shells_[s].begin + shells_[s].count; ++i)
        shell_of_[static_cast<std::size_t>(i)] = static_cast<Index>(s);
    for (auto& sh : shells_) {
      double w = 0.0;
      for (Index i = sh.begin; i < sh.begin + sh.count; ++i) w += nodes_[static_cast<std::size_t>(i)].weight;
      if (!(w > 0.0))
        for (Index i = sh.begin; i < sh.begin + sh.count; ++i)
          nodes_[static_cast<std::size_t>(i)].weight = 4.0 * std::numbers::pi / static_cast<double>(sh.count);
    }
  }

  /// Gauss-Legendre nodes in cos(Theta) times a uniform azimuth grid, per shell.
  static ShellGrid gauss_legendre(const std::vector<double>& ks, int n_theta = 8, int n_phi = 8);

  /// The 26 normalized nearest-neighbour directions of a cubic lattice, per shell.
  /// Uniform weights reproduce isotropic second moments exactly.
  static ShellGrid cube26(const std::vector<double>& ks);

  Index size() const noexcept { return static_cast<Index>(nodes_.size()); }
  const ShellNode& node(Index i) const { return nodes_.at(static_cast<std::size_t>(i)); }
  const std::vector<ShellNode>& nodes() const noexcept { return nodes_; }
  const std::vector<Shell>& shells() const noexcept { return shells_; }
  Index shell_of(Index i) const { return shell_of_.at(static_cast<std::size_t>(i)); }
  /// Omega_k: number of directions on the shell containing node i.
  Index degeneracy(Index i) const { return shells_[static_cast<std::size_t>(shell_of(i))].count; }

  double cos_theta(Index i) const { return node(i).direction.z(); }
  Vec3 wavevector(Index i) const { return node(i).k * node(i).direction; }

  /// Shell index with wavenumber k (relative 1e-12), or -1.
  Index find_shell(double k) const {
    for (std::size_t s = 0; s < shells_.size(); ++s)
      if (std::abs(shells_[s].k - k) <= 1e-12 * std::max(k, shells_[s].k)) return static_cast<Index>(s);
    return -1;
  }

 private:
  std::vector<ShellNode> nodes_;
  std::vector<Shell> shells_;
  std::vector<Index> shell_of_;
};

using GridPtr = std::shared_ptr<const ShellGrid>;

namespace detail {

/// Gauss-Legendre nodes and weights on [-1, 1], ascending.
inline void gauss_legendre_rule(int n, std::vector<double>& x, std::vector<double>& w) {
  if (n < 1) throw ValidationError("Gauss-Legendre rule needs at least one node");
  const auto zeros = boost::math::legendre_p_zeros<double>(n);
  // Boost returns the non-negative zeros (including 0 for odd n).
  x.clear();
  for (double z : zeros) {
    x.push_back(z);
    if (z > 0.0) x.push_back(-z);
  }
  std::sort(x.begin(), x.end());
  w.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dp = boost::math::legendre_p_prime(n, x[i]);
    w[i] = 2.0 / ((1.0 - x[i] * x[i]) * dp * dp);
  }
}

inline void check_wavenumbers(const std::vector<double>& ks) {
  if (ks.empty()) throw ValidationError("ShellGrid: no wavenumbers");
  for (std::size_t i = 0; i < ks.size(); ++i) {
    if (!(ks[i] > 0.0)) throw ValidationError("ShellGrid: wavenumbers must be > 0");
    if (i > 0 && !(ks[i] > ks[i - 1])) throw ValidationError("ShellGrid: wavenumbers must be strictly increasing");
  }
}

}  // namespace detail

inline ShellGrid ShellGrid::gauss_legendre(const std::vector<double>& ks, int n_theta, int n_phi) {
  detail::check_wavenumbers(ks);
  if (n_phi < 1) throw ValidationError("ShellGrid: n_phi must be >= 1");
  std::vector<double> x;
  std::vector<double> w;
  detail::gauss_legendre_rule(n_theta, x, w);
  std::vector<ShellNode> nodes;
  nodes.reserve(ks.size() * x.size() * static_cast<std::size_t>(n_phi));
  const double dphi = 2.0 * std::numbers::pi / n_phi;
  for (double k : ks)
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double sin_t = std::sqrt(std::max(0.0, 1.0 - x[i] * x[i]));
      for (int j = 0; j < n_phi; ++j) {
        const double phi = dphi * (j + 0.5);
        nodes.push_back({k, Vec3(sin_t * std::cos(phi), sin_t * std::sin(phi), x[i]), w[i] * dphi});
      }
    }
  return ShellGrid(std::move(nodes));
}

inline ShellGrid ShellGrid::cube26(const std::vector<double>& ks) {
  detail::check_wavenumbers(ks);
  std::vector<ShellNode> nodes;
  const double w = 4.0 * std::numbers::pi / 26.0;
  for (double k : ks)
    for (int a = -1; a <= 1; ++a)
      for (int b = -1; b <= 1; ++b)
        for (int c = -1; c <= 1; ++c) {
          if (a == 0 && b == 0 && c == 0) continue;
          nodes.push_back({k, Vec3(a, b, c).normalized(), w});
        }
  return ShellGrid(std::move(nodes));
}

// ---------------------------------------------------------------------------
// photon distributions

class PhotonDistribution {
 public:
  /// Probabilities must be non-negative and sum to 1 within 1e-9; they are
  /// renormalized exactly. The support is checked against the soft-scattering
  /// thresholds for displacement dx.
  PhotonDistribution(GridPtr grid, std::vector<double> probs, double dx, const SoftThresholds& thr = {})
      : grid_(std::move(grid)), probs_(std::move(probs)) {
    if (!grid_) throw ValidationError("PhotonDistribution: null grid");
    if (static_cast<Index>(probs_.size()) != grid_->size()) {
      std::ostringstream os;
      os << "PhotonDistribution: " << probs_.size() << " probabilities for " << grid_->size() << " grid nodes";
      throw ShapeError(os.str());
    }
    double total = 0.0;
    for (std::size_t i = 0; i < probs_.size(); ++i) {
      if (!(probs_[i] >= 0.0)) {
        std::ostringstream os;
        os << "PhotonDistribution: probability at node " << i << " is negative or NaN";
        throw ValidationError(os.str());
      }
      total += probs_[i];
    }
    if (std::abs(total - 1.0) > 1e-9) {
      std::ostringstream os;
      os << "PhotonDistribution: probabilities sum to " << total;
      throw ValidationError(os.str());
    }
    for (double& p : probs_) p /= total;
    for (Index i = 0; i < grid_->size(); ++i)
      if (probs_[static_cast<std::size_t>(i)] > 0.0) max_k_ = std::max(max_k_, grid_->node(i).k);
    soft_score_ = max_k_ * dx;
    regime_ = check_soft(soft_score_, thr);
  }

  const ShellGrid& grid() const noexcept { return *grid_; }
  const GridPtr& grid_ptr() const noexcept { return grid_; }
  const std::vector<double>& probs() const noexcept { return probs_; }
  double prob(Index i) const { return probs_.at(static_cast<std::size_t>(i)); }
  Index size() const noexcept { return grid_->size(); }

  /// Largest wavenumber carrying probability.
  double max_k() const noexcept { return max_k_; }
  /// max(k dx) over the support at construction.
  double soft_score() const noexcept { return soft_score_; }
  SoftRegime regime() const noexcept { return regime_; }

  double mean_k() const {
    double m = 0.0;
    for (Index i = 0; i < size(); ++i) m += probs_[static_cast<std::size_t>(i)] * grid_->node(i).k;
    return m;
  }

  /// True when two nodes of a shell touched by the support carry equal
  /// probability (relative 1e-12), i.e. p is not injective there.
  bool degenerate() const {
    for (const auto& sh : grid_->shells()) {
      std::vector<double> ps;
      bool touched = false;
      for (Index i = sh.begin; i < sh.begin + sh.count; ++i) {
        ps.push_back(probs_[static_cast<std::size_t>(i)]);
        touched = touched || ps.back() > 0.0;
      }
      if (!touched) continue;
      std::sort(ps.begin(), ps.end());
      for (std::size_t j = 1; j < ps.size(); ++j)
        if (ps[j] - ps[j - 1] <= 1e-12 * ps[j]) return true;
    }
    return false;
  }

 private:
  GridPtr grid_;
  std::vector<double> probs_;
  double max_k_ = 0.0;
  double soft_score_ = 0.0;
  SoftRegime regime_ = SoftRegime::ok;
};

/// All mass on the node at (k0, cos Theta, phi).
struct PointSpec {
  double k0 = 0.0;
  double cos_theta = 1.0;
  double phi = 0.0;
};

/// p(k) = delta(k - k0), uniform over the Omega_k directions of the shell.
struct IsotropicMonochromaticSpec {
  double k0 = 0.0;
};

enum class DirectionSet { cube26, gauss_legendre };

/// Planck-shaped number spectrum p(k) ~ k^2 / (exp(k/k_T) - 1) on (0, k_max],
/// discretized at Gauss-Legendre nodes in k, isotropic on each shell.
struct ThermalSpec {
  double k_thermal = 0.0;
  double k_max = 0.0;
  int n_k = 16;
  DirectionSet directions = DirectionSet::cube26;
};

struct CustomSpec {
  std::vector<double> probs;
};

using DistributionSpec = std::variant<PointSpec, IsotropicMonochromaticSpec, ThermalSpec, CustomSpec>;

namespace detail {

inline double planck_number_density(double k, double k_thermal) {
  return k * k / std::expm1(k / k_thermal);
}

inline Index find_node(const ShellGrid& grid, double k0, double cos_theta, double phi) {
  const Index s = grid.find_shell(k0);
  if (s < 0) {
    std::ostringstream os;
    os << "point distribution: no shell at k = " << k0;
    throw ValidationError(os.str());
  }
  const double st = std::sqrt(std::max(0.0, 1.0 - cos_theta * cos_theta));
  const Vec3 want(st * std::cos(phi), st * std::sin(phi), cos_theta);
  const auto& sh = grid.shells()[static_cast<std::size_t>(s)];
  for (Index i = sh.begin; i < sh.begin + sh.count; ++i)
    if ((grid.node(i).direction - want).norm() < 1e-9) return i;
  std::ostringstream os;
  os << "point distribution: direction (cos_theta=" << cos_theta << ", phi=" << phi << ") is not a grid node";
  throw ValidationError(os.str());
}

}  // namespace detail

/// Builds a distribution. `grid` may be null for point/isotropic kinds (a
/// cube26 shell at k0 is used) and is ignored for the thermal kind, which
/// builds its own grid.
inline PhotonDistribution make_distribution(const DistributionSpec& spec, GridPtr grid, const ScatteringGeometry& geom,
                                            const SoftThresholds& thr = {}) {
  const double dx = geom.displacement();
  return std::visit(
      [&](const auto& s) -> PhotonDistribution {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, PointSpec>) {
          if (!(s.k0 > 0.0)) throw ValidationError("point distribution: k0 must be > 0");
          GridPtr g = grid ? grid : std::make_shared<const ShellGrid>(ShellGrid::cube26({s.k0}));
          std::vector<double> p(static_cast<std::size_t>(g->size()), 0.0);
          p[static_cast<std::size_t>(detail::find_node(*g, s.k0, s.cos_theta, s.phi))] = 1.0;
          return PhotonDistribution(g, std::move(p), dx, thr);
        } else if constexpr (std::is_same_v<T, IsotropicMonochromaticSpec>) {
          if (!(s.k0 > 0.0)) throw ValidationError("isotropic distribution: k0 must be > 0");
          GridPtr g = grid ? grid : std::make_shared<const ShellGrid>(ShellGrid::cube26({s.k0}));
          const Index sh = g->find_shell(s.k0);
          if (sh < 0) throw ValidationError("isotropic distribution: no shell at k0");
          const auto& shell = g->shells()[static_cast<std::size_t>(sh)];
          std::vector<double> p(static_cast<std::size_t>(g->size()), 0.0);
          for (Index i = shell.begin; i < shell.begin + shell.count; ++i)
            p[static_cast<std::size_t>(i)] = 1.0 / static_cast<double>(shell.count);
          return PhotonDistribution(g, std::move(p), dx, thr);
        } else if constexpr (std::is_same_v<T, ThermalSpec>) {
          if (!(s.k_thermal > 0.0)) throw ValidationError("thermal distribution: k_T must be > 0");
          if (!(s.k_max > 0.0)) throw ValidationError("thermal distribution: k_max must be > 0");
          if (s.n_k < 1) throw ValidationError("thermal distribution: n_k must be >= 1");
          check_soft(s.k_max * dx, thr);
          std::vector<double> x;
          std::vector<double> w;
          detail::gauss_legendre_rule(s.n_k, x, w);
          std::vector<double> ks(x.size());
          std::vector<double> pk(x.size());
          for (std::size_t j = 0; j < x.size(); ++j) {
            ks[j] = 0.5 * s.k_max * (x[j] + 1.0);
            pk[j] = 0.5 * s.k_max * w[j] * detail::planck_number_density(ks[j], s.k_thermal);
          }
          double total = 0.0;
          for (double v : pk) total += v;
          auto g = std::make_shared<const ShellGrid>(s.directions == DirectionSet::cube26 ? ShellGrid::cube26(ks)
                                                                                      : ShellGrid::gauss_legendre(ks));
          std::vector<double> p(static_cast<std::size_t>(g->size()));
          for (Index i = 0; i < g->size(); ++i) {
            const auto sh = static_cast<std::size_t>(g->shell_of(i));
            p[static_cast<std::size_t>(i)] = pk[sh] / total / static_cast<double>(g->degeneracy(i));
          }
          return PhotonDistribution(g, std::move(p), dx, thr);
        } else {
          if (!grid) throw ValidationError("custom distribution: a grid is required");
          return PhotonDistribution(grid, s.probs, dx, thr);
        }
      },
      spec);
}

/// Reads "k_magnitude,cos_theta,phi,prob" rows (header required). Rows are
/// grouped into shells by wavenumber; probabilities must already be normalized.
inline PhotonDistribution read_distribution_csv(std::istream& in, double dx, const SoftThresholds& thr = {}) {
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("distribution CSV: empty input");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);
  if (line != "k_magnitude,cos_theta,phi,prob")
    throw ValidationError("distribution CSV: header must be 'k_magnitude,cos_theta,phi,prob', got '" + line + "'");

  struct Row {
    double k, ct, phi, p;
  };
  std::vector<Row> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream ls(line);
    Row r{};
    char c1 = 0, c2 = 0, c3 = 0;
    if (!(ls >> r.k >> c1 >> r.ct >> c2 >> r.phi >> c3 >> r.p) || c1 != ',' || c2 != ',' || c3 != ',') {
      std::ostringstream os;
      os << "distribution CSV: cannot parse line " << lineno;
      throw ValidationError(os.str());
    }
    if (std::abs(r.ct) > 1.0) {
      std::ostringstream os;
      os << "distribution CSV: |cos_theta| > 1 on line " << lineno;
      throw ValidationError(os.str());
    }
    rows.push_back(r);
  }
  if (rows.empty()) throw ValidationError("distribution CSV: no data rows");
  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.k < b.k; });
  std::vector<ShellNode> nodes;
  std::vector<double> probs;
  for (const auto& r : rows) {
    const double st = std::sqrt(std::max(0.0, 1.0 - r.ct * r.ct));
    nodes.push_back({r.k, Vec3(st * std::cos(r.phi), st * std::sin(r.phi), r.ct), 0.0});
    probs.push_back(r.p);
  }
  return PhotonDistribution(std::make_shared<const ShellGrid>(std::move(nodes)), std::move(probs), dx, thr);
}

// ---------------------------------------------------------------------------
// dipole scattering

/// Small-displacement coefficients of <k|S2^dagger S1|k> for one node:
/// the element is 1 + i*phase - damping, both O(1/L^2).
struct DipoleTerms {
  double phase = 0.0;    // (8 pi dx k^5 a~^6 / 3 L^2) cos Theta
  double damping = 0.0;  // (2 pi dx^2 k^6 a~^6 / 15 L^2)(3 + 11 cos^2 Theta)
};

inline DipoleTerms dipole_terms(double k, double cos_theta, const ScatteringGeometry& geom) {
  const double dx = geom.displacement();
  const double at6 = std::pow(geom.effective_radius(), 6);
  const double L2 = geom.box_edge() * geom.box_edge();
  const double k5 = std::pow(k, 5);
  return {8.0 * std::numbers::pi * dx * k5 * at6 / (3.0 * L2) * cos_theta,
          2.0 * std::numbers::pi * dx * dx * k5 * k * at6 / (15.0 * L2) * (3.0 + 11.0 * cos_theta * cos_theta)};
}

/// <k|S2^dagger S1|k> in the soft-scattering regime for angle Theta to dx.
inline cplx dipole_element(double k, double cos_theta, const ScatteringGeometry& geom,
                           const SoftThresholds& thr = {}) {
  if (!(k > 0.0)) throw ValidationError("dipole_element: k must be > 0");
  if (std::abs(cos_theta) > 1.0) throw ValidationError("dipole_element: |cos Theta| > 1");
  check_soft(k * geom.displacement(), thr);
  const auto t = dipole_terms(k, cos_theta, geom);
  const cplx value(1.0 - t.damping, t.phase);
  if (std::abs(value) > 1.0 + 1e-9) {
    std::ostringstream os;
    os << "dipole_element: |element| = " << std::abs(value) << " exceeds 1; box edge too small for this sphere";
    throw RegimeError(os.str());
  }
  return value;
}

// ---------------------------------------------------------------------------
// shell unitaries

enum class ShellLabel { S0, S1, S2, S1dagS2, S2dagS1 };

inline const char* to_string(ShellLabel l) {
  switch (l) {
    case ShellLabel::S0: return "S0";
    case ShellLabel::S1: return "S1";
    case ShellLabel::S2: return "S2";
    case ShellLabel::S1dagS2: return "S1dagS2";
    case ShellLabel::S2dagS1: return "S2dagS1";
  }
  return "?";
}

struct ShellUnitary {
  GridPtr grid;
  Matrix entries;
  ShellLabel label = ShellLabel::S0;

  Index size() const { return entries.rows(); }

  /// max |U^dagger U - 1|.
  double unitarity_defect() const {
    return (entries.adjoint() * entries - Matrix::Identity(size(), size())).cwiseAbs().maxCoeff();
  }

  /// Largest |entry| connecting different wavenumber shells.
  double inelastic_leak() const {
    double leak = 0.0;
    for (Index i = 0; i < size(); ++i)
      for (Index j = 0; j < size(); ++j)
        if (grid->shell_of(i) != grid->shell_of(j)) leak = std::max(leak, std::abs(entries(i, j)));
    return leak;
  }

  ShellUnitary adjoint() const {
    ShellLabel l = label;
    if (label == ShellLabel::S1dagS2) l = ShellLabel::S2dagS1;
    else if (label == ShellLabel::S2dagS1) l = ShellLabel::S1dagS2;
    return {grid, entries.adjoint(), l};
  }
};

struct RelativeUnitaryOptions {
  std::uint64_t seed = 0x5eedULL;
  SoftThresholds thresholds{};
  int refinement_steps = 12;
  /// Relative spread of the random off-diagonal magnitudes, in [0, 1).
  double magnitude_spread = 0.5;
};

namespace detail {

inline Matrix hermitian_exp_i(const Matrix& g) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (g + g.adjoint()));
  if (es.info() != Eigen::Success) throw Error("Hermitian eigensolver did not converge");
  Vector ph(es.eigenvalues().size());
  for (Index i = 0; i < ph.size(); ++i) ph(i) = std::polar(1.0, es.eigenvalues()(i));
  return es.eigenvectors() * ph.asDiagonal() * es.eigenvectors().adjoint();
}

/// Positive s with sum_{j != i} s_i s_j R_ij = r_i (symmetric matrix scaling).
inline bool symmetric_scaling(const Eigen::MatrixXd& R, const Eigen::VectorXd& r, Eigen::VectorXd& s) {
  const Index n = r.size();
  s = Eigen::VectorXd::Zero(n);
  const double total = r.sum();
  if (total <= 0.0) return true;
  for (Index i = 0; i < n; ++i) s(i) = r(i) > 0.0 ? std::sqrt(r(i) / std::max<Index>(n - 1, 1)) : 0.0;
  for (int it = 0; it < 20000; ++it) {
    const Eigen::VectorXd rs = R * s;
    double worst = 0.0;
    for (Index i = 0; i < n; ++i) {
      const double got = s(i) * rs(i);
      worst = std::max(worst, std::abs(got - r(i)));
    }
    if (worst <= 1e-15 * total) return true;
    for (Index i = 0; i < n; ++i) s(i) = rs(i) > 0.0 ? std::sqrt(s(i) * r(i) / rs(i)) : 0.0;
  }
  const Eigen::VectorXd rs = R * s;
  double worst = 0.0;
  for (Index i = 0; i < n; ++i) worst = std::max(worst, std::abs(s(i) * rs(i) - r(i)));
  return worst <= 1e-10 * total;
}

}  // namespace detail

/// Explicit S2^dagger S1 on the grid: block diagonal over shells (elastic),
/// exactly unitary, diagonal equal to dipole_element, off-diagonal row norms
/// fixed by unitarity. Off-diagonal magnitudes and phases are drawn from a
/// seeded stream, so the result is reproducible.
inline ShellUnitary build_relative_unitary(const GridPtr& grid, const ScatteringGeometry& geom,
                                           const RelativeUnitaryOptions& opt = {}) {
  if (!grid || grid->size() == 0) throw ValidationError("build_relative_unitary: empty grid");
  const Index n = grid->size();
  Matrix U = Matrix::Identity(n, n);
  const double L2 = geom.box_edge() * geom.box_edge();
  double max_kdx = 0.0;
  for (const auto& sh : grid->shells()) max_kdx = std::max(max_kdx, sh.k * geom.displacement());
  const double tolerance = 10.0 * max_kdx * max_kdx * max_kdx / L2;

  for (std::size_t s = 0; s < grid->shells().size(); ++s) {
    const auto& sh = grid->shells()[s];
    const Index m = sh.count;
    Vector target(m);
    for (Index i = 0; i < m; ++i) target(i) = dipole_element(sh.k, grid->cos_theta(sh.begin + i), geom, opt.thresholds);
    if ((target.array() - cplx(1.0)).abs().maxCoeff() == 0.0) continue;  // no displacement: identity block

    Rng rng = Rng::stream(opt.seed, s);
    Eigen::MatrixXd R = Eigen::MatrixXd::Zero(m, m);
    Eigen::MatrixXd phase = Eigen::MatrixXd::Zero(m, m);
    for (Index i = 0; i < m; ++i)
      for (Index j = i + 1; j < m; ++j) {
        R(i, j) = R(j, i) = 1.0 + opt.magnitude_spread * (2.0 * rng.uniform() - 1.0);
        phase(i, j) = 2.0 * std::numbers::pi * rng.uniform();
        phase(j, i) = -phase(i, j);
      }

    Eigen::VectorXd diag_gen(m);
    Eigen::VectorXd row_norm2(m);
    for (Index i = 0; i < m; ++i) {
      const auto t = dipole_terms(sh.k, grid->cos_theta(sh.begin + i), geom);
      diag_gen(i) = t.phase;
      row_norm2(i) = 2.0 * t.damping - t.phase * t.phase;
      if (row_norm2(i) < 0.0) {
        std::ostringstream os;
        os << "build_relative_unitary: node " << sh.begin + i << " (k=" << sh.k
           << ") needs negative off-diagonal weight; |dipole element| > 1";
        throw CalibrationError(os.str());
      }
      if (m == 1 && row_norm2(i) > 0.0) {
        std::ostringstream os;
        os << "build_relative_unitary: node " << sh.begin
           << " is alone on its shell; unitarity leaves no room for the dipole damping";
        throw CalibrationError(os.str());
      }
    }

    // below this the block is the identity to working precision and
    // refinement would only feed rounding noise into the weights
    const bool refine = row_norm2.maxCoeff() > 64.0 * std::numeric_limits<double>::epsilon();
    Matrix block;
    for (int step = 0; step <= opt.refinement_steps; ++step) {
      Eigen::VectorXd scale;
      if (!detail::symmetric_scaling(R, row_norm2, scale)) {
        Index worst = 0;
        row_norm2.maxCoeff(&worst);
        std::ostringstream os;
        os << "build_relative_unitary: off-diagonal weights infeasible on shell k=" << sh.k << " (node "
           << sh.begin + worst << " dominates its shell)";
        throw CalibrationError(os.str());
      }
      Matrix G = Matrix::Zero(m, m);
      for (Index i = 0; i < m; ++i) {
        G(i, i) = diag_gen(i);
        for (Index j = 0; j < m; ++j)
          if (i != j) G(i, j) = std::polar(std::sqrt(scale(i) * scale(j) * R(i, j)), phase(i, j));
      }
      block = detail::hermitian_exp_i(G);
      if (step == opt.refinement_steps || !refine) break;
      double worst = 0.0;
      for (Index i = 0; i < m; ++i) {
        const cplx e = block(i, i) - target(i);
        worst = std::max(worst, std::abs(e));
        diag_gen(i) -= e.imag();
        row_norm2(i) = std::max(0.0, row_norm2(i) + 2.0 * e.real());
      }
      if (worst <= 4.0 * std::numeric_limits<double>::epsilon()) break;
    }

    for (Index i = 0; i < m; ++i) {
      const double err = std::abs(block(i, i) - target(i));
      if (err > tolerance) {
        std::ostringstream os;
        os << "build_relative_unitary: calibration mismatch " << err << " at node " << sh.begin + i
           << " exceeds " << tolerance;
        throw CalibrationError(os.str());
      }
    }
    U.block(sh.begin, sh.begin, m, m) = block;
  }
  return {grid, std::move(U), ShellLabel::S2dagS1};
}

/// e^{-i x.k} S e^{i x.k}: entry (k, k') picks up exp(-i x.(k - k')).
inline ShellUnitary translate_conjugate(const ShellUnitary& s0, const Vec3& x, ShellLabel label = ShellLabel::S1) {
  ShellUnitary out{s0.grid, s0.entries, label};
  if (x.isZero(0.0)) return out;
  const Index n = s0.size();
  for (Index i = 0; i < n; ++i) {
    const Vec3 ki = s0.grid->wavevector(i);
    for (Index j = 0; j < n; ++j) {
      if (i == j) continue;
      out.entries(i, j) *= std::polar(1.0, -x.dot(ki - s0.grid->wavevector(j)));
    }
  }
  return out;
}

}  // namespace sbs::scatter

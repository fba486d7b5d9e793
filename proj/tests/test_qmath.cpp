#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include "sbs/qmath.hpp"
#include "sbs/random.hpp"
#include "support/oracles.hpp"

using namespace sbs;

namespace {

Matrix diag(std::initializer_list<double> v) {
  Matrix m = Matrix::Zero(static_cast<Index>(v.size()), static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) m(i, i) = x, ++i;
  return m;
}

DensityMatrix random_state(Index d, Rng& rng, Index rank = -1) {
  return DensityMatrix(random_density_matrix(d, rng, rank));
}

Vector bell() {
  Vector v = Vector::Zero(4);
  v(0) = v(3) = 1.0 / std::sqrt(2.0);
  return v;
}

}  // namespace

TEST(DensityMatrixValidation, RejectsNonHermitian) {
  Matrix m = diag({0.5, 0.5});
  m(0, 1) = 0.3;
  EXPECT_THROW(DensityMatrix{m}, ValidationError);
}

TEST(DensityMatrixValidation, RejectsWrongTrace) { EXPECT_THROW(DensityMatrix{diag({0.5, 0.6})}, ValidationError); }

TEST(DensityMatrixValidation, RejectsNegativeEigenvalue) {
  EXPECT_THROW(DensityMatrix{diag({1.1, -0.1})}, ValidationError);
}

TEST(DensityMatrixValidation, RejectsNonSquare) { EXPECT_THROW(DensityMatrix{Matrix::Zero(2, 3)}, ShapeError); }

TEST(DensityMatrixValidation, ToleratesTinyNegativity) { EXPECT_NO_THROW(DensityMatrix{diag({1.0 + 1e-10, -1e-10})}); }

TEST(TraceNorm, Identity) { EXPECT_DOUBLE_EQ(trace_norm(Matrix::Identity(2, 2)), 2.0); }

TEST(TraceNorm, SignedDiagonal) { EXPECT_NEAR(trace_norm(diag({1.0, -1.0})), 2.0, 1e-15); }

TEST(TraceNorm, NonSquareIsShapeError) { EXPECT_THROW(trace_norm(Matrix::Zero(2, 3)), ShapeError); }

TEST(TraceNorm, MatchesJacobiSvdOnRandom4x4) {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    Matrix m(4, 4);
    for (Index i = 0; i < 16; ++i) m(i) = rng.complex_normal();
    EXPECT_NEAR(trace_norm(m), ref::trace_norm_jacobi(m), 1e-10);
  }
}

TEST(TraceNorm, TriangleInequality) {
  Rng rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    Matrix a(3, 3), b(3, 3);
    for (Index i = 0; i < 9; ++i) a(i) = rng.complex_normal(), b(i) = rng.complex_normal();
    EXPECT_LE(trace_norm(a + b), trace_norm(a) + trace_norm(b) + 1e-9);
  }
}

TEST(GeneralizedOverlap, SelfOverlapIsOne) {
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const auto r = random_state(3, rng);
    EXPECT_NEAR(generalized_overlap(r, r), 1.0, 1e-10);
  }
}

TEST(GeneralizedOverlap, OrthogonalPureStatesGiveZero) {
  const auto a = DensityMatrix::pure(Vector::Unit(2, 0));
  const auto b = DensityMatrix::pure(Vector::Unit(2, 1));
  EXPECT_NEAR(generalized_overlap(a, b), 0.0, 1e-12);
}

TEST(GeneralizedOverlap, PureStatesGiveAmplitudeModulus) {
  Rng rng(22);
  for (int trial = 0; trial < 50; ++trial) {
    const Vector u = random_pure_vector(4, rng);
    const Vector v = random_pure_vector(4, rng);
    EXPECT_NEAR(generalized_overlap(DensityMatrix::pure(u), DensityMatrix::pure(v)), std::abs(u.dot(v)), 1e-10);
  }
}

TEST(GeneralizedOverlap, SymmetricAndBounded) {
  Rng rng(23);
  for (int trial = 0; trial < 200; ++trial) {
    const auto a = random_state(3, rng, 1 + trial % 3);
    const auto b = random_state(3, rng);
    const double ab = generalized_overlap(a, b);
    EXPECT_NEAR(ab, generalized_overlap(b, a), 1e-10);
    EXPECT_GE(ab, 0.0);
    EXPECT_LE(ab, 1.0);
    EXPECT_LT(ab, 1.0 - 1e-8);
  }
}

TEST(GeneralizedOverlap, Multiplicative) {
  Rng rng(24);
  for (int trial = 0; trial < 50; ++trial) {
    const auto a = random_state(2, rng), b = random_state(2, rng);
    const auto c = random_state(3, rng), d = random_state(3, rng);
    const double lhs = generalized_overlap(DensityMatrix(kron(a.matrix(), c.matrix())),
                                           DensityMatrix(kron(b.matrix(), d.matrix())));
    EXPECT_NEAR(lhs, generalized_overlap(a, b) * generalized_overlap(c, d), 1e-9);
  }
}

TEST(GeneralizedOverlap, DimensionMismatch) {
  EXPECT_THROW(generalized_overlap(DensityMatrix::maximally_mixed(2), DensityMatrix::maximally_mixed(3)), ShapeError);
}

TEST(PartialTrace, ProductStateKeepsFactor) {
  Rng rng(31);
  const auto a = random_state(2, rng);
  const auto b = random_state(3, rng);
  const std::array<Index, 2> dims{2, 3};
  const std::array<Index, 1> keep_a{0}, keep_b{1};
  const Matrix ab = kron(a.matrix(), b.matrix());
  EXPECT_LT((partial_trace(ab, dims, keep_a) - a.matrix()).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_LT((partial_trace(ab, dims, keep_b) - b.matrix()).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(PartialTrace, BellStateMarginalsAreMaximallyMixed) {
  const auto rho = DensityMatrix::pure(bell());
  const std::array<Index, 2> dims{2, 2};
  for (Index k : {0, 1}) {
    const std::array<Index, 1> keep{k};
    EXPECT_LT((partial_trace(rho, dims, keep).matrix() - diag({0.5, 0.5})).cwiseAbs().maxCoeff(), 1e-15);
  }
}

TEST(PartialTrace, TwoOrdersAgreeOnTripartite) {
  Rng rng(32);
  const Matrix rho = random_density_matrix(12, rng);
  const std::array<Index, 3> dims{2, 3, 2};
  // direct: keep A
  const std::array<Index, 1> keep_a{0};
  const Matrix direct = partial_trace(rho, dims, keep_a);
  // trace C first, then B
  const std::array<Index, 2> keep_ab{0, 1};
  const std::array<Index, 2> dims_ab{2, 3};
  const Matrix via_c = partial_trace(partial_trace(rho, dims, keep_ab), dims_ab, keep_a);
  // trace B first, then C
  const std::array<Index, 2> keep_ac{0, 2};
  const std::array<Index, 2> dims_ac{2, 2};
  const Matrix via_b = partial_trace(partial_trace(rho, dims, keep_ac), dims_ac, keep_a);
  EXPECT_LT((direct - via_c).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((direct - via_b).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_NEAR(direct.trace().real(), 1.0, 1e-12);
}

TEST(PartialTrace, KeepsSubsystemOrder) {
  Rng rng(33);
  const auto a = random_state(2, rng), b = random_state(3, rng), c = random_state(2, rng);
  const Matrix abc = kron(kron(a.matrix(), b.matrix()), c.matrix());
  const std::array<Index, 3> dims{2, 3, 2};
  const std::array<Index, 2> keep{0, 2};
  EXPECT_LT((partial_trace(abc, dims, keep) - kron(a.matrix(), c.matrix())).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(PartialTrace, InconsistentDims) {
  const std::array<Index, 2> dims{2, 2};
  const std::array<Index, 1> keep{0};
  EXPECT_THROW(partial_trace(Matrix::Identity(6, 6) / 6.0, dims, keep), ShapeError);
}

TEST(Entropy, PureIsZero) {
  Rng rng(41);
  EXPECT_NEAR(von_neumann_entropy(DensityMatrix::pure(random_pure_vector(5, rng))), 0.0, 1e-12);
}

TEST(Entropy, MaximallyMixed) {
  for (Index d : {2, 3, 8}) EXPECT_NEAR(von_neumann_entropy(DensityMatrix::maximally_mixed(d)), std::log2(d), 1e-14);
}

TEST(Entropy, QuarterThreeQuarters) {
  const double h = -0.25 * std::log2(0.25) - 0.75 * std::log2(0.75);
  EXPECT_NEAR(von_neumann_entropy(DensityMatrix(diag({0.25, 0.75}))), h, 1e-14);
  EXPECT_NEAR(h, 0.811278, 1e-6);
}

TEST(Entropy, MatchesSchurRoute) {
  Rng rng(42);
  for (int trial = 0; trial < 30; ++trial) {
    const auto r = random_state(4, rng);
    EXPECT_NEAR(von_neumann_entropy(r), ref::entropy_schur(r.matrix()), 1e-10);
  }
}

TEST(MutualInformation, ProductIsZero) {
  Rng rng(51);
  const auto a = random_state(2, rng), b = random_state(3, rng);
  EXPECT_NEAR(mutual_information(DensityMatrix(kron(a.matrix(), b.matrix())), 2, 3), 0.0, 1e-10);
}

TEST(MutualInformation, BellIsTwoBits) {
  EXPECT_NEAR(mutual_information(DensityMatrix::pure(bell()), 2, 2), 2.0, 1e-12);
}

TEST(MutualInformation, ClassicalPerfectCorrelationIsOneBit) {
  EXPECT_NEAR(mutual_information(DensityMatrix(diag({0.5, 0, 0, 0.5})), 2, 2), 1.0, 1e-14);
  Eigen::MatrixXd joint(2, 2);
  joint << 0.5, 0, 0, 0.5;
  EXPECT_NEAR(ref::classical_mutual_information(joint), 1.0, 1e-14);
}

TEST(MutualInformation, BoundsOnRandomStates) {
  Rng rng(52);
  const std::array<Index, 2> dims{2, 3};
  const std::array<Index, 1> keep_a{0}, keep_b{1};
  for (int trial = 0; trial < 100; ++trial) {
    const auto r = random_state(6, rng, 1 + trial % 6);
    const double i = mutual_information(r, 2, 3);
    const double sa = von_neumann_entropy(partial_trace(r, dims, keep_a));
    const double sb = von_neumann_entropy(partial_trace(r, dims, keep_b));
    EXPECT_GE(i, -1e-9);
    EXPECT_LE(i, 2.0 * std::min(sa, sb) + 1e-9);
  }
}

TEST(MutualInformation, DimsMustMultiply) {
  EXPECT_THROW(mutual_information(DensityMatrix::maximally_mixed(4), 2, 3), ShapeError);
}

TEST(HolevoChi, IdenticalStatesGiveZero) {
  Rng rng(61);
  const auto r = random_state(3, rng);
  const std::array<double, 2> p{0.3, 0.7};
  const std::vector<DensityMatrix> s{r, r};
  EXPECT_NEAR(holevo_chi(p, s), 0.0, 1e-10);
}

TEST(HolevoChi, OrthogonalSupportsGiveShannon) {
  const std::array<double, 2> p{0.3, 0.7};
  const std::vector<DensityMatrix> s{DensityMatrix(diag({0.5, 0.5, 0, 0})), DensityMatrix(diag({0, 0, 0.2, 0.8}))};
  EXPECT_NEAR(holevo_chi(p, s), shannon_entropy(p), 1e-12);
}

TEST(HolevoChi, TwoPureQubitsClosedForm) {
  for (double theta : {0.1, 0.7, 1.3}) {
    Vector u(2), v(2);
    u << 1, 0;
    v << std::cos(theta), std::sin(theta);
    const std::array<double, 2> p{0.5, 0.5};
    const std::vector<DensityMatrix> s{DensityMatrix::pure(u), DensityMatrix::pure(v)};
    const double lp = 0.5 * (1 + std::cos(theta)), lm = 0.5 * (1 - std::cos(theta));
    EXPECT_NEAR(holevo_chi(p, s), -lp * std::log2(lp) - lm * std::log2(lm), 1e-12);
  }
}

TEST(HolevoChi, BoundedByShannonOnRandomEnsembles) {
  Rng rng(62);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> p(3);
    double tot = 0;
    for (auto& x : p) x = rng.uniform() + 1e-3, tot += x;
    for (auto& x : p) x /= tot;
    std::vector<DensityMatrix> s;
    for (int i = 0; i < 3; ++i) s.push_back(random_state(2, rng));
    const double chi = holevo_chi(p, s);
    EXPECT_GE(chi, -1e-10);
    EXPECT_LE(chi, shannon_entropy(p) + 1e-10);
  }
}

TEST(HolevoChi, LengthMismatch) {
  const std::array<double, 2> p{0.5, 0.5};
  const std::vector<DensityMatrix> s{DensityMatrix::maximally_mixed(2)};
  EXPECT_THROW(holevo_chi(p, s), ShapeError);
}

TEST(Random, StreamsAreReproducibleAndDistinct) {
  Rng a = Rng::stream(7, 0), b = Rng::stream(7, 0), c = Rng::stream(7, 1);
  const auto x = a.bits();
  EXPECT_EQ(x, b.bits());
  EXPECT_NE(x, c.bits());
}

TEST(Random, UnitaryIsUnitary) {
  Rng rng(71);
  const Matrix u = random_unitary(5, rng);
  EXPECT_LT((u.adjoint() * u - Matrix::Identity(5, 5)).cwiseAbs().maxCoeff(), 1e-12);
}

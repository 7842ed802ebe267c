#include <random>

#include <gtest/gtest.h>

#include <ntopo/amfilter.hpp>
#include <ntopo/oracle.hpp>

#include "grad_check.hpp"

using namespace ntopo;
using ntopo::testing::gradients;
using ntopo::testing::rel_err;

namespace {

DensityField random_field(std::mt19937_64 &rng, int nx, int ny, double lo, double hi) {
  DensityField f;
  f.nelx = nx;
  f.nely = ny;
  f.values = ntopo::testing::random_vector(rng, Eigen::Index(nx) * ny, lo, hi);
  return f;
}

DensityField binary_field(std::mt19937_64 &rng, int nx, int ny) {
  DensityField f = random_field(rng, nx, ny, 0.0, 1.0);
  f.values = (f.values.array() > 0.5).cast<double>().matrix();
  return f;
}

} // namespace

TEST(SmoothMin, ReferenceValueAndIdentity) {
  // Evaluated to 30 digits with mpmath.
  EXPECT_NEAR(smooth_min(0.0, 1.0, 1e-4), 0.004975000624968751953, 1e-15);
  for (double x : {0.0, 0.3, 0.5, 1.0})
    EXPECT_EQ(smooth_min(x, x, 1e-4), x);
  ad::Tape t;
  const ad::Var x = t.constant(Eigen::VectorXd::LinSpaced(11, 0.0, 1.0));
  EXPECT_EQ(smooth_min(x, x, FilterParams{}).value(), x.value());
}

TEST(SmoothMin, ApproachesMinAsEpsilonShrinks) {
  double prev = 1.0;
  for (double eps : {1e-2, 1e-4, 1e-6, 1e-8}) {
    const double err = std::abs(smooth_min(0.2, 0.9, eps) - 0.2);
    EXPECT_LT(err, prev);
    prev = err;
  }
  EXPECT_LT(prev, 1e-4);
}

TEST(SmoothMax, CalibrationAndReference) {
  for (double P : {10.0, 40.0, 100.0}) {
    FilterParams p;
    p.P = P;
    EXPECT_NEAR(std::pow(3.0 * std::pow(0.5, P), 1.0 / p.Q()), 0.5, 1e-12);
    EXPECT_NEAR(smooth_max(0.5, 0.5, 0.5, p), 0.5, 1e-12);
  }
  // Evaluated to 30 digits with mpmath.
  EXPECT_NEAR(smooth_max(0.9, 0.2, 0.1, FilterParams{}), 0.89609613746274933954, 1e-14);
  EXPECT_EQ(smooth_max(0.0, 0.0, 0.0, FilterParams{}), 0.0);
}

TEST(SupportMax, MatchesScalarFormAndStaysFiniteNearZero) {
  FilterParams params;
  ad::Tape t;
  Eigen::VectorXd layer(4);
  layer << 0.9, 0.2, 0.1, 0.6;
  const Eigen::VectorXd E = support_max(t.constant(layer), params).value();
  EXPECT_NEAR(E[0], smooth_max(0.0, 0.9, 0.2, params), 1e-15);
  EXPECT_NEAR(E[1], smooth_max(0.9, 0.2, 0.1, params), 1e-15);
  EXPECT_NEAR(E[3], smooth_max(0.1, 0.6, 0.0, params), 1e-15);

  // rho^P underflows here; the scaled evaluation must not.
  ad::Tape t2;
  const ad::Var tiny = t2.variable(Eigen::VectorXd::Constant(3, 1e-12));
  const ad::Var y = ad::sum(support_max(tiny, params));
  EXPECT_GT(y.scalar(), 0.0);
  t2.backward(y);
  EXPECT_TRUE(t2.grad(tiny).allFinite());
}

TEST(Filter, BasePlateLayerUnchangedAndSingleLayerIdentity) {
  std::mt19937_64 rng(1);
  const DensityField b = random_field(rng, 6, 4, 0.0, 1.0);
  const DensityField p = apply_filter(b, FilterParams{});
  EXPECT_EQ(p.kind, DensityKind::printed);
  for (int j = 0; j < 6; ++j)
    EXPECT_EQ(p.at(0, j), b.at(0, j));
  const DensityField row = random_field(rng, 5, 1, 0.0, 1.0);
  EXPECT_EQ(apply_filter(row, FilterParams{}).values, row.values);
}

TEST(Filter, SolidBlueprintStaysSolidVoidStaysVoid) {
  DensityField b;
  b.nelx = 5;
  b.nely = 4;
  b.values = Eigen::VectorXd::Ones(20);
  const DensityField p = apply_filter(b, FilterParams{});
  EXPECT_LT((p.values.array() - 1.0).abs().maxCoeff(), 1e-2);
  EXPECT_LE(p.values.maxCoeff(), 1.0);
  b.values.setZero();
  EXPECT_TRUE(apply_filter(b, FilterParams{}).values.isZero(0.0));
}

TEST(Filter, FloatingBlockIsRemoved) {
  DensityField b;
  b.nelx = 5;
  b.nely = 4;
  b.values = Eigen::VectorXd::Zero(20);
  b.at(2, 2) = b.at(3, 2) = 1.0;
  const DensityField exact = exact_filter(b);
  EXPECT_TRUE(exact.values.isZero(0.0));
  EXPECT_LT(apply_filter(b, FilterParams{}).values.maxCoeff(), 0.05);
}

TEST(Filter, ExactFilterIsPrintable) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const DensityField b = random_field(rng, 8, 6, 0.0, 1.0);
    const DensityField p = exact_filter(b);
    EXPECT_EQ(overhang_violations(p), 0);
    EXPECT_TRUE((p.values.array() <= b.values.array()).all());
  }
}

TEST(Filter, SmoothTracksExactOnBinaryBlueprints) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    const DensityField b = binary_field(rng, 10, 10);
    const DensityField smooth = apply_filter(b, FilterParams{});
    const DensityField exact = exact_filter(b);
    EXPECT_LE((smooth.values - exact.values).cwiseAbs().maxCoeff(), 0.05);
    EXPECT_EQ(overhang_violations(smooth, 0.05), 0);
    EXPECT_GE(smooth.values.minCoeff(), 0.0);
    EXPECT_LE(smooth.values.maxCoeff(), 1.0);
  }
}

TEST(Filter, MonotoneInBlueprint) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const DensityField b = random_field(rng, 6, 5, 0.0, 0.9);
    DensityField bigger = b;
    bigger.values.array() += ntopo::testing::random_vector(rng, 30, 0.0, 0.1).array();
    const DensityField p = apply_filter(b, FilterParams{});
    const DensityField q = apply_filter(bigger, FilterParams{});
    EXPECT_TRUE((q.values.array() >= p.values.array() - 1e-15).all());
  }
}

TEST(Filter, GradientMatchesFiniteDifferencesAndAdjoint) {
  std::mt19937_64 rng(13);
  const FilterParams params;
  for (auto [nx, ny] : {std::pair{4, 3}, {6, 4}, {3, 5}}) {
    const DensityField b = random_field(rng, nx, ny, 0.05, 0.95);
    const Eigen::VectorXd w = ntopo::testing::random_vector(rng, b.values.size(), -1.0, 1.0);
    const auto g = gradients(
        [&](ad::Tape &, const ad::Var &x) {
          return ad::dot(w, ad::square(apply_filter(x, nx, ny, params)));
        },
        b.values);
    EXPECT_LT(rel_err(g.tape, g.fd), 1e-5);

    ad::Tape t;
    const Eigen::VectorXd rho = apply_filter(t.constant(b.values), nx, ny, params).value();
    const Eigen::VectorXd g_rho = 2.0 * w.cwiseProduct(rho);
    const auto adj = oracle::filter_adjoint_gradient(b, g_rho, params);
    EXPECT_LT(rel_err(g.tape, adj.grad_blueprint), 1e-8);
  }
}

TEST(Filter, RejectsShapeMismatchAndBadParameters) {
  DensityField b;
  b.nelx = 3;
  b.nely = 3;
  b.values = Eigen::VectorXd::Zero(8);
  EXPECT_THROW(apply_filter(b, FilterParams{}), InvalidArgument);
  FilterParams bad;
  bad.epsilon = 0.0;
  b.values = Eigen::VectorXd::Zero(9);
  EXPECT_THROW(apply_filter(b, bad), InvalidArgument);
}

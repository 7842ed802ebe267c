#include <random>

#include <gtest/gtest.h>

#include <ntopo/autodiff.hpp>
#include <ntopo/fea.hpp>

#include "grad_check.hpp"

using namespace ntopo;
using namespace ntopo::ad;
using ntopo::testing::gradients;
using ntopo::testing::rel_err;

TEST(Tape, ReluAtNegativeInput) {
  Tape t;
  const Var x = t.variable(Matrix::Constant(1, 1, -2.0));
  const Var y = relu(x);
  EXPECT_EQ(y.scalar(), 0.0);
  t.backward(y);
  EXPECT_EQ(t.grad(x)(0, 0), 0.0);
}

TEST(Tape, SigmoidAtZero) {
  Tape t;
  const Var x = t.variable(Matrix::Zero(1, 1));
  const Var y = sigmoid(x);
  EXPECT_EQ(y.scalar(), 0.5);
  t.backward(y);
  EXPECT_EQ(t.grad(x)(0, 0), 0.25);
}

TEST(Tape, PolynomialValueAndGradient) {
  Tape t;
  const Var x = t.variable(Matrix::Constant(1, 1, 2.0));
  const Var y = x * x - 3.0 * x;
  EXPECT_EQ(y.scalar(), -2.0);
  t.backward(y);
  EXPECT_EQ(t.grad(x)(0, 0), 1.0); // 2x - 3
}

TEST(Tape, LeafGradientIsOne) {
  Tape t;
  const Var x = t.variable(Matrix::Constant(1, 1, 4.0));
  t.backward(x);
  EXPECT_EQ(t.grad(x)(0, 0), 1.0);
}

TEST(Tape, FanInAccumulates) {
  Tape t;
  const Var x = t.variable(Matrix::Constant(1, 1, 1.5));
  t.backward(x + x);
  EXPECT_EQ(t.grad(x)(0, 0), 2.0);

  Tape t2;
  std::vector<Var> leaves;
  Var acc = t2.variable(Matrix::Constant(1, 1, 0.0));
  leaves.push_back(acc);
  for (int k = 0; k < 9; ++k) {
    leaves.push_back(t2.variable(Matrix::Constant(1, 1, double(k))));
    acc = acc + leaves.back();
  }
  t2.backward(acc);
  for (const auto &l : leaves)
    EXPECT_EQ(t2.grad(l)(0, 0), 1.0);
}

TEST(Tape, BackwardIsRepeatable) {
  Tape t;
  const Var x = t.variable(Matrix::Constant(1, 1, 3.0));
  const Var y = x * x;
  t.backward(y);
  t.backward(y);
  EXPECT_EQ(t.grad(x)(0, 0), 6.0);
}

TEST(Tape, ConstantsReceiveNoGradient) {
  Tape t;
  const Var c = t.constant(Matrix::Constant(2, 1, 1.0));
  const Var x = t.variable(Matrix::Constant(2, 1, 2.0));
  t.backward(sum(c * x));
  EXPECT_FALSE(t.needs_grad(c));
  EXPECT_TRUE(t.grad(c).isZero(0.0));
  EXPECT_TRUE(t.grad(x).isApprox(Matrix::Constant(2, 1, 1.0)));
}

TEST(Tape, RejectsNonScalarOutput) {
  Tape t;
  const Var x = t.variable(Matrix::Zero(2, 1));
  EXPECT_THROW(t.backward(x), InvalidArgument);
}

TEST(Tape, DomainErrors) {
  Tape t;
  const Var z = t.variable(Matrix::Zero(1, 1));
  const Var neg = t.variable(Matrix::Constant(1, 1, -1.0));
  EXPECT_THROW(log(z), NumericDomainError);
  EXPECT_THROW(t.variable(Matrix::Ones(1, 1)) / z, NumericDomainError);
  EXPECT_THROW(sqrt(neg), NumericDomainError);
  EXPECT_THROW(pow(neg, 0.5), NumericDomainError);
}

TEST(Tape, MatvecIdentityAndZero) {
  Tape t;
  const Var I = t.variable(Matrix::Identity(3, 3));
  const Var x = t.variable(Vector::LinSpaced(3, 1.0, 3.0));
  EXPECT_EQ(matvec(I, x).value(), x.value());
  const Var Z = t.variable(Matrix::Zero(3, 3));
  EXPECT_TRUE(matvec(Z, x).value().isZero(0.0));
}

TEST(Tape, MatvecJvpMatchesFiniteDifferences) {
  std::mt19937_64 rng(5);
  const Eigen::VectorXd A = ntopo::testing::random_vector(rng, 9, -1.0, 1.0);
  const Eigen::VectorXd x0 = ntopo::testing::random_vector(rng, 3, -1.0, 1.0);
  const Eigen::VectorXd w = ntopo::testing::random_vector(rng, 3, -1.0, 1.0);
  // d/dx of w^T A x, and of w^T A x w.r.t. A.
  const auto gx = gradients(
      [&](Tape &t, const Var &x) {
        const Var Av = t.constant(Eigen::Map<const Matrix>(A.data(), 3, 3));
        return dot(w, matvec(Av, x));
      },
      x0);
  EXPECT_LT(rel_err(gx.tape, gx.fd), 1e-7);
  const auto gA = gradients(
      [&](Tape &t, const Var &a) {
        const Var Am = reshape(a, 3, 3);
        return dot(w, matvec(Am, t.constant(x0)));
      },
      A);
  EXPECT_LT(rel_err(gA.tape, gA.fd), 1e-7);
}

TEST(Tape, SmoothOpsMatchFiniteDifferences) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::VectorXd x0 = ntopo::testing::random_vector(rng, 5, 0.2, 1.5);
    const Eigen::VectorXd w = ntopo::testing::random_vector(rng, 5, -1.0, 1.0);
    const auto g = gradients(
        [&](Tape &, const Var &x) {
          const Var a = exp(scale(x, 0.3)) * sqrt(x) + log(x) / (x + 1.0);
          const Var b = pow(x, 2.5) - sigmoid(x) + square(x);
          return dot(w, a) + mean(b * a) + sum(relu(x - 0.1));
        },
        x0);
    EXPECT_LT(rel_err(g.tape, g.fd), 1e-5) << "trial " << trial;
  }
}

TEST(Tape, IndexingOpsMatchFiniteDifferences) {
  std::mt19937_64 rng(23);
  const Eigen::VectorXd x0 = ntopo::testing::random_vector(rng, 6, 0.1, 0.9);
  const Eigen::VectorXd w = ntopo::testing::random_vector(rng, 7, -1.0, 1.0);
  const auto g = gradients(
      [&](Tape &, const Var &x) {
        const Var g1 = gather(x, {5, -1, 0, 0, 2, 3, 1});
        const Var c = concat({segment(x, 0, 3), segment(square(x), 2, 4)});
        const Var m = mask_fill(x, {true, false, false, true, false, false}, 0.7);
        return dot(w, g1 * c) + sum(m * m);
      },
      x0);
  EXPECT_LT(rel_err(g.tape, g.fd), 1e-7);
}

TEST(Tape, MatmulAndBroadcastMatchFiniteDifferences) {
  std::mt19937_64 rng(29);
  const Eigen::VectorXd th0 = ntopo::testing::random_vector(rng, 6, -1.0, 1.0);
  const Matrix X = Matrix::Random(4, 3);
  SparseMatrix S(4, 4);
  S.insert(0, 1) = 0.5;
  S.insert(1, 0) = 0.5;
  S.insert(2, 3) = -0.25;
  S.insert(3, 3) = 1.0;
  const auto g = gradients(
      [&](Tape &t, const Var &th) {
        const Var W = reshape(segment(th, 0, 6), 3, 2);
        const Var bias = t.constant(Matrix::Constant(1, 2, 0.1));
        const Var H = add_row_broadcast(spmm(S, matmul(t.constant(X), W)), bias);
        return sum(sigmoid(H));
      },
      th0);
  EXPECT_LT(rel_err(g.tape, g.fd), 1e-7);
}

namespace {

// One element clamped along its left edge, unit downward load at the top
// right corner.
FeModel single_element_model() {
  auto mesh = build_mesh(1, 1);
  BoundaryConditions bc;
  bc.fixed_dofs = {0, 1, 4, 5};
  bc.loads = Vector::Zero(mesh.num_dofs());
  bc.loads[7] = -1.0;
  return FeModel(std::move(mesh), MaterialModel{}, std::move(bc));
}

} // namespace

TEST(LinearSolve, SingleElementMatchesDenseSolve) {
  const FeModel model = single_element_model();
  Tape t;
  const Var rho = t.variable(Vector::Ones(1));
  const Var u = assemble_and_solve(model, rho);
  // Global free DOFs and their positions in the element DOF list.
  const std::vector<int> free = {2, 3, 6, 7};
  const std::vector<int> local = {2, 3, 4, 5};
  Eigen::Matrix4d K;
  Eigen::Vector4d f;
  for (std::size_t a = 0; a < 4; ++a) {
    f[Eigen::Index(a)] = model.loads()[free[a]];
    for (std::size_t b = 0; b < 4; ++b)
      K(Eigen::Index(a), Eigen::Index(b)) = model.KE0()(local[a], local[b]);
  }
  const Eigen::Vector4d expected = K.ldlt().solve(f);
  for (int a = 0; a < 4; ++a)
    EXPECT_NEAR(u.value()(free[static_cast<std::size_t>(a)], 0), expected[a], 1e-12);
  EXPECT_EQ(u.value()(0, 0), 0.0);
}

TEST(LinearSolve, DoublingStiffnessHalvesDisplacement) {
  auto mesh = build_mesh(3, 2);
  BoundaryConditions bc;
  bc.fixed_dofs = {0, 1, 8, 9, 16, 17};
  bc.loads = Vector::Zero(mesh.num_dofs());
  bc.loads[2 * mesh.node(0, 3) + 1] = -1.0;
  MaterialModel m1, m2;
  m2.E0 = 2.0;
  m2.Emin = 2e-9;
  const FeModel a(mesh, m1, bc), b(mesh, m2, bc);
  Tape t;
  const Var rho = t.constant(Vector::Constant(6, 0.8));
  const Vector ua = assemble_and_solve(a, rho).value();
  const Vector ub = assemble_and_solve(b, rho).value();
  EXPECT_LT((ua - 2.0 * ub).cwiseAbs().maxCoeff(), 1e-12 * ua.cwiseAbs().maxCoeff());
}

TEST(LinearSolve, ComplianceGradientMatchesFiniteDifferences) {
  auto mesh = build_mesh(4, 3);
  BoundaryConditions bc;
  for (int r = 0; r <= 3; ++r) {
    bc.fixed_dofs.push_back(2 * mesh.node(r, 0));
    bc.fixed_dofs.push_back(2 * mesh.node(r, 0) + 1);
  }
  bc.loads = Vector::Zero(mesh.num_dofs());
  bc.loads[2 * mesh.node(0, 4) + 1] = -1.0;
  const FeModel model(std::move(mesh), MaterialModel{}, std::move(bc));
  std::mt19937_64 rng(41);
  const Eigen::VectorXd rho0 = ntopo::testing::random_vector(rng, 12, 0.3, 0.95);
  const auto g = gradients(
      [&](Tape &, const Var &rho) { return compliance(assemble_and_solve(model, rho), model.loads()); },
      rho0);
  EXPECT_LT(rel_err(g.tape, g.fd), 1e-6);
  EXPECT_TRUE((g.tape.array() < 0.0).all());
}

TEST(LinearSolve, SingularSystemRaisesSolverFailure) {
  Tape t;
  const Var p = t.variable(Vector::Ones(2));
  LinearSolveRule rule;
  rule.assemble = [](const Vector &) {
    SparseMatrix K(2, 2);
    K.insert(0, 0) = 1.0;
    K.insert(1, 1) = 0.0;
    return K;
  };
  rule.contract_derivative = [](const Vector &p, const Vector &, const Vector &) {
    return Vector(Vector::Zero(p.size()));
  };
  EXPECT_THROW(linear_solve(p, Vector::Ones(2), rule), SolverFailure);
}

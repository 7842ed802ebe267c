#include <random>

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include <ntopo/graph.hpp>

using namespace ntopo;

namespace {

Eigen::VectorXd eigenvalues(const SparseMatrix &S) {
  const Eigen::MatrixXd dense(S);
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(dense).eigenvalues();
}

} // namespace

TEST(ElementGraph, TwoByTwo) {
  const auto g = build_element_graph(build_mesh(2, 2));
  EXPECT_EQ(g.num_edges(), 4);
  for (int d : g.degree)
    EXPECT_EQ(d, 2);
  EXPECT_TRUE(g.connected(0, 1));
  EXPECT_TRUE(g.connected(0, 2));
  EXPECT_FALSE(g.connected(0, 3));
}

TEST(ElementGraph, SingleElementHasNoEdges) {
  const auto g = build_element_graph(build_mesh(1, 1));
  EXPECT_EQ(g.num_edges(), 0);
  EXPECT_EQ(g.degree[0], 0);
  const Eigen::MatrixXd L(g.laplacian_norm);
  EXPECT_EQ(L(0, 0), 0.0);
  const Eigen::MatrixXd Ls(g.laplacian_scaled);
  EXPECT_TRUE(Ls.allFinite());
  EXPECT_DOUBLE_EQ(Ls(0, 0), -1.0);
}

TEST(ElementGraph, ScaledSpectrumInUnitInterval) {
  for (auto [nx, ny] : {std::pair{3, 3}, {2, 1}, {4, 3}, {5, 5}, {6, 2}}) {
    const auto g = build_element_graph(build_mesh(nx, ny));
    const Eigen::VectorXd ev = eigenvalues(g.laplacian_scaled);
    EXPECT_GE(ev.minCoeff(), -1.0 - 1e-9) << nx << "x" << ny;
    EXPECT_LE(ev.maxCoeff(), 1.0 + 1e-9) << nx << "x" << ny;
  }
}

TEST(ElementGraph, AdjacencySymmetricWithoutSelfLoops) {
  const auto g = build_element_graph(build_mesh(5, 4));
  for (int a = 0; a < g.num_nodes(); ++a) {
    EXPECT_FALSE(g.connected(a, a));
    for (int b : g.adjacency[static_cast<std::size_t>(a)])
      EXPECT_TRUE(g.connected(b, a));
  }
  const Eigen::MatrixXd Ls(g.laplacian_scaled);
  EXPECT_LT((Ls - Ls.transpose()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(ElementGraph, SparseProductMatchesDense) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n01;
  for (int nx = 1; nx <= 5; ++nx)
    for (int ny = 1; ny <= 5; ++ny) {
      const auto g = build_element_graph(build_mesh(nx, ny));
      Eigen::VectorXd v(g.num_nodes());
      for (auto &x : v)
        x = n01(rng);
      const Eigen::MatrixXd dense(g.laplacian_scaled);
      EXPECT_LT((g.laplacian_scaled * v - dense * v).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(ElementGraph, LambdaMaxDominatesRayleighQuotients) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n01;
  for (auto [nx, ny] : {std::pair{3, 3}, {6, 4}, {60, 20}}) {
    const auto g = build_element_graph(build_mesh(nx, ny));
    EXPECT_LE(g.lambda_max, 2.0);
    for (int trial = 0; trial < 20; ++trial) {
      Eigen::VectorXd v(g.num_nodes());
      for (auto &x : v)
        x = n01(rng);
      const double rq = v.dot(g.laplacian_norm * v) / v.squaredNorm();
      EXPECT_GE(g.lambda_max, rq - 1e-6);
    }
  }
}

TEST(ElementGraph, PowerIterationAgreesWithDenseOnSmallGraph) {
  const auto g = build_element_graph(build_mesh(3, 2));
  const double exact = eigenvalues(g.laplacian_norm).maxCoeff();
  EXPECT_GE(g.lambda_max, exact - 1e-9);
  EXPECT_LE(g.lambda_max, exact + 1e-3);
}

TEST(ElementGraph, RebuildIsDeterministic) {
  const auto mesh = build_mesh(7, 4);
  const auto a = build_element_graph(mesh);
  const auto b = build_element_graph(mesh);
  EXPECT_EQ(a.adjacency, b.adjacency);
  EXPECT_EQ(a.lambda_max, b.lambda_max);
  EXPECT_EQ(Eigen::MatrixXd(a.laplacian_scaled), Eigen::MatrixXd(b.laplacian_scaled));
}

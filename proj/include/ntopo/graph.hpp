#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "mesh.hpp"

namespace ntopo {

using SparseMatrix = Eigen::SparseMatrix<double>;

struct PowerIterationOptions {
  int max_iterations = 100;
  double tolerance = 1e-6;
  unsigned seed = 12345;
};

/// Element-adjacency graph of a structured mesh (edge-sharing neighbours).
///
/// `laplacian_norm` is I - D^-1/2 A D^-1/2 with zero rows for isolated
/// elements, so its spectrum lies in [0, 2]. `laplacian_scaled` maps that
/// spectrum onto [-1, 1] for the Chebyshev recursion.
struct ElementGraph {
  std::vector<std::vector<int>> adjacency;
  std::vector<int> degree;
  SparseMatrix laplacian_norm;
  SparseMatrix laplacian_scaled;
  double lambda_max = 2.0;

  int num_nodes() const { return static_cast<int>(adjacency.size()); }
  int num_edges() const {
    int twice = 0;
    for (int d : degree)
      twice += d;
    return twice / 2;
  }
  bool connected(int a, int b) const {
    const auto &nb = adjacency[static_cast<std::size_t>(a)];
    return std::find(nb.begin(), nb.end(), b) != nb.end();
  }
};

/// Upper estimate of the largest eigenvalue of a symmetric PSD matrix whose
/// spectrum is bounded by `spectral_bound`.
///
/// Runs power iteration and returns min(bound, theta + ||L v - theta v||),
/// where theta is the final Rayleigh quotient. Widening by the residual keeps
/// the estimate on or above the top eigenvalue once v has aligned with it.
inline double estimate_lambda_max(const SparseMatrix &L,
                                  double spectral_bound = 2.0,
                                  const PowerIterationOptions &opts = {}) {
  const Eigen::Index n = L.rows();
  if (n == 0)
    return 0.0;
  std::mt19937_64 rng(opts.seed);
  std::uniform_real_distribution<double> unit(0.5, 1.5);
  Eigen::VectorXd v(n);
  for (Eigen::Index k = 0; k < n; ++k)
    v[k] = (k % 2 == 0 ? 1.0 : -1.0) * unit(rng);
  v.normalize();

  double theta = 0.0;
  Eigen::VectorXd Lv = L * v;
  theta = v.dot(Lv);
  for (int it = 0; it < opts.max_iterations; ++it) {
    const double norm = Lv.norm();
    if (norm == 0.0)
      break;
    v = Lv / norm;
    Lv = L * v;
    const double next = v.dot(Lv);
    const bool converged =
        std::abs(next - theta) <= opts.tolerance * std::max(1.0, std::abs(next));
    theta = next;
    if (converged)
      break;
  }
  const double residual = (Lv - theta * v).norm();
  return std::min(spectral_bound, theta + residual);
}

inline ElementGraph build_element_graph(const StructuredMesh &mesh,
                                        const PowerIterationOptions &opts = {}) {
  if (mesh.nelx < 1 || mesh.nely < 1)
    throw InvalidArgument("build_element_graph: invalid mesh");
  const int n = mesh.num_elements();
  ElementGraph g;
  g.adjacency.assign(static_cast<std::size_t>(n), {});
  for (int i = 0; i < mesh.nely; ++i) {
    for (int j = 0; j < mesh.nelx; ++j) {
      auto &nb = g.adjacency[static_cast<std::size_t>(mesh.element(i, j))];
      if (i > 0)
        nb.push_back(mesh.element(i - 1, j));
      if (j > 0)
        nb.push_back(mesh.element(i, j - 1));
      if (j + 1 < mesh.nelx)
        nb.push_back(mesh.element(i, j + 1));
      if (i + 1 < mesh.nely)
        nb.push_back(mesh.element(i + 1, j));
    }
  }
  g.degree.resize(static_cast<std::size_t>(n));
  for (int e = 0; e < n; ++e)
    g.degree[static_cast<std::size_t>(e)] =
        static_cast<int>(g.adjacency[static_cast<std::size_t>(e)].size());

  std::vector<Eigen::Triplet<double>> trips;
  for (int e = 0; e < n; ++e) {
    const int de = g.degree[static_cast<std::size_t>(e)];
    if (de == 0)
      continue;
    trips.emplace_back(e, e, 1.0);
    for (int nb : g.adjacency[static_cast<std::size_t>(e)]) {
      const int dn = g.degree[static_cast<std::size_t>(nb)];
      trips.emplace_back(e, nb, -1.0 / std::sqrt(double(de) * double(dn)));
    }
  }
  g.laplacian_norm.resize(n, n);
  g.laplacian_norm.setFromTriplets(trips.begin(), trips.end());

  g.lambda_max = estimate_lambda_max(g.laplacian_norm, 2.0, opts);
  if (!(g.lambda_max > 1e-12))
    g.lambda_max = 2.0;

  SparseMatrix identity(n, n);
  identity.setIdentity();
  g.laplacian_scaled = (2.0 / g.lambda_max) * g.laplacian_norm - identity;
  g.laplacian_scaled.makeCompressed();
  return g;
}

} // namespace ntopo

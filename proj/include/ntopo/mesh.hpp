#pragma once

#include <array>
#include <cmath>
#include <vector>

#include <Eigen/Core>

#include "errors.hpp"

namespace ntopo {

/// Structured grid of bilinear quads.
///
/// Elements are numbered row-major: element (layer i, column j) has index
/// i * nelx + j, with layer 0 resting on the build plate (y = 0) and layers
/// increasing along +y, the print direction. Nodes follow the same scheme
/// with (nelx + 1) nodes per row; node n owns DOFs 2n (x) and 2n + 1 (y).
/// Element corners are listed counter-clockwise from the bottom-left.
struct StructuredMesh {
  int nelx = 0;
  int nely = 0;
  double elem_size = 1.0;
  std::vector<Eigen::Vector2d> node_coords;
  std::vector<Eigen::Vector2d> elem_centroids;
  std::vector<std::array<int, 8>> dof_map;

  int num_elements() const { return nelx * nely; }
  int num_nodes() const { return (nelx + 1) * (nely + 1); }
  int num_dofs() const { return 2 * num_nodes(); }

  int element(int layer, int column) const { return layer * nelx + column; }
  int node(int row, int column) const { return row * (nelx + 1) + column; }

  double width() const { return nelx * elem_size; }
  double height() const { return nely * elem_size; }
};

inline StructuredMesh build_mesh(int nelx, int nely, double elem_size = 1.0) {
  if (nelx < 1 || nely < 1)
    throw InvalidArgument("build_mesh: element counts must be positive");
  if (!(elem_size > 0.0) || !std::isfinite(elem_size))
    throw InvalidArgument("build_mesh: element size must be positive");

  StructuredMesh mesh;
  mesh.nelx = nelx;
  mesh.nely = nely;
  mesh.elem_size = elem_size;

  mesh.node_coords.reserve(static_cast<std::size_t>(mesh.num_nodes()));
  for (int r = 0; r <= nely; ++r)
    for (int c = 0; c <= nelx; ++c)
      mesh.node_coords.emplace_back(c * elem_size, r * elem_size);

  mesh.elem_centroids.reserve(static_cast<std::size_t>(mesh.num_elements()));
  mesh.dof_map.reserve(static_cast<std::size_t>(mesh.num_elements()));
  for (int i = 0; i < nely; ++i) {
    for (int j = 0; j < nelx; ++j) {
      mesh.elem_centroids.emplace_back((j + 0.5) * elem_size,
                                       (i + 0.5) * elem_size);
      const std::array<int, 4> corners = {mesh.node(i, j), mesh.node(i, j + 1),
                                          mesh.node(i + 1, j + 1),
                                          mesh.node(i + 1, j)};
      std::array<int, 8> dofs{};
      for (int a = 0; a < 4; ++a) {
        dofs[2 * a] = 2 * corners[a];
        dofs[2 * a + 1] = 2 * corners[a] + 1;
      }
      mesh.dof_map.push_back(dofs);
    }
  }
  return mesh;
}

} // namespace ntopo

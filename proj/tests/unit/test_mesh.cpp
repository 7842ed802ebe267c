#include <set>

#include <gtest/gtest.h>

#include <ntopo/mesh.hpp>

using namespace ntopo;

TEST(Mesh, PaperResolutionCounts) {
  const auto mesh = build_mesh(60, 20);
  EXPECT_EQ(mesh.num_elements(), 1200);
  EXPECT_EQ(mesh.num_nodes(), 1281);
  EXPECT_EQ(mesh.num_dofs(), 2562);
  EXPECT_EQ(mesh.dof_map.size(), 1200u);
  EXPECT_EQ(mesh.node_coords.size(), 1281u);
}

TEST(Mesh, SingleElementDofMap) {
  const auto mesh = build_mesh(1, 1);
  ASSERT_EQ(mesh.num_elements(), 1);
  EXPECT_EQ(mesh.num_nodes(), 4);
  // Corners counter-clockwise from bottom-left: nodes 0, 1, 3, 2.
  const std::array<int, 8> expected = {0, 1, 2, 3, 6, 7, 4, 5};
  EXPECT_EQ(mesh.dof_map[0], expected);
}

TEST(Mesh, InteriorNodeSharedByFourElements) {
  const auto mesh = build_mesh(2, 2);
  const int centre = mesh.node(1, 1);
  for (const auto &dofs : mesh.dof_map) {
    const bool has = std::find(dofs.begin(), dofs.end(), 2 * centre) != dofs.end() &&
                     std::find(dofs.begin(), dofs.end(), 2 * centre + 1) != dofs.end();
    EXPECT_TRUE(has);
  }
}

TEST(Mesh, Invariants) {
  for (auto [nx, ny] : {std::pair{1, 1}, {3, 2}, {7, 5}, {60, 20}}) {
    const auto mesh = build_mesh(nx, ny, 0.5);
    for (int e = 0; e < mesh.num_elements(); ++e) {
      const auto &dofs = mesh.dof_map[static_cast<std::size_t>(e)];
      std::set<int> unique(dofs.begin(), dofs.end());
      EXPECT_EQ(unique.size(), 8u);
      for (int d : dofs) {
        EXPECT_GE(d, 0);
        EXPECT_LT(d, mesh.num_dofs());
      }
      const auto &c = mesh.elem_centroids[static_cast<std::size_t>(e)];
      EXPECT_GT(c.x(), 0.0);
      EXPECT_LT(c.x(), mesh.width());
      EXPECT_GT(c.y(), 0.0);
      EXPECT_LT(c.y(), mesh.height());
    }
  }
}

TEST(Mesh, RowMajorLayers) {
  const auto mesh = build_mesh(4, 3);
  // Layer index grows along +y.
  EXPECT_LT(mesh.elem_centroids[0].y(), mesh.elem_centroids[4].y());
  EXPECT_DOUBLE_EQ(mesh.elem_centroids[mesh.element(2, 3)].x(), 3.5);
  EXPECT_DOUBLE_EQ(mesh.elem_centroids[mesh.element(2, 3)].y(), 2.5);
}

TEST(Mesh, RejectsNonPositiveDimensions) {
  EXPECT_THROW(build_mesh(0, 3), InvalidArgument);
  EXPECT_THROW(build_mesh(3, -1), InvalidArgument);
  EXPECT_THROW(build_mesh(2, 2, 0.0), InvalidArgument);
}

#include <sstream>

#include <gtest/gtest.h>

#include <ntopo/benchmark.hpp>

using namespace ntopo;

namespace {

ConfigMap parse(const std::string &text) {
  std::istringstream in(text);
  return parse_config(in, "test.cfg");
}

} // namespace

TEST(Presets, ThreeBenchmarksWithPaperMaterial) {
  ASSERT_EQ(preset_names().size(), 3u);
  for (const auto &name : preset_names()) {
    const BenchmarkCase c = make_preset(name);
    EXPECT_EQ(c.nelx, 60);
    EXPECT_EQ(c.nely, 20);
    EXPECT_EQ(c.volume_fraction, 0.5);
    EXPECT_EQ(c.stress.sigma_allow, 2.3);
    EXPECT_EQ(c.material.E0, 1.0);
    EXPECT_EQ(c.material.nu, 0.3);
    EXPECT_NO_THROW(c.validate());
  }
  EXPECT_THROW(make_preset("bridge"), InvalidArgument);
}

TEST(Presets, SimplySupportedGeometry) {
  const BenchmarkCase c = make_preset("simply_supported", 6, 3);
  EXPECT_EQ(c.fixed_dofs, (std::vector<int>{0, 1, 13}));
  EXPECT_EQ(c.loads.size(), 7u);
  const Vector f = c.load_vector();
  EXPECT_EQ(f.sum(), -7.0);
  EXPECT_EQ(c.passive_elements, (std::vector<int>{0, 1, 2, 3, 4, 5}));
}

TEST(Presets, CantileverLoadPoints) {
  const BenchmarkCase tip = make_preset("tip_cantilever", 6, 4);
  const BenchmarkCase mid = make_preset("mid_cantilever", 6, 4);
  EXPECT_EQ(tip.fixed_dofs.size(), 10u);
  ASSERT_EQ(tip.loads.size(), 1u);
  EXPECT_EQ(tip.loads[0].dof, 2 * 6 + 1);            // node (0, 6)
  EXPECT_EQ(mid.loads[0].dof, 2 * (2 * 7 + 6) + 1);  // node (2, 6)
  EXPECT_EQ(tip.loads[0].magnitude, -1.0);
  EXPECT_TRUE(tip.passive_elements.empty());
}

TEST(Config, ParsesKeysCommentsAndOverrides) {
  const auto cfg = parse("# benchmark\n"
                         "case = tip_cantilever\n"
                         "nelx=12   # coarse\n"
                         "nely = 4\n"
                         "\n"
                         "filter = off\n"
                         "stress = on\n"
                         "sigma-allow = 3.5\n"
                         "seed = 7\n"
                         "hidden_widths = 32, 16\n"
                         "iters = 50\n");
  EXPECT_EQ(cfg.at("nelx").origin, "test.cfg:3");
  const BenchmarkCase c = make_case(cfg);
  EXPECT_EQ(c.name, "tip_cantilever");
  EXPECT_EQ(c.nelx, 12);
  EXPECT_EQ(c.nely, 4);
  EXPECT_FALSE(c.filter_enabled);
  EXPECT_TRUE(c.stress_enabled);
  EXPECT_EQ(c.stress.sigma_allow, 3.5);
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(c.fourier_seed, 7u);
  EXPECT_EQ(c.hidden_widths, (std::vector<int>{32, 16}));
  EXPECT_EQ(c.iterations, 50);
  EXPECT_EQ(c.loads[0].dof, 2 * 12 + 1);
}

TEST(Config, CustomCaseWithExplicitLoads) {
  const BenchmarkCase c = make_case(parse("case = custom\nnelx = 2\nnely = 1\n"
                                          "fixed_dofs = 0,1,6,7\nloads = 5:-2.5, 4:1\n"));
  ASSERT_EQ(c.loads.size(), 2u);
  EXPECT_EQ(c.loads[0].dof, 5);
  EXPECT_EQ(c.loads[0].magnitude, -2.5);
  EXPECT_EQ(c.fixed_dofs.size(), 4u);
}

TEST(Config, ErrorsNameLineAndField) {
  try {
    make_case(parse("case = tip_cantilever\nvolfrac = lots\n"));
    FAIL() << "expected a ConfigError";
  } catch (const ConfigError &e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("test.cfg:2"), std::string::npos) << msg;
    EXPECT_NE(msg.find("volfrac"), std::string::npos) << msg;
  }
  EXPECT_THROW(make_case(parse("colour = blue\n")), ConfigError);
  EXPECT_THROW(parse("just some words\n"), ConfigError);
  EXPECT_THROW(make_case(parse("filter = maybe\n")), ConfigError);
  EXPECT_THROW(make_case(parse("case = bridge\n")), ConfigError);
  EXPECT_THROW(make_case(parse("volfrac = 1.5\n")), ConfigError);
  EXPECT_THROW(make_case(parse("loads = 99999:1\n")), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/config.cfg"), ConfigError);
}

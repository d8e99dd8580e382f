#include "experiment.hpp"

#include <gtest/gtest.h>

#include <filesystem>

using namespace mheat;
using namespace mheat::cli;

namespace {

ExperimentConfig parse(const std::string& s) { return parse_config(s, "test.toml"); }

// Line of the first failure, -1 when the text parses.
int error_line(const std::string& s, std::string* msg = nullptr) {
  try {
    parse(s);
  } catch (const ConfigError& e) {
    if (msg) *msg = e.what();
    return e.line();
  }
  return -1;
}

const char* kMinimal = R"([manifold]
kind = "torus"
dim = 2

[experiment]
kind = "verify"
check = "weighted-l2"
)";

}  // namespace

TEST(CliConfig, MinimalConfigTakesDefaults) {
  auto c = parse(kMinimal);
  EXPECT_EQ(c.manifold.kind, "torus");
  EXPECT_EQ(c.manifold.dim, 2);
  EXPECT_EQ(c.check, "weighted-l2");
  EXPECT_EQ(c.n_paths, 10000);
  EXPECT_EQ(c.h, 0.0);
  EXPECT_EQ(c.bounds.t_grid, BoundCheckConfig{}.t_grid);
}

TEST(CliConfig, ShippedConfigsRoundTrip) {
  int n = 0;
  for (const auto& e : std::filesystem::directory_iterator(MHEAT_CONFIG_DIR)) {
    if (e.path().extension() != ".toml" || e.path().filename().string().rfind("invalid_", 0) == 0) continue;
    SCOPED_TRACE(e.path().string());
    auto a = load_config(e.path().string());
    std::string once = to_toml_string(a);
    auto b = parse(once);
    EXPECT_EQ(to_toml_string(b), once);
    EXPECT_EQ(a.bounds.t_grid, b.bounds.t_grid);
    EXPECT_EQ(a.bounds.rho_grid, b.bounds.rho_grid);
    EXPECT_EQ(a.estimate.points, b.estimate.points);
    EXPECT_EQ(a.kato.t_list, b.kato.t_list);
    EXPECT_EQ(a.seed, b.seed);
    ++n;
  }
  EXPECT_GE(n, 8);
}

TEST(CliConfig, InvalidShippedConfigsAreRejected) {
  for (const auto& e : std::filesystem::directory_iterator(MHEAT_CONFIG_DIR)) {
    if (e.path().filename().string().rfind("invalid_", 0) != 0) continue;
    SCOPED_TRACE(e.path().string());
    EXPECT_THROW(load_config(e.path().string()), ConfigError);
  }
}

TEST(CliConfig, RoundTripKeepsEveryBitOfAwkwardDoubles) {
  ExperimentConfig c;
  c.bounds.alpha = 0.1 + 0.1 + 1e-17 * 3;
  c.bounds.gamma = 0.1 + 0.2;
  c.bounds.t_grid = {1e-300, 0.1 + 0.2, 1.0 / 3.0, 4.0};
  c.h = 2.0 / 3.0 * 1e-3;
  c.seed = (1ULL << 62) + 12345;
  c.estimate.points = {{0.1, -0.7}, {1e-9, 3.0}};
  c.estimate.components = {{0, 1}};
  c.gaffney.e_centre = {std::nextafter(1.0, 2.0), 0.5};
  auto d = parse(to_toml_string(c));
  EXPECT_EQ(d.bounds.alpha, c.bounds.alpha);
  EXPECT_EQ(d.bounds.gamma, c.bounds.gamma);
  EXPECT_EQ(d.bounds.t_grid, c.bounds.t_grid);
  EXPECT_EQ(d.h, c.h);
  EXPECT_EQ(d.seed, c.seed);
  EXPECT_EQ(d.estimate.points, c.estimate.points);
  EXPECT_EQ(d.estimate.components, c.estimate.components);
  EXPECT_EQ(d.gaffney.e_centre, c.gaffney.e_centre);
  EXPECT_EQ(to_toml_string(d), to_toml_string(c));
}

TEST(CliConfig, GridTablesExpand) {
  auto c = parse(std::string(kMinimal) + R"(
[bounds]
t_grid = { min = 0.01, max = 4.0, count = 20, spacing = "log" }
rho_grid = { min = 0.0, max = 5.0, count = 11 }
)");
  EXPECT_EQ(c.bounds.t_grid, logspace(0.01, 4.0, 20));
  EXPECT_EQ(c.bounds.rho_grid, linspace(0.0, 5.0, 11));
  EXPECT_DOUBLE_EQ(c.bounds.rho_grid[1], 0.5);
}

TEST(CliConfig, GammaAboveTwiceAlphaCitesTheConstraintAndLine) {
  std::string msg;
  int line = error_line(std::string(kMinimal) + R"(
[bounds]
alpha = 0.2
gamma = 0.6
)",
                        &msg);
  EXPECT_EQ(line, 11);
  EXPECT_NE(msg.find("γ ≥ 2α"), std::string::npos) << msg;
  EXPECT_NE(msg.find("test.toml:11"), std::string::npos) << msg;
}

TEST(CliConfig, BoundaryGammaJustBelowTwiceAlphaIsAccepted) {
  auto c = parse(std::string(kMinimal) + "\n[bounds]\nalpha = 0.2\ngamma = 0.39\n");
  EXPECT_EQ(c.bounds.gamma, 0.39);
  EXPECT_EQ(error_line(std::string(kMinimal) + "\n[bounds]\nalpha = 0.2\ngamma = 0.4\n"), 11);
}

TEST(CliConfig, BetaAndAlphaViolationsPointAtTheirKeys) {
  EXPECT_EQ(error_line(std::string(kMinimal) + "\n[bounds]\nbeta = 0.5\nalpha = 0.2\n"), 10);
  EXPECT_EQ(error_line(std::string(kMinimal) + "\n[bounds]\nsigma = 1.0\nalpha = 0.3\n"), 11);
  EXPECT_EQ(error_line(std::string(kMinimal) + "\n[bounds]\nt_grid = [0.5, 0.1]\n"), 10);
  // Admissible in general, but the weighted-l2 tail bound needs beta < alpha.
  EXPECT_EQ(error_line(std::string(kMinimal) + "\n[bounds]\nalpha = 0.2\nbeta = 0.3\n"), 11);
}

TEST(CliConfig, StructuralErrorsCarryLines) {
  std::string msg;
  EXPECT_EQ(error_line(std::string(kMinimal) + "seeds = 3\n", &msg), 8);
  EXPECT_NE(msg.find("unknown key 'seeds'"), std::string::npos);
  EXPECT_EQ(error_line(std::string(kMinimal) + "\n[bogus]\nx = 1\n", &msg), 9);
  EXPECT_NE(msg.find("unknown section"), std::string::npos);
  EXPECT_EQ(error_line("[manifold]\nkind = \"torus\"\ndim = \"two\"\n[experiment]\n"), 3);
  EXPECT_EQ(error_line("[manifold]\nkind = \"torus\"\ndim = 2.5\n[experiment]\n"), 3);
  // Syntax error: unterminated string on line 2.
  EXPECT_EQ(error_line("[manifold]\nkind = \"torus\ndim = 2\n"), 2);
  EXPECT_EQ(error_line("[experiment]\nkind = \"verify\"\n", &msg), 0);
  EXPECT_NE(msg.find("missing [manifold]"), std::string::npos);
}

TEST(CliConfig, SemanticErrorsCarryLines) {
  EXPECT_EQ(error_line("[manifold]\nkind = \"klein\"\n[experiment]\n"), 2);
  EXPECT_EQ(error_line("[manifold]\nkind = \"sphere\"\ndim = 1\n[experiment]\n"), 3);
  EXPECT_EQ(error_line("[manifold]\nkind = \"torus\"\n[experiment]\nkind = \"verify\"\ncheck = \"nope\"\n"), 5);
  EXPECT_EQ(error_line("[manifold]\nkind = \"hyperbolic\"\n[experiment]\nkind = \"czscan\"\n"), 2);
  EXPECT_EQ(error_line("[manifold]\nkind = \"torus\"\n[experiment]\nkind = \"czscan\"\n[czscan]\np = 1.0\n"), 6);
  EXPECT_EQ(error_line("[manifold]\nkind = \"torus\"\n[experiment]\nkind = \"czscan\"\n[czscan]\nfamily = \"harmonic\"\n"),
            6);
  EXPECT_EQ(error_line("[manifold]\nkind = \"torus\"\n[experiment]\nkind = \"estimate\"\n[estimate]\nquantity = "
                       "\"hess\"\ncomponents = [0]\n"),
            7);
  EXPECT_EQ(error_line("[manifold]\nkind = \"torus\"\n[experiment]\nkind = \"estimate\"\n[estimate]\npoints = "
                       "[[0.0, 1.0, 2.0]]\n"),
            6);
  EXPECT_EQ(error_line("[manifold]\nkind = \"sphere\"\n[experiment]\nkind = \"verify\"\ncheck = \"kato\"\nn_paths = "
                       "500\n"),
            6);
  EXPECT_EQ(error_line("[manifold]\nkind = \"euclidean\"\n[experiment]\nkind = \"verify\"\ncheck = \"gaffney\"\n"), 2);
}

TEST(CliConfig, ScalarPAcceptedForCzscan) {
  auto c = parse("[manifold]\nkind = \"torus\"\n[experiment]\nkind = \"czscan\"\n[czscan]\np = 4\n");
  ASSERT_EQ(c.czscan.p.size(), 1u);
  EXPECT_EQ(c.czscan.p[0], 4.0);
  auto d = parse("[manifold]\nkind = \"torus\"\n[experiment]\nkind = \"czscan\"\n[czscan]\np = [1.5, 4]\n");
  EXPECT_EQ(d.czscan.p, (std::vector<double>{1.5, 4.0}));
}

TEST(CliConfig, PointsAreNormalCoordinatesAtTheOrigin) {
  for (auto m : {Manifold::sphere(2), Manifold::hyperbolic(2), Manifold::euclidean(2)}) {
    SCOPED_TRACE(m.name());
    Point x = point_from(m, {0.3, -0.4});
    EXPECT_NEAR(m.distance(m.origin(), x), 0.5, 1e-12);
    EXPECT_LT(m.constraint_residual(x), 1e-12);
  }
  auto t = Manifold::torus(2);
  Point x = point_from(t, {1.0, 2.0});
  EXPECT_DOUBLE_EQ(x.coords[0], 1.0);
  EXPECT_DOUBLE_EQ(x.coords[1], 2.0);
  EXPECT_NEAR(t.distance(t.origin(), antipode(t)), kPi * std::sqrt(2.0), 1e-12);
  auto s = Manifold::sphere(2);
  EXPECT_NEAR(s.distance(s.origin(), antipode(s)), kPi, 1e-12);
}

TEST(CliConfig, EveryRegisteredFieldAndPotentialBuilds) {
  auto m = Manifold::euclidean(2);
  for (const auto& k : field_kinds()) {
    FieldSpec f;
    f.kind = k;
    ScalarField sf = build_field(m, f);
    EXPECT_TRUE(std::isfinite(sf.eval(point_from(m, {0.5, 0.5})))) << k;
  }
  auto s = Manifold::sphere(2);
  for (const auto& k : potential_kinds()) {
    KatoSpec p;
    p.potential = k;
    EXPECT_TRUE(std::isfinite(build_potential(s, p).eval(point_from(s, {0.5, 0.0})))) << k;
  }
}

TEST(CliConfig, CheckRegistryListsEveryCheck) {
  for (const char* k : {"kernel-bounds", "weighted-l2", "gaffney", "semigroup-bounds", "kato", "czscan"})
    EXPECT_TRUE(one_of(k, check_kinds())) << k;
  EXPECT_EQ(manifold_kinds().size(), 4u);
}

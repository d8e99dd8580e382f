#include "mheat/semigroup.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace mheat;

namespace {

McOptions opts(std::int64_t n, std::uint64_t seed, double h = 0) {
  McOptions o;
  o.n_paths = n;
  o.seed = seed;
  o.h = h;
  return o;
}

Point sphere_point(double theta, double phi) {
  Vec x(3);
  x << std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi), std::cos(theta);
  return Point{x};
}

TangentVector unit(const Manifold& m, const Point& x, int i) { return {x, m.frame_at(x).col(i)}; }

double combined(const McEstimate& a, const McEstimate& b) {
  return std::sqrt(a.se() * a.se() + b.se() * b.se());
}

}  // namespace

TEST(EstimatePt, ConstantHasZeroVariance) {
  auto m = Manifold::sphere(2);
  auto e = estimate_pt(m, fields::constant(m, 1.0), m.origin(), 0.3, opts(1000, 1));
  EXPECT_EQ(e.scalar(), 1.0);
  EXPECT_EQ(e.se(), 0.0);
  EXPECT_EQ(e.n_paths, 1000);
}

TEST(EstimatePt, EuclideanNormSquared) {
  for (int d : {1, 2, 3}) {
    auto m = Manifold::euclidean(d);
    Vec x = Vec::Constant(d, 0.4);
    const double t = 0.6;
    auto e = estimate_pt(m, fields::norm_squared(m), Point{x}, t, opts(20000, 3, t / 20));
    EXPECT_NEAR(e.scalar(), x.squaredNorm() + 2 * d * t, 3 * e.se());
  }
}

TEST(EstimatePt, SphereEigenfunction) {
  auto m = Manifold::sphere(2);
  Point x = sphere_point(0.7, 0.2);
  const double t = 0.4;
  auto e = estimate_pt(m, fields::coordinate(m, 2), x, t, opts(20000, 5, t / 100));
  EXPECT_NEAR(e.scalar(), std::exp(-2 * t) * x.coords[2], 3 * e.se());
}

TEST(EstimatePt, SemigroupPropertyByRestart) {
  // E f(X_{t1+t2}) against a two-stage walk restarted at X_{t1} with fresh noise.
  std::vector<Manifold> models{Manifold::sphere(2), Manifold::hyperbolic(2), Manifold::torus(2)};
  for (const auto& m : models) {
    ScalarField f = fields::gaussian_bump(m, m.origin(), 0.8);
    for (int trial = 0; trial < 5; ++trial) {
      const double t1 = 0.1 + 0.1 * trial, t2 = 0.3, h = 0.01;
      Point x = m.exp(m.origin(), m.frame_at(m.origin()).col(0) * (0.2 * trial));
      auto direct = estimate_pt(m, f, x, t1 + t2, opts(6000, 40 + trial, h));
      McOptions o = opts(6000, 90 + trial, h);
      auto acc = run_paths(o, 1, [&](std::uint64_t s, double sign, double* out) {
        GeodesicWalker a(m, x, h, o.seed, s, sign);
        for (int k = 0; k < int(std::lround(t1 / h)); ++k) a.step();
        GeodesicWalker b(m, a.point(), h, mix_seed(o.seed, 1), s, sign);
        for (int k = 0; k < int(std::lround(t2 / h)); ++k) b.step();
        out[0] = f.eval(b.point());
      });
      double se = std::sqrt(direct.se() * direct.se() + acc.stderr_of(0) * acc.stderr_of(0));
      EXPECT_NEAR(direct.scalar(), acc.mean[0], 3 * se) << m.name() << " trial " << trial;
    }
  }
}

TEST(EstimatePt, ContractionForBoundedField) {
  auto m = Manifold::hyperbolic(2);
  auto f = fields::compact_bump(m, m.origin(), 1.0);
  auto e = estimate_pt(m, f, m.origin(), 0.5, opts(4000, 8));
  EXPECT_LE(std::abs(e.scalar()), 1.0 + 3 * e.se());
}

TEST(EstimateGrad, EuclideanLinearIsExact) {
  auto m = Manifold::euclidean(2);
  ScalarField f = fields::coordinate(m, 0);
  Point x{Vec::Zero(2)};
  auto e = estimate_grad(m, f, x, unit(m, x, 0), 0.5, opts(1000, 2));
  EXPECT_DOUBLE_EQ(e.scalar(), 1.0);
  EXPECT_EQ(e.se(), 0.0);
}

TEST(EstimateGrad, TorusEigenfunction) {
  auto m = Manifold::torus(2);
  Vec xv(2);
  xv << 0.9, 2.0;
  Point x{xv};
  const double t = 0.5;
  auto e = estimate_grad(m, fields::sine(m, 0), x, unit(m, x, 0), t, opts(10000, 4));
  EXPECT_NEAR(e.scalar(), std::exp(-t) * std::cos(0.9), 3 * e.se());
}

TEST(EstimateGrad, MatchesCommonRandomNumberFiniteDifference) {
  auto m = Manifold::hyperbolic(2);
  auto f = fields::gaussian_bump(m, m.origin(), 1.0);
  Point x = m.exp(m.origin(), m.frame_at(m.origin()).col(0) * 0.5);
  TangentVector v = unit(m, x, 0);
  const double t = 0.5, eps = 0.05;
  McOptions o = opts(20000, 12);
  auto g = estimate_grad(m, f, x, v, t, o);
  // Paired difference quotient: shared streams, start points x +- eps v.
  Point xp = m.exp(x, eps * v.comps), xm = m.exp(x, -eps * v.comps);
  const double h = t / 200;
  auto acc = run_paths(o, 1, [&](std::uint64_t s, double sign, double* out) {
    GeodesicWalker a(m, xp, h, o.seed, s, sign), b(m, xm, h, o.seed, s, sign);
    for (int k = 0; k < 200; ++k) a.step(), b.step();
    out[0] = (f.eval(a.point()) - f.eval(b.point())) / (2 * eps);
  });
  double se = std::sqrt(g.se() * g.se() + acc.stderr_of(0) * acc.stderr_of(0));
  EXPECT_NEAR(g.scalar(), acc.mean[0], 3 * se);
}

TEST(EstimateGrad, CauchySchwarzBound) {
  auto m = Manifold::hyperbolic(2);
  auto f = fields::gaussian_bump(m, m.origin(), 1.0);
  Point x = m.exp(m.origin(), m.frame_at(m.origin()).col(1) * 0.7);
  const double t = 0.5;
  auto g = estimate_grad(m, f, x, unit(m, x, 0), t, opts(5000, 13));
  auto mom = estimate_hess_moments(m, f, x, t, opts(5000, 13));
  double K = m.ricci_lower_bound();
  EXPECT_LE(std::abs(g.scalar()),
            std::exp(K * t) * std::sqrt(mom.df_sq.scalar()) + 3 * (g.se() + mom.df_sq.se()));
}

TEST(EstimateHess, EuclideanSquareBothModes) {
  auto m = Manifold::euclidean(2);
  ScalarField f = fields::coordinate_squared(m, 0);
  Point x{Vec::Constant(2, 0.3)};
  HessianEstimatorConfig cfg;
  auto e1 = unit(m, x, 0);
  auto b = estimate_hess(m, f, x, e1, e1, 0.25, cfg, HessMode::bismut, opts(20000, 6));
  auto mx = estimate_hess(m, f, x, e1, e1, 0.25, cfg, HessMode::mixed, opts(2000, 6));
  EXPECT_NEAR(b.scalar(), 2.0, 3 * b.se());
  EXPECT_DOUBLE_EQ(mx.scalar(), 2.0);
  EXPECT_NEAR(b.scalar(), mx.scalar(), 3 * combined(b, mx));
}

TEST(EstimateHess, SphereEigenfunctionBothModes) {
  auto m = Manifold::sphere(2);
  Point x = sphere_point(0.5, 1.0);
  ScalarField z = fields::coordinate(m, 2);
  HessianEstimatorConfig cfg;
  const double t = 0.5;
  auto v = unit(m, x, 0), w = unit(m, x, 1);
  auto mx = estimate_hess(m, z, x, v, v, t, cfg, HessMode::mixed, opts(4000, 7));
  EXPECT_NEAR(mx.scalar(), -std::exp(-2 * t) * x.coords[2], 3 * mx.se() + 1e-12);
  auto b = estimate_hess(m, z, x, v, v, t, cfg, HessMode::bismut, opts(40000, 7));
  EXPECT_NEAR(b.scalar(), -std::exp(-2 * t) * x.coords[2], 3 * b.se());
  EXPECT_NEAR(b.scalar(), mx.scalar(), 3 * combined(b, mx));
  // Off-diagonal entry vanishes for the eigenfunction.
  auto off = estimate_hess(m, z, x, v, w, t, cfg, HessMode::mixed, opts(4000, 7));
  EXPECT_NEAR(off.scalar(), 0.0, 3 * off.se() + 1e-12);
}

TEST(EstimateHess, ModesAgreeOnCurvedModels) {
  HessianEstimatorConfig cfg;
  for (const auto& m : {Manifold::hyperbolic(2), Manifold::sphere(2)}) {
    auto f = fields::gaussian_bump(m, m.origin(), 1.0);
    Point x = m.exp(m.origin(), m.frame_at(m.origin()).col(0) * 0.4);
    auto v = unit(m, x, 0);
    TangentVector w{x, (m.frame_at(x).col(0) + m.frame_at(x).col(1)) / std::sqrt(2.0)};
    const double t = 0.5;
    auto mx = estimate_hess(m, f, x, v, w, t, cfg, HessMode::mixed, opts(10000, 30));
    auto b = estimate_hess(m, f, x, v, w, t, cfg, HessMode::bismut, opts(60000, 31));
    EXPECT_NEAR(b.scalar(), mx.scalar(), 3 * combined(b, mx)) << m.name();
  }
}

TEST(EstimateHess, SymmetryInArguments) {
  HessianEstimatorConfig cfg;
  auto m = Manifold::hyperbolic(2);
  auto f = fields::gaussian_bump(m, m.origin(), 1.0);
  Point x = m.exp(m.origin(), m.frame_at(m.origin()).col(0) * 0.4);
  auto v = unit(m, x, 0), w = unit(m, x, 1);
  auto a = estimate_hess(m, f, x, v, w, 0.5, cfg, HessMode::mixed, opts(6000, 50));
  auto b = estimate_hess(m, f, x, w, v, 0.5, cfg, HessMode::mixed, opts(6000, 51));
  EXPECT_NEAR(a.scalar(), b.scalar(), 3 * combined(a, b));
}

TEST(EstimateHess, BismutWeightsHaveZeroMean) {
  HessianEstimatorConfig cfg;
  auto m = Manifold::sphere(2);
  Point x = sphere_point(1.0, 0.0);
  auto v = unit(m, x, 0);
  auto e = estimate_hess(m, fields::constant(m, 1.0), x, v, v, 0.5, cfg, HessMode::bismut,
                         opts(20000, 60));
  EXPECT_NEAR(e.scalar(), 0.0, 3 * e.se());
}

TEST(EstimateHess, WarnsWhenNoiseDominates) {
  HessianEstimatorConfig cfg;
  auto m = Manifold::sphere(2);
  Point x = sphere_point(1.2, 0.0);
  auto v = unit(m, x, 0);
  auto e = estimate_hess(m, fields::coordinate(m, 2), x, v, v, 0.005, cfg, HessMode::bismut,
                         opts(20, 61));
  EXPECT_GT(e.se(), std::abs(e.scalar()));
  EXPECT_FALSE(e.warnings.empty());
  auto quiet = estimate_hess(m, fields::coordinate(m, 2), x, v, v, 0.5, cfg, HessMode::mixed,
                             opts(200, 61));
  EXPECT_TRUE(quiet.warnings.empty());
}

TEST(WeightProfile, EndpointValues) {
  auto p = WeightProfile::standard();
  const double t = 0.8;
  EXPECT_EQ(p.k(0, t), 1.0);
  EXPECT_EQ(p.k(t / 2, t), 0.0);
  EXPECT_EQ(p.k(0.7, t), 0.0);
  EXPECT_EQ(p.l(0.1, t), 1.0);
  EXPECT_EQ(p.l(t / 2, t), 1.0);
  EXPECT_EQ(p.l(t, t), 0.0);
}

TEST(GreenHess, EuclideanSquare) {
  auto m = Manifold::euclidean(2);
  Point x{Vec::Zero(2)};
  HessianEstimatorConfig cfg;
  cfg.sigma = 4;
  cfg.steps_per_node = 4;
  auto e1 = unit(m, x, 0);
  auto g = estimate_green_hess(m, fields::coordinate_squared(m, 0), x, e1, e1, cfg, opts(100, 9));
  EXPECT_NEAR(g.scalar(), 0.5, 3 * g.se() + g.quadrature_error);
  EXPECT_LT(g.quadrature_error, 1e-3);
}

TEST(GreenHess, SphereResolventAndMonotonicity) {
  auto m = Manifold::sphere(2);
  Point x = sphere_point(0.6, 0.3);
  HessianEstimatorConfig cfg;
  cfg.sigma = 2;
  cfg.time_nodes = 24;
  cfg.steps_per_node = 20;
  auto v = unit(m, x, 0);
  auto z = fields::coordinate(m, 2);
  auto g = estimate_green_hess(m, z, x, v, v, cfg, opts(400, 10));
  double exact = -x.coords[2] / (2 + cfg.sigma);
  EXPECT_NEAR(g.scalar(), exact, 3 * g.se() + g.quadrature_error);
  cfg.sigma = 4;
  auto g2 = estimate_green_hess(m, z, x, v, v, cfg, opts(400, 10));
  EXPECT_LT(std::abs(g2.scalar()), std::abs(g.scalar()));
}

TEST(GreenHess, WarnsBelowSpectralThreshold) {
  auto m = Manifold::hyperbolic(2);
  HessianEstimatorConfig cfg;
  cfg.sigma = 1.5;  // 2K = 2
  std::vector<std::string> w;
  green_nodes(m, cfg, &w);
  EXPECT_FALSE(w.empty());
}

#include "mheat/curvature.hpp"
#include "mheat/differential.hpp"
#include "mheat/fields.hpp"
#include "mheat/manifold.hpp"
#include "mheat/rng.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace mheat;

namespace {

std::vector<Manifold> all_models() {
  return {Manifold::euclidean(2), Manifold::euclidean(3), Manifold::torus(2),
          Manifold::sphere(2),    Manifold::sphere(3, 2.0), Manifold::hyperbolic(2),
          Manifold::hyperbolic(3, 0.5)};
}

// Random point: exp of a random tangent vector at the origin.
Point random_point(const Manifold& m, std::mt19937_64& rng, double spread = 1.0) {
  std::normal_distribution<double> nd;
  Point o = m.origin();
  Frame f = m.frame_at(o);
  Vec c(m.dim());
  for (int i = 0; i < m.dim(); ++i) c[i] = spread * nd(rng);
  return m.exp(o, f * c);
}

Vec random_tangent(const Manifold& m, const Point& x, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  Vec c(m.dim());
  for (int i = 0; i < m.dim(); ++i) c[i] = nd(rng);
  return m.frame_at(x) * c;
}

}  // namespace

TEST(Philox, KnownAnswerVectors) {
  auto r = Philox4x32::generate({0, 0, 0, 0}, {0, 0});
  EXPECT_EQ(r[0], 0x6627e8d5u);
  EXPECT_EQ(r[1], 0xe169c58du);
  EXPECT_EQ(r[2], 0xbc57ac4cu);
  EXPECT_EQ(r[3], 0x9b00dbd8u);
  r = Philox4x32::generate({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
                           {0xffffffffu, 0xffffffffu});
  EXPECT_EQ(r[0], 0x408f276du);
  EXPECT_EQ(r[1], 0x41c83b0eu);
  EXPECT_EQ(r[2], 0xa20bc7c6u);
  EXPECT_EQ(r[3], 0x6d5451fdu);
  r = Philox4x32::generate({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
                           {0xa4093822u, 0x299f31d0u});
  EXPECT_EQ(r[0], 0xd16cfe09u);
  EXPECT_EQ(r[1], 0x94fdccebu);
  EXPECT_EQ(r[2], 0x5001e420u);
  EXPECT_EQ(r[3], 0x24126ea1u);
}

TEST(GaussianStream, MomentsAndIndependenceOfCoordinates) {
  GaussianStream s(42, 7);
  double m1 = 0, m2 = 0, m4 = 0;
  const int n = 200000;
  for (int k = 0; k < n / 2; ++k) {
    auto z = s.normal_pair(std::uint64_t(k), 0);
    for (double v : z) m1 += v, m2 += v * v, m4 += v * v * v * v;
  }
  m1 /= n, m2 /= n, m4 /= n;
  EXPECT_NEAR(m1, 0.0, 0.01);
  EXPECT_NEAR(m2, 1.0, 0.015);
  EXPECT_NEAR(m4, 3.0, 0.06);
  // Different streams and blocks give different draws.
  EXPECT_NE(GaussianStream(42, 8).normal_pair(0, 0)[0], s.normal_pair(0, 0)[0]);
  EXPECT_NE(s.normal_pair(0, 1)[0], s.normal_pair(0, 0)[0]);
}

TEST(GeodesicStep, EuclideanStraightLine) {
  auto m = Manifold::euclidean(2);
  Point x{Vec::Zero(2)};
  Vec v(2);
  v << 1, 0;
  Point y = geodesic_step(m, x, v, 0.5);
  EXPECT_DOUBLE_EQ(y.coords[0], 0.5);
  EXPECT_DOUBLE_EQ(y.coords[1], 0.0);
}

TEST(GeodesicStep, SphereQuarterGreatCircle) {
  auto m = Manifold::sphere(2);
  Point n = m.origin();
  Vec v = m.frame_at(n).col(0);
  Point y = geodesic_step(m, n, v, kPi / 2);
  EXPECT_NEAR(y.coords[2], 0.0, 1e-12);
  EXPECT_NEAR(m.distance(n, y), kPi / 2, 1e-8);
}

TEST(GeodesicStep, HyperbolicRepeatedStepsMatchClosedForm) {
  auto m = Manifold::hyperbolic(2);
  Point x = m.origin();
  Vec v = m.frame_at(x).col(0);
  Point y = x;
  for (int k = 0; k < 200; ++k) {
    Point ny = geodesic_step(m, y, v, 0.01);
    v = m.transport(y, 0.01 * v, v);
    y = ny;
  }
  // Closed-form geodesic through the vertex: (cosh s, sinh s, 0).
  EXPECT_NEAR(m.distance(x, y), 2.0, 1e-4);
  EXPECT_NEAR(y.coords[0], std::cosh(2.0), 1e-8);
}

TEST(GeodesicStep, RejectsBadInput) {
  auto m = Manifold::sphere(2);
  Point n = m.origin();
  Vec v = m.frame_at(n).col(0);
  EXPECT_THROW(geodesic_step(m, n, v, 0.0), std::invalid_argument);
  EXPECT_THROW(geodesic_step(m, n, v, -1.0), std::invalid_argument);
  Vec bad = v;
  bad[0] = std::nan("");
  EXPECT_THROW(geodesic_step(m, n, bad, 0.1), std::invalid_argument);
}

TEST(GeodesicStep, LengthPreservedWithinCubicBound) {
  std::mt19937_64 rng(3);
  for (const auto& m : all_models()) {
    for (int k = 0; k < 20; ++k) {
      Point x = random_point(m, rng);
      Vec v = random_tangent(m, x, rng);
      v /= m.norm(v);
      for (double h : {0.01, 0.1, 0.3}) {
        Point y = geodesic_step(m, x, v, h);
        EXPECT_NEAR(m.distance(x, y), h, 10 * h * h * h) << m.name();
        EXPECT_LE(m.constraint_residual(y), 1e-12) << m.name();
      }
    }
  }
}

TEST(Curvature, FlatModelsVanish) {
  for (const auto& m : {Manifold::euclidean(3), Manifold::torus(2)}) {
    Point x = m.origin();
    auto pkg = curvature_package(m, x, m.frame_at(x));
    for (double r : pkg.riemann) EXPECT_EQ(r, 0.0);
    EXPECT_EQ(pkg.r_opnorm, 0.0);
    EXPECT_EQ(pkg.ricci.norm(), 0.0);
  }
}

TEST(Curvature, SphereAndHyperbolicRicci) {
  auto s2 = Manifold::sphere(2);
  auto pkg = curvature_package(s2, s2.origin(), s2.frame_at(s2.origin()));
  EXPECT_NEAR((pkg.ricci - Mat::Identity(2, 2)).norm(), 0.0, 1e-10);
  for (double v : pkg.ricci_sharp_grad) EXPECT_NEAR(v, 0.0, 1e-10);
  for (double v : pkg.dstar_r) EXPECT_NEAR(v, 0.0, 1e-10);
  auto h3 = Manifold::hyperbolic(3);
  auto ph = curvature_package(h3, h3.origin(), h3.frame_at(h3.origin()));
  EXPECT_NEAR((ph.ricci + 2.0 * Mat::Identity(3, 3)).norm(), 0.0, 1e-10);
}

TEST(Curvature, SymmetriesAndClosedFormAtRandomPoints) {
  std::mt19937_64 rng(11);
  for (const auto& m : all_models()) {
    const int d = m.dim();
    const double kappa = m.sectional_curvature();
    for (int s = 0; s < 100; ++s) {
      Point x = random_point(m, rng);
      Frame fr = m.frame_at(x);
      auto pkg = curvature_package(m, x, fr);
      double worst = 0;
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
          for (int k = 0; k < d; ++k)
            for (int l = 0; l < d; ++l) {
              double r = pkg.R(i, j, k, l);
              worst = std::max(worst, std::abs(r + pkg.R(j, i, k, l)));
              worst = std::max(worst, std::abs(r - pkg.R(k, l, i, j)));
              // <R(e_i, e_j) e_k, e_l> = kappa (d_jk d_il - d_ik d_jl)
              double closed = kappa * ((j == k) * (i == l) - (i == k) * (j == l));
              worst = std::max(worst, std::abs(r - closed));
            }
      Mat ric = Mat::Zero(d, d);
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
          for (int k = 0; k < d; ++k) ric(j, k) += pkg.R(i, j, k, i);
      worst = std::max(worst, (ric - pkg.ricci).cwiseAbs().maxCoeff());
      for (double v : pkg.ricci_sharp_grad) worst = std::max(worst, std::abs(v));
      for (double v : pkg.dstar_r) worst = std::max(worst, std::abs(v));
      ASSERT_LE(worst, 1e-10) << m.name();
      // Ricci lower bound attained on hyperbolic models.
      double min_eig = Eigen::SelfAdjointEigenSolver<Mat>(pkg.ricci).eigenvalues().minCoeff();
      EXPECT_GE(min_eig, -m.ricci_lower_bound() - 1e-10);
      if (m.kind() == ModelKind::hyperbolic) {
        EXPECT_NEAR(min_eig, -m.ricci_lower_bound(), 1e-10);
      }
    }
  }
}

TEST(Curvature, OperatorNormOnConstantCurvature) {
  // |R^{#,#}(v1, v2)|_HS for R = kappa(<Y,Z>X - <X,Z>Y) is maximised at v1 = v2:
  // the matrix kappa (<v1, v2> I - v2 v1^T) has HS norm |kappa| sqrt(d - 1) when v1 = v2.
  for (const auto& m : {Manifold::sphere(2), Manifold::sphere(3), Manifold::hyperbolic(3, 2.0)}) {
    Point x = m.origin();
    auto pkg = curvature_package(m, x, m.frame_at(x));
    double kappa = std::abs(m.sectional_curvature());
    EXPECT_NEAR(pkg.r_opnorm, kappa * std::sqrt(double(m.dim() - 1)), 1e-8) << m.name();
  }
}

TEST(DistanceVolume, Examples) {
  auto r2 = Manifold::euclidean(2);
  auto dv = distance_volume(r2, r2.origin(), r2.origin(), 1.0);
  EXPECT_NEAR(dv.vol, kPi, 1e-12);
  EXPECT_NEAR(dv.doubling_ratio, 4.0, 1e-12);
  auto s2 = Manifold::sphere(2);
  EXPECT_NEAR(distance_volume(s2, s2.origin(), s2.origin(), kPi).vol, 4 * kPi, 1e-12);
  EXPECT_NEAR(distance_volume(s2, s2.origin(), s2.origin(), 5.0).vol, 4 * kPi, 1e-12);
  auto h2 = Manifold::hyperbolic(2);
  // Oracle: quadrature of 2 pi sinh s over [0, 1].
  double quad = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    double s = (i + 0.5) / n;
    quad += 2 * kPi * std::sinh(s) / n;
  }
  EXPECT_NEAR(distance_volume(h2, h2.origin(), h2.origin(), 1.0).vol, quad, 1e-8);
  EXPECT_NEAR(quad, 2 * kPi * (std::cosh(1.0) - 1.0), 1e-8);
}

TEST(DistanceVolume, GeneralDimensionsAgreeWithLowDimensionalClosedForms) {
  // The d >= 3 quadrature branch against the H^3 closed form and the S^3 volume 2 pi^2.
  auto s3 = Manifold::sphere(3);
  EXPECT_NEAR(s3.total_volume(), 2 * kPi * kPi, 1e-10);
  auto h4 = Manifold::hyperbolic(4);
  // V(r) = 2 pi^2 int_0^r sinh^3 = 2 pi^2 (cosh^3 r / 3 - cosh r + 2/3)
  double r = 0.7, c = std::cosh(r);
  EXPECT_NEAR(h4.ball_volume(r), 2 * kPi * kPi * (c * c * c / 3 - c + 2.0 / 3), 1e-10);
}

TEST(DistanceVolume, DoublingBound) {
  std::vector<double> radii{0.05, 0.2, 0.5, 1.0, 2.0, 4.0, 8.0};
  for (const auto& m : all_models()) {
    double c = m.doubling_constant();
    for (double r : radii) {
      double ratio = m.ball_volume(2 * r) / m.ball_volume(r);
      EXPECT_LE(ratio, std::pow(2.0, m.dim()) * std::exp(2 * c * r) * (1 + 1e-12)) << m.name() << " r=" << r;
      if (m.kind() == ModelKind::euclidean) {
        EXPECT_NEAR(ratio, std::pow(2.0, m.dim()), 1e-12);
      }
    }
  }
}

TEST(Fields, OraclesAgreeWithFiniteDifferences) {
  std::mt19937_64 rng(5);
  for (const auto& m : all_models()) {
    std::vector<ScalarField> fs;
    fs.push_back(fields::gaussian_bump(m, m.origin(), 1.3));
    fs.push_back(fields::compact_bump(m, m.origin(), 2.0));
    if (m.kind() != ModelKind::torus) fs.push_back(fields::coordinate(m, m.ambient_dim() - 1));
    if (m.flat()) fs.push_back(fields::sine(m, 0, 0.3));
    if (m.kind() == ModelKind::euclidean) fs.push_back(fields::norm_squared(m));
    for (const auto& f : fs) {
      for (int s = 0; s < 10; ++s) {
        Point x = random_point(m, rng, 0.6);
        Frame fr = m.frame_at(x);
        Vec g = fd::gradient(m, f.eval, x, fr);
        Vec go(m.dim());
        Vec ga = f.grad(x);
        for (int i = 0; i < m.dim(); ++i) go[i] = m.inner(ga, fr.col(i));
        double scale = std::max(1.0, go.norm());
        EXPECT_LE((g - go).norm() / scale, 1e-4) << m.name() << " " << f.name;
        Mat h = fd::hessian(m, f.eval, x, fr, 1e-3);
        Mat ho = f.hess(x, fr);
        double hs = std::max(1.0, ho.norm());
        EXPECT_LE((h - ho).norm() / hs, 1e-4) << m.name() << " " << f.name;
        EXPECT_NEAR(ho.trace(), -f.laplacian(x), 1e-10);
      }
    }
  }
}

TEST(Commutation, Examples) {
  auto r3 = Manifold::euclidean(3);
  auto f = fields::norm_squared(r3);
  Vec p(3);
  p << 0.3, -0.2, 0.5;
  EXPECT_LE(commutation_residual(r3, f, Point{p}), 1e-6);
  auto s2 = Manifold::sphere(2);
  auto z = fields::coordinate(s2, 2);
  std::mt19937_64 rng(2);
  for (int k = 0; k < 10; ++k) EXPECT_LE(commutation_residual(s2, z, random_point(s2, rng)), 1e-3);
  auto t2 = Manifold::torus(2);
  Vec q(2);
  q << 0.4, 1.1;
  EXPECT_LE(commutation_residual(t2, fields::sine(t2, 0), Point{q}), 1e-6);
  auto h2 = Manifold::hyperbolic(2);
  auto bump = fields::gaussian_bump(h2, h2.origin(), 1.0);
  EXPECT_LE(commutation_residual(h2, bump, random_point(h2, rng, 0.5)), 1e-3);
}

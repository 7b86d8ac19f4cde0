#include "membrane/geometry.hpp"
#include "membrane/rng.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace membrane;

TEST(Geometry, SphereDistanceIsRadial) {
  const auto s = Surface::sphere(make_vec({0.0, 0.0}), 1.0);
  EXPECT_DOUBLE_EQ(s.unsigned_distance(make_vec({2.0, 0.0})), 1.0);
  EXPECT_DOUBLE_EQ(s.unsigned_distance(make_vec({0.0, 1.0})), 0.0);
}

TEST(Geometry, HyperplaneDistanceIsOffsetCoordinate) {
  const auto s = Surface::hyperplane(make_vec({0.0, 1.0}), 0.0);
  EXPECT_DOUBLE_EQ(s.unsigned_distance(make_vec({0.3, -0.7})), 0.7);
}

TEST(Geometry, SideClassification) {
  const auto s = Surface::sphere(make_vec({0.0, 0.0}), 1.0);
  EXPECT_EQ(s.side(make_vec({0.5, 0.0})), Side::interior);
  EXPECT_EQ(s.side(make_vec({0.0, 1.0})), Side::on);
  EXPECT_EQ(s.side(make_vec({0.0, 1.5})), Side::exterior);
  const auto p = Surface::point(0.0);
  EXPECT_EQ(p.side(make_vec({-3.0})), Side::interior);
  EXPECT_EQ(p.side(make_vec({0.0})), Side::on);
}

TEST(Geometry, InvalidConstructionRejected) {
  EXPECT_THROW(Surface::sphere(make_vec({0.0, 0.0}), -1.0), InvalidInput);
  EXPECT_THROW(Surface::hyperplane(make_vec({1.0, 1.0}), 0.0), InvalidInput);
}

TEST(Geometry, ProjectionLandsOnSurface) {
  Philox rng(3, 0);
  const std::vector<Surface> surfaces = {Surface::point(0.4), Surface::hyperplane(make_vec({0.6, 0.8}), 0.3),
                                         Surface::sphere(make_vec({0.1, -0.2, 0.3}), 1.7)};
  for (const auto& s : surfaces) {
    for (int k = 0; k < 500; ++k) {
      Vec x(s.dim());
      for (int i = 0; i < s.dim(); ++i) x(i) = 10.0 * (rng.uniform() - 0.5);
      const Vec p = s.project(x);
      EXPECT_LE(s.unsigned_distance(p), 1e-12 * (1.0 + x.norm()));
      EXPECT_NEAR(s.unsigned_distance(x), (x - p).norm(), 1e-10 * (1.0 + x.norm()));
      EXPECT_GE(s.unsigned_distance(x), 0.0);
    }
  }
}

TEST(Geometry, NormalsAreUnitAndOutward) {
  const auto s = Surface::sphere(make_vec({0.0, 0.0, 0.0}), 2.0);
  const Vec z = s.project(make_vec({1.0, 2.0, -0.5}));
  const Vec n = s.normal(z);
  EXPECT_NEAR(n.norm(), 1.0, 1e-14);
  EXPECT_GT(s.signed_distance(z + 1e-3 * n), 0.0);
}

TEST(Geometry, ReflectionSwapsSidesAndKeepsDistance) {
  const auto s = Surface::sphere(make_vec({0.0, 0.0}), 1.0);
  const Vec x = make_vec({0.0, 1.2});
  const Vec y = s.reflect(x);
  EXPECT_NEAR(s.signed_distance(y), -0.2, 1e-14);
  const auto p = Surface::point(0.5);
  EXPECT_NEAR(p.reflect(make_vec({0.8}))(0), 0.2, 1e-14);
}

TEST(Geometry, QuadratureWeightsSumToArea) {
  const auto circle = Surface::sphere(make_vec({0.0, 0.0}), 1.5, 32);
  double w = 0.0;
  for (double v : circle.quadrature().weights) {
    EXPECT_GT(v, 0.0);
    w += v;
  }
  EXPECT_NEAR(w, 2.0 * M_PI * 1.5, 1e-12);
  const auto sphere = Surface::sphere(make_vec({0.0, 0.0, 0.0}), 0.7, 16);
  w = 0.0;
  for (double v : sphere.quadrature().weights) w += v;
  EXPECT_NEAR(w, 4.0 * M_PI * 0.49, 1e-10);
  EXPECT_NEAR(sphere.area(), 4.0 * M_PI * 0.49, 1e-14);
}

TEST(Geometry, SphereQuadratureIntegratesSmoothFunction) {
  // ∫ z² dσ over the unit sphere = 4π/3.
  const auto s = Surface::sphere(make_vec({0.0, 0.0, 0.0}), 1.0, 16);
  const auto q = s.quadrature();
  double v = 0.0;
  for (std::size_t i = 0; i < q.points.size(); ++i) v += q.weights[i] * q.points[i](2) * q.points[i](2);
  EXPECT_NEAR(v, 4.0 * M_PI / 3.0, 1e-10);
}

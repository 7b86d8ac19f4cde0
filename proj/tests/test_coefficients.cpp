#include "membrane/coefficients.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace membrane;

TEST(Coefficients, IdentityPassesAudit) {
  const auto spec = DiffusionSpec::isotropic(2, 1.0);
  const auto rep = validate_conditions_J(spec, Surface::sphere(make_vec({0.0, 0.0}), 1.0));
  EXPECT_TRUE(rep.pass) << rep.summary();
}

TEST(Coefficients, DiagonalBoundsAndWitness) {
  auto spec = DiffusionSpec::diagonal(make_vec({1.0, 4.0}));
  const auto s = Surface::hyperplane(make_vec({1.0, 0.0}), 0.0);
  EXPECT_TRUE(validate_conditions_J(spec, s).pass);
  spec.C2 = 2.0;
  const auto rep = validate_conditions_J(spec, s);
  EXPECT_FALSE(rep.pass);
  EXPECT_FALSE(rep.elliptic);
  EXPECT_NEAR(std::abs(rep.ellipticity_theta(1)), 1.0, 1e-12);
  EXPECT_NEAR(rep.ellipticity_theta(0), 0.0, 1e-12);
}

TEST(Coefficients, HolderViolationFoundWithWitness) {
  DiffusionSpec spec{MatrixField(1, [](const Vec& x) {
    Mat m(1, 1);
    m(0, 0) = 1.0 + 0.5 * std::sin(x(0));
    return m;
  })};
  spec.C1 = 0.5;
  spec.C2 = 1.5;
  spec.L = 0.1;
  spec.alpha = 1.0;
  const auto rep = validate_conditions_J(spec, Surface::point(0.0));
  EXPECT_FALSE(rep.holder);
  EXPECT_FALSE(rep.pass);
  EXPECT_GT(rep.worst_holder_ratio, 0.1);
  EXPECT_LE(rep.worst_holder_ratio, 0.5 + 1e-6);
  ASSERT_EQ(rep.holder_x.size(), 1);
  // The same field with the true slope bound passes.
  spec.L = 0.5;
  EXPECT_TRUE(validate_conditions_J(spec, Surface::point(0.0)).pass);
}

TEST(Coefficients, MembraneFunctionRanges) {
  auto spec = DiffusionSpec::isotropic(1, 1.0, 1.5, 0.0);
  EXPECT_FALSE(validate_conditions_J(spec, Surface::point(0.0)).q_in_range);
  spec = DiffusionSpec::isotropic(1, 1.0, 0.0, -0.1);
  EXPECT_FALSE(validate_conditions_J(spec, Surface::point(0.0)).r_nonnegative);
}

TEST(Coefficients, AsymmetricMatrixFlagged) {
  DiffusionSpec spec{MatrixField(2, [](const Vec&) {
    Mat m(2, 2);
    m << 1.0, 0.2, 0.0, 1.0;
    return m;
  })};
  spec.C1 = 0.5;
  spec.C2 = 1.5;
  EXPECT_FALSE(validate_conditions_J(spec, Surface::hyperplane(make_vec({1.0, 0.0}), 0.0)).symmetric);
}

TEST(Coefficients, NormalAndConormal) {
  const auto s = Surface::sphere(make_vec({0.0, 0.0}), 1.0);
  const Vec z = make_vec({0.0, 1.0});
  auto [nu, n] = normal_and_conormal(z, DiffusionSpec::isotropic(2, 1.0), s);
  EXPECT_NEAR((nu - make_vec({0.0, 1.0})).norm(), 0.0, 1e-15);
  EXPECT_NEAR((n - make_vec({0.0, 1.0})).norm(), 0.0, 1e-15);
  std::tie(nu, n) = normal_and_conormal(z, DiffusionSpec::diagonal(make_vec({1.0, 4.0})), s);
  EXPECT_NEAR((n - make_vec({0.0, 4.0})).norm(), 0.0, 1e-15);
  std::tie(nu, n) = normal_and_conormal(make_vec({0.0}), DiffusionSpec::isotropic(1, 2.5), Surface::point(0.0));
  EXPECT_DOUBLE_EQ(nu(0), 1.0);
  EXPECT_DOUBLE_EQ(n(0), 2.5);
  EXPECT_THROW(normal_and_conormal(make_vec({0.0, 0.5}), DiffusionSpec::isotropic(2, 1.0), s), InvalidInput);
}

TEST(Coefficients, ConormalPairingWithinBounds) {
  const auto spec = DiffusionSpec::diagonal(make_vec({1.0, 4.0}));
  const auto s = Surface::sphere(make_vec({0.0, 0.0}), 1.0, 64);
  for (const auto& z : s.quadrature().points) {
    const auto [nu, n] = normal_and_conormal(z, spec, s);
    EXPECT_NEAR(nu.norm(), 1.0, 1e-14);
    EXPECT_GE(n.dot(nu), spec.C1 - 1e-12);
    EXPECT_LE(n.dot(nu), spec.C2 + 1e-12);
  }
}

TEST(Coefficients, SymmetricSquareRoot) {
  Mat b(2, 2);
  b << 2.0, 0.5, 0.5, 1.0;
  const Mat r = sqrt_spd(b);
  EXPECT_NEAR((r * r - b).norm(), 0.0, 1e-13);
  EXPECT_NEAR((r - r.transpose()).norm(), 0.0, 1e-14);
}

TEST(Coefficients, DriftRatioOnlyWhereDelayPositive) {
  const auto spec = DiffusionSpec::isotropic(1, 1.0, 0.5, 2.0);
  EXPECT_DOUBLE_EQ(*spec.drift_ratio(make_vec({0.0})), 0.25);
  EXPECT_FALSE(DiffusionSpec::isotropic(1, 1.0, 0.5, 0.0).drift_ratio(make_vec({0.0})).has_value());
}
